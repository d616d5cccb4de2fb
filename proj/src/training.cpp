#include "blendnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "blendnet/errors.hpp"

namespace blendnet {

std::string to_string(LrDecay d) { return d == LrDecay::halve_every_5 ? "halve_every_5" : "halve_every_3"; }

std::string to_string(Stage s) {
  switch (s) {
    case Stage::regular:
      return "regular";
    case Stage::warm_up:
      return "warm_up";
    case Stage::fine_tune:
      return "fine_tune";
  }
  return "unknown";
}

std::string to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "sgd"; }

LrDecay parse_lr_decay(const std::string& s) {
  if (s == "halve_every_5") return LrDecay::halve_every_5;
  if (s == "halve_every_3" || s == "halve_half_every_3") return LrDecay::halve_every_3;
  throw ConfigError("unknown lr decay '" + s + "' (expected halve_every_5|halve_every_3)");
}

Stage parse_stage(const std::string& s) {
  if (s == "regular") return Stage::regular;
  if (s == "warm_up") return Stage::warm_up;
  if (s == "fine_tune") return Stage::fine_tune;
  throw ConfigError("unknown stage '" + s + "' (expected regular|warm_up|fine_tune)");
}

Optimizer parse_optimizer(const std::string& s) {
  if (s == "adam") return Optimizer::adam;
  if (s == "sgd") return Optimizer::sgd;
  throw ConfigError("unknown optimizer '" + s + "' (expected adam|sgd)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be > 0");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (!std::isfinite(clip_norm)) throw ConfigError("clip norm must be finite");
  for (const auto& [slot, m] : module_lr_multipliers) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw ConfigError("multiplier for " + slot + " must be finite and >= 0");
  }
}

double lr_at(std::size_t epoch, const TrainConfig& config) {
  const std::size_t period = config.lr_decay == LrDecay::halve_every_5 ? 5 : 3;
  return config.learning_rate * std::pow(0.5, static_cast<double>(epoch / period));
}

bool Metrics::better_than(double other) const {
  return task == Task::count ? value < other : value > other;
}

bool Metrics::better_than(const Metrics& other) const { return better_than(other.value); }

Metrics score_predictions(Task task, const std::vector<std::int64_t>& predicted,
                          const std::vector<std::int64_t>& labels) {
  if (predicted.empty()) throw UsageError("cannot score an empty dataset");
  if (predicted.size() != labels.size()) throw UsageError("prediction and label counts differ");
  Metrics m;
  m.task = task;
  m.samples = predicted.size();
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (task == Task::count) {
      const double diff = static_cast<double>(predicted[i] - labels[i]);
      total += diff * diff;
    } else {
      total += predicted[i] == labels[i] ? 1.0 : 0.0;
    }
  }
  m.value = total / static_cast<double>(predicted.size());
  return m;
}

std::string format_step(const StepRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "step=%zu epoch=%zu lr=%.9g loss=%.17g", r.step, r.epoch, r.lr, r.loss);
  return buf;
}

template <typename T>
void optimizer_update(Optimizer kind, double lr, Matrix<T>& param, const Matrix<double>& grad, double grad_scale,
                      Matrix<T>& first_moment, Matrix<T>& second_moment, std::uint64_t adam_steps) {
  if (kind == Optimizer::sgd) {
    if (lr == 0.0) return;
    for (std::size_t j = 0; j < param.size(); ++j)
      param[j] = static_cast<T>(static_cast<double>(param[j]) - lr * grad[j] * grad_scale);
    return;
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const double correct1 = 1.0 - std::pow(beta1, static_cast<double>(adam_steps));
  const double correct2 = 1.0 - std::pow(beta2, static_cast<double>(adam_steps));
  for (std::size_t j = 0; j < param.size(); ++j) {
    const double g = grad[j] * grad_scale;
    const double a = beta1 * static_cast<double>(first_moment[j]) + (1.0 - beta1) * g;
    const double b = beta2 * static_cast<double>(second_moment[j]) + (1.0 - beta2) * g * g;
    first_moment[j] = static_cast<T>(a);
    second_moment[j] = static_cast<T>(b);
    if (lr != 0.0) param[j] = static_cast<T>(static_cast<double>(param[j]) - lr * (a / correct1) / (std::sqrt(b / correct2) + eps));
  }
}

template <typename T>
Model<T> Model<T>::create(const HierarchyConfig& network, std::size_t answers, std::uint64_t seed) {
  Model m;
  m.network = network;
  m.network.warm_up_mode = false;
  m.decoder_config.task = network.task;
  m.decoder_config.d = network.d;
  m.decoder_config.answers = answers;
  m.decoder_config.activation = network.activation;
  m.decoder_config.validate();
  std::mt19937_64 rng(seed);
  m.registry = build_network<T>(m.network, rng);
  m.decoder = DecoderParameters<T>::initialized(m.decoder_config, rng);
  return m;
}

namespace {

template <typename T>
std::vector<Matrix<T>> zeros_like(const Model<T>& model) {
  std::vector<Matrix<T>> out;
  model.visit([&out](const std::string&, const Matrix<T>& m) { out.emplace_back(m.rows(), m.cols()); });
  return out;
}

template <typename T>
HierarchyConfig network_for(const Model<T>& model, bool warm_up) {
  HierarchyConfig c = model.network;
  c.warm_up_mode = warm_up;
  return c;
}

}  // namespace

template <typename T>
Trainer<T>::Trainer(Model<T>& model, TrainConfig config) : model_(model), config_(std::move(config)) {
  config_.validate();
  const auto& slots = model_.registry.slots;
  for (const auto& [key, value] : config_.module_lr_multipliers) {
    const bool known = key == "decoder" || std::any_of(slots.begin(), slots.end(), [&key](const LogicalSlot& s) {
                         return s.name() == key;
                       });
    if (!known) throw ConfigError("learning-rate multiplier for unknown slot '" + key + "'");
  }
  auto multiplier = [this](const std::string& key) {
    auto it = config_.module_lr_multipliers.find(key);
    return it == config_.module_lr_multipliers.end() ? 1.0 : it->second;
  };
  std::vector<double> per_set(model_.registry.sets.size(), -1.0);
  std::vector<std::string> first_slot(per_set.size());
  for (const LogicalSlot& s : slots) {
    const double m = multiplier(s.name());
    if (per_set[s.physical] < 0.0) {
      per_set[s.physical] = m;
      first_slot[s.physical] = s.name();
    } else if (per_set[s.physical] != m) {
      throw ConfigError("slots " + first_slot[s.physical] + " and " + s.name() +
                        " share one parameter set but have different learning-rate multipliers");
    }
  }
  for (std::size_t p = 0; p < model_.registry.sets.size(); ++p) {
    model_.registry.sets[p].visit([&](const std::string&, const Matrix<T>&) { multipliers_.push_back(per_set[p]); });
  }
  const double dec = multiplier("decoder");
  model_.decoder.visit([&](const std::string&, const Matrix<T>&) { multipliers_.push_back(dec); });
}

template <typename T>
TrainState<T> Trainer<T>::initial_state() const {
  TrainState<T> s;
  s.first_moment = zeros_like(model_);
  s.second_moment = zeros_like(model_);
  s.rng.seed(config_.seed);
  return s;
}

template <typename T>
double Trainer<T>::slot_lr(const std::string& slot, std::size_t epoch) const {
  auto it = config_.module_lr_multipliers.find(slot);
  return lr_at(epoch, config_) * (it == config_.module_lr_multipliers.end() ? 1.0 : it->second);
}

template <typename T>
double Trainer<T>::train_step(const std::vector<const VideoSample*>& batch, TrainState<T>& state) {
  if (batch.empty()) throw UsageError("train_step needs a nonempty batch");
  if (state.first_moment.empty()) {
    state.first_moment = zeros_like(model_);
    state.second_moment = zeros_like(model_);
  }
  const bool warm = warm_up();
  const HierarchyConfig net_cfg = network_for(model_, warm);
  std::vector<Matrix<double>> grads;
  model_.visit([&grads](const std::string&, const Matrix<T>& m) { grads.emplace_back(m.rows(), m.cols()); });

  double total_loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tape<T> tape;
    BoundNetwork<T> net = bind(tape, model_.registry);
    DecoderVars<T> dec = bind(tape, model_.decoder);
    std::vector<Var<T>> emb = network_embeddings(tape, net, model_.registry, net_cfg, *batch[i]);
    Var<T> loss = decoder_loss(tape, dec, model_.decoder_config, emb, *batch[i], warm);
    const double value = static_cast<double>(loss.value()[0]);
    if (!std::isfinite(value)) {
      throw NumericError("non-finite loss at step " + std::to_string(state.step + 1) + " (epoch " +
                         std::to_string(state.epoch) + ", batch item " + std::to_string(i) + ")");
    }
    total_loss += value;
    tape.backward(loss);
    std::size_t k = 0;
    auto accumulate = [&grads, &k](const std::string&, const Matrix<T>& g) {
      Matrix<double>& acc = grads[k++];
      for (std::size_t j = 0; j < g.size(); ++j) acc[j] += static_cast<double>(g[j]);
    };
    for (const GnnmVars<T>& vars : net.sets) gradients(vars).visit(accumulate);
    gradients(dec, model_.decoder).visit(accumulate);
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  double norm_sq = 0.0;
  for (Matrix<double>& g : grads)
    for (double& v : g.data()) {
      v *= inv;
      norm_sq += v * v;
    }
  if (!std::isfinite(norm_sq)) {
    throw NumericError("non-finite gradient at step " + std::to_string(state.step + 1) + " (epoch " +
                       std::to_string(state.epoch) + ")");
  }
  const double norm = std::sqrt(norm_sq);
  const double clip = config_.clip_norm > 0.0 && norm > config_.clip_norm ? config_.clip_norm / norm : 1.0;

  const double lr = lr_at(state.epoch, config_);
  if (config_.optimizer == Optimizer::adam) ++state.adam_steps;
  std::size_t k = 0;
  model_.visit([&](const std::string&, Matrix<T>& param) {
    optimizer_update(config_.optimizer, lr * multipliers_[k], param, grads[k], clip, state.first_moment[k],
                     state.second_moment[k], state.adam_steps);
    ++k;
  });

  ++state.step;
  const double mean = total_loss * inv;
  if (on_step) on_step(StepRecord{state.step, state.epoch, lr, mean});
  return mean;
}

template <typename T>
void Trainer<T>::run(const std::vector<VideoSample>& train, const std::vector<VideoSample>& val,
                     TrainState<T>& state) {
  if (train.empty()) throw UsageError("training set is empty");
  if (val.empty()) throw UsageError("validation set is empty");
  auto out_of_steps = [&] { return config_.max_steps && state.step >= *config_.max_steps; };
  while (state.epoch < config_.epochs && !out_of_steps()) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), state.rng);
    for (std::size_t start = 0; start < order.size() && !out_of_steps(); start += config_.batch_size) {
      std::vector<const VideoSample*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + config_.batch_size); ++i)
        batch.push_back(&train[order[i]]);
      train_step(batch, state);
    }
    const Metrics m = evaluate(model_, val, warm_up());
    const bool improved = !state.best_metric || m.better_than(*state.best_metric);
    if (improved) {
      state.best_metric = m.value;
      state.best_epoch = state.epoch;
    }
    ++state.epoch;
    if (on_epoch) on_epoch(state, m, improved);
  }
}

template <typename T>
Matrix<double> predict(const Model<T>& model, const VideoSample& sample, bool warm_up) {
  Tape<T> tape;
  BoundNetwork<T> net = bind(tape, model.registry, false);
  DecoderVars<T> dec = bind(tape, model.decoder, false);
  const HierarchyConfig cfg = network_for(model, warm_up);
  std::vector<Var<T>> emb = network_embeddings(tape, net, model.registry, cfg, sample);
  return decoder_prediction(tape, dec, model.decoder_config, emb, sample, warm_up).value().template cast<double>();
}

template <typename T>
Metrics evaluate(const Model<T>& model, const std::vector<VideoSample>& data, bool warm_up) {
  if (data.empty()) throw UsageError("cannot evaluate on an empty dataset");
  std::vector<std::int64_t> predicted, labels;
  for (const VideoSample& s : data) {
    predicted.push_back(predicted_answer(predict(model, s, warm_up), model.network.task));
    labels.push_back(s.label);
  }
  return score_predictions(model.network.task, predicted, labels);
}

TrainConfig fine_tune_defaults(TrainConfig config) {
  config.stage = Stage::fine_tune;
  config.lr_decay = LrDecay::halve_every_3;
  config.module_lr_multipliers.emplace("clip.motion", 0.05);
  config.module_lr_multipliers.emplace("video.motion", 0.05);
  return config;
}

template <typename T>
TwoStageResult run_two_stage(Model<T>& model, const std::vector<VideoSample>& train,
                             const std::vector<VideoSample>& val, const TrainConfig& warm_cfg,
                             const TrainConfig& fine_cfg, const std::function<void(Trainer<T>&, Stage)>& hooks) {
  if (warm_cfg.stage != Stage::warm_up) throw ConfigError("first stage must be configured as warm_up");
  if (fine_cfg.stage != Stage::fine_tune) throw ConfigError("second stage must be configured as fine_tune");
  Trainer<T> fine(model, fine_tune_defaults(fine_cfg));
  TwoStageResult result;
  {
    Trainer<T> warm(model, warm_cfg);
    if (hooks) hooks(warm, Stage::warm_up);
    TrainState<T> state = warm.initial_state();
    warm.run(train, val, state);
    result.warm_up = evaluate(model, val, true);
  }
  if (hooks) hooks(fine, Stage::fine_tune);
  TrainState<T> state = fine.initial_state();
  fine.run(train, val, state);
  result.fine_tune = evaluate(model, val, false);
  return result;
}

template <typename T>
Checkpoint to_checkpoint(const Model<T>& model, const TrainState<T>* state) {
  Checkpoint ck;
  write_network(ck, model.network, model.registry);
  write_decoder(ck, model.decoder_config, model.decoder);
  if (state == nullptr) return ck;
  ck.set("train.epoch", std::to_string(state->epoch));
  ck.set("train.step", std::to_string(state->step));
  ck.set("train.adam_steps", std::to_string(state->adam_steps));
  if (state->best_metric) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", *state->best_metric);
    ck.set("train.best_metric", buf);
  } else {
    ck.set("train.best_metric", "none");
  }
  ck.set("train.best_epoch", std::to_string(state->best_epoch));
  std::ostringstream rng;
  rng << state->rng;
  ck.set("train.rng", rng.str());
  std::size_t k = 0;
  model.visit([&](const std::string& name, const Matrix<T>&) {
    ck.add("adam.m." + name, state->first_moment.at(k));
    ck.add("adam.v." + name, state->second_moment.at(k));
    ++k;
  });
  return ck;
}

template <typename T>
Model<T> model_from_checkpoint(const Checkpoint& ck) {
  Model<T> m;
  m.network = HierarchyConfig::read_from(ck);
  m.registry = read_network<T>(ck, m.network);
  m.decoder_config.task = m.network.task;
  m.decoder_config.d = m.network.d;
  m.decoder_config.activation = m.network.activation;
  try {
    m.decoder_config.answers = std::stoull(ck.get("answers"));
  } catch (const std::logic_error&) {
    throw FormatError("checkpoint answer count is not a number");
  }
  try {
    m.decoder_config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint decoder: ") + e.what());
  }
  m.decoder = read_decoder<T>(ck, m.decoder_config);
  return m;
}

template <typename T>
TrainState<T> state_from_checkpoint(const Checkpoint& ck, const Model<T>& model) {
  if (!ck.has("train.step")) throw FormatError("checkpoint holds no training state");
  TrainState<T> s;
  try {
    s.epoch = std::stoull(ck.get("train.epoch"));
    s.step = std::stoull(ck.get("train.step"));
    s.adam_steps = std::stoull(ck.get("train.adam_steps"));
    s.best_epoch = std::stoull(ck.get("train.best_epoch"));
    const std::string& best = ck.get("train.best_metric");
    if (best != "none") s.best_metric = std::strtod(best.c_str(), nullptr);
  } catch (const std::logic_error&) {
    throw FormatError("checkpoint training counters are not numbers");
  }
  std::istringstream rng(ck.get("train.rng"));
  rng >> s.rng;
  if (!rng) throw FormatError("checkpoint rng state is unreadable");
  model.visit([&](const std::string& name, const Matrix<T>& p) {
    for (const char* prefix : {"adam.m.", "adam.v."}) {
      const Matrix<float>& stored = ck.tensor(prefix + name);
      if (stored.rows() != p.rows() || stored.cols() != p.cols()) {
        throw FormatError("checkpoint tensor " + std::string(prefix) + name + " has the wrong shape");
      }
    }
    s.first_moment.push_back(ck.tensor("adam.m." + name).template cast<T>());
    s.second_moment.push_back(ck.tensor("adam.v." + name).template cast<T>());
  });
  return s;
}

#define BLENDNET_INSTANTIATE_TRAINING(T)                                                                  \
  template struct Model<T>;                                                                               \
  template void optimizer_update(Optimizer, double, Matrix<T>&, const Matrix<double>&, double, Matrix<T>&,    \
                                 Matrix<T>&, std::uint64_t);                                               \
  template class Trainer<T>;                                                                              \
  template Matrix<double> predict(const Model<T>&, const VideoSample&, bool);                             \
  template Metrics evaluate(const Model<T>&, const std::vector<VideoSample>&, bool);                      \
  template TwoStageResult run_two_stage(Model<T>&, const std::vector<VideoSample>&,                       \
                                        const std::vector<VideoSample>&, const TrainConfig&,              \
                                        const TrainConfig&, const std::function<void(Trainer<T>&, Stage)>&); \
  template Checkpoint to_checkpoint(const Model<T>&, const TrainState<T>*);                               \
  template Model<T> model_from_checkpoint<T>(const Checkpoint&);                                          \
  template TrainState<T> state_from_checkpoint(const Checkpoint&, const Model<T>&);

BLENDNET_INSTANTIATE_TRAINING(float)
BLENDNET_INSTANTIATE_TRAINING(double)

#undef BLENDNET_INSTANTIATE_TRAINING

}  // namespace blendnet
