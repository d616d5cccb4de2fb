#include "blendnet/decoders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "blendnet/errors.hpp"
#include "blendnet/ops.hpp"

namespace blendnet {

void DecoderConfig::validate() const {
  if (d == 0) throw ConfigError("decoder width d must be >= 1");
  if (task == Task::open_ended && answers < 2) {
    throw ConfigError("open_ended decoder needs an answer space of at least 2, got " + std::to_string(answers));
  }
}

namespace {

template <typename T>
void set_shapes(DecoderParameters<T>& p, const DecoderConfig& c) {
  const std::size_t d = c.d;
  auto layer = [](Matrix<T>& w, Matrix<T>& b, std::size_t rows, std::size_t cols) {
    w = Matrix<T>(rows, cols);
    b = Matrix<T>(rows, 1);
  };
  if (c.task == Task::multi_choice) {
    layer(p.video_proj, p.video_bias, d, d);
    layer(p.q_proj, p.q_bias, d, d);
    layer(p.answer_proj, p.answer_bias, d, d);
    layer(p.hidden, p.hidden_bias, d, 3 * d);
    layer(p.out, p.out_bias, 1, d);
    layer(p.warm_hidden, p.warm_hidden_bias, d, 2 * d);
    layer(p.warm_out, p.warm_out_bias, 1, d);
    return;
  }
  const std::size_t outputs = c.task == Task::open_ended ? c.answers : 1;
  layer(p.q_proj, p.q_bias, d, d);
  layer(p.fuse, p.fuse_bias, d, 2 * d);
  layer(p.hidden, p.hidden_bias, d, d);
  layer(p.out, p.out_bias, outputs, d);
  layer(p.warm_fuse, p.warm_fuse_bias, d, d);
  layer(p.warm_out, p.warm_out_bias, outputs, d);
}

bool is_bias(const std::string& name) { return name.size() > 5 && name.compare(name.size() - 5, 5, "_bias") == 0; }

template <typename T>
Var<T> activate(Var<T> x, const DecoderConfig& c) {
  return c.activation == Activation::elu ? elu(x) : relu(x);
}

template <typename T>
Var<T> affine(const DecoderVars<T>& v, const std::string& weight, const std::string& bias, Var<T> x) {
  return add(matmul(v[weight], x), v[bias]);
}

template <typename T>
void expect_column(Var<T> x, std::size_t d, const char* what) {
  if (x.rows() != d || x.cols() != 1) {
    throw ShapeError(std::string("decoder ") + what + " must be " + std::to_string(d) + "x1, got " +
                     x.value().shape_string());
  }
}

// y' (regular) or y~ (warm-up) of the open-ended / count path.
template <typename T>
Var<T> hidden_features(Var<T> video, Var<T> question, const DecoderVars<T>& v, const DecoderConfig& c,
                       bool warm_up) {
  expect_column(video, c.d, "video embedding");
  if (warm_up) return activate(affine(v, "warm_fuse", "warm_fuse_bias", video), c);
  expect_column(question, c.d, "question");
  Var<T> q = affine(v, "q_proj", "q_bias", question);
  Var<T> y = activate(affine(v, "fuse", "fuse_bias", vstack(video, q)), c);
  return activate(affine(v, "hidden", "hidden_bias", y), c);
}

}  // namespace

template <typename T>
DecoderParameters<T> DecoderParameters<T>::zeros(const DecoderConfig& config) {
  config.validate();
  DecoderParameters p;
  set_shapes(p, config);
  return p;
}

template <typename T>
DecoderParameters<T> DecoderParameters<T>::initialized(const DecoderConfig& config, std::mt19937_64& rng) {
  DecoderParameters p = zeros(config);
  p.visit([&rng](const std::string& name, Matrix<T>& m) {
    if (is_bias(name)) return;
    const double bound = 1.0 / std::sqrt(static_cast<double>(m.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (T& x : m.data()) x = static_cast<T>(dist(rng));
  });
  return p;
}

template <typename T>
std::size_t DecoderParameters<T>::scalar_count() const {
  std::size_t total = 0;
  visit([&total](const std::string&, const Matrix<T>& m) { total += m.size(); });
  return total;
}

template <typename T>
Var<T> DecoderVars<T>::operator[](const std::string& name) const {
  for (const auto& [key, var] : entries)
    if (key == name) return var;
  throw UsageError("decoder has no parameter '" + name + "'");
}

template <typename T>
DecoderVars<T> bind(Tape<T>& tape, const DecoderParameters<T>& params, bool trainable) {
  DecoderVars<T> vars;
  params.visit([&](const std::string& name, const Matrix<T>& m) {
    vars.entries.emplace_back(name, trainable ? tape.variable(m) : tape.constant(m));
  });
  return vars;
}

template <typename T>
DecoderParameters<T> gradients(const DecoderVars<T>& vars, const DecoderParameters<T>& like) {
  DecoderParameters<T> out = like;
  out.visit([&vars](const std::string& name, Matrix<T>& m) { m = vars[name].grad(); });
  return out;
}

template <typename T>
Var<T> open_ended_logits(Var<T> video, Var<T> question, const DecoderVars<T>& vars, const DecoderConfig& config,
                         bool warm_up) {
  Var<T> h = hidden_features(video, question, vars, config, warm_up);
  return warm_up ? affine(vars, "warm_out", "warm_out_bias", h) : affine(vars, "out", "out_bias", h);
}

template <typename T>
Var<T> decode_open_ended(Var<T> video, Var<T> question, const DecoderVars<T>& vars, const DecoderConfig& config,
                         bool warm_up) {
  return softmax(open_ended_logits(video, question, vars, config, warm_up), Axis::within_column);
}

template <typename T>
Var<T> decode_count(Var<T> video, Var<T> question, const DecoderVars<T>& vars, const DecoderConfig& config,
                    bool warm_up) {
  Var<T> h = hidden_features(video, question, vars, config, warm_up);
  return warm_up ? affine(vars, "warm_out", "warm_out_bias", h) : affine(vars, "out", "out_bias", h);
}

template <typename T>
Var<T> decode_multi_choice(Var<T> video, Var<T> question, Var<T> answer, const DecoderVars<T>& vars,
                           const DecoderConfig& config, bool warm_up) {
  expect_column(video, config.d, "video embedding");
  expect_column(answer, config.d, "answer candidate");
  Var<T> v = affine(vars, "video_proj", "video_bias", video);
  Var<T> a = affine(vars, "answer_proj", "answer_bias", answer);
  if (warm_up) {
    Var<T> h = activate(affine(vars, "warm_hidden", "warm_hidden_bias", vstack(v, a)), config);
    return affine(vars, "warm_out", "warm_out_bias", h);
  }
  expect_column(question, config.d, "question");
  Var<T> q = affine(vars, "q_proj", "q_bias", question);
  Var<T> h = activate(affine(vars, "hidden", "hidden_bias", vstack(vstack(v, q), a)), config);
  return affine(vars, "out", "out_bias", h);
}

std::int64_t rounded_count(double raw) {
  if (!std::isfinite(raw)) throw NumericError("count prediction is not finite");
  return std::max<std::int64_t>(0, std::llround(raw));
}

template <typename T>
Var<T> decoder_prediction(Tape<T>& tape, const DecoderVars<T>& vars, const DecoderConfig& config,
                          const std::vector<Var<T>>& embeddings, const VideoSample& sample, bool warm_up) {
  if (embeddings.empty()) throw UsageError("decoder needs at least one embedding");
  Var<T> question = tape.constant(sample.question.cast<T>());
  switch (config.task) {
    case Task::open_ended:
      return decode_open_ended(embeddings[0], question, vars, config, warm_up);
    case Task::count:
      return decode_count(embeddings[0], question, vars, config, warm_up);
    case Task::multi_choice: {
      if (embeddings.size() != sample.candidates.size()) {
        throw ShapeError("got " + std::to_string(embeddings.size()) + " embeddings for " +
                         std::to_string(sample.candidates.size()) + " candidates");
      }
      std::vector<Var<T>> scores;
      for (std::size_t k = 0; k < embeddings.size(); ++k) {
        Var<T> a = tape.constant(sample.candidates[k].cast<T>());
        scores.push_back(decode_multi_choice(embeddings[k], question, a, vars, config, warm_up));
      }
      return transpose(hstack(scores));
    }
  }
  throw UsageError("unknown task");
}

template <typename T>
Var<T> decoder_loss(Tape<T>& tape, const DecoderVars<T>& vars, const DecoderConfig& config,
                    const std::vector<Var<T>>& embeddings, const VideoSample& sample, bool warm_up) {
  if (sample.label < 0) throw UsageError("negative label " + std::to_string(sample.label));
  const auto label = static_cast<std::size_t>(sample.label);
  if (config.task == Task::open_ended) {
    if (embeddings.empty()) throw UsageError("decoder needs at least one embedding");
    Var<T> question = tape.constant(sample.question.cast<T>());
    return softmax_cross_entropy(open_ended_logits(embeddings[0], question, vars, config, warm_up), label);
  }
  Var<T> prediction = decoder_prediction(tape, vars, config, embeddings, sample, warm_up);
  if (config.task == Task::count) return squared_error(prediction, static_cast<T>(sample.label));
  return hinge(prediction, label);
}

std::int64_t predicted_answer(const Matrix<double>& prediction, Task task) {
  if (prediction.empty()) throw UsageError("empty prediction");
  if (task == Task::count) return rounded_count(prediction[0]);
  const auto values = prediction.values();
  return std::distance(values.begin(), std::max_element(values.begin(), values.end()));
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::cross_entropy:
      return "cross_entropy";
    case LossKind::mse:
      return "mse";
    case LossKind::hinge:
      return "hinge";
  }
  return "unknown";
}

LossValue loss(const std::vector<double>& prediction, std::int64_t label, LossKind kind) {
  LossValue out{0.0, kind};
  if (kind == LossKind::mse) {
    if (prediction.size() != 1) throw ShapeError("mse expects a single raw prediction");
    if (label < 0) throw UsageError("count label must be nonnegative, got " + std::to_string(label));
    const double diff = prediction[0] - static_cast<double>(label);
    out.value = diff * diff;
    return out;
  }
  if (label < 0 || static_cast<std::size_t>(label) >= prediction.size()) {
    throw UsageError("label " + std::to_string(label) + " outside prediction of size " +
                     std::to_string(prediction.size()));
  }
  const auto gt = static_cast<std::size_t>(label);
  if (kind == LossKind::cross_entropy) {
    out.value = -std::log(std::max(prediction[gt], std::numeric_limits<double>::min()));
    if (out.value == 0.0) out.value = 0.0;  // drop a negative zero
    return out;
  }
  for (std::size_t k = 0; k < prediction.size(); ++k) {
    if (k != gt) out.value += std::max(0.0, 1.0 + prediction[k] - prediction[gt]);
  }
  return out;
}

template <typename T>
void write_decoder(Checkpoint& ck, const DecoderConfig& config, const DecoderParameters<T>& params) {
  ck.set("answers", std::to_string(config.answers));
  params.visit([&ck](const std::string& name, const Matrix<T>& m) { ck.add("decoder." + name, m); });
}

template <typename T>
DecoderParameters<T> read_decoder(const Checkpoint& ck, const DecoderConfig& config) {
  DecoderParameters<T> p = DecoderParameters<T>::zeros(config);
  p.visit([&ck](const std::string& name, Matrix<T>& m) {
    const Matrix<float>& stored = ck.tensor("decoder." + name);
    if (stored.rows() != m.rows() || stored.cols() != m.cols()) {
      throw FormatError("checkpoint tensor decoder." + name + " is " + stored.shape_string() + ", expected " +
                        m.shape_string());
    }
    m = stored.cast<T>();
  });
  return p;
}

#define BLENDNET_INSTANTIATE_DECODERS(T)                                                                    \
  template struct DecoderParameters<T>;                                                                     \
  template struct DecoderVars<T>;                                                                           \
  template DecoderVars<T> bind(Tape<T>&, const DecoderParameters<T>&, bool);                                \
  template DecoderParameters<T> gradients(const DecoderVars<T>&, const DecoderParameters<T>&);              \
  template Var<T> open_ended_logits(Var<T>, Var<T>, const DecoderVars<T>&, const DecoderConfig&, bool);     \
  template Var<T> decode_open_ended(Var<T>, Var<T>, const DecoderVars<T>&, const DecoderConfig&, bool);     \
  template Var<T> decode_count(Var<T>, Var<T>, const DecoderVars<T>&, const DecoderConfig&, bool);          \
  template Var<T> decode_multi_choice(Var<T>, Var<T>, Var<T>, const DecoderVars<T>&, const DecoderConfig&,  \
                                      bool);                                                                \
  template Var<T> decoder_prediction(Tape<T>&, const DecoderVars<T>&, const DecoderConfig&,                 \
                                     const std::vector<Var<T>>&, const VideoSample&, bool);                 \
  template Var<T> decoder_loss(Tape<T>&, const DecoderVars<T>&, const DecoderConfig&,                       \
                               const std::vector<Var<T>>&, const VideoSample&, bool);                       \
  template void write_decoder(Checkpoint&, const DecoderConfig&, const DecoderParameters<T>&);              \
  template DecoderParameters<T> read_decoder<T>(const Checkpoint&, const DecoderConfig&);

BLENDNET_INSTANTIATE_DECODERS(float)
BLENDNET_INSTANTIATE_DECODERS(double)

#undef BLENDNET_INSTANTIATE_DECODERS

}  // namespace blendnet
