#include "blendnet/hierarchy.hpp"

#include <algorithm>
#include <cmath>

#include "blendnet/errors.hpp"

namespace blendnet {

std::string to_string(Sharing s) { return s == Sharing::per_module ? "per_module" : "per_level"; }
std::string to_string(Level l) { return l == Level::clip ? "clip" : "video"; }
std::string to_string(Role r) {
  switch (r) {
    case Role::motion:
      return "motion";
    case Role::candidate:
      return "candidate";
    case Role::question:
      return "question";
  }
  return "unknown";
}

Sharing parse_sharing(const std::string& s) {
  if (s == "per_module") return Sharing::per_module;
  if (s == "per_level") return Sharing::per_level;
  throw ConfigError("unknown sharing mode '" + s + "' (expected per_module|per_level)");
}

std::string LogicalSlot::name() const { return to_string(level) + "." + to_string(role); }

std::size_t HierarchyConfig::layers() const { return task == Task::multi_choice ? 6 : 4; }

std::vector<Role> HierarchyConfig::roles() const {
  if (task == Task::multi_choice) return {Role::motion, Role::candidate, Role::question};
  return {Role::motion, Role::question};
}

GnnmConfig HierarchyConfig::module_config(Level level, Role role) const {
  GnnmConfig c;
  c.d = d;
  c.n = level == Level::clip ? frames_per_clip : num_clips;
  c.attention_variant = attention_variant;
  c.aggregate_output = role == Role::question;
  c.activation = activation;
  c.epsilon = epsilon;
  return c;
}

void HierarchyConfig::validate() const {
  if (d == 0 || num_clips == 0 || frames_per_clip == 0) {
    throw ConfigError("hierarchy needs d, num_clips and frames_per_clip >= 1");
  }
  for (Level level : {Level::clip, Level::video}) {
    const std::vector<Role> rs = roles();
    const GnnmConfig first = module_config(level, rs.front());
    for (Role role : rs) {
      const GnnmConfig c = module_config(level, role);
      c.validate();
      if (sharing == Sharing::per_level && !c.same_parameter_shape(first)) {
        throw ConfigError("per_level sharing needs identical module shapes within the " +
                          to_string(level) + " level");
      }
    }
  }
}

void HierarchyConfig::write_to(Checkpoint& ck) const {
  ck.set("d", std::to_string(d));
  ck.set("num_clips", std::to_string(num_clips));
  ck.set("frames_per_clip", std::to_string(frames_per_clip));
  ck.set("task", to_string(task));
  ck.set("sharing", to_string(sharing));
  ck.set("warm_up_mode", warm_up_mode ? "1" : "0");
  ck.set("attention_variant", to_string(attention_variant));
  ck.set("activation", to_string(activation));
  char eps[64];
  std::snprintf(eps, sizeof eps, "%.17g", epsilon);
  ck.set("epsilon", eps);
}

HierarchyConfig HierarchyConfig::read_from(const Checkpoint& ck) {
  HierarchyConfig c;
  try {
    c.d = std::stoull(ck.get("d"));
    c.num_clips = std::stoull(ck.get("num_clips"));
    c.frames_per_clip = std::stoull(ck.get("frames_per_clip"));
    c.epsilon = std::stod(ck.get("epsilon"));
  } catch (const std::logic_error&) {
    throw FormatError("checkpoint holds a non-numeric network dimension");
  }
  c.task = parse_task(ck.get("task"));
  c.sharing = parse_sharing(ck.get("sharing"));
  c.warm_up_mode = ck.get("warm_up_mode") == "1";
  c.attention_variant = parse_attention_variant(ck.get("attention_variant"));
  c.activation = parse_activation(ck.get("activation"));
  c.validate();
  return c;
}

template <typename T>
const LogicalSlot& SharingRegistry<T>::slot(Level level, Role role) const {
  for (const LogicalSlot& s : slots)
    if (s.level == level && s.role == role) return s;
  throw UsageError("network has no " + to_string(level) + "." + to_string(role) + " slot");
}

template <typename T>
std::size_t SharingRegistry<T>::call_sites(std::size_t p) const {
  return static_cast<std::size_t>(
      std::count_if(slots.begin(), slots.end(), [p](const LogicalSlot& s) { return s.physical == p; }));
}

template <typename T>
SharingRegistry<T> build_network(const HierarchyConfig& config, std::mt19937_64& rng) {
  config.validate();
  SharingRegistry<T> reg;
  for (Level level : {Level::clip, Level::video}) {
    std::optional<std::size_t> level_set;
    for (Role role : config.roles()) {
      GnnmConfig shape = config.module_config(level, role);
      shape.aggregate_output = false;
      if (config.sharing == Sharing::per_level && level_set) {
        reg.slots.push_back(LogicalSlot{level, role, *level_set});
        continue;
      }
      reg.sets.push_back(GnnmParameters<T>::initialized(shape, rng));
      reg.set_configs.push_back(shape);
      level_set = reg.sets.size() - 1;
      reg.slots.push_back(LogicalSlot{level, role, *level_set});
    }
  }
  return reg;
}

template <typename T>
SharingRegistry<T> unshare(const SharingRegistry<T>& shared) {
  SharingRegistry<T> out;
  for (const LogicalSlot& s : shared.slots) {
    out.sets.push_back(shared.sets.at(s.physical));
    out.set_configs.push_back(shared.set_configs.at(s.physical));
    out.slots.push_back(LogicalSlot{s.level, s.role, out.sets.size() - 1});
  }
  return out;
}

template <typename T>
BoundNetwork<T> bind(Tape<T>& tape, const SharingRegistry<T>& registry, bool trainable) {
  BoundNetwork<T> net;
  net.sets.reserve(registry.sets.size());
  for (const auto& set : registry.sets) net.sets.push_back(bind(tape, set, trainable));
  return net;
}

void check_sample(const HierarchyConfig& config, const VideoSample& sample) {
  const std::size_t d = config.d;
  auto expect = [](const Matrix<float>& m, std::size_t r, std::size_t c, const std::string& what) {
    if (m.rows() != r || m.cols() != c) {
      throw ShapeError(what + " is " + m.shape_string() + ", expected " + std::to_string(r) + "x" +
                       std::to_string(c));
    }
  };
  if (sample.clip_frames.size() != config.num_clips || sample.clip_motion.size() != config.num_clips) {
    throw ShapeError("sample holds " + std::to_string(sample.clip_frames.size()) + " clips and " +
                     std::to_string(sample.clip_motion.size()) + " clip motions, expected " +
                     std::to_string(config.num_clips));
  }
  for (std::size_t i = 0; i < config.num_clips; ++i) {
    expect(sample.clip_frames[i], d, config.frames_per_clip, "clip " + std::to_string(i) + " frames");
    expect(sample.clip_motion[i], d, 1, "clip " + std::to_string(i) + " motion");
  }
  expect(sample.video_motion, d, 1, "video motion");
  expect(sample.question, d, 1, "question");
  const bool mc = config.task == Task::multi_choice;
  if (mc == sample.candidates.empty()) {
    throw ShapeError(mc ? "multi_choice sample has no candidates"
                        : "only multi_choice samples may carry candidates");
  }
  for (std::size_t k = 0; k < sample.candidates.size(); ++k) {
    expect(sample.candidates[k], d, 1, "candidate " + std::to_string(k));
  }
}

namespace {

template <typename T>
Var<T> run_level(const BoundNetwork<T>& net, const SharingRegistry<T>& registry,
                 const HierarchyConfig& config, Level level, Var<T> x, Var<T> motion,
                 std::optional<Var<T>> candidate, Var<T> question) {
  for (Role role : config.roles()) {
    const LogicalSlot& slot = registry.slot(level, role);
    Var<T> context = role == Role::motion ? motion : role == Role::question ? question : *candidate;
    x = gnnm_forward(x, context, net.sets[slot.physical], config.module_config(level, role)).result();
  }
  return x;
}

template <typename T>
Var<T> question_context(Tape<T>& tape, const HierarchyConfig& config, const VideoSample& sample) {
  if (config.warm_up_mode) return tape.constant(Matrix<T>(config.d, 1));
  return tape.constant(sample.question.cast<T>());
}

template <typename T>
std::optional<Var<T>> candidate_context(Tape<T>& tape, const HierarchyConfig& config,
                                        const VideoSample& sample, std::optional<std::size_t> candidate) {
  if (config.task != Task::multi_choice) return std::nullopt;
  if (!candidate || *candidate >= sample.candidates.size()) {
    throw UsageError("multi_choice forward needs a candidate index below " +
                     std::to_string(sample.candidates.size()));
  }
  return tape.constant(sample.candidates[*candidate].cast<T>());
}

}  // namespace

template <typename T>
std::vector<Var<T>> clip_embeddings(Tape<T>& tape, const BoundNetwork<T>& net,
                                    const SharingRegistry<T>& registry, const HierarchyConfig& config,
                                    const VideoSample& sample, std::optional<std::size_t> candidate) {
  check_sample(config, sample);
  const Var<T> question = question_context(tape, config, sample);
  const std::optional<Var<T>> cand = candidate_context(tape, config, sample, candidate);
  std::vector<Var<T>> out;
  out.reserve(config.num_clips);
  for (std::size_t i = 0; i < config.num_clips; ++i) {
    Var<T> frames = tape.constant(sample.clip_frames[i].cast<T>());
    Var<T> motion = tape.constant(sample.clip_motion[i].cast<T>());
    out.push_back(run_level(net, registry, config, Level::clip, frames, motion, cand, question));
  }
  return out;
}

template <typename T>
Var<T> network_forward(Tape<T>& tape, const BoundNetwork<T>& net, const SharingRegistry<T>& registry,
                       const HierarchyConfig& config, const VideoSample& sample,
                       std::optional<std::size_t> candidate) {
  std::vector<Var<T>> clips = clip_embeddings(tape, net, registry, config, sample, candidate);
  const Var<T> question = question_context(tape, config, sample);
  const std::optional<Var<T>> cand = candidate_context(tape, config, sample, candidate);
  Var<T> motion = tape.constant(sample.video_motion.cast<T>());
  return run_level(net, registry, config, Level::video, hstack(clips), motion, cand, question);
}

template <typename T>
std::vector<Var<T>> network_embeddings(Tape<T>& tape, const BoundNetwork<T>& net,
                                       const SharingRegistry<T>& registry, const HierarchyConfig& config,
                                       const VideoSample& sample) {
  std::vector<Var<T>> out;
  if (config.task != Task::multi_choice) {
    out.push_back(network_forward(tape, net, registry, config, sample));
    return out;
  }
  for (std::size_t k = 0; k < sample.candidates.size(); ++k) {
    out.push_back(network_forward(tape, net, registry, config, sample, k));
  }
  return out;
}

SharedGradientReport shared_gradient_check(const SharingRegistry<double>& registry,
                                           const HierarchyConfig& config, const VideoSample& sample,
                                           const Matrix<double>& readout) {
  auto run = [&](const SharingRegistry<double>& reg) {
    Tape<double> tape;
    BoundNetwork<double> net = bind(tape, reg);
    std::vector<Var<double>> parts;
    Var<double> r = tape.constant(readout);
    for (Var<double> e : network_embeddings(tape, net, reg, config, sample)) {
      parts.push_back(sum(hadamard(e, r)));
    }
    Var<double> loss = parts.size() == 1 ? parts.front() : sum(hstack(parts));
    tape.backward(loss);
    std::vector<GnnmParameters<double>> grads;
    for (const auto& vars : net.sets) grads.push_back(gradients(vars));
    return grads;
  };

  const std::vector<GnnmParameters<double>> shared = run(registry);
  const SharingRegistry<double> clone = unshare(registry);
  const std::vector<GnnmParameters<double>> split = run(clone);

  std::vector<GnnmParameters<double>> summed;
  for (const auto& cfg : registry.set_configs) {
    GnnmParameters<double> z = GnnmParameters<double>::neutral(cfg);
    z.visit([](const std::string&, Matrix<double>& m) { m.fill(0.0); });
    summed.push_back(std::move(z));
  }
  for (std::size_t s = 0; s < registry.slots.size(); ++s) {
    GnnmParameters<double>& acc = summed[registry.slots[s].physical];
    std::vector<const Matrix<double>*> src;
    split[clone.slots[s].physical].visit(
        [&src](const std::string&, const Matrix<double>& m) { src.push_back(&m); });
    std::size_t i = 0;
    acc.visit([&](const std::string&, Matrix<double>& m) {
      for (std::size_t k = 0; k < m.size(); ++k) m[k] += (*src[i])[k];
      ++i;
    });
  }

  SharedGradientReport report;
  for (std::size_t p = 0; p < registry.sets.size(); ++p) {
    std::vector<const Matrix<double>*> want;
    summed[p].visit([&want](const std::string&, const Matrix<double>& m) { want.push_back(&m); });
    double worst = 0.0;
    std::size_t i = 0;
    shared[p].visit([&](const std::string&, const Matrix<double>& m) {
      for (std::size_t k = 0; k < m.size(); ++k) {
        worst = std::max(worst, std::abs(m[k] - (*want[i])[k]));
        report.max_abs_gradient = std::max(report.max_abs_gradient, std::abs(m[k]));
      }
      ++i;
    });
    report.per_set_max_abs_diff.push_back(worst);
    report.per_set_call_sites.push_back(registry.call_sites(p));
    report.max_abs_diff = std::max(report.max_abs_diff, worst);
  }
  return report;
}

template <typename T>
void write_network(Checkpoint& ck, const HierarchyConfig& config, const SharingRegistry<T>& registry) {
  config.write_to(ck);
  ck.set("physical_sets", std::to_string(registry.sets.size()));
  for (std::size_t p = 0; p < registry.sets.size(); ++p) {
    registry.sets[p].visit([&](const std::string& name, const Matrix<T>& m) {
      ck.add("set" + std::to_string(p) + "." + name, m);
    });
  }
}

template <typename T>
SharingRegistry<T> read_network(const Checkpoint& ck, const HierarchyConfig& config) {
  std::mt19937_64 unused(0);
  SharingRegistry<T> reg = build_network<T>(config, unused);
  if (ck.get("physical_sets") != std::to_string(reg.sets.size())) {
    throw FormatError("checkpoint holds " + ck.get("physical_sets") + " physical sets, configuration needs " +
                      std::to_string(reg.sets.size()));
  }
  for (std::size_t p = 0; p < reg.sets.size(); ++p) {
    reg.sets[p].visit([&](const std::string& name, Matrix<T>& m) {
      const std::string key = "set" + std::to_string(p) + "." + name;
      const Matrix<float>& stored = ck.tensor(key);
      if (!stored.same_shape(m.template cast<float>())) {
        throw FormatError("checkpoint tensor " + key + " is " + stored.shape_string() + ", expected " +
                          m.shape_string());
      }
      m = stored.template cast<T>();
    });
  }
  return reg;
}

#define BLENDNET_INSTANTIATE_HIERARCHY(T)                                                              \
  template struct SharingRegistry<T>;                                                                  \
  template SharingRegistry<T> build_network<T>(const HierarchyConfig&, std::mt19937_64&);              \
  template SharingRegistry<T> unshare(const SharingRegistry<T>&);                                      \
  template BoundNetwork<T> bind(Tape<T>&, const SharingRegistry<T>&, bool);                            \
  template std::vector<Var<T>> clip_embeddings(Tape<T>&, const BoundNetwork<T>&,                       \
                                               const SharingRegistry<T>&, const HierarchyConfig&,      \
                                               const VideoSample&, std::optional<std::size_t>);        \
  template Var<T> network_forward(Tape<T>&, const BoundNetwork<T>&, const SharingRegistry<T>&,         \
                                  const HierarchyConfig&, const VideoSample&,                          \
                                  std::optional<std::size_t>);                                         \
  template std::vector<Var<T>> network_embeddings(Tape<T>&, const BoundNetwork<T>&,                    \
                                                  const SharingRegistry<T>&, const HierarchyConfig&,   \
                                                  const VideoSample&);                                 \
  template void write_network(Checkpoint&, const HierarchyConfig&, const SharingRegistry<T>&);         \
  template SharingRegistry<T> read_network<T>(const Checkpoint&, const HierarchyConfig&);

BLENDNET_INSTANTIATE_HIERARCHY(float)
BLENDNET_INSTANTIATE_HIERARCHY(double)

#undef BLENDNET_INSTANTIATE_HIERARCHY

}  // namespace blendnet
