#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "blendnet/checkpoint.hpp"
#include "blendnet/gnnm.hpp"
#include "blendnet/sample.hpp"

namespace blendnet {

// per_module: one physical parameter set per logical slot.
// per_level: every slot within a level binds the same physical set.
enum class Sharing { per_module, per_level };
enum class Level { clip, video };
// Which context conditions the module.
enum class Role { motion, candidate, question };

std::string to_string(Sharing s);
std::string to_string(Level l);
std::string to_string(Role r);
Sharing parse_sharing(const std::string& s);

struct HierarchyConfig {
  std::size_t d = 512;
  std::size_t num_clips = 8;
  std::size_t frames_per_clip = 16;
  Task task = Task::open_ended;
  Sharing sharing = Sharing::per_module;
  bool warm_up_mode = false;
  AttentionVariant attention_variant = AttentionVariant::component;
  Activation activation = Activation::elu;
  double epsilon = 1e-5;

  void validate() const;
  // 6 for multi_choice, 4 otherwise.
  std::size_t layers() const;
  // Module order within each level: motion, [candidate], question. Only the
  // question-conditioned module aggregates.
  std::vector<Role> roles() const;
  GnnmConfig module_config(Level level, Role role) const;

  // Stable key=value rendering used in checkpoint headers.
  void write_to(Checkpoint& ck) const;
  static HierarchyConfig read_from(const Checkpoint& ck);

  friend bool operator==(const HierarchyConfig&, const HierarchyConfig&) = default;
};

struct LogicalSlot {
  Level level;
  Role role;
  std::size_t physical;

  // e.g. "clip.motion"
  std::string name() const;
};

template <typename T>
struct SharingRegistry {
  std::vector<LogicalSlot> slots;
  std::vector<GnnmParameters<T>> sets;
  std::vector<GnnmConfig> set_configs;

  const LogicalSlot& slot(Level level, Role role) const;
  // Number of logical slots bound to physical set `p`.
  std::size_t call_sites(std::size_t p) const;
};

// Slots in network order (clip level first), sets initialized from `rng`.
template <typename T>
SharingRegistry<T> build_network(const HierarchyConfig& config, std::mt19937_64& rng);

// Per-module clone whose every slot starts from the weights of the physical
// set it was bound to in `shared`.
template <typename T>
SharingRegistry<T> unshare(const SharingRegistry<T>& shared);

template <typename T>
struct BoundNetwork {
  std::vector<GnnmVars<T>> sets;
};

template <typename T>
BoundNetwork<T> bind(Tape<T>& tape, const SharingRegistry<T>& registry, bool trainable = true);

// Clip-level chain for every clip: r_i (d x 1).
template <typename T>
std::vector<Var<T>> clip_embeddings(Tape<T>& tape, const BoundNetwork<T>& net,
                                    const SharingRegistry<T>& registry, const HierarchyConfig& config,
                                    const VideoSample& sample, std::optional<std::size_t> candidate);

// Full network for one candidate (or none). Returns the d x 1 embedding.
template <typename T>
Var<T> network_forward(Tape<T>& tape, const BoundNetwork<T>& net, const SharingRegistry<T>& registry,
                       const HierarchyConfig& config, const VideoSample& sample,
                       std::optional<std::size_t> candidate = std::nullopt);

// One embedding per candidate for multi_choice, a single one otherwise.
template <typename T>
std::vector<Var<T>> network_embeddings(Tape<T>& tape, const BoundNetwork<T>& net,
                                       const SharingRegistry<T>& registry, const HierarchyConfig& config,
                                       const VideoSample& sample);

// Throws ShapeError when the sample does not fit the configuration.
void check_sample(const HierarchyConfig& config, const VideoSample& sample);

struct SharedGradientReport {
  std::vector<double> per_set_max_abs_diff;
  std::vector<std::size_t> per_set_call_sites;
  double max_abs_diff = 0.0;
  double max_abs_gradient = 0.0;
};

// Gradient of readout . embedding (summed over candidates) with respect to each
// shared physical set, compared against the summed per-call-site gradients of
// an unshared clone holding identical weights.
SharedGradientReport shared_gradient_check(const SharingRegistry<double>& registry,
                                           const HierarchyConfig& config, const VideoSample& sample,
                                           const Matrix<double>& readout);

template <typename T>
void write_network(Checkpoint& ck, const HierarchyConfig& config, const SharingRegistry<T>& registry);
template <typename T>
SharingRegistry<T> read_network(const Checkpoint& ck, const HierarchyConfig& config);

}  // namespace blendnet
