#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blendnet/gnnm.hpp"
#include "blendnet/hierarchy.hpp"

namespace blendnet {

// Arguments must be >= 1; UsageError otherwise.
std::uint64_t count_conv(std::uint64_t c_in, std::uint64_t s, std::uint64_t c_out, bool bias);
std::uint64_t count_linear(std::uint64_t l_in, std::uint64_t l_out, bool bias);

struct GnnmPartCounts {
  std::uint64_t conv = 0;
  std::uint64_t atten = 0;
  std::uint64_t hybrid = 0;
  std::uint64_t layernorm = 0;

  std::uint64_t total() const { return conv + atten + hybrid + layernorm; }
};

GnnmPartCounts count_gnnm_parts(const GnnmConfig& config);
// temporal: 7d^2 + 6d + 3; component: 5d^2 + 2n^2 + 6d + 3.
std::uint64_t count_gnnm_params(const GnnmConfig& config);

struct SpaceBound {
  std::uint64_t slots = 0;  // 2m + 1
  std::uint64_t bytes = 0;  // float32 storage
};

SpaceBound space_lower_bound(std::uint64_t m);

struct ModuleCount {
  std::string slot;
  std::size_t physical = 0;
  GnnmPartCounts parts;
  std::uint64_t formula = 0;
  std::uint64_t enumerated = 0;
};

struct CountReport {
  std::vector<ModuleCount> modules;  // one per logical slot
  std::size_t physical_sets = 0;
  std::uint64_t logical_total = 0;
  std::uint64_t physical_total = 0;
  SpaceBound space;                  // of physical_total
  std::uint64_t decoder_total = 0;   // not part of the module formulas
  std::vector<std::string> mismatches;

  bool consistent() const { return mismatches.empty(); }
  std::string table() const;
  std::string key_values() const;
};

template <typename T>
CountReport audit_network(const SharingRegistry<T>& registry, std::uint64_t decoder_scalars = 0);

}  // namespace blendnet
