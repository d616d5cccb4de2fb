#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "blendnet/gnnm.hpp"
#include "blendnet/matrix.hpp"
#include "blendnet/tape.hpp"

namespace blendnet {

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_relative_error = 0.0;
  std::string worst;  // name of the leaf holding the largest relative error

  bool passed(double tolerance) const { return max_relative_error < tolerance; }
};

using NamedLeaves = std::vector<std::pair<std::string, Matrix<double>>>;
using ScalarFunction = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

struct GradCheckOptions {
  double step = 1e-5;
  // Elements whose |analytic| + |numeric| falls below this are not compared.
  double exempt_below = 1e-8;
  // Test hook: adds 1.0 to the first analytic gradient entry of this leaf.
  std::optional<std::string> corrupt_leaf;
};

// Compares reverse-mode gradients of `fn` against central differences, one
// leaf element at a time. Relative error is |a - n| / max(|a|, |n|).
GradCheckReport finite_difference_check(const NamedLeaves& leaves, const ScalarFunction& fn,
                                        const GradCheckOptions& options = {});

// Gradient check of a random scalar readout of gnnm_forward with respect to
// every parameter, the input sequence and the context vector.
GradCheckReport check_gnnm_gradients(const GnnmConfig& config, std::uint64_t seed,
                                     const GradCheckOptions& options = {});

}  // namespace blendnet
