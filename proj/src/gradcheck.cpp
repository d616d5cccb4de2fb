#include "blendnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace blendnet {

namespace {

double evaluate(const NamedLeaves& leaves, const ScalarFunction& fn) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  vars.reserve(leaves.size());
  for (const auto& [name, value] : leaves) vars.push_back(tape.constant(value));
  Var<double> out = fn(tape, vars);
  if (out.value().size() != 1) throw UsageError("gradient check function must return a scalar");
  return out.value()[0];
}

Matrix<double> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix<double> m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

}  // namespace

GradCheckReport finite_difference_check(const NamedLeaves& leaves, const ScalarFunction& fn,
                                        const GradCheckOptions& options) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  vars.reserve(leaves.size());
  for (const auto& [name, value] : leaves) vars.push_back(tape.variable(value));
  Var<double> root = fn(tape, vars);
  tape.backward(root);

  GradCheckReport report;
  NamedLeaves probe = leaves;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Matrix<double> analytic = vars[li].grad();
    if (options.corrupt_leaf && *options.corrupt_leaf == leaves[li].first && analytic.size() > 0) {
      analytic[0] += 1.0;
    }
    GradCheckEntry entry{leaves[li].first, 0, 0.0, 0.0};
    Matrix<double>& slot = probe[li].second;
    for (std::size_t k = 0; k < slot.size(); ++k) {
      const double saved = slot[k];
      slot[k] = saved + options.step;
      const double up = evaluate(probe, fn);
      slot[k] = saved - options.step;
      const double down = evaluate(probe, fn);
      slot[k] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k];
      const double abs_err = std::abs(a - numeric);
      entry.max_absolute_error = std::max(entry.max_absolute_error, abs_err);
      if (std::abs(a) + std::abs(numeric) < options.exempt_below) continue;
      ++entry.checked;
      const double rel = abs_err / std::max(std::abs(a), std::abs(numeric));
      entry.max_relative_error = std::max(entry.max_relative_error, rel);
    }
    if (report.worst.empty() || entry.max_relative_error > report.max_relative_error) {
      report.max_relative_error = entry.max_relative_error;
      report.worst = entry.name;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

GradCheckReport check_gnnm_gradients(const GnnmConfig& config, std::uint64_t seed,
                                     const GradCheckOptions& options) {
  config.validate();
  std::mt19937_64 rng(seed);
  const GnnmParameters<double> params = GnnmParameters<double>::initialized(config, rng);
  const Matrix<double> x = random_matrix(config.d, config.n, rng);
  const Matrix<double> c = random_matrix(config.d, 1, rng);
  const Matrix<double> readout =
      random_matrix(config.d, config.aggregate_output ? 1 : config.n, rng);

  NamedLeaves leaves;
  params.visit([&leaves](const std::string& name, const Matrix<double>& m) {
    leaves.emplace_back(name, m);
  });
  leaves.emplace_back("input", x);
  leaves.emplace_back("context", c);

  auto fn = [&config, &readout](Tape<double>& tape, const std::vector<Var<double>>& v) {
    GnnmVars<double> p;
    std::size_t i = 0;
    p.conv_kernel = v[i++];
    p.attn_q = v[i++];
    p.attn_k = v[i++];
    p.attn_v = v[i++];
    p.attn_out = v[i++];
    p.hyb_q = v[i++];
    p.hyb_k = v[i++];
    p.hyb_v = v[i++];
    for (std::size_t l = 0; l < 3; ++l) {
      p.gamma[l] = v[i++];
      p.beta[l] = v[i++];
    }
    GnnmOutput<double> out = gnnm_forward(v[i], v[i + 1], p, config);
    return sum(hadamard(out.result(), tape.constant(readout)));
  };
  return finite_difference_check(leaves, fn, options);
}

}  // namespace blendnet
