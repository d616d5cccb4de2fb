#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <random>
#include <string>

#include "blendnet/matrix.hpp"
#include "blendnet/ops.hpp"
#include "blendnet/tape.hpp"

namespace blendnet {

// component: self-attention among the d feature-component time series, with
// projections acting on the time axis (n -> n/2) and a d x d attention map.
// temporal: projections act on the feature axis (d -> d/2), n x n map.
enum class AttentionVariant { component, temporal };
enum class Activation { elu, relu };

std::string to_string(AttentionVariant v);
std::string to_string(Activation a);
AttentionVariant parse_attention_variant(const std::string& s);
Activation parse_activation(const std::string& s);

struct GnnmConfig {
  std::size_t d = 512;
  std::size_t n = 16;
  AttentionVariant attention_variant = AttentionVariant::component;
  bool aggregate_output = false;
  Activation activation = Activation::elu;
  double epsilon = 1e-5;

  // Throws ConfigError on d or n of zero, or on the parity the variant needs.
  void validate() const;

  // Width of the reduced attention axis (n/2 or d/2).
  std::size_t reduced() const;
  // Length of the axis the projections act on (n or d).
  std::size_t projected() const;

  // True when two configs produce parameter sets of identical shapes.
  bool same_parameter_shape(const GnnmConfig& other) const;
};

template <typename T>
struct LayerNormParams {
  Matrix<T> gamma;
  Matrix<T> beta;
};

// Weights of one module instance. No bias terms anywhere.
template <typename T>
struct GnnmParameters {
  Matrix<T> conv_kernel;  // 3 x 1
  Matrix<T> attn_q, attn_k, attn_v;  // reduced x projected
  Matrix<T> attn_out;                // projected x reduced
  Matrix<T> hyb_q;  // d x 2d
  Matrix<T> hyb_k;  // d x d
  Matrix<T> hyb_v;  // d x 2d
  std::array<LayerNormParams<T>, 3> ln;

  // Zero projections, identity kernel (0,1,0), unit gamma, zero beta.
  static GnnmParameters neutral(const GnnmConfig& config);
  // Weights uniform in +-1/sqrt(fan_in), kernel (0,1,0), unit gamma, zero beta.
  static GnnmParameters initialized(const GnnmConfig& config, std::mt19937_64& rng);

  template <typename F>
  void visit(F&& f) { visit_all(*this, f); }
  template <typename F>
  void visit(F&& f) const { visit_all(*this, f); }

  // Enumerated number of trainable scalars.
  std::size_t scalar_count() const;

  template <typename U>
  GnnmParameters<U> cast() const {
    GnnmParameters<U> out;
    out.conv_kernel = conv_kernel.template cast<U>();
    out.attn_q = attn_q.template cast<U>();
    out.attn_k = attn_k.template cast<U>();
    out.attn_v = attn_v.template cast<U>();
    out.attn_out = attn_out.template cast<U>();
    out.hyb_q = hyb_q.template cast<U>();
    out.hyb_k = hyb_k.template cast<U>();
    out.hyb_v = hyb_v.template cast<U>();
    for (std::size_t i = 0; i < ln.size(); ++i) {
      out.ln[i].gamma = ln[i].gamma.template cast<U>();
      out.ln[i].beta = ln[i].beta.template cast<U>();
    }
    return out;
  }

 private:
  template <typename Self, typename F>
  static void visit_all(Self& self, F& f) {
    f("conv_kernel", self.conv_kernel);
    f("attn_q", self.attn_q);
    f("attn_k", self.attn_k);
    f("attn_v", self.attn_v);
    f("attn_out", self.attn_out);
    f("hyb_q", self.hyb_q);
    f("hyb_k", self.hyb_k);
    f("hyb_v", self.hyb_v);
    for (std::size_t i = 0; i < self.ln.size(); ++i) {
      const std::string idx = std::to_string(i + 1);
      f("ln" + idx + ".gamma", self.ln[i].gamma);
      f("ln" + idx + ".beta", self.ln[i].beta);
    }
  }
};

// Parameters bound as tape variables for one forward/backward pass.
template <typename T>
struct GnnmVars {
  Var<T> conv_kernel;
  Var<T> attn_q, attn_k, attn_v, attn_out;
  Var<T> hyb_q, hyb_k, hyb_v;
  std::array<Var<T>, 3> gamma;
  std::array<Var<T>, 3> beta;

  template <typename F>
  void visit(F&& f) const {
    f("conv_kernel", conv_kernel);
    f("attn_q", attn_q);
    f("attn_k", attn_k);
    f("attn_v", attn_v);
    f("attn_out", attn_out);
    f("hyb_q", hyb_q);
    f("hyb_k", hyb_k);
    f("hyb_v", hyb_v);
    for (std::size_t i = 0; i < gamma.size(); ++i) {
      const std::string idx = std::to_string(i + 1);
      f("ln" + idx + ".gamma", gamma[i]);
      f("ln" + idx + ".beta", beta[i]);
    }
  }
};

template <typename T>
GnnmVars<T> bind(Tape<T>& tape, const GnnmParameters<T>& params, bool trainable = true);

// Copies the gradients held on the tape for `vars` into a parameter-shaped set.
template <typename T>
GnnmParameters<T> gradients(const GnnmVars<T>& vars);

template <typename T>
struct GnnmOutput {
  std::optional<Var<T>> sequence;  // d x n, non-aggregated
  std::optional<Var<T>> vector;    // d x 1, aggregated
  Matrix<T> attention_map;         // n x n hybrid attention A, column-stochastic
  Matrix<T> values;                // V-hat, d x n
  Matrix<T> aggregation_weights;   // n x 1 when aggregated, empty otherwise

  Var<T> result() const { return sequence ? *sequence : *vector; }
};

// Chronological convolution mask: softmax over time of conv1d_time(x), used
// as an elementwise mask on x. Row j of the result depends only on row j of x.
template <typename T>
Var<T> f_conv(Var<T> x, Var<T> kernel);

template <typename T>
Var<T> f_atten(Var<T> y1, const GnnmVars<T>& params, AttentionVariant variant);

// Hybrid attention over the sequence with a context vector appended to each
// column. The aggregated form weights the value columns by the softmax of the
// attention mass each key position receives.
template <typename T>
GnnmOutput<T> f_hybrid_atten(Var<T> y2, Var<T> context, const GnnmVars<T>& params, bool aggregate);

// LayerNorm per column followed by the configured activation.
template <typename T>
Var<T> phi(Var<T> x, Var<T> gamma, Var<T> beta, const GnnmConfig& config);

template <typename T>
GnnmOutput<T> gnnm_forward(Var<T> x, Var<T> context, const GnnmVars<T>& params,
                           const GnnmConfig& config);

// Inference-only convenience: builds a private tape of constants.
template <typename T>
struct GnnmResult {
  Matrix<T> output;
  Matrix<T> attention_map;
  Matrix<T> values;
  Matrix<T> aggregation_weights;
};

template <typename T>
GnnmResult<T> gnnm_evaluate(const Matrix<T>& x, const Matrix<T>& context,
                            const GnnmParameters<T>& params, const GnnmConfig& config);

}  // namespace blendnet
