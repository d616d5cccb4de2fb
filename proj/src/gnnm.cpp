#include "blendnet/gnnm.hpp"

#include <cmath>
#include <string>

#include "blendnet/errors.hpp"

namespace blendnet {

std::string to_string(AttentionVariant v) {
  return v == AttentionVariant::component ? "component" : "temporal";
}

std::string to_string(Activation a) { return a == Activation::elu ? "elu" : "relu"; }

AttentionVariant parse_attention_variant(const std::string& s) {
  if (s == "component") return AttentionVariant::component;
  if (s == "temporal") return AttentionVariant::temporal;
  throw ConfigError("unknown attention variant '" + s + "' (expected component|temporal)");
}

Activation parse_activation(const std::string& s) {
  if (s == "elu") return Activation::elu;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + s + "' (expected elu|relu)");
}

void GnnmConfig::validate() const {
  if (d == 0 || n == 0) {
    throw ConfigError("GNNM needs d >= 1 and n >= 1, got d=" + std::to_string(d) +
                      " n=" + std::to_string(n));
  }
  if (attention_variant == AttentionVariant::component && n % 2 != 0) {
    throw ConfigError("component attention halves the sequence length; n=" + std::to_string(n) +
                      " is odd");
  }
  if (attention_variant == AttentionVariant::temporal && d % 2 != 0) {
    throw ConfigError("temporal attention halves the feature dimension; d=" + std::to_string(d) +
                      " is odd");
  }
  if (!(epsilon > 0.0)) throw ConfigError("LayerNorm epsilon must be positive");
}

std::size_t GnnmConfig::projected() const {
  return attention_variant == AttentionVariant::component ? n : d;
}

std::size_t GnnmConfig::reduced() const { return projected() / 2; }

bool GnnmConfig::same_parameter_shape(const GnnmConfig& other) const {
  return d == other.d && attention_variant == other.attention_variant &&
         projected() == other.projected();
}

template <typename T>
GnnmParameters<T> GnnmParameters<T>::neutral(const GnnmConfig& config) {
  config.validate();
  const std::size_t d = config.d, p = config.projected(), r = config.reduced();
  GnnmParameters out;
  out.conv_kernel = Matrix<T>::column({T{0}, T{1}, T{0}});
  out.attn_q = Matrix<T>(r, p);
  out.attn_k = Matrix<T>(r, p);
  out.attn_v = Matrix<T>(r, p);
  out.attn_out = Matrix<T>(p, r);
  out.hyb_q = Matrix<T>(d, 2 * d);
  out.hyb_k = Matrix<T>(d, d);
  out.hyb_v = Matrix<T>(d, 2 * d);
  for (auto& ln : out.ln) {
    ln.gamma = Matrix<T>(d, 1, T{1});
    ln.beta = Matrix<T>(d, 1, T{0});
  }
  return out;
}

template <typename T>
GnnmParameters<T> GnnmParameters<T>::initialized(const GnnmConfig& config, std::mt19937_64& rng) {
  GnnmParameters out = neutral(config);
  auto fill_uniform = [&rng](Matrix<T>& w) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (T& v : w.data()) v = static_cast<T>(dist(rng));
  };
  fill_uniform(out.attn_q);
  fill_uniform(out.attn_k);
  fill_uniform(out.attn_v);
  fill_uniform(out.attn_out);
  fill_uniform(out.hyb_q);
  fill_uniform(out.hyb_k);
  fill_uniform(out.hyb_v);
  return out;
}

template <typename T>
std::size_t GnnmParameters<T>::scalar_count() const {
  std::size_t total = 0;
  visit([&total](const std::string&, const Matrix<T>& m) { total += m.size(); });
  return total;
}

template <typename T>
GnnmVars<T> bind(Tape<T>& tape, const GnnmParameters<T>& params, bool trainable) {
  auto make = [&](const Matrix<T>& m) { return trainable ? tape.variable(m) : tape.constant(m); };
  GnnmVars<T> v;
  v.conv_kernel = make(params.conv_kernel);
  v.attn_q = make(params.attn_q);
  v.attn_k = make(params.attn_k);
  v.attn_v = make(params.attn_v);
  v.attn_out = make(params.attn_out);
  v.hyb_q = make(params.hyb_q);
  v.hyb_k = make(params.hyb_k);
  v.hyb_v = make(params.hyb_v);
  for (std::size_t i = 0; i < 3; ++i) {
    v.gamma[i] = make(params.ln[i].gamma);
    v.beta[i] = make(params.ln[i].beta);
  }
  return v;
}

template <typename T>
GnnmParameters<T> gradients(const GnnmVars<T>& vars) {
  GnnmParameters<T> g;
  g.conv_kernel = vars.conv_kernel.grad();
  g.attn_q = vars.attn_q.grad();
  g.attn_k = vars.attn_k.grad();
  g.attn_v = vars.attn_v.grad();
  g.attn_out = vars.attn_out.grad();
  g.hyb_q = vars.hyb_q.grad();
  g.hyb_k = vars.hyb_k.grad();
  g.hyb_v = vars.hyb_v.grad();
  for (std::size_t i = 0; i < 3; ++i) {
    g.ln[i].gamma = vars.gamma[i].grad();
    g.ln[i].beta = vars.beta[i].grad();
  }
  return g;
}

template <typename T>
Var<T> f_conv(Var<T> x, Var<T> kernel) {
  Var<T> logits = conv1d_time(x, kernel);
  Var<T> mask = softmax(logits, Axis::within_row);
  return hadamard(mask, x);
}

template <typename T>
Var<T> f_atten(Var<T> y1, const GnnmVars<T>& params, AttentionVariant variant) {
  const std::size_t d = y1.rows(), n = y1.cols();
  const std::size_t projected = variant == AttentionVariant::component ? n : d;
  if (projected % 2 != 0) {
    throw ConfigError("f_atten: " + to_string(variant) + " variant needs an even " +
                      (variant == AttentionVariant::component ? "n" : "d") + ", got " +
                      std::to_string(projected));
  }
  const Matrix<T>& wq = params.attn_q.value();
  if (wq.cols() != projected || wq.rows() != projected / 2) {
    throw ShapeError("f_atten: projection " + wq.shape_string() + " does not fit input " +
                     y1.value().shape_string() + " under the " + to_string(variant) + " variant");
  }
  const T inv_sqrt_d = T{1} / std::sqrt(static_cast<T>(d));
  // The component variant attends across feature components: its inputs are
  // the d variation sequences, i.e. the columns of y1^T.
  Var<T> z = variant == AttentionVariant::component ? transpose(y1) : y1;
  Var<T> q = matmul(params.attn_q, z);
  Var<T> k = matmul(params.attn_k, z);
  Var<T> v = matmul(params.attn_v, z);
  Var<T> a = softmax(scale(matmul(transpose(k), q), inv_sqrt_d), Axis::within_column);
  Var<T> h = matmul(v, a);
  Var<T> out = matmul(params.attn_out, h);
  return variant == AttentionVariant::component ? transpose(out) : out;
}

template <typename T>
GnnmOutput<T> f_hybrid_atten(Var<T> y2, Var<T> context, const GnnmVars<T>& params, bool aggregate) {
  const std::size_t d = y2.rows(), n = y2.cols();
  if (context.rows() != d || context.cols() != 1) {
    throw ShapeError("f_hybrid_atten: context must be " + std::to_string(d) + "x1, got " +
                     context.value().shape_string());
  }
  const T inv_sqrt_d = T{1} / std::sqrt(static_cast<T>(d));
  Var<T> extended = vstack(y2, repeat_columns(context, n));  // 2d x n
  Var<T> q = matmul(params.hyb_q, extended);
  Var<T> k = matmul(params.hyb_k, y2);
  Var<T> v = matmul(params.hyb_v, extended);
  Var<T> a = softmax(scale(matmul(transpose(k), q), inv_sqrt_d), Axis::within_column);

  GnnmOutput<T> out;
  out.attention_map = a.value();
  out.values = v.value();
  if (aggregate) {
    Var<T> received = row_sums(a);
    Var<T> w = softmax(received, Axis::within_column);
    out.aggregation_weights = w.value();
    out.vector = matmul(v, w);
  } else {
    out.sequence = matmul(v, softmax(a, Axis::within_column));
  }
  return out;
}

template <typename T>
Var<T> phi(Var<T> x, Var<T> gamma, Var<T> beta, const GnnmConfig& config) {
  Var<T> normed = layer_norm_columns(x, gamma, beta, static_cast<T>(config.epsilon));
  return config.activation == Activation::elu ? elu(normed) : relu(normed);
}

template <typename T>
GnnmOutput<T> gnnm_forward(Var<T> x, Var<T> context, const GnnmVars<T>& params,
                           const GnnmConfig& config) {
  config.validate();
  if (x.rows() != config.d || x.cols() != config.n) {
    throw ShapeError("gnnm_forward: input " + x.value().shape_string() + " does not match d=" +
                     std::to_string(config.d) + " n=" + std::to_string(config.n));
  }
  Var<T> y1 = f_conv(add(phi(x, params.gamma[0], params.beta[0], config), x), params.conv_kernel);
  Var<T> y2 = f_atten(add(phi(y1, params.gamma[1], params.beta[1], config), y1), params,
                      config.attention_variant);
  Var<T> y3 = add(phi(y2, params.gamma[2], params.beta[2], config), y2);
  return f_hybrid_atten(y3, context, params, config.aggregate_output);
}

template <typename T>
GnnmResult<T> gnnm_evaluate(const Matrix<T>& x, const Matrix<T>& context,
                            const GnnmParameters<T>& params, const GnnmConfig& config) {
  Tape<T> tape;
  GnnmVars<T> vars = bind(tape, params, false);
  GnnmOutput<T> out = gnnm_forward(tape.constant(x), tape.constant(context), vars, config);
  return GnnmResult<T>{out.result().value(), std::move(out.attention_map), std::move(out.values),
                       std::move(out.aggregation_weights)};
}

#define BLENDNET_INSTANTIATE_GNNM(T)                                                          \
  template struct GnnmParameters<T>;                                                          \
  template GnnmVars<T> bind(Tape<T>&, const GnnmParameters<T>&, bool);                        \
  template GnnmParameters<T> gradients(const GnnmVars<T>&);                                   \
  template Var<T> f_conv(Var<T>, Var<T>);                                                     \
  template Var<T> f_atten(Var<T>, const GnnmVars<T>&, AttentionVariant);                      \
  template GnnmOutput<T> f_hybrid_atten(Var<T>, Var<T>, const GnnmVars<T>&, bool);            \
  template Var<T> phi(Var<T>, Var<T>, Var<T>, const GnnmConfig&);                             \
  template GnnmOutput<T> gnnm_forward(Var<T>, Var<T>, const GnnmVars<T>&, const GnnmConfig&); \
  template GnnmResult<T> gnnm_evaluate(const Matrix<T>&, const Matrix<T>&,                    \
                                       const GnnmParameters<T>&, const GnnmConfig&);

BLENDNET_INSTANTIATE_GNNM(float)
BLENDNET_INSTANTIATE_GNNM(double)

#undef BLENDNET_INSTANTIATE_GNNM

}  // namespace blendnet
