#include "blendnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace blendnet {

namespace {

template <typename T>
void require_same_tape(Var<T> a, Var<T> b, const char* op) {
  if (a.tape != b.tape) throw UsageError(std::string(op) + ": operands live on different tapes");
}

template <typename T>
void require_same_shape(const Matrix<T>& a, const Matrix<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

template <typename T>
void accumulate(Matrix<T>& dst, const Matrix<T>& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// a^T * b without materializing the transpose.
template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const T aki = a(k, i);
      if (aki == T{0}) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aki * b(k, j);
    }
  }
  return out;
}

// a * b^T.
template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      T acc{0};
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
      out(i, j) = acc;
    }
  }
  return out;
}

}  // namespace

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + a.shape_string() + " by " + b.shape_string());
  }
  Matrix<T> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const T aik = a(i, k);
      if (aik == T{0}) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <typename T>
Matrix<T> softmax(const Matrix<T>& m, Axis axis) {
  Matrix<T> out(m.rows(), m.cols());
  const bool by_column = axis == Axis::within_column;
  const std::size_t slices = by_column ? m.cols() : m.rows();
  const std::size_t len = by_column ? m.rows() : m.cols();
  auto at = [&](const Matrix<T>& x, std::size_t s, std::size_t k) -> const T& {
    return by_column ? x(k, s) : x(s, k);
  };
  for (std::size_t s = 0; s < slices; ++s) {
    T peak = -std::numeric_limits<T>::infinity();
    for (std::size_t k = 0; k < len; ++k) peak = std::max(peak, at(m, s, k));
    T total{0};
    for (std::size_t k = 0; k < len; ++k) {
      const T e = std::exp(at(m, s, k) - peak);
      (by_column ? out(k, s) : out(s, k)) = e;
      total += e;
    }
    for (std::size_t k = 0; k < len; ++k) (by_column ? out(k, s) : out(s, k)) /= total;
  }
  return out;
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "matmul");
  Matrix<T> out = matmul(a.value(), b.value());
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(ia)) accumulate(t.grad_slot(ia), matmul_nt(g, t.value(ib)));
    if (t.requires_grad(ib)) accumulate(t.grad_slot(ib), matmul_tn(t.value(ia), g));
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  const std::size_t ia = a.id;
  return a.tape->record(transpose(a.value()), {ia}, [ia](Tape<T>& t, std::size_t self) {
    accumulate(t.grad_slot(ia), transpose(t.grad(self)));
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Matrix<T> out = a.value();
  accumulate(out, b.value());
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
    if (t.requires_grad(ia)) accumulate(t.grad_slot(ia), t.grad(self));
    if (t.requires_grad(ib)) accumulate(t.grad_slot(ib), t.grad(self));
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Matrix<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(ia)) accumulate(t.grad_slot(ia), g);
    if (t.requires_grad(ib)) {
      auto dst = t.grad_slot(ib).data();
      auto gs = g.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= gs[i];
    }
  });
}

template <typename T>
Var<T> hadamard(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "hadamard");
  require_same_shape(a.value(), b.value(), "hadamard");
  Matrix<T> out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
    auto g = t.grad(self).data();
    if (t.requires_grad(ia)) {
      auto dst = t.grad_slot(ia).data();
      auto other = t.value(ib).data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * other[i];
    }
    if (t.requires_grad(ib)) {
      auto dst = t.grad_slot(ib).data();
      auto other = t.value(ia).data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * other[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Matrix<T> out = a.value();
  for (T& v : out.data()) v *= factor;
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, factor](Tape<T>& t, std::size_t self) {
    auto g = t.grad(self).data();
    auto dst = t.grad_slot(ia).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> softmax(Var<T> m, Axis axis) {
  const std::size_t im = m.id;
  return m.tape->record(softmax(m.value(), axis), {im}, [im, axis](Tape<T>& t, std::size_t self) {
    const Matrix<T>& y = t.value(self);
    const Matrix<T>& g = t.grad(self);
    Matrix<T>& dst = t.grad_slot(im);
    const bool by_column = axis == Axis::within_column;
    const std::size_t slices = by_column ? y.cols() : y.rows();
    const std::size_t len = by_column ? y.rows() : y.cols();
    for (std::size_t s = 0; s < slices; ++s) {
      T dot{0};
      for (std::size_t k = 0; k < len; ++k) {
        dot += by_column ? g(k, s) * y(k, s) : g(s, k) * y(s, k);
      }
      for (std::size_t k = 0; k < len; ++k) {
        if (by_column) {
          dst(k, s) += y(k, s) * (g(k, s) - dot);
        } else {
          dst(s, k) += y(s, k) * (g(s, k) - dot);
        }
      }
    }
  });
}

template <typename T>
Var<T> layer_norm_columns(Var<T> x, Var<T> gamma, Var<T> beta, T epsilon) {
  require_same_tape(x, gamma, "layer_norm");
  require_same_tape(x, beta, "layer_norm");
  const Matrix<T>& xv = x.value();
  const std::size_t d = xv.rows(), n = xv.cols();
  if (gamma.rows() != d || gamma.cols() != 1 || beta.rows() != d || beta.cols() != 1) {
    throw ShapeError("layer_norm: gamma/beta must be " + std::to_string(d) + "x1, got " +
                     gamma.value().shape_string() + " and " + beta.value().shape_string());
  }
  if (!(epsilon > T{0})) throw UsageError("layer_norm: epsilon must be positive");

  Matrix<T> normalized(d, n);
  std::vector<T> inv_std(n);
  for (std::size_t j = 0; j < n; ++j) {
    T mean{0};
    for (std::size_t i = 0; i < d; ++i) mean += xv(i, j);
    mean /= static_cast<T>(d);
    T var{0};
    for (std::size_t i = 0; i < d; ++i) {
      const T c = xv(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    inv_std[j] = T{1} / std::sqrt(var + epsilon);
    for (std::size_t i = 0; i < d; ++i) normalized(i, j) = (xv(i, j) - mean) * inv_std[j];
  }
  const Matrix<T>& gv = gamma.value();
  const Matrix<T>& bv = beta.value();
  Matrix<T> out(d, n);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = normalized(i, j) * gv(i, 0) + bv(i, 0);

  const std::size_t ix = x.id, ig = gamma.id, ib = beta.id;
  return x.tape->record(
      std::move(out), {ix, ig, ib},
      [ix, ig, ib, normalized = std::move(normalized), inv_std = std::move(inv_std)](
          Tape<T>& t, std::size_t self) {
        const Matrix<T>& g = t.grad(self);
        const std::size_t rows = g.rows(), cols = g.cols();
        if (t.requires_grad(ig)) {
          Matrix<T>& dg = t.grad_slot(ig);
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) dg(i, 0) += g(i, j) * normalized(i, j);
        }
        if (t.requires_grad(ib)) {
          Matrix<T>& db = t.grad_slot(ib);
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) db(i, 0) += g(i, j);
        }
        if (t.requires_grad(ix)) {
          const Matrix<T>& gv2 = t.value(ig);
          Matrix<T>& dx = t.grad_slot(ix);
          const T dn = static_cast<T>(rows);
          for (std::size_t j = 0; j < cols; ++j) {
            T sum_dxhat{0}, sum_dxhat_xhat{0};
            for (std::size_t i = 0; i < rows; ++i) {
              const T dxhat = g(i, j) * gv2(i, 0);
              sum_dxhat += dxhat;
              sum_dxhat_xhat += dxhat * normalized(i, j);
            }
            for (std::size_t i = 0; i < rows; ++i) {
              const T dxhat = g(i, j) * gv2(i, 0);
              dx(i, j) += inv_std[j] / dn *
                          (dn * dxhat - sum_dxhat - normalized(i, j) * sum_dxhat_xhat);
            }
          }
        }
      });
}

template <typename T>
Var<T> conv1d_time(Var<T> x, Var<T> kernel) {
  require_same_tape(x, kernel, "conv1d_time");
  const Matrix<T>& xv = x.value();
  const Matrix<T>& kv = kernel.value();
  if (kv.size() != 3) throw ShapeError("conv1d_time: kernel must hold 3 taps, got " + kv.shape_string());
  const std::size_t d = xv.rows(), n = xv.cols();
  if (n == 0) throw ShapeError("conv1d_time: empty sequence");
  Matrix<T> out(d, n);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t t = 0; t < n; ++t) {
      T acc = kv[1] * xv(i, t);
      if (t > 0) acc += kv[0] * xv(i, t - 1);
      if (t + 1 < n) acc += kv[2] * xv(i, t + 1);
      out(i, t) = acc;
    }
  }
  const std::size_t ix = x.id, ik = kernel.id;
  return x.tape->record(std::move(out), {ix, ik}, [ix, ik](Tape<T>& tp, std::size_t self) {
    const Matrix<T>& g = tp.grad(self);
    const Matrix<T>& xs = tp.value(ix);
    const Matrix<T>& ks = tp.value(ik);
    const std::size_t rows = g.rows(), cols = g.cols();
    if (tp.requires_grad(ix)) {
      Matrix<T>& dx = tp.grad_slot(ix);
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t t = 0; t < cols; ++t) {
          // x[t] feeds out[t+1] via tap 0, out[t] via tap 1, out[t-1] via tap 2.
          T acc = ks[1] * g(i, t);
          if (t + 1 < cols) acc += ks[0] * g(i, t + 1);
          if (t > 0) acc += ks[2] * g(i, t - 1);
          dx(i, t) += acc;
        }
      }
    }
    if (tp.requires_grad(ik)) {
      Matrix<T>& dk = tp.grad_slot(ik);
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t t = 0; t < cols; ++t) {
          dk[1] += g(i, t) * xs(i, t);
          if (t > 0) dk[0] += g(i, t) * xs(i, t - 1);
          if (t + 1 < cols) dk[2] += g(i, t) * xs(i, t + 1);
        }
      }
    }
  });
}

template <typename T>
Var<T> elu(Var<T> x) {
  Matrix<T> out = x.value();
  for (T& v : out.data()) v = v > T{0} ? v : std::expm1(v);
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix](Tape<T>& t, std::size_t self) {
    auto g = t.grad(self).data();
    auto in = t.value(ix).data();
    auto y = t.value(self).data();
    auto dst = t.grad_slot(ix).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * (in[i] > T{0} ? T{1} : y[i] + T{1});
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Matrix<T> out = x.value();
  for (T& v : out.data()) v = v > T{0} ? v : T{0};
  const std::size_t ix = x.id;
  return x.tape->record(std::move(out), {ix}, [ix](Tape<T>& t, std::size_t self) {
    auto g = t.grad(self).data();
    auto in = t.value(ix).data();
    auto dst = t.grad_slot(ix).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += in[i] > T{0} ? g[i] : T{0};
  });
}

template <typename T>
Var<T> vstack(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "vstack");
  const Matrix<T>& av = a.value();
  const Matrix<T>& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw ShapeError("vstack: column mismatch " + av.shape_string() + " vs " + bv.shape_string());
  }
  std::vector<T> data(av.values());
  data.insert(data.end(), bv.values().begin(), bv.values().end());
  const std::size_t ia = a.id, ib = b.id, split = av.size();
  return a.tape->record(Matrix<T>(av.rows() + bv.rows(), av.cols(), std::move(data)), {ia, ib},
                        [ia, ib, split](Tape<T>& t, std::size_t self) {
                          auto g = t.grad(self).data();
                          if (t.requires_grad(ia)) {
                            auto dst = t.grad_slot(ia).data();
                            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
                          }
                          if (t.requires_grad(ib)) {
                            auto dst = t.grad_slot(ib).data();
                            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[split + i];
                          }
                        });
}

template <typename T>
Var<T> hstack(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("hstack: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  for (const Var<T>& p : parts) {
    require_same_tape(parts.front(), p, "hstack");
    if (p.rows() != rows) {
      throw ShapeError("hstack: row mismatch " + parts.front().value().shape_string() + " vs " +
                       p.value().shape_string());
    }
    cols += p.cols();
    ids.push_back(p.id);
  }
  Matrix<T> out(rows, cols);
  std::size_t offset = 0;
  for (const Var<T>& p : parts) {
    const Matrix<T>& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, offset + j) = v(i, j);
    offset += v.cols();
  }
  Tape<T>* tape = parts.front().tape;
  return tape->record(std::move(out), ids, [ids](Tape<T>& t, std::size_t self) {
    const Matrix<T>& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const std::size_t width = t.value(id).cols();
      if (t.requires_grad(id)) {
        Matrix<T>& dst = t.grad_slot(id);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < width; ++j) dst(i, j) += g(i, off + j);
      }
      off += width;
    }
  });
}

template <typename T>
Var<T> repeat_columns(Var<T> c, std::size_t n) {
  const Matrix<T>& cv = c.value();
  if (cv.cols() != 1) throw ShapeError("repeat_columns: expected a column vector, got " + cv.shape_string());
  Matrix<T> out(cv.rows(), n);
  for (std::size_t i = 0; i < cv.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = cv(i, 0);
  const std::size_t ic = c.id;
  return c.tape->record(std::move(out), {ic}, [ic](Tape<T>& t, std::size_t self) {
    const Matrix<T>& g = t.grad(self);
    Matrix<T>& dst = t.grad_slot(ic);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) dst(i, 0) += g(i, j);
  });
}

template <typename T>
Var<T> row_sums(Var<T> a) {
  const Matrix<T>& av = a.value();
  Matrix<T> out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, 0) += av(i, j);
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape<T>& t, std::size_t self) {
    const Matrix<T>& g = t.grad(self);
    Matrix<T>& dst = t.grad_slot(ia);
    for (std::size_t i = 0; i < dst.rows(); ++i)
      for (std::size_t j = 0; j < dst.cols(); ++j) dst(i, j) += g(i, 0);
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T total{0};
  for (T v : a.value().data()) total += v;
  const std::size_t ia = a.id;
  return a.tape->record(Matrix<T>(1, 1, total), {ia}, [ia](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0];
    for (T& v : t.grad_slot(ia).data()) v += g;
  });
}

template <typename T>
Var<T> element(Var<T> a, std::size_t row, std::size_t col) {
  const Matrix<T>& av = a.value();
  if (row >= av.rows() || col >= av.cols()) {
    throw ShapeError("element: index (" + std::to_string(row) + "," + std::to_string(col) +
                     ") outside " + av.shape_string());
  }
  const std::size_t ia = a.id;
  return a.tape->record(Matrix<T>(1, 1, av(row, col)), {ia}, [ia, row, col](Tape<T>& t, std::size_t self) {
    t.grad_slot(ia)(row, col) += t.grad(self)[0];
  });
}

template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::size_t label) {
  const Matrix<T>& lv = logits.value();
  if (lv.cols() != 1) throw ShapeError("softmax_cross_entropy: logits must be a column, got " + lv.shape_string());
  if (label >= lv.rows()) {
    throw UsageError("label " + std::to_string(label) + " outside answer space of size " +
                     std::to_string(lv.rows()));
  }
  Matrix<T> p = softmax(lv, Axis::within_column);
  T peak = lv[0];
  for (T v : lv.data()) peak = std::max(peak, v);
  T total{0};
  for (T v : lv.data()) total += std::exp(v - peak);
  const T loss = -(lv[label] - peak - std::log(total));
  const std::size_t il = logits.id;
  return logits.tape->record(Matrix<T>(1, 1, loss), {il},
                             [il, label, p = std::move(p)](Tape<T>& t, std::size_t self) {
                               const T g = t.grad(self)[0];
                               Matrix<T>& dst = t.grad_slot(il);
                               for (std::size_t i = 0; i < dst.rows(); ++i) {
                                 dst[i] += g * (p[i] - (i == label ? T{1} : T{0}));
                               }
                             });
}

template <typename T>
Var<T> negative_log(Var<T> probabilities, std::size_t label) {
  const Matrix<T>& pv = probabilities.value();
  if (label >= pv.size()) {
    throw UsageError("label " + std::to_string(label) + " outside answer space of size " +
                     std::to_string(pv.size()));
  }
  const T p = std::max(pv[label], std::numeric_limits<T>::min());
  const std::size_t ip = probabilities.id;
  return probabilities.tape->record(Matrix<T>(1, 1, -std::log(p)), {ip},
                                    [ip, label, p](Tape<T>& t, std::size_t self) {
                                      t.grad_slot(ip)[label] -= t.grad(self)[0] / p;
                                    });
}

template <typename T>
Var<T> squared_error(Var<T> raw, T target) {
  const Matrix<T>& rv = raw.value();
  if (rv.size() != 1) throw ShapeError("squared_error: expected a scalar, got " + rv.shape_string());
  const T diff = rv[0] - target;
  const std::size_t ir = raw.id;
  return raw.tape->record(Matrix<T>(1, 1, diff * diff), {ir}, [ir, diff](Tape<T>& t, std::size_t self) {
    t.grad_slot(ir)[0] += t.grad(self)[0] * T{2} * diff;
  });
}

template <typename T>
Var<T> hinge(Var<T> scores, std::size_t ground_truth) {
  const Matrix<T>& sv = scores.value();
  if (ground_truth >= sv.size()) {
    throw UsageError("ground-truth index " + std::to_string(ground_truth) + " outside " +
                     std::to_string(sv.size()) + " candidates");
  }
  T total{0};
  std::vector<bool> active(sv.size(), false);
  for (std::size_t k = 0; k < sv.size(); ++k) {
    if (k == ground_truth) continue;
    const T margin = T{1} + sv[k] - sv[ground_truth];
    if (margin > T{0}) {
      total += margin;
      active[k] = true;
    }
  }
  const std::size_t is = scores.id;
  return scores.tape->record(Matrix<T>(1, 1, total), {is},
                             [is, ground_truth, active = std::move(active)](Tape<T>& t, std::size_t self) {
                               const T g = t.grad(self)[0];
                               Matrix<T>& dst = t.grad_slot(is);
                               for (std::size_t k = 0; k < active.size(); ++k) {
                                 if (!active[k]) continue;
                                 dst[k] += g;
                                 dst[ground_truth] -= g;
                               }
                             });
}

#define BLENDNET_INSTANTIATE_OPS(T)                                              \
  template Matrix<T> matmul(const Matrix<T>&, const Matrix<T>&);                 \
  template Matrix<T> transpose(const Matrix<T>&);                                \
  template Matrix<T> softmax(const Matrix<T>&, Axis);                            \
  template Var<T> matmul(Var<T>, Var<T>);                                        \
  template Var<T> transpose(Var<T>);                                             \
  template Var<T> add(Var<T>, Var<T>);                                           \
  template Var<T> sub(Var<T>, Var<T>);                                           \
  template Var<T> hadamard(Var<T>, Var<T>);                                      \
  template Var<T> scale(Var<T>, T);                                              \
  template Var<T> softmax(Var<T>, Axis);                                         \
  template Var<T> layer_norm_columns(Var<T>, Var<T>, Var<T>, T);                 \
  template Var<T> conv1d_time(Var<T>, Var<T>);                                   \
  template Var<T> elu(Var<T>);                                                   \
  template Var<T> relu(Var<T>);                                                  \
  template Var<T> vstack(Var<T>, Var<T>);                                        \
  template Var<T> hstack(const std::vector<Var<T>>&);                            \
  template Var<T> repeat_columns(Var<T>, std::size_t);                           \
  template Var<T> row_sums(Var<T>);                                              \
  template Var<T> sum(Var<T>);                                                   \
  template Var<T> element(Var<T>, std::size_t, std::size_t);                     \
  template Var<T> softmax_cross_entropy(Var<T>, std::size_t);                    \
  template Var<T> negative_log(Var<T>, std::size_t);                             \
  template Var<T> squared_error(Var<T>, T);                                      \
  template Var<T> hinge(Var<T>, std::size_t);

BLENDNET_INSTANTIATE_OPS(float)
BLENDNET_INSTANTIATE_OPS(double)

#undef BLENDNET_INSTANTIATE_OPS

}  // namespace blendnet
