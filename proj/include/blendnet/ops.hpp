#pragma once

#include <cstddef>
#include <vector>

#include "blendnet/matrix.hpp"
#include "blendnet/tape.hpp"

namespace blendnet {

// Axis along which softmax normalizes. within_column: every column sums to 1
// (softmax over the row index). within_row: every row sums to 1.
enum class Axis { within_column, within_row };

// Value-level helpers, no tape involved.
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b);
template <typename T>
Matrix<T> transpose(const Matrix<T>& a);
template <typename T>
Matrix<T> softmax(const Matrix<T>& m, Axis axis);

// Differentiable primitives. Every binary op requires both operands on the
// same tape.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
template <typename T>
Var<T> transpose(Var<T> a);
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> hadamard(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T factor);
template <typename T>
Var<T> softmax(Var<T> m, Axis axis);

// Normalizes each column of x (d x n) over its d entries, then applies the
// per-feature affine map gamma (d x 1), beta (d x 1). Biased variance.
template <typename T>
Var<T> layer_norm_columns(Var<T> x, Var<T> gamma, Var<T> beta, T epsilon);

// 1-D convolution of every row of x along the column (time) axis with a
// 3-tap kernel (3 x 1), zero padding of width 1, no bias.
template <typename T>
Var<T> conv1d_time(Var<T> x, Var<T> kernel);

template <typename T>
Var<T> elu(Var<T> x);
template <typename T>
Var<T> relu(Var<T> x);

// [a; b] stacked vertically. Column counts must match.
template <typename T>
Var<T> vstack(Var<T> a, Var<T> b);
// Columns side by side. Row counts must match.
template <typename T>
Var<T> hstack(const std::vector<Var<T>>& parts);
// c (d x 1) repeated into d x n.
template <typename T>
Var<T> repeat_columns(Var<T> c, std::size_t n);

// rows x 1 vector of row sums.
template <typename T>
Var<T> row_sums(Var<T> a);
template <typename T>
Var<T> sum(Var<T> a);
// Single entry as a 1 x 1 node.
template <typename T>
Var<T> element(Var<T> a, std::size_t row, std::size_t col);

// Loss primitives, all 1 x 1.
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::size_t label);
template <typename T>
Var<T> negative_log(Var<T> probabilities, std::size_t label);
template <typename T>
Var<T> squared_error(Var<T> raw, T target);
template <typename T>
Var<T> hinge(Var<T> scores, std::size_t ground_truth);

}  // namespace blendnet
