#pragma once

#include <cstdint>
#include <iosfwd>

#include "blendnet/matrix.hpp"

namespace blendnet {

// Tensor payload: rank and dims as little-endian uint64, then row-major
// little-endian float32 values. Storage is always 32-bit, whatever T is.
template <typename T>
void write_tensor(std::ostream& out, const Matrix<T>& m);

// Accepts rank 1 (read as n x 1) and rank 2 payloads.
template <typename T>
Matrix<T> read_tensor(std::istream& in);

void write_u64(std::ostream& out, std::uint64_t v);
std::uint64_t read_u64(std::istream& in);
void write_f32(std::ostream& out, float v);
float read_f32(std::istream& in);

}  // namespace blendnet
