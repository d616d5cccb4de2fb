#include "blendnet/serialize.hpp"

#include <array>
#include <bit>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "blendnet/errors.hpp"

namespace blendnet {

void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (std::size_t i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(bytes.data(), bytes.size());
}

std::uint64_t read_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw FormatError("unexpected end of stream while reading uint64");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

void write_f32(std::ostream& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  std::array<char, 4> bytes{};
  for (std::size_t i = 0; i < 4; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  out.write(bytes.data(), bytes.size());
}

float read_f32(std::istream& in) {
  std::array<unsigned char, 4> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw FormatError("unexpected end of stream while reading float32");
  std::uint32_t bits = 0;
  for (std::size_t i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

template <typename T>
void write_tensor(std::ostream& out, const Matrix<T>& m) {
  write_u64(out, 2);
  write_u64(out, m.rows());
  write_u64(out, m.cols());
  for (T v : m.data()) write_f32(out, static_cast<float>(v));
}

template <typename T>
Matrix<T> read_tensor(std::istream& in) {
  const std::uint64_t rank = read_u64(in);
  std::uint64_t rows = 0, cols = 1;
  if (rank == 1) {
    rows = read_u64(in);
  } else if (rank == 2) {
    rows = read_u64(in);
    cols = read_u64(in);
  } else {
    throw FormatError("unsupported tensor rank " + std::to_string(rank));
  }
  constexpr std::uint64_t limit = std::uint64_t{1} << 32;
  if (rows > limit || cols > limit || rows * cols > limit) {
    throw FormatError("tensor dims " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " exceed the supported size");
  }
  std::vector<T> data(rows * cols);
  for (T& v : data) v = static_cast<T>(read_f32(in));
  return Matrix<T>(rows, cols, std::move(data));
}

template void write_tensor(std::ostream&, const Matrix<float>&);
template void write_tensor(std::ostream&, const Matrix<double>&);
template Matrix<float> read_tensor(std::istream&);
template Matrix<double> read_tensor(std::istream&);

}  // namespace blendnet
