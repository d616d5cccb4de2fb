#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "blendnet/gradcheck.hpp"
#include "blendnet/ops.hpp"
#include "blendnet/serialize.hpp"
#include "oracles.hpp"

using namespace blendnet;
using doctest::Approx;

TEST_CASE("matmul identity and projector") {
  Tape<double> t;
  auto eye = t.constant(Matrix<double>::identity(2));
  auto m = t.constant(Matrix<double>::from_rows({{1, 2}, {3, 4}}));
  CHECK(matmul(eye, m).value() == Matrix<double>::from_rows({{1, 2}, {3, 4}}));

  auto p = t.constant(Matrix<double>::from_rows({{1, 0}, {0, 0}}));
  auto v = t.constant(Matrix<double>::from_rows({{5}, {7}}));
  CHECK(matmul(p, v).value() == Matrix<double>::from_rows({{5}, {0}}));
}

TEST_CASE("matmul matches triple-loop oracle") {
  std::mt19937_64 rng(0);
  auto a = oracle::random_matrix<double>(3, 4, rng);
  auto b = oracle::random_matrix<double>(4, 2, rng);
  Tape<double> t;
  auto got = oracle::from(matmul(t.constant(a), t.constant(b)).value());
  CHECK(oracle::max_abs_diff(got, oracle::mul(oracle::from(a), oracle::from(b))) < 1e-14);
}

TEST_CASE("matmul shape error names both shapes") {
  Tape<double> t;
  auto a = t.constant(Matrix<double>(2, 3));
  auto b = t.constant(Matrix<double>(2, 3));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("by 2x3") != std::string::npos);
  }
}

TEST_CASE("softmax examples") {
  auto row = [](std::vector<double> v) {
    const std::size_t n = v.size();
    return Matrix<double>(1, n, std::move(v));
  };
  auto s = softmax(row({0, 0}), Axis::within_row);
  CHECK(s[0] == Approx(0.5));
  CHECK(s[1] == Approx(0.5));

  s = softmax(row({1000, 1000, 1000}), Axis::within_row);
  for (double v : s.data()) {
    CHECK(std::isfinite(v));
    CHECK(v == Approx(1.0 / 3.0).epsilon(1e-15));
  }

  s = softmax(row({0, std::log(3.0)}), Axis::within_row);
  CHECK(s[0] == Approx(0.25).epsilon(1e-14));
  CHECK(s[1] == Approx(0.75).epsilon(1e-14));
}

TEST_CASE("softmax slices sum to one and ignore constant shifts") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto m = oracle::random_matrix<double>(5, 4, rng, 3.0);
    for (Axis axis : {Axis::within_column, Axis::within_row}) {
      auto s = softmax(m, axis);
      const bool by_col = axis == Axis::within_column;
      for (std::size_t slice = 0; slice < (by_col ? 4u : 5u); ++slice) {
        double total = 0.0;
        for (std::size_t k = 0; k < (by_col ? 5u : 4u); ++k) {
          const double v = by_col ? s(k, slice) : s(slice, k);
          CHECK(v >= 0.0);
          total += v;
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
      }
      // Adding a constant to every column slice leaves column softmax unchanged.
      if (by_col) {
        auto shifted = m;
        for (std::size_t j = 0; j < 4; ++j) {
          const double c = shift(rng);
          for (std::size_t i = 0; i < 5; ++i) shifted(i, j) += c;
        }
        auto s2 = softmax(shifted, axis);
        CHECK(oracle::max_abs_diff(oracle::from(s), oracle::from(s2)) < 1e-12);
      }
    }
    auto f = softmax(m.cast<float>(), Axis::within_column);
    for (std::size_t j = 0; j < 4; ++j) {
      float total = 0.0f;
      for (std::size_t i = 0; i < 5; ++i) total += f(i, j);
      CHECK(std::abs(total - 1.0f) < 1e-6f);
    }
  }
}

namespace {

Matrix<double> run_layer_norm(std::vector<double> x, double eps) {
  Tape<double> t;
  const std::size_t d = x.size();
  auto xv = t.constant(Matrix<double>::column(std::move(x)));
  auto g = t.constant(Matrix<double>(d, 1, 1.0));
  auto b = t.constant(Matrix<double>(d, 1, 0.0));
  return layer_norm_columns(xv, g, b, eps).value();
}

}  // namespace

TEST_CASE("layer_norm examples") {
  auto flat = run_layer_norm({1, 1, 1, 1}, 1e-5);
  for (double v : flat.data()) CHECK(v == 0.0);

  auto two = run_layer_norm({-1, 1}, 1e-12);
  CHECK(two[0] == Approx(-1.0).epsilon(1e-9));
  CHECK(two[1] == Approx(1.0).epsilon(1e-9));

  auto ramp = run_layer_norm({0, 2, 4, 6}, 1e-5);
  auto expected = oracle::layer_norm({0, 2, 4, 6}, {1, 1, 1, 1}, {0, 0, 0, 0}, 1e-5);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(ramp[i] - expected[i]) < 1e-12);
}

TEST_CASE("conv1d_time examples") {
  std::mt19937_64 rng(3);
  auto x = oracle::random_matrix<double>(4, 5, rng);
  Tape<double> t;
  auto xv = t.constant(x);
  CHECK(conv1d_time(xv, t.constant(Matrix<double>::column({0, 1, 0}))).value() == x);
  for (double v : conv1d_time(xv, t.constant(Matrix<double>::column({0, 0, 0}))).value().data()) {
    CHECK(v == 0.0);
  }
  auto row = t.constant(Matrix<double>::from_rows({{1, 2, 3}}));
  CHECK(conv1d_time(row, t.constant(Matrix<double>::column({1, 1, 1}))).value() ==
        Matrix<double>::from_rows({{3, 6, 5}}));
}

TEST_CASE("backward on a sum gives all ones and the root slot is exactly one") {
  Tape<double> t;
  auto p = t.variable(Matrix<double>::column({0.3, -2.0, 7.5}));
  auto loss = sum(p);
  t.backward(loss);
  for (double g : p.grad().data()) CHECK(g == 1.0);
  CHECK(loss.grad()[0] == 1.0);
}

TEST_CASE("backward of squared norm of Wx") {
  Tape<double> t;
  auto w = t.variable(Matrix<double>::identity(2));
  auto x = t.constant(Matrix<double>::column({1, 2}));
  auto y = matmul(w, x);
  t.backward(sum(hadamard(y, y)));
  CHECK(w.grad() == Matrix<double>::from_rows({{2, 4}, {4, 8}}));
}

TEST_CASE("backward rejects a non-scalar root") {
  Tape<double> t;
  auto p = t.variable(Matrix<double>(2, 2, 1.0));
  CHECK_THROWS_AS(t.backward(p), UsageError);
}

TEST_CASE("tape records inputs before the nodes that consume them") {
  Tape<double> t;
  std::mt19937_64 rng(1);
  auto a = t.variable(oracle::random_matrix<double>(3, 3, rng));
  auto b = softmax(matmul(a, transpose(a)), Axis::within_column);
  sum(elu(b));
  for (std::size_t id = 0; id < t.size(); ++id)
    for (std::size_t in : t.inputs(id)) CHECK(in < id);
}

TEST_CASE("a node consumed k times receives the summed gradient") {
  std::mt19937_64 rng(11);
  auto w0 = oracle::random_matrix<double>(3, 3, rng);
  auto x0 = oracle::random_matrix<double>(3, 2, rng);

  Tape<double> shared;
  auto w = shared.variable(w0);
  auto x = shared.constant(x0);
  auto h = elu(matmul(w, x));
  shared.backward(sum(add(add(h, hadamard(h, h)), softmax(h, Axis::within_column))));

  // Same graph with the node duplicated: one copy of h per consumer.
  Tape<double> dup;
  auto w1 = dup.variable(w0);
  auto w2 = dup.variable(w0);
  auto w3 = dup.variable(w0);
  auto w4 = dup.variable(w0);
  auto xd = dup.constant(x0);
  auto h1 = elu(matmul(w1, xd));
  auto h2 = elu(matmul(w2, xd));
  auto h3 = elu(matmul(w3, xd));
  auto h4 = elu(matmul(w4, xd));
  dup.backward(sum(add(add(h1, hadamard(h2, h3)), softmax(h4, Axis::within_column))));

  for (std::size_t i = 0; i < w0.size(); ++i) {
    const double expected = w1.grad()[i] + w2.grad()[i] + w3.grad()[i] + w4.grad()[i];
    CHECK(std::abs(w.grad()[i] - expected) < 1e-10);
  }
}

TEST_CASE("every primitive passes the finite-difference check") {
  std::mt19937_64 rng(5);
  auto leaf = [&](std::size_t r, std::size_t c) { return oracle::random_matrix<double>(r, c, rng); };
  auto readout = leaf(4, 3);
  auto dot = [&](Tape<double>& t, Var<double> v) { return sum(hadamard(v, t.constant(readout))); };

  struct Case {
    const char* name;
    NamedLeaves leaves;
    ScalarFunction fn;
  };
  std::vector<Case> cases;
  cases.push_back({"matmul", {{"a", leaf(4, 5)}, {"b", leaf(5, 3)}},
                   [&](Tape<double>& t, const auto& v) { return dot(t, matmul(v[0], v[1])); }});
  cases.push_back({"transpose", {{"a", leaf(3, 4)}},
                   [&](Tape<double>& t, const auto& v) { return dot(t, transpose(v[0])); }});
  cases.push_back({"sub/scale", {{"a", leaf(4, 3)}, {"b", leaf(4, 3)}},
                   [&](Tape<double>& t, const auto& v) { return dot(t, scale(sub(v[0], v[1]), 0.7)); }});
  cases.push_back({"softmax columns", {{"a", leaf(4, 3)}},
                   [&](Tape<double>& t, const auto& v) { return dot(t, softmax(v[0], Axis::within_column)); }});
  cases.push_back({"softmax rows", {{"a", leaf(4, 3)}},
                   [&](Tape<double>& t, const auto& v) { return dot(t, softmax(v[0], Axis::within_row)); }});
  cases.push_back({"layer_norm", {{"x", leaf(4, 3)}, {"g", leaf(4, 1)}, {"b", leaf(4, 1)}},
                   [&](Tape<double>& t, const auto& v) {
                     return dot(t, layer_norm_columns(v[0], v[1], v[2], 1e-5));
                   }});
  cases.push_back({"conv1d_time", {{"x", leaf(4, 3)}, {"k", leaf(3, 1)}},
                   [&](Tape<double>& t, const auto& v) { return dot(t, conv1d_time(v[0], v[1])); }});
  cases.push_back({"elu", {{"x", leaf(4, 3)}},
                   [&](Tape<double>& t, const auto& v) { return dot(t, elu(v[0])); }});
  cases.push_back({"vstack/repeat", {{"a", leaf(2, 3)}, {"c", leaf(2, 1)}},
                   [&](Tape<double>& t, const auto& v) { return dot(t, vstack(v[0], repeat_columns(v[1], 3))); }});
  cases.push_back({"hstack/row_sums", {{"a", leaf(4, 1)}, {"b", leaf(4, 2)}},
                   [&](Tape<double>& t, const auto& v) {
                     auto s = hstack<double>({v[0], v[1]});
                     return sum(hadamard(row_sums(hadamard(s, s)), t.constant(Matrix<double>::column({1, -2, 3, 0.5}))));
                   }});
  cases.push_back({"cross entropy", {{"z", leaf(5, 1)}},
                   [](Tape<double>&, const auto& v) { return softmax_cross_entropy(v[0], 2); }});
  cases.push_back({"negative log", {{"z", leaf(5, 1)}},
                   [](Tape<double>&, const auto& v) { return negative_log(softmax(v[0], Axis::within_column), 1); }});
  cases.push_back({"squared error", {{"r", leaf(1, 1)}},
                   [](Tape<double>&, const auto& v) { return squared_error(v[0], 3.0); }});
  cases.push_back({"hinge", {{"s", Matrix<double>::column({0.2, 0.9, -0.4, 0.5})}},
                   [](Tape<double>&, const auto& v) { return hinge(v[0], 1); }});
  cases.push_back({"element", {{"a", leaf(3, 3)}},
                   [](Tape<double>&, const auto& v) { return element(v[0], 1, 2); }});

  for (const Case& c : cases) {
    CAPTURE(c.name);
    auto report = finite_difference_check(c.leaves, c.fn);
    CHECK(report.max_relative_error < 1e-4);
  }
}

TEST_CASE("forward results are bit-identical across runs") {
  std::mt19937_64 rng(9);
  auto a = oracle::random_matrix<float>(6, 4, rng);
  auto k = oracle::random_matrix<float>(3, 1, rng);
  auto run = [&] {
    Tape<float> t;
    auto x = t.constant(a);
    return softmax(conv1d_time(elu(x), t.constant(k)), Axis::within_row).value();
  };
  CHECK(run() == run());
}

TEST_CASE("tensor payload layout and round trip") {
  Matrix<double> m = Matrix<double>::from_rows({{1.5, -2.0, 3.25}, {0.0, 1e-3, -7.0}});
  std::stringstream buf;
  write_tensor(buf, m);
  const std::string bytes = buf.str();
  REQUIRE(bytes.size() == 3 * 8 + 6 * 4);
  CHECK(static_cast<unsigned char>(bytes[0]) == 2);  // rank, little endian
  CHECK(static_cast<unsigned char>(bytes[8]) == 2);  // rows
  CHECK(static_cast<unsigned char>(bytes[16]) == 3); // cols
  // 1.5f = 0x3fc00000, stored least significant byte first.
  CHECK(static_cast<unsigned char>(bytes[24]) == 0x00);
  CHECK(static_cast<unsigned char>(bytes[27]) == 0x3f);
  CHECK(static_cast<unsigned char>(bytes[26]) == 0xc0);

  auto back = read_tensor<double>(buf);
  CHECK(back.rows() == 2);
  CHECK(back.cols() == 3);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(back[i] == static_cast<double>(static_cast<float>(m[i])));

  std::stringstream truncated(bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_AS(read_tensor<float>(truncated), FormatError);
}

TEST_CASE("float round trip through the payload is bit-exact") {
  std::mt19937_64 rng(2);
  auto m = oracle::random_matrix<float>(7, 5, rng);
  std::stringstream buf;
  write_tensor(buf, m);
  CHECK(read_tensor<float>(buf) == m);
}
