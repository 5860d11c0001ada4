#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "panokit/matrix.hpp"

using namespace panokit;

TEST_CASE("matmul identity and hand-expanded products") {
  Matrix i3(3, 3);
  for (int k = 0; k < 3; ++k) i3(k, k) = 1.0;
  Rng rng(99);
  Matrix a = rng.uniform_matrix(3, 3, -2, 2);
  Matrix ia = matmul(i3, a);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(ia.data()[i] == a.data()[i]);

  Matrix m(2, 2, {1, 2, 3, 4});
  Matrix id2(2, 2, {1, 0, 0, 1});
  Matrix mi = matmul(m, id2);
  CHECK(mi(0, 0) == 1);
  CHECK(mi(1, 1) == 4);

  Matrix b(2, 2, {5, 6, 7, 8});
  Matrix p = matmul(m, b);
  CHECK(p(0, 0) == 19);
  CHECK(p(0, 1) == 22);
  CHECK(p(1, 0) == 43);
  CHECK(p(1, 1) == 50);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Matrix a(2, 3), b(2, 2);
  CHECK_THROWS_WITH(matmul(a, b), Catch::Matchers::ContainsSubstring("2x3") &&
                                      Catch::Matchers::ContainsSubstring("2x2"));
}

TEST_CASE("matmul associativity on random triples") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a = rng.uniform_matrix(4, 4, -1, 1);
    Matrix b = rng.uniform_matrix(4, 4, -1, 1);
    Matrix c = rng.uniform_matrix(4, 4, -1, 1);
    Matrix lhs = matmul(matmul(a, b), c);
    Matrix rhs = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < lhs.size(); ++i)
      CHECK(std::abs(lhs.data()[i] - rhs.data()[i]) < 1e-10);
  }
}

TEST_CASE("softmax rows") {
  Matrix z(1, 4, {0, 0, 0, 0});
  Matrix s = softmax_rows(z);
  for (std::size_t c = 0; c < 4; ++c) CHECK(s(0, c) == Catch::Approx(0.25).epsilon(1e-14));

  Matrix big(1, 2, {1000, 0});
  Matrix sb = softmax_rows(big);
  CHECK(sb.all_finite());
  CHECK(sb(0, 0) == Catch::Approx(1.0).margin(1e-12));
  CHECK(sb(0, 1) == Catch::Approx(0.0).margin(1e-12));

  Matrix logs(1, 3, {std::log(1.0), std::log(2.0), std::log(3.0)});
  Matrix sl = softmax_rows(logs);
  CHECK(sl(0, 0) == Catch::Approx(1.0 / 6).epsilon(1e-12));
  CHECK(sl(0, 1) == Catch::Approx(2.0 / 6).epsilon(1e-12));
  CHECK(sl(0, 2) == Catch::Approx(3.0 / 6).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
  Rng rng(3);
  Matrix m = rng.uniform_matrix(6, 9, -5, 5);
  Matrix s = softmax_rows(m);
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < s.cols(); ++c) sum += s(r, c);
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
  Matrix shifted = m;
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) shifted(r, c) += 3.25;
  Matrix s2 = softmax_rows(shifted);
  for (std::size_t i = 0; i < s.size(); ++i)
    CHECK(std::abs(s.data()[i] - s2.data()[i]) <= 1e-12);
}

TEST_CASE("layer_norm basics") {
  std::vector<double> g1{1.0, 1.0}, b0{0.0, 0.0};

  Matrix constant(1, 2, {4.0, 4.0});
  Matrix ln = layer_norm(constant, g1, b0, 1e-5);
  CHECK(ln(0, 0) == Catch::Approx(0.0).margin(1e-9));

  Matrix pm(1, 2, {1.0, -1.0});
  Matrix lp = layer_norm(pm, g1, b0, 1e-15);
  CHECK(lp(0, 0) == Catch::Approx(1.0).epsilon(1e-9));
  CHECK(lp(0, 1) == Catch::Approx(-1.0).epsilon(1e-9));

  // mean 2, population variance 8/3
  Matrix row(1, 3, {0.0, 2.0, 4.0});
  std::vector<double> g3(3, 1.0), b3(3, 0.0);
  Matrix lr = layer_norm(row, g3, b3, 1e-15);
  const double s = std::sqrt(1.5);
  CHECK(lr(0, 0) == Catch::Approx(-s).epsilon(1e-9));
  CHECK(lr(0, 1) == Catch::Approx(0.0).margin(1e-9));
  CHECK(lr(0, 2) == Catch::Approx(s).epsilon(1e-9));
}

TEST_CASE("layer_norm shift and scale invariance") {
  Rng rng(11);
  Matrix m = rng.uniform_matrix(4, 8, -3, 3);
  std::vector<double> g(8, 1.0), b(8, 0.0);
  Matrix base = layer_norm(m, g, b, 1e-12);
  Matrix shifted = m, scaled = m;
  for (double& v : shifted.data()) v += 17.5;
  for (double& v : scaled.data()) v *= 4.0;
  Matrix ls = layer_norm(shifted, g, b, 1e-12);
  Matrix lk = layer_norm(scaled, g, b, 1e-12);
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(std::abs(base.data()[i] - ls.data()[i]) <= 1e-9);
    CHECK(std::abs(base.data()[i] - lk.data()[i]) <= 1e-9);
  }
}

TEST_CASE("mlp forward") {
  // zero weights -> zero output
  Mlp zero(std::vector<LinearLayer>{LinearLayer(Matrix(3, 2)), LinearLayer(Matrix(2, 1))});
  Matrix x(1, 3, {1, 2, 3});
  Matrix out = mlp_forward(zero, x);
  CHECK(out(0, 0) == 0.0);

  // single identity layer
  Matrix id(3, 3);
  for (int i = 0; i < 3; ++i) id(i, i) = 1.0;
  Mlp ident(std::vector<LinearLayer>{LinearLayer(id)});
  Matrix same = mlp_forward(ident, x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(same.data()[i] == x.data()[i]);

  // 1 -> 1 -> 1 with weights 2 then 3: ReLU(2) * 3 = 6
  Mlp chain(std::vector<LinearLayer>{LinearLayer(Matrix(1, 1, {2.0})),
                                     LinearLayer(Matrix(1, 1, {3.0}))});
  Matrix one(1, 1, {1.0});
  CHECK(mlp_forward(chain, one)(0, 0) == 6.0);
}

TEST_CASE("mlp dimension chain violation") {
  CHECK_THROWS_AS(Mlp(std::vector<LinearLayer>{LinearLayer(Matrix(2, 3)),
                                               LinearLayer(Matrix(4, 1))}),
                  DimensionError);
}

TEST_CASE("grad_check on sum of squares") {
  Matrix x(1, 3, {1, 2, 3});
  auto f = [](const Matrix& m) {
    double s = 0;
    for (double v : m.data()) s += v * v;
    return s;
  };
  Matrix grad = scale(x, 2.0);
  CHECK(grad_check(f, grad, x, 1e-5) < 1e-8);
}

TEST_CASE("grad_check softmax cross-entropy") {
  // f(x) = -log(softmax(x)[target]); grad = softmax(x) - onehot(target)
  Rng rng(5);
  Matrix x = rng.uniform_matrix(1, 4, -2, 2);
  const std::size_t target = 2;
  auto f = [target](const Matrix& m) {
    Matrix s = softmax_rows(m);
    return -std::log(s(0, target));
  };
  Matrix grad = softmax_rows(x);
  grad(0, target) -= 1.0;
  CHECK(grad_check(f, grad, x, 1e-5) < 1e-6);
}

TEST_CASE("grad_check layer_norm projection") {
  Rng rng(6);
  Matrix x = rng.uniform_matrix(1, 5, -2, 2);
  Matrix c = rng.uniform_matrix(1, 5, -1, 1);
  std::vector<double> gamma(5, 1.0), beta(5, 0.0);
  const double eps = 1e-6;
  auto f = [&](const Matrix& m) {
    Matrix y = layer_norm(m, gamma, beta, eps);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += c.data()[i] * y.data()[i];
    return s;
  };
  Matrix grad = layer_norm_vjp(x, gamma, c, eps);
  CHECK(grad_check(f, grad, x, 1e-5) < 1e-6);
}

TEST_CASE("grad_check sigmoid and linear VJPs") {
  Rng rng(8);
  Matrix x = rng.uniform_matrix(2, 3, -2, 2);
  Matrix c = rng.uniform_matrix(2, 3, -1, 1);
  auto fs = [&](const Matrix& m) {
    Matrix y = sigmoid(m);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += c.data()[i] * y.data()[i];
    return s;
  };
  Matrix gs = sigmoid_vjp(sigmoid(x), c);
  CHECK(grad_check(fs, gs, x, 1e-5) < 1e-6);

  LinearLayer lin = LinearLayer::random_init(3, 4, rng);
  Matrix cl = rng.uniform_matrix(2, 4, -1, 1);
  auto fl = [&](const Matrix& m) {
    Matrix y = lin.forward(m);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += cl.data()[i] * y.data()[i];
    return s;
  };
  Matrix gl = linear_vjp_input(lin, cl);
  CHECK(grad_check(fl, gl, x, 1e-5) < 1e-6);
}

TEST_CASE("deterministic initialization from a seed") {
  Rng a(123456), b(123456);
  Matrix ma = a.uniform_matrix(5, 7, -1, 1);
  Matrix mb = b.uniform_matrix(5, 7, -1, 1);
  for (std::size_t i = 0; i < ma.size(); ++i) CHECK(ma.data()[i] == mb.data()[i]);

  Rng c(123457);
  Matrix mc = c.uniform_matrix(5, 7, -1, 1);
  bool any_diff = false;
  for (std::size_t i = 0; i < ma.size(); ++i) any_diff |= ma.data()[i] != mc.data()[i];
  CHECK(any_diff);
}

TEST_CASE("matrix text format round-trips bit-exactly") {
  Rng rng(42);
  Matrix m = rng.uniform_matrix(7, 5, -1e6, 1e6);
  m(0, 0) = 1.0 / 3.0;
  m(0, 1) = -0.0;
  m(1, 2) = 1e-300;
  std::stringstream ss;
  write_matrix_text(ss, m);
  Matrix back = read_matrix_text(ss);
  REQUIRE(back.rows() == m.rows());
  REQUIRE(back.cols() == m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(back.data()[i] == m.data()[i]);
}
