#include "ssmfsa/error.hpp"
#include "ssmfsa/numkit/adam.hpp"
#include "ssmfsa/numkit/gradcheck.hpp"
#include "ssmfsa/numkit/ops.hpp"
#include "ssmfsa/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace ssmfsa;
using namespace ssmfsa::num;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  return m;
}

}  // namespace

TEST_CASE("matvec and outer basics") {
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  const Vector y = matvec(a, vec({1, 1}));
  CHECK(y[0] == 3.0);
  CHECK(y[1] == 7.0);
  Rng rng(1);
  const Vector v = random_matrix(5, 1, rng);
  CHECK((matvec(Matrix::Identity(5, 5), v) - v).cwiseAbs().maxCoeff() == 0.0);
  const Matrix o = outer(Vector::Unit(3, 1), Vector::Unit(4, 2));
  CHECK(o.sum() == 1.0);
  CHECK(o(1, 2) == 1.0);
  CHECK_THROWS_AS(matvec(Matrix::Zero(2, 3), Vector::Zero(2)), ShapeError);
}

TEST_CASE("softmax") {
  const Vector u = softmax(Vector::Zero(4));
  for (int i = 0; i < 4; ++i) CHECK(u[i] == doctest::Approx(0.25).epsilon(1e-15));
  const Vector big = softmax(vec({1000.0, 0.0}));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] < 1e-300);
  CHECK(all_finite(big));
  const Vector q = softmax(vec({std::log(1.0), std::log(3.0)}));
  CHECK(q[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(q[1] == doctest::Approx(0.75).epsilon(1e-14));

  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector logits = random_matrix(7, 1, rng, 1e4);
    const Vector p = softmax(logits);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
    CHECK(p.minCoeff() >= 0.0);
  }
}

TEST_CASE("layer norm values") {
  const Vector g3 = Vector::Ones(3), b3 = Vector::Zero(3);
  const Vector c = layer_norm(Vector::Constant(3, 5.0), g3, b3, kLayerNormEps);
  CHECK(c.cwiseAbs().maxCoeff() == 0.0);
  const Vector s = layer_norm(vec({-1, 1}), Vector::Ones(2), Vector::Zero(2), 0.0);
  CHECK(s[0] == doctest::Approx(-1.0));
  CHECK(s[1] == doctest::Approx(1.0));
  // mean 2, population std sqrt(8/3)
  const Vector y = layer_norm(vec({0, 2, 4}), g3, b3, 0.0);
  const double expected = 2.0 / std::sqrt(8.0 / 3.0);
  CHECK(y[0] == doctest::Approx(-expected).epsilon(1e-14));
  CHECK(y[1] == doctest::Approx(0.0));
  CHECK(y[2] == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(1.2247).epsilon(1e-4));
  const Vector shifted = layer_norm(vec({0, 2, 4}), vec({2, 2, 2}), vec({1, 1, 1}), 0.0);
  CHECK(shifted[2] == doctest::Approx(2 * expected + 1));
}

TEST_CASE("column lp norm values") {
  Matrix a(2, 1);
  a << 3, 4;
  const Matrix n2 = column_lp_norm(a, 2.0, 0.0);
  CHECK(n2(0, 0) == doctest::Approx(0.6));
  CHECK(n2(1, 0) == doctest::Approx(0.8));
  const Matrix id = column_lp_norm(Matrix::Identity(4, 4), 1.0, 0.0);
  CHECK((id - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);
  Matrix ones = Matrix::Ones(2, 1);
  const Matrix n12 = column_lp_norm(ones, 1.2, 0.0);
  CHECK(n12(0, 0) == doctest::Approx(std::pow(2.0, -1.0 / 1.2)).epsilon(1e-14));
  CHECK(n12(0, 0) == doctest::Approx(0.5612).epsilon(1e-4));

  Rng rng(3);
  for (double p : {1.0, 1.2, 1.37, 1.5}) {
    const Matrix m = column_lp_norm(random_matrix(6, 6, rng), p, 0.0);
    const Vector norms = column_lp_norms(m, p);
    CHECK((norms.array() - 1.0).abs().maxCoeff() <= 1e-12);
  }
  // zero column stays finite under the eps guard
  const Matrix z = column_lp_norm(Matrix::Zero(3, 2), 1.2, kColumnNormEps);
  CHECK(all_finite(z));
  CHECK(z.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("column norm at most one leaves short columns alone") {
  Matrix a(2, 2);
  a << 0.3, 3, 0.4, 4;
  const Matrix out = column_lp_norm(a, 2.0, 0.0, ColumnNormKind::AtMostOne);
  CHECK(out(0, 0) == doctest::Approx(0.3));
  CHECK(out(1, 0) == doctest::Approx(0.4));
  CHECK(out(0, 1) == doctest::Approx(0.6));
}

TEST_CASE("cross entropy values") {
  const auto uniform = cross_entropy_from_logits(Vector::Zero(5), 2);
  CHECK(uniform.loss == doctest::Approx(std::log(5.0)));
  const auto sure = cross_entropy_from_logits(vec({50, 0, 0}), 0);
  CHECK(sure.loss < 1e-20);
  const auto v = cross_entropy_from_logits(vec({0, std::log(3.0)}), 0);
  CHECK(v.loss == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(v.grad[0] == doctest::Approx(0.25 - 1.0));
  CHECK(v.grad[1] == doctest::Approx(0.75));
  CHECK_THROWS_AS(cross_entropy_from_logits(vec({0, 0}), 2), UsageError);
  CHECK_THROWS_AS(cross_entropy_from_logits(vec({0, 0}), -1), UsageError);
}

TEST_CASE("argmax takes the lowest index on ties") {
  CHECK(argmax(vec({1, 3, 3, 2})) == 1);
  CHECK(argmax(vec({0})) == 0);
}

TEST_CASE("backward rules against finite differences") {
  Rng rng(4);
  const Vector x = random_matrix(5, 1, rng);
  const Vector w = random_matrix(5, 1, rng);
  auto fd = [](auto f, Vector at) {
    Vector g(at.size());
    for (Eigen::Index i = 0; i < at.size(); ++i) {
      Vector plus = at, minus = at;
      plus[i] += 1e-6;
      minus[i] -= 1e-6;
      g[i] = (f(plus) - f(minus)) / 2e-6;
    }
    return g;
  };
  auto rel = [](const Vector& a, const Vector& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(1e-6, std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()));
  };

  SUBCASE("softmax") {
    const Vector y = softmax(x);
    const Vector analytic = softmax_backward(y, w);
    const Vector numeric = fd([&](const Vector& z) { return softmax(z).dot(w); }, x);
    CHECK(rel(analytic, numeric) <= 1e-6);
  }
  SUBCASE("relu") {
    const Vector analytic = relu_backward(x, w);
    const Vector numeric = fd([&](const Vector& z) { return relu(z).dot(w); }, x);
    CHECK(rel(analytic, numeric) <= 1e-6);
  }
  SUBCASE("layer norm") {
    const Vector gain = random_matrix(5, 1, rng), bias = random_matrix(5, 1, rng);
    LayerNormCache cache;
    layer_norm(x, gain, bias, kLayerNormEps, &cache);
    Vector dgain = Vector::Zero(5), dbias = Vector::Zero(5);
    const Vector analytic = layer_norm_backward(cache, gain, w, &dgain, &dbias);
    const Vector numeric = fd([&](const Vector& z) { return layer_norm(z, gain, bias, kLayerNormEps).dot(w); }, x);
    CHECK(rel(analytic, numeric) <= 1e-6);
    const Vector ng = fd([&](const Vector& g) { return layer_norm(x, g, bias, kLayerNormEps).dot(w); }, gain);
    CHECK(rel(dgain, ng) <= 1e-6);
    CHECK(rel(dbias, w) <= 1e-12);
  }
  SUBCASE("column lp norm at non-integer p") {
    for (auto kind : {ColumnNormKind::Unit, ColumnNormKind::AtMostOne}) {
      for (double p : {1.0, 1.2, 1.5, 2.0}) {
        Matrix a = random_matrix(4, 3, rng);
        if (kind == ColumnNormKind::AtMostOne) a.col(1) *= 0.05;  // one column below norm 1
        const Matrix up = random_matrix(4, 3, rng);
        ColumnNormCache cache;
        column_lp_norm(a, p, kColumnNormEps, kind, &cache);
        const Matrix analytic = column_lp_norm_backward(a, cache, p, kColumnNormEps, kind, up);
        const Matrix flat = a.reshaped();
        const Vector numeric = fd(
            [&](const Vector& z) {
              const Matrix m = z.reshaped(4, 3);
              return (column_lp_norm(m, p, kColumnNormEps, kind).array() * up.array()).sum();
            },
            flat);
        CHECK(rel(analytic.reshaped(), numeric) <= 1e-6);
      }
    }
  }
  SUBCASE("cross entropy") {
    const auto ce = cross_entropy_from_logits(x, 3);
    const Vector numeric = fd([&](const Vector& z) { return cross_entropy_from_logits(z, 3).loss; }, x);
    CHECK(rel(ce.grad, numeric) <= 1e-6);
  }
  SUBCASE("matvec") {
    const Matrix a = random_matrix(3, 5, rng);
    const Vector gy = random_matrix(3, 1, rng);
    Matrix da = Matrix::Zero(3, 5);
    Vector dx = Vector::Zero(5);
    matvec_backward(a, x, gy, &da, &dx);
    CHECK(rel(dx, a.transpose() * gy) <= 1e-14);
    CHECK((da - gy * x.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("adam steps") {
  TensorStore params;
  params.add("w", Matrix::Constant(2, 1, 1.0));
  TensorStore grads = params.zeros_like();
  grads.at("w") << 0.3, -2.0;
  AdamConfig cfg;
  cfg.lr = 0.01;
  Adam adam(params, cfg);
  adam.step(params, grads);
  // Bias-corrected first step moves each coordinate by lr * g / (|g| + eps).
  CHECK(params.at("w")(0, 0) == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8)).epsilon(1e-12));
  CHECK(params.at("w")(1, 0) == doctest::Approx(1.0 + 0.01 * 2.0 / (2.0 + 1e-8)).epsilon(1e-12));
  adam.step(params, grads);
  // Constant gradient: m_hat = g and v_hat = g^2 again, so the same step.
  CHECK(params.at("w")(0, 0) == doctest::Approx(1.0 - 0.02).epsilon(1e-9));
  CHECK(params.at("w")(1, 0) == doctest::Approx(1.0 + 0.02).epsilon(1e-9));
  CHECK(adam.steps() == 2);

  TensorStore still;
  still.add("w", Matrix::Constant(3, 3, 0.5));
  Adam adam2(still, cfg);
  const TensorStore before = still;
  adam2.step(still, still.zeros_like());
  CHECK(still == before);

  TensorStore wrong;
  wrong.add("w", Matrix::Zero(1, 1));
  CHECK_THROWS_AS(adam2.step(still, wrong), ShapeError);
}

TEST_CASE("finite difference checker") {
  TensorStore params;
  Rng rng(5);
  params.add("a", random_matrix(3, 4, rng));
  params.add("b", random_matrix(5, 1, rng));
  auto quad = [](const TensorStore& p) {
    double s = 0;
    for (const auto& t : p.tensors()) s += 0.5 * t.value.squaredNorm();
    return s;
  };
  const auto report = finite_diff_check(quad, params, params, {});
  CHECK(report.max_rel_error <= 1e-8);
  CHECK(report.coords_checked == 12 + 5);

  TensorStore wrong = params;
  wrong.at("a")(0, 0) += 1.0;
  FiniteDiffOptions all;
  all.coords_per_tensor = 0;
  CHECK(finite_diff_check(quad, params, wrong, all).max_rel_error > 0.1);

  TensorStore logits;
  logits.add("z", random_matrix(6, 1, rng));
  auto ce = [](const TensorStore& p) { return cross_entropy_from_logits(p.at("z"), 2).loss; };
  TensorStore g = logits.zeros_like();
  g.at("z") = cross_entropy_from_logits(logits.at("z"), 2).grad;
  CHECK(finite_diff_check(ce, logits, g, all).max_rel_error <= 1e-6);

  auto bad = [](const TensorStore&) { return std::numeric_limits<double>::quiet_NaN(); };
  CHECK_THROWS_AS(finite_diff_check(bad, logits, g, all), NonFiniteError);
}

TEST_CASE("tensor store helpers") {
  TensorStore s;
  s.add("x", Matrix::Ones(2, 2));
  CHECK_THROWS(s.add("x", Matrix::Ones(1, 1)));
  CHECK(s.num_scalars() == 4);
  TensorStore t = s.zeros_like();
  CHECK(t.same_layout(s));
  t.add_scaled(s, 2.0);
  CHECK(t.max_abs() == 2.0);
  Matrix bad(1, 1);
  bad(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(require_finite(bad, "bad"), NonFiniteError);
}

TEST_CASE("rng determinism") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(7);
  for (int i = 0; i < 1000; ++i) {
    const auto v = c.uniform_int(3);
    CHECK(v < 3);
  }
}
