#include "ssmfsa/diag_ssm.hpp"
#include "ssmfsa/error.hpp"
#include "ssmfsa/numkit/gradcheck.hpp"
#include "ssmfsa/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <complex>

using namespace ssmfsa;
using namespace ssmfsa::diag;
using automata::Sequence;

namespace {

DiagSsmConfig small_config(ReadoutKind readout, bool use_b) {
  DiagSsmConfig c;
  c.alphabet_size = 3;
  c.n = 4;
  c.d = 4;
  c.use_B = use_b;
  c.readout = readout;
  c.label_space = 3;
  return c;
}

void jitter(DiagSsmParams& params, Rng& rng, double scale) {
  for (auto& t : params.store().tensors())
    for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] += scale * rng.normal();
}

ComplexVector random_complex(Eigen::Index n, Rng& rng) {
  ComplexVector v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    v.re[i] = rng.normal();
    v.im[i] = rng.normal();
  }
  return v;
}

// std::complex reference for x_t = a_t ⊙ x_{t-1} + b_t.
std::vector<std::complex<double>> reference_final(const std::vector<ComplexVector>& a,
                                                  const std::vector<ComplexVector>& b, const ComplexVector& x0,
                                                  bool conjugate) {
  std::vector<std::complex<double>> x(x0.size());
  for (Eigen::Index i = 0; i < x0.size(); ++i) x[i] = {x0.re[i], x0.im[i]};
  for (std::size_t t = 0; t < a.size(); ++t)
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
      std::complex<double> ai{a[t].re[i], a[t].im[i]};
      if (conjugate) ai = std::conj(ai);
      x[i] = ai * x[i] + std::complex<double>{b[t].re[i], b[t].im[i]};
    }
  return x;
}

}  // namespace

TEST_CASE("modulus normalization") {
  Vector re(3), im(3);
  re << 3.0, 0.0, -1e-3;
  im << 4.0, 0.0, 0.0;
  const auto z = normalize_modulus(re, im);
  CHECK(z.re[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(z.im[0] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(z.re[1] == 0.0);
  CHECK(z.im[1] == 0.0);
  CHECK(z.re[2] == doctest::Approx(-1.0).epsilon(1e-8));
}

TEST_CASE("generated diagonals have unit modulus") {
  Rng rng(0);
  auto cfg = small_config(ReadoutKind::Linear, false);
  cfg.n = 32;
  cfg.d = 16;
  const auto params = init(cfg, rng);
  for (int s = 0; s < 3; ++s) {
    const auto v = generate_diagonal(params, s);
    const Vector m = v.modulus();
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      if (m[i] == 0.0) continue;  // ReLU can zero a whole entry
      CHECK(std::abs(m[i] - 1.0) <= 1e-10);
    }
  }
  CHECK_THROWS_AS(forward(params, Sequence{}), UsageError);
}

TEST_CASE("diag gradients match finite differences") {
  Rng rng(1);
  const Sequence seq{0, 2, 1, 1, 0};
  for (auto readout : {ReadoutKind::Linear, ReadoutKind::Mlp}) {
    for (bool use_b : {false, true}) {
      auto params = init(small_config(readout, use_b), rng);
      jitter(params, rng, 0.3);
      const auto grads = gradients(params, seq, 1);
      auto fn = [&](const num::ParamStore& store) {
        DiagSsmParams q = params;
        q.store() = store;
        return loss(q, seq, 1);
      };
      num::FiniteDiffOptions fo;
      fo.coords_per_tensor = 0;
      const auto rep = num::finite_diff_check(fn, params.store(), grads, fo);
      CHECK_MESSAGE(rep.max_rel_error <= 1e-4, rep.worst_tensor << " " << rep.worst_analytic << " vs "
                                                                << rep.worst_numeric);
      CHECK(rep.coords_checked == params.store().num_scalars());
    }
  }
}

TEST_CASE("without B the final state ignores token order") {
  Rng rng(2);
  auto params = init(small_config(ReadoutKind::Linear, false), rng);
  jitter(params, rng, 0.3);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Sequence seq;
    for (int t = 0; t < 200; ++t) seq.push_back(static_cast<automata::Symbol>(rng.uniform_int(3)));
    Sequence perm = seq;
    rng.shuffle(std::span<automata::Symbol>(perm));
    const auto a = forward(params, seq);
    const auto b = forward(params, perm);
    worst = std::max(worst, a.states.back().max_abs_diff(b.states.back()));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("with B token order changes the final state") {
  Rng rng(3);
  auto params = init(small_config(ReadoutKind::Linear, true), rng);
  jitter(params, rng, 0.5);
  const auto a = forward(params, Sequence{0, 1});
  const auto b = forward(params, Sequence{1, 0});
  CHECK(a.states.back().max_abs_diff(b.states.back()) > 1e-3);
}

TEST_CASE("diag scan matches a complex reference in both modes") {
  Rng rng(4);
  for (std::size_t T : {1, 2, 33, 257}) {
    std::vector<ComplexVector> as, bs;
    for (std::size_t t = 0; t < T; ++t) {
      auto a = random_complex(5, rng);
      as.push_back(ComplexVector(Vector(0.5 * a.re), Vector(0.5 * a.im)));
      bs.push_back(random_complex(5, rng));
    }
    const auto x0 = random_complex(5, rng);
    for (bool conj : {false, true}) {
      std::vector<DiagElement> elems;
      for (std::size_t t = 0; t < T; ++t) elems.push_back({&as[t], &bs[t], conj});
      const auto want = reference_final(as, bs, x0, conj);
      for (auto mode : {scan::Mode::Sequential, scan::Mode::Parallel}) {
        const auto got = diag_scan(elems, x0, mode, {8, 1});
        REQUIRE(got.size() == T);
        double worst = 0.0;
        for (Eigen::Index i = 0; i < 5; ++i)
          worst = std::max(worst, std::abs(std::complex<double>{got.back().re[i], got.back().im[i]} - want[i]));
        CHECK(worst <= 1e-10);
      }
      const auto one = diag_scan(elems, x0, scan::Mode::Parallel, {8, 1});
      const auto four = diag_scan(elems, x0, scan::Mode::Parallel, {8, 4});
      CHECK(one.back().max_abs_diff(four.back()) == 0.0);
    }
  }
}

TEST_CASE("parallel forward and backward match sequential") {
  Rng rng(5);
  auto params = init(small_config(ReadoutKind::Mlp, true), rng);
  jitter(params, rng, 0.2);
  Sequence seq;
  for (int t = 0; t < 120; ++t) seq.push_back(static_cast<automata::Symbol>(rng.uniform_int(3)));
  DiagRunOptions par{scan::Mode::Parallel, {16, 1}};
  const auto a = forward(params, seq);
  const auto b = forward(params, seq, par);
  CHECK((a.logits - b.logits).cwiseAbs().maxCoeff() <= 1e-10);
  auto diff = gradients(params, seq, 2);
  const double scale = std::max(1.0, diff.max_abs());
  diff.add_scaled(gradients(params, seq, 2, par), -1.0);
  CHECK(diff.max_abs() <= 1e-9 * scale);
}
