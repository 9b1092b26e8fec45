#include "ssmfsa/error.hpp"
#include "ssmfsa/numkit/gradcheck.hpp"
#include "ssmfsa/rng.hpp"
#include "ssmfsa/sdssm.hpp"

#include <doctest.h>

#include <cmath>

using namespace ssmfsa;
using namespace ssmfsa::sdssm;
using automata::Sequence;

namespace {

SdSsmConfig small_config(ReadoutKind readout, num::ColumnNormKind opnorm, bool use_b = true) {
  SdSsmConfig c;
  c.alphabet_size = 3;
  c.n = 6;
  c.d = 4;
  c.k = 3;
  c.p = 1.2;
  c.use_B = use_b;
  c.readout = readout;
  c.label_space = 3;
  c.opnorm = opnorm;
  return c;
}

// Moves every tensor off its structured init so no gradient is trivially zero.
void jitter(SdSsmParams& params, Rng& rng, double scale) {
  for (auto& t : params.store().tensors())
    for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] += scale * rng.normal();
}

double lp_norm(const Vector& v, double p) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::pow(std::abs(v[i]), p);
  return std::pow(s, 1.0 / p);
}

num::FiniteDiffReport fd_check(const SdSsmParams& params, const Sequence& seq, int target, const RunOptions& opts) {
  const auto grads = gradients(params, seq, target, opts);
  auto fn = [&](const num::ParamStore& store) {
    SdSsmParams q = params;
    q.store() = store;
    return loss(q, seq, target, opts);
  };
  num::FiniteDiffOptions fo;
  fo.coords_per_tensor = 0;
  return num::finite_diff_check(fn, params.store(), grads, fo);
}

}  // namespace

TEST_CASE("sdssm config validation") {
  auto c = small_config(ReadoutKind::Linear, num::ColumnNormKind::Unit);
  CHECK_NOTHROW(c.validate());
  c.k = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = small_config(ReadoutKind::Linear, num::ColumnNormKind::Unit);
  c.p = 1.6;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c.p = 0.9;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = small_config(ReadoutKind::Mlp, num::ColumnNormKind::Unit);
  c.mlp_hidden = 5;
  CHECK_THROWS_AS(c.validate(), UsageError);
  CHECK_THROWS_AS(parse_readout("conv"), UsageError);
  CHECK(parse_readout("mlp") == ReadoutKind::Mlp);
}

TEST_CASE("sdssm init follows the documented shapes") {
  Rng rng(0);
  const auto params = init(small_config(ReadoutKind::Linear, num::ColumnNormKind::Unit), rng);
  CHECK(params.embed().rows() == 3);
  CHECK(params.embed().cols() == 4);
  CHECK(params.selector().rows() == 3);
  CHECK(params.B().cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < 3; ++i) CHECK((params.dict(i) - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 0.5);
  CHECK_THROWS_AS(forward(params, Sequence{}), UsageError);
}

TEST_CASE("sdssm gradients match finite differences") {
  Rng rng(1);
  const Sequence seq{0, 2, 1, 1, 0};
  for (auto readout : {ReadoutKind::Linear, ReadoutKind::Mlp}) {
    // AtMostOne is checked twice: dictionaries scaled to keep column norms
    // clearly above 1, then clearly below, away from the max(1, .) kink.
    for (double scale : {0.0, 2.0, 0.5}) {
      const auto kind = scale == 0.0 ? num::ColumnNormKind::Unit : num::ColumnNormKind::AtMostOne;
      auto params = init(small_config(readout, kind), rng);
      jitter(params, rng, 0.2);
      if (scale != 0.0)
        for (int i = 0; i < 3; ++i) params.dict(i) *= scale;
      for (auto sharing : {Sharing::PerSymbol, Sharing::PerToken}) {
        RunOptions opts;
        opts.sharing = sharing;
        const auto rep = fd_check(params, seq, 2, opts);
        CHECK_MESSAGE(rep.max_rel_error <= 1e-4, readout_name(readout) << " " << rep.worst_tensor << " "
                                                                       << rep.worst_analytic << " vs "
                                                                       << rep.worst_numeric);
        CHECK(rep.coords_checked == params.store().num_scalars());
      }
    }
  }
}

TEST_CASE("generated transitions have normalized columns") {
  Rng rng(2);
  for (auto kind : {num::ColumnNormKind::Unit, num::ColumnNormKind::AtMostOne}) {
    auto params = init(small_config(ReadoutKind::Linear, kind), rng);
    jitter(params, rng, 0.5);
    for (int s = 0; s < 3; ++s) {
      const auto g = generate_transition(params, params.embed().row(s).transpose());
      CHECK(std::abs(g.weights.sum() - 1.0) <= 1e-12);
      for (Eigen::Index j = 0; j < g.A.cols(); ++j) {
        const double norm = lp_norm(g.A.col(j), 1.2);
        if (kind == num::ColumnNormKind::Unit)
          CHECK(norm == doctest::Approx(1.0).epsilon(1e-7));
        else
          CHECK(norm <= 1.0 + 1e-12);
      }
    }
  }
}

TEST_CASE("two-entry dictionary worked example") {
  SdSsmConfig c;
  c.alphabet_size = 1;
  c.n = 2;
  c.d = 1;
  c.k = 2;
  c.p = 1.0;
  c.label_space = 2;
  SdSsmParams params(c);
  params.store().at(params.slots().selector) << 1.0, -1.0;
  params.dict(0) << 1, 0, 0, 1;
  params.dict(1) << 0, 1, 1, 0;
  // u = 1: weights softmax(1, -1) = (e, 1/e) / (e + 1/e).
  const double w0 = std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0));
  Vector u(1);
  u << 1.0;
  const auto g = generate_transition(params, u);
  CHECK(g.weights[0] == doctest::Approx(w0).epsilon(1e-14));
  // Mixed = [[w0, w1], [w1, w0]]; every column already has l1 norm 1.
  const double denom = 1.0 + num::kColumnNormEps;
  CHECK(g.A(0, 0) == doctest::Approx(w0 / denom).epsilon(1e-14));
  CHECK(g.A(1, 0) == doctest::Approx((1.0 - w0) / denom).epsilon(1e-14));
  CHECK(g.A(0, 1) == doctest::Approx((1.0 - w0) / denom).epsilon(1e-14));
}

TEST_CASE("saturated selector picks a single dictionary matrix") {
  Rng rng(3);
  auto params = init(small_config(ReadoutKind::Linear, num::ColumnNormKind::Unit), rng);
  jitter(params, rng, 0.3);
  params.store().at(params.slots().selector).setZero();
  params.store().at(params.slots().selector)(1, 0) = 1e4;
  Vector u = Vector::Zero(4);
  u[0] = 1.0;
  const auto g = generate_transition(params, u);
  CHECK(g.weights[1] == doctest::Approx(1.0).epsilon(1e-12));
  const Matrix expected = num::column_lp_norm(params.dict(1), 1.2, num::kColumnNormEps);
  CHECK((g.A - expected).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("sequential and parallel runs agree") {
  Rng rng(4);
  auto cfg = small_config(ReadoutKind::Mlp, num::ColumnNormKind::Unit);
  auto params = init(cfg, rng);
  jitter(params, rng, 0.2);
  Sequence seq;
  for (int t = 0; t < 150; ++t) seq.push_back(static_cast<automata::Symbol>(rng.uniform_int(3)));
  RunOptions seq_opts;
  RunOptions par_opts;
  par_opts.mode = scan::Mode::Parallel;
  par_opts.scan = {16, 1};
  const auto a = forward(params, seq, seq_opts);
  const auto b = forward(params, seq, par_opts);
  CHECK((a.logits - b.logits).cwiseAbs().maxCoeff() <= 1e-10);
  const auto ga = gradients(params, seq, 1, seq_opts);
  const auto gb = gradients(params, seq, 1, par_opts);
  auto diff = ga;
  diff.add_scaled(gb, -1.0);
  CHECK(diff.max_abs() <= 1e-9 * std::max(1.0, ga.max_abs()));
}

TEST_CASE("per-symbol and per-token sharing agree") {
  Rng rng(5);
  auto params = init(small_config(ReadoutKind::Linear, num::ColumnNormKind::Unit), rng);
  jitter(params, rng, 0.2);
  Sequence seq;
  for (int t = 0; t < 60; ++t) seq.push_back(static_cast<automata::Symbol>(rng.uniform_int(3)));
  RunOptions sym, tok;
  tok.sharing = Sharing::PerToken;
  const auto a = forward(params, seq, sym);
  const auto b = forward(params, seq, tok);
  CHECK(a.trace.transitions.size() == 3);
  CHECK(b.trace.transitions.size() == 60);
  CHECK((a.logits - b.logits).cwiseAbs().maxCoeff() <= 1e-12);
  auto diff = gradients(params, seq, 0, sym);
  diff.add_scaled(gradients(params, seq, 0, tok), -1.0);
  CHECK(diff.max_abs() <= 1e-10);
}

TEST_CASE("B gradients vanish when the input term is disabled") {
  Rng rng(6);
  auto params = init(small_config(ReadoutKind::Linear, num::ColumnNormKind::Unit, false), rng);
  jitter(params, rng, 0.2);
  const auto g = gradients(params, Sequence{0, 1, 2, 0}, 1);
  CHECK(g.at(params.slots().B).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.at(params.slots().selector).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("a single step recurrence is A(u) x0 + B u") {
  Rng rng(7);
  auto params = init(small_config(ReadoutKind::Linear, num::ColumnNormKind::Unit), rng);
  jitter(params, rng, 0.3);
  const Vector x0 = params.x0();
  const auto trace = run_recurrence(params, Sequence{2}, x0);
  const Vector u = params.embed().row(2).transpose();
  const Vector expected = generate_transition(params, u).A * x0 + params.B() * u;
  CHECK((trace.states.back() - expected).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK_THROWS_AS(run_recurrence(params, Sequence{2}, Vector::Zero(3)), ShapeError);
}
