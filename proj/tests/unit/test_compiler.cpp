#include "ssmfsa/automata.hpp"
#include "ssmfsa/checks.hpp"
#include "ssmfsa/error.hpp"
#include "ssmfsa/fsa_compiler.hpp"
#include "ssmfsa/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace ssmfsa;
using namespace ssmfsa::compiler;
using automata::Sequence;
using automata::TaskKind;
using automata::TaskSpec;

TEST_CASE("parity compiles to identity and swap") {
  const auto aut = automata::build_task({TaskKind::Parity, {}});
  const auto c = compile(aut);
  Matrix swap(2, 2);
  swap << 0, 1, 1, 0;
  CHECK((c.transitions[0] - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((c.transitions[1] - swap).cwiseAbs().maxCoeff() == 0.0);
  CHECK(c.x0 == Vector::Unit(2, 0));
  CHECK(c.b_term.cwiseAbs().maxCoeff() == 0.0);
  CHECK(emulate(c, Sequence{1, 1, 0, 1}) == 1);
  CHECK(emulate(c, Sequence{}) == aut.initial_state());
}

TEST_CASE("cycle right move is a cyclic shift") {
  const auto c = compile(automata::build_task({TaskKind::Cycle, {}}));
  Matrix shift = Matrix::Zero(5, 5);
  for (int q = 0; q < 5; ++q) shift((q + 1) % 5, q) = 1.0;
  CHECK((c.transitions[1] - shift).cwiseAbs().maxCoeff() == 0.0);
  CHECK((c.transitions[0] - shift.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((c.transitions[2] - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("compile errors") {
  const auto aut = automata::build_task({TaskKind::Cycle, {}});
  Rng rng(0);
  CHECK_THROWS_AS(compile(aut, EncodingKind::RandomOrthogonal, 4, rng), UsageError);
  CHECK_THROWS_AS(compile(aut, EncodingKind::OneHot, 6, rng), UsageError);
  CHECK_THROWS_AS(parse_encoding("gray"), UsageError);
  CHECK(parse_encoding("random_orthogonal") == EncodingKind::RandomOrthogonal);
  CHECK(encoding_name(EncodingKind::OneHot) == "one_hot");
}

TEST_CASE("random orthogonal encodings are orthonormal") {
  Rng rng(1);
  for (const auto& spec : automata::all_tasks()) {
    const auto aut = automata::build_task(spec);
    const Eigen::Index n = aut.num_states() + 3;
    const auto c = compile(aut, EncodingKind::RandomOrthogonal, n, rng);
    const Matrix gram = c.encodings * c.encodings.transpose();
    CHECK((gram - Matrix::Identity(aut.num_states(), aut.num_states())).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("compiled models emulate every task exactly") {
  Rng rng(2);
  for (const auto& spec : automata::all_tasks()) {
    const auto aut = automata::build_task(spec);
    for (auto kind : {EncodingKind::OneHot, EncodingKind::RandomOrthogonal}) {
      const auto c = kind == EncodingKind::OneHot ? compile(aut)
                                                  : compile(aut, kind, aut.num_states() + 2, rng);
      std::size_t mismatches = 0;
      for (int i = 0; i < 200; ++i) {
        const auto seq = automata::sample_sequence(spec, 1 + rng.uniform_int(300), rng);
        const auto want = automata::run_oracle(aut, aut.initial_state(), seq);
        if (emulate(c, seq) != want) ++mismatches;
        if (emulate(c, seq, scan::Mode::Parallel, {16, 1}) != want) ++mismatches;
      }
      CHECK_MESSAGE(mismatches == 0, spec.display_name());
    }
  }
}

TEST_CASE("one-hot states stay exactly one-hot") {
  const TaskSpec spec{TaskKind::A5, {}};
  const auto aut = automata::build_task(spec);
  const auto c = compile(aut);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto seq = automata::sample_sequence(spec, 500, rng);
    const Vector x = final_state(c, seq);
    const auto q = automata::run_oracle(aut, aut.initial_state(), seq);
    CHECK((x - Vector::Unit(aut.num_states(), q)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("verify_compiled reports mismatches") {
  const TaskSpec spec{TaskKind::Dn, 6};
  auto c = compile(automata::build_task(spec));
  const auto ok = checks::verify_compiled(c, spec, 100, 50, 7);
  CHECK(ok.mismatches == 0);
  CHECK(ok.sequences == 100);
  CHECK_FALSE(ok.first_mismatch.has_value());
  std::swap(c.transitions[0], c.transitions[1]);
  const auto bad = checks::verify_compiled(c, spec, 100, 50, 7);
  CHECK(bad.mismatches > 0);
  CHECK(bad.first_mismatch.has_value());
}

TEST_CASE("matrix commutation agrees with the automaton") {
  for (const auto& spec : automata::all_tasks(5)) {
    const auto a = checks::analyze_commutativity(spec);
    CHECK_MESSAGE(a.agree(), spec.display_name());
  }
  CHECK(transitions_commute(compile(automata::build_task({TaskKind::C2xCn, 30}))).commute);
  const auto d = transitions_commute(compile(automata::build_task({TaskKind::Dn, 30})));
  CHECK_FALSE(d.commute);
  REQUIRE(d.witness.has_value());
  CHECK(d.max_defect >= 1.0);
}

TEST_CASE("unrolled closed form matches the recurrence") {
  Rng rng(4);
  const int n = 4;
  std::vector<Matrix> mats;
  std::vector<Vector> bs;
  for (int s = 0; s < 3; ++s) {
    Matrix m(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) m(i, j) = rng.normal() / 2.0;
    mats.push_back(m);
    Vector b(n);
    for (int i = 0; i < n; ++i) b[i] = rng.normal();
    bs.push_back(b);
  }
  Vector x0(n);
  for (int i = 0; i < n; ++i) x0[i] = rng.normal();
  for (std::size_t T : {0u, 1u, 5u, 40u}) {
    Sequence seq;
    for (std::size_t t = 0; t < T; ++t) seq.push_back(static_cast<automata::Symbol>(rng.uniform_int(3)));
    Vector x = x0;
    for (auto s : seq) x = mats[s] * x + bs[s];
    const Vector closed = unrolled_b_term_check(mats, bs, x0, seq);
    CHECK((closed - x).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, x.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("diagonal unit-modulus systems are order invariant") {
  Rng rng(5);
  const int n = 8;
  std::vector<ComplexVector> diag;
  for (int s = 0; s < 4; ++s) {
    ComplexVector v(n);
    for (int i = 0; i < n; ++i) {
      const double th = 2.0 * std::numbers::pi * rng.uniform();
      v.re[i] = std::cos(th);
      v.im[i] = std::sin(th);
    }
    diag.push_back(v);
  }
  ComplexVector x0(n);
  for (int i = 0; i < n; ++i) x0.re[i] = rng.normal();
  const auto rep = proposition1_check(diag, x0, rng, {100, 200, kPropositionTol});
  CHECK(rep.invariant);
  CHECK(rep.violations == 0);
  CHECK(rep.max_diff <= 1e-9);

  const auto suite = checks::run_prop1_suite(100, 200, 8, 4, 6);
  CHECK(suite.diagonal.invariant);
  CHECK_FALSE(suite.dense_control.invariant);
  CHECK_FALSE(suite.affine_control.invariant);
  CHECK(suite.pass());
}
