#include "ssmfsa/checks.hpp"

#include <cmath>
#include <numbers>

namespace ssmfsa::checks {

CompileVerification verify_compiled(const compiler::CompiledSelectiveSsm& compiled, const automata::TaskSpec& task,
                                    std::size_t sequences, std::size_t max_length, std::uint64_t seed) {
  const auto aut = automata::build_task(task);
  Rng rng(seed);
  CompileVerification out;
  out.task = task;
  out.sequences = sequences;
  for (std::size_t i = 0; i < sequences; ++i) {
    const auto len = static_cast<std::size_t>(rng.uniform_range(1, static_cast<std::int64_t>(max_length)));
    const auto seq = automata::sample_sequence(task, len, rng);
    const auto expected = automata::run_oracle(aut, aut.initial_state(), seq);
    if (compiler::emulate(compiled, seq) != expected) {
      if (!out.first_mismatch) out.first_mismatch = seq;
      ++out.mismatches;
    }
  }
  return out;
}

Prop1Suite run_prop1_suite(std::size_t trials, std::size_t max_length, int n, int alphabet, std::uint64_t seed) {
  Rng rng(seed);
  compiler::OrderInvarianceOptions opts;
  opts.trials = trials;
  opts.max_length = max_length;

  std::vector<num::ComplexVector> diag(static_cast<std::size_t>(alphabet), num::ComplexVector(n));
  for (auto& d : diag) {
    for (int i = 0; i < n; ++i) {
      const double theta = 2.0 * std::numbers::pi * rng.uniform();
      d.re[i] = std::cos(theta);
      d.im[i] = std::sin(theta);
    }
  }
  num::ComplexVector x0(n);
  for (int i = 0; i < n; ++i) {
    x0.re[i] = rng.normal();
    x0.im[i] = rng.normal();
  }

  Prop1Suite suite;
  suite.diagonal = compiler::proposition1_check(diag, x0, rng, opts);

  const auto d4 = compiler::compile(automata::build_task(automata::parse_task("dn", 4)));
  suite.dense_control = compiler::order_invariance_check(d4.transitions, {}, d4.x0, rng, opts);

  // The same diagonal maps as real 2x2 rotation blocks, plus a random offset.
  std::vector<num::Matrix> blocks;
  std::vector<num::Vector> offsets;
  for (const auto& d : diag) {
    num::Matrix m = num::Matrix::Zero(2 * n, 2 * n);
    for (int i = 0; i < n; ++i) {
      m(2 * i, 2 * i) = d.re[i];
      m(2 * i, 2 * i + 1) = -d.im[i];
      m(2 * i + 1, 2 * i) = d.im[i];
      m(2 * i + 1, 2 * i + 1) = d.re[i];
    }
    blocks.push_back(std::move(m));
    num::Vector b(2 * n);
    for (int i = 0; i < 2 * n; ++i) b[i] = rng.normal();
    offsets.push_back(std::move(b));
  }
  num::Vector x0_real(2 * n);
  for (int i = 0; i < n; ++i) {
    x0_real[2 * i] = x0.re[i];
    x0_real[2 * i + 1] = x0.im[i];
  }
  suite.affine_control = compiler::order_invariance_check(blocks, offsets, x0_real, rng, opts);
  return suite;
}

CommutativityAnalysis analyze_commutativity(const automata::TaskSpec& task) {
  const auto aut = automata::build_task(task);
  CommutativityAnalysis out;
  out.task = task;
  out.automaton = automata::is_commutative(aut);
  out.compiled = compiler::transitions_commute(compiler::compile(aut));
  return out;
}

}  // namespace ssmfsa::checks
