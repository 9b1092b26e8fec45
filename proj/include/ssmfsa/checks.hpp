#pragma once

#include "ssmfsa/automata.hpp"
#include "ssmfsa/fsa_compiler.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace ssmfsa::checks {

struct CompileVerification {
  automata::TaskSpec task;
  compiler::EncodingKind encoding = compiler::EncodingKind::OneHot;
  std::size_t sequences = 0;
  std::size_t mismatches = 0;
  std::optional<automata::Sequence> first_mismatch;
};

/// Emulates `sequences` random inputs of length uniform in [1, max_length]
/// with the compiled model and compares the decoded state against the
/// oracle's final state.
CompileVerification verify_compiled(const compiler::CompiledSelectiveSsm& compiled, const automata::TaskSpec& task,
                                    std::size_t sequences, std::size_t max_length, std::uint64_t seed);

struct Prop1Suite {
  compiler::OrderInvarianceReport diagonal;          // b = 0, must be invariant
  compiler::OrderInvarianceReport dense_control;     // compiled D4, must not be
  compiler::OrderInvarianceReport affine_control;    // diagonal with b != 0, must not be
  bool pass() const { return diagonal.invariant && !dense_control.invariant && !affine_control.invariant; }
};

/// Random unit-modulus diagonal system with `alphabet` symbols and state size n.
Prop1Suite run_prop1_suite(std::size_t trials, std::size_t max_length, int n, int alphabet, std::uint64_t seed);

struct CommutativityAnalysis {
  automata::TaskSpec task;
  automata::CommutativityResult automaton;
  compiler::TransitionCommutation compiled;
  bool agree() const { return automaton.commutative == compiled.commute; }
};

CommutativityAnalysis analyze_commutativity(const automata::TaskSpec& task);

}  // namespace ssmfsa::checks
