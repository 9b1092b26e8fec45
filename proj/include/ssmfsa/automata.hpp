#pragma once

#include "ssmfsa/rng.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ssmfsa::automata {

using State = int;
using Symbol = int;
using Sequence = std::vector<Symbol>;

/// Deterministic semiautomaton with a designated start state. Accepting
/// states are not modelled.
class Semiautomaton {
 public:
  Semiautomaton(int num_states, int alphabet_size, std::vector<State> delta, State initial_state,
                std::vector<std::string> state_labels = {}, std::vector<std::string> symbol_labels = {});

  int num_states() const { return num_states_; }
  int alphabet_size() const { return alphabet_size_; }
  State initial_state() const { return initial_state_; }
  const std::vector<std::string>& state_labels() const { return state_labels_; }
  const std::vector<std::string>& symbol_labels() const { return symbol_labels_; }
  /// Row-major |Q| x |Σ| transition table.
  const std::vector<State>& delta() const { return delta_; }

  /// delta[q][σ]; throws std::out_of_range on bad indices.
  State step(State q, Symbol sigma) const;
  /// True iff δ(·, σ) is a bijection for every σ.
  bool is_permutation_automaton() const;
  std::optional<State> find_state(std::string_view label) const;

 private:
  int num_states_;
  int alphabet_size_;
  std::vector<State> delta_;
  State initial_state_;
  std::vector<std::string> state_labels_;
  std::vector<std::string> symbol_labels_;
};

enum class TaskKind { Parity, EvenPairs, Cycle, Arithmetic, C2xCn, Dn, A5 };

struct TaskSpec {
  TaskKind kind = TaskKind::Parity;
  std::optional<int> size_param;

  /// Number of output classes: |Q| for state prediction, 2 for even pairs,
  /// 5 for arithmetic. Requires size_param where the task has one.
  int label_space() const;
  std::string name() const;  // "parity", "dn", ...
  std::string display_name() const;  // "dn(30)", ...
};

/// Parses one of parity, even_pairs, cycle, arithmetic, c2xcn, dn, a5.
/// Throws UsageError for unknown names or a missing/invalid size_param.
TaskSpec parse_task(std::string_view name, std::optional<int> size_param = std::nullopt);
std::vector<TaskSpec> all_tasks(int group_n = 4);

Semiautomaton build_task(const TaskSpec& spec);

/// Folds step over seq starting from q0.
State run_oracle(const Semiautomaton& aut, State q0, const Sequence& seq);

/// Output class of a final state (identity except even pairs and arithmetic).
int label_of_state(const TaskSpec& spec, const Semiautomaton& aut, State q);

/// Draws a well-formed input. Arithmetic alternates digit/operator and has odd
/// length (even requests are rounded down). Throws UsageError for length 0.
Sequence sample_sequence(const TaskSpec& spec, std::size_t length, Rng& rng);

enum class EvenPairsLabel { Reject = 0, Accept = 1 };

/// Accept iff the counts of "01" and "10" substrings are equal.
EvenPairsLabel even_pairs_label(const Sequence& seq);
/// Accept iff first symbol == last symbol. Cross-check for even_pairs_label.
EvenPairsLabel even_pairs_label_endpoints(const Sequence& seq);

struct CommutationWitness {
  State state;
  Symbol a;
  Symbol b;
};

struct CommutativityResult {
  bool commutative = true;
  std::optional<CommutationWitness> witness;  // first violation in (q, a, b) order
};

/// Checks δ(δ(q,a),b) == δ(δ(q,b),a) for every state and symbol pair.
CommutativityResult is_commutative(const Semiautomaton& aut);

// Arithmetic symbol layout: digits 0..4, then '+', '-', '*'.
inline constexpr int kArithmeticDigits = 5;
inline constexpr Symbol kPlus = 5;
inline constexpr Symbol kMinus = 6;
inline constexpr Symbol kTimes = 7;

/// Parses whitespace separated arithmetic tokens ("2 * 4 + 1 - 2").
Sequence parse_arithmetic(std::string_view expression);

/// Plain-text table: header "|Q| |Σ| q_init" then |Q| rows of |Σ| integers.
void write_transition_table(std::ostream& out, const Semiautomaton& aut);
Semiautomaton read_transition_table(std::istream& in);

}  // namespace ssmfsa::automata
