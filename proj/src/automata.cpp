#include "ssmfsa/automata.hpp"

#include "ssmfsa/error.hpp"

#include <algorithm>
#include <array>
#include <istream>
#include <map>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace ssmfsa::automata {

Semiautomaton::Semiautomaton(int num_states, int alphabet_size, std::vector<State> delta, State initial_state,
                             std::vector<std::string> state_labels, std::vector<std::string> symbol_labels)
    : num_states_(num_states),
      alphabet_size_(alphabet_size),
      delta_(std::move(delta)),
      initial_state_(initial_state),
      state_labels_(std::move(state_labels)),
      symbol_labels_(std::move(symbol_labels)) {
  if (num_states_ <= 0 || alphabet_size_ <= 0) throw UsageError("Semiautomaton: empty state set or alphabet");
  if (delta_.size() != static_cast<std::size_t>(num_states_) * static_cast<std::size_t>(alphabet_size_)) {
    throw UsageError("Semiautomaton: transition table has wrong size");
  }
  for (State s : delta_) {
    if (s < 0 || s >= num_states_) throw UsageError("Semiautomaton: transition to invalid state");
  }
  if (initial_state_ < 0 || initial_state_ >= num_states_) throw UsageError("Semiautomaton: invalid initial state");
  if (state_labels_.empty()) {
    for (int q = 0; q < num_states_; ++q) state_labels_.push_back(std::to_string(q));
  }
  if (symbol_labels_.empty()) {
    for (int a = 0; a < alphabet_size_; ++a) symbol_labels_.push_back(std::to_string(a));
  }
  if (state_labels_.size() != static_cast<std::size_t>(num_states_) ||
      symbol_labels_.size() != static_cast<std::size_t>(alphabet_size_)) {
    throw UsageError("Semiautomaton: label count mismatch");
  }
}

State Semiautomaton::step(State q, Symbol sigma) const {
  if (q < 0 || q >= num_states_) throw std::out_of_range("step: state " + std::to_string(q) + " out of range");
  if (sigma < 0 || sigma >= alphabet_size_) {
    throw std::out_of_range("step: symbol " + std::to_string(sigma) + " out of range");
  }
  return delta_[static_cast<std::size_t>(q) * alphabet_size_ + sigma];
}

bool Semiautomaton::is_permutation_automaton() const {
  for (Symbol a = 0; a < alphabet_size_; ++a) {
    std::vector<bool> hit(num_states_, false);
    for (State q = 0; q < num_states_; ++q) {
      const State r = step(q, a);
      if (hit[r]) return false;
      hit[r] = true;
    }
  }
  return true;
}

std::optional<State> Semiautomaton::find_state(std::string_view label) const {
  for (int q = 0; q < num_states_; ++q) {
    if (state_labels_[q] == label) return q;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Task catalogue

namespace {

bool has_size(TaskKind k) { return k == TaskKind::C2xCn || k == TaskKind::Dn; }

int require_size(const TaskSpec& spec) {
  if (!spec.size_param) throw UsageError(spec.name() + " needs a size parameter n");
  if (*spec.size_param < 2) throw UsageError(spec.name() + ": n must be >= 2");
  return *spec.size_param;
}

Semiautomaton make_parity() {
  // Even = 0, Odd = 1; 0 is identity, 1 toggles.
  return Semiautomaton(2, 2, {0, 1, 1, 0}, 0, {"Even", "Odd"}, {"0", "1"});
}

// State 0 has read nothing; 1 + 2*first + last afterwards.
Semiautomaton make_even_pairs() {
  std::vector<State> delta(5 * 2);
  for (Symbol a = 0; a < 2; ++a) delta[a] = 1 + 2 * a + a;
  for (int first = 0; first < 2; ++first) {
    for (int last = 0; last < 2; ++last) {
      const State q = 1 + 2 * first + last;
      for (Symbol a = 0; a < 2; ++a) delta[q * 2 + a] = 1 + 2 * first + a;
    }
  }
  return Semiautomaton(5, 2, std::move(delta), 0, {"init", "(0,0)", "(0,1)", "(1,0)", "(1,1)"}, {"0", "1"});
}

// Symbols L, R, S. States are labelled 1..5 and stored as 0..4.
Semiautomaton make_cycle() {
  constexpr int n = 5;
  std::vector<State> delta(n * 3);
  std::vector<std::string> labels;
  for (int q = 0; q < n; ++q) {
    delta[q * 3 + 0] = (q + n - 1) % n;
    delta[q * 3 + 1] = (q + 1) % n;
    delta[q * 3 + 2] = q;
    labels.push_back(std::to_string(q + 1));
  }
  return Semiautomaton(n, 3, std::move(delta), 0, std::move(labels), {"L", "R", "S"});
}

int apply_op(int value, Symbol op, int digit) {
  switch (op) {
    case kPlus: return (value + digit) % 5;
    case kMinus: return ((value - digit) % 5 + 5) % 5;
    default: return (value * digit) % 5;
  }
}

// Left-to-right evaluation mod 5. States:
//   0..14  pending (value, op), index = op_index * 5 + value; start is (0, +)
//   15..19 ready value
//   20     malformed input (digit after digit, operator after operator)
constexpr State kArithReady = 15;
constexpr State kArithError = 20;

Semiautomaton make_arithmetic() {
  constexpr int states = 21;
  constexpr int symbols = 8;
  std::vector<State> delta(states * symbols, kArithError);
  std::vector<std::string> labels(states);
  const std::array<char, 3> op_chars{'+', '-', '*'};
  for (int op = 0; op < 3; ++op) {
    for (int v = 0; v < 5; ++v) {
      const State q = op * 5 + v;
      labels[q] = std::to_string(v) + op_chars[op];
      for (int d = 0; d < kArithmeticDigits; ++d) delta[q * symbols + d] = kArithReady + apply_op(v, kPlus + op, d);
    }
  }
  for (int v = 0; v < 5; ++v) {
    const State q = kArithReady + v;
    labels[q] = "=" + std::to_string(v);
    for (int op = 0; op < 3; ++op) delta[q * symbols + kPlus + op] = op * 5 + v;
  }
  labels[kArithError] = "error";
  return Semiautomaton(states, symbols, std::move(delta), 0, std::move(labels),
                       {"0", "1", "2", "3", "4", "+", "-", "*"});
}

// States (r, s) stored as s * n + r. Symbols: move, toggle.
Semiautomaton make_cyclic_product(int n, bool dihedral) {
  std::vector<State> delta(2 * n * 2);
  std::vector<std::string> labels(2 * n);
  for (int s = 0; s < 2; ++s) {
    for (int r = 0; r < n; ++r) {
      const State q = s * n + r;
      const int step = (dihedral && s == 1) ? n - 1 : 1;
      delta[q * 2 + 0] = s * n + (r + step) % n;
      delta[q * 2 + 1] = (1 - s) * n + r;
      labels[q] = "(" + std::to_string(r) + "," + std::to_string(s) + ")";
    }
  }
  return Semiautomaton(2 * n, 2, std::move(delta), 0, std::move(labels), {"move", "toggle"});
}

using Perm = std::array<int, 5>;

Perm perm_swap(const Perm& p) { return {p[1], p[0], p[3], p[2], p[4]}; }
Perm perm_cycle(const Perm& p) { return {p[4], p[0], p[1], p[2], p[3]}; }

std::string perm_label(const Perm& p) {
  std::string s = "(";
  for (int i = 0; i < 5; ++i) {
    if (i) s += ",";
    s += std::to_string(p[i]);
  }
  return s + ")";
}

// Breadth-first enumeration from the identity, actions in (swap, cycle) order.
Semiautomaton make_a5() {
  std::map<Perm, State> index;
  std::vector<Perm> perms;
  std::queue<Perm> frontier;
  const Perm identity{0, 1, 2, 3, 4};
  index[identity] = 0;
  perms.push_back(identity);
  frontier.push(identity);
  std::vector<std::array<Perm, 2>> successors;
  while (!frontier.empty()) {
    const Perm p = frontier.front();
    frontier.pop();
    for (const Perm& next : {perm_swap(p), perm_cycle(p)}) {
      if (!index.contains(next)) {
        index[next] = static_cast<State>(perms.size());
        perms.push_back(next);
        frontier.push(next);
      }
    }
  }
  std::vector<State> delta(perms.size() * 2);
  std::vector<std::string> labels;
  for (std::size_t q = 0; q < perms.size(); ++q) {
    delta[q * 2 + 0] = index.at(perm_swap(perms[q]));
    delta[q * 2 + 1] = index.at(perm_cycle(perms[q]));
    labels.push_back(perm_label(perms[q]));
  }
  return Semiautomaton(static_cast<int>(perms.size()), 2, std::move(delta), 0, std::move(labels),
                       {"swap", "cycle"});
}

}  // namespace

int TaskSpec::label_space() const {
  switch (kind) {
    case TaskKind::Parity: return 2;
    case TaskKind::EvenPairs: return 2;
    case TaskKind::Cycle: return 5;
    case TaskKind::Arithmetic: return 5;
    case TaskKind::C2xCn:
    case TaskKind::Dn: return 2 * require_size(*this);
    case TaskKind::A5: return 60;
  }
  return 0;
}

std::string TaskSpec::name() const {
  switch (kind) {
    case TaskKind::Parity: return "parity";
    case TaskKind::EvenPairs: return "even_pairs";
    case TaskKind::Cycle: return "cycle";
    case TaskKind::Arithmetic: return "arithmetic";
    case TaskKind::C2xCn: return "c2xcn";
    case TaskKind::Dn: return "dn";
    case TaskKind::A5: return "a5";
  }
  return "?";
}

std::string TaskSpec::display_name() const {
  if (has_size(kind) && size_param) return name() + "(" + std::to_string(*size_param) + ")";
  return name();
}

TaskSpec parse_task(std::string_view name, std::optional<int> size_param) {
  static const std::map<std::string, TaskKind, std::less<>> kinds{
      {"parity", TaskKind::Parity}, {"even_pairs", TaskKind::EvenPairs}, {"cycle", TaskKind::Cycle},
      {"arithmetic", TaskKind::Arithmetic}, {"c2xcn", TaskKind::C2xCn}, {"dn", TaskKind::Dn},
      {"a5", TaskKind::A5}};
  const auto it = kinds.find(name);
  if (it == kinds.end()) throw UsageError("unknown task '" + std::string(name) + "'");
  TaskSpec spec{it->second, std::nullopt};
  if (has_size(spec.kind)) {
    spec.size_param = size_param;
    require_size(spec);
  }
  return spec;
}

std::vector<TaskSpec> all_tasks(int group_n) {
  return {{TaskKind::Parity, {}},      {TaskKind::EvenPairs, {}},     {TaskKind::Cycle, {}},
          {TaskKind::Arithmetic, {}},  {TaskKind::C2xCn, group_n},    {TaskKind::Dn, group_n},
          {TaskKind::A5, {}}};
}

Semiautomaton build_task(const TaskSpec& spec) {
  switch (spec.kind) {
    case TaskKind::Parity: return make_parity();
    case TaskKind::EvenPairs: return make_even_pairs();
    case TaskKind::Cycle: return make_cycle();
    case TaskKind::Arithmetic: return make_arithmetic();
    case TaskKind::C2xCn: return make_cyclic_product(require_size(spec), false);
    case TaskKind::Dn: return make_cyclic_product(require_size(spec), true);
    case TaskKind::A5: return make_a5();
  }
  throw UsageError("unknown task kind");
}

State run_oracle(const Semiautomaton& aut, State q0, const Sequence& seq) {
  State q = q0;
  for (Symbol a : seq) q = aut.step(q, a);
  return q;
}

int label_of_state(const TaskSpec& spec, const Semiautomaton& aut, State q) {
  if (q < 0 || q >= aut.num_states()) throw std::out_of_range("label_of_state: bad state");
  switch (spec.kind) {
    case TaskKind::EvenPairs: {
      if (q == 0) return static_cast<int>(EvenPairsLabel::Accept);
      const int first = (q - 1) / 2;
      const int last = (q - 1) % 2;
      return static_cast<int>(first == last ? EvenPairsLabel::Accept : EvenPairsLabel::Reject);
    }
    case TaskKind::Arithmetic:
      if (q < kArithReady) return q % 5;
      if (q < kArithError) return q - kArithReady;
      return 0;
    default: return q;
  }
}

Sequence sample_sequence(const TaskSpec& spec, std::size_t length, Rng& rng) {
  if (length == 0) throw UsageError("sample_sequence: length must be >= 1");
  Sequence seq;
  if (spec.kind == TaskKind::Arithmetic) {
    if (length % 2 == 0) --length;
    seq.reserve(length);
    for (std::size_t i = 0; i < length; ++i) {
      if (i % 2 == 0) {
        seq.push_back(static_cast<Symbol>(rng.uniform_int(kArithmeticDigits)));
      } else {
        seq.push_back(static_cast<Symbol>(kPlus + rng.uniform_int(3)));
      }
    }
    return seq;
  }
  int alphabet = 2;
  if (spec.kind == TaskKind::Cycle) alphabet = 3;
  seq.reserve(length);
  for (std::size_t i = 0; i < length; ++i) seq.push_back(static_cast<Symbol>(rng.uniform_int(alphabet)));
  return seq;
}

namespace {
void require_binary(const Sequence& seq) {
  for (Symbol a : seq) {
    if (a != 0 && a != 1) throw UsageError("even_pairs: non-binary symbol " + std::to_string(a));
  }
}
}  // namespace

EvenPairsLabel even_pairs_label(const Sequence& seq) {
  require_binary(seq);
  std::size_t ab = 0;
  std::size_t ba = 0;
  for (std::size_t i = 1; i < seq.size(); ++i) {
    if (seq[i - 1] == 0 && seq[i] == 1) ++ab;
    if (seq[i - 1] == 1 && seq[i] == 0) ++ba;
  }
  return ab == ba ? EvenPairsLabel::Accept : EvenPairsLabel::Reject;
}

EvenPairsLabel even_pairs_label_endpoints(const Sequence& seq) {
  require_binary(seq);
  if (seq.empty()) return EvenPairsLabel::Accept;
  return seq.front() == seq.back() ? EvenPairsLabel::Accept : EvenPairsLabel::Reject;
}

CommutativityResult is_commutative(const Semiautomaton& aut) {
  for (State q = 0; q < aut.num_states(); ++q) {
    for (Symbol a = 0; a < aut.alphabet_size(); ++a) {
      for (Symbol b = a + 1; b < aut.alphabet_size(); ++b) {
        if (aut.step(aut.step(q, a), b) != aut.step(aut.step(q, b), a)) {
          return {false, CommutationWitness{q, a, b}};
        }
      }
    }
  }
  return {true, std::nullopt};
}

Sequence parse_arithmetic(std::string_view expression) {
  Sequence seq;
  for (char c : expression) {
    if (c == ' ' || c == '\t') continue;
    if (c >= '0' && c <= '4') {
      seq.push_back(c - '0');
    } else if (c == '+') {
      seq.push_back(kPlus);
    } else if (c == '-') {
      seq.push_back(kMinus);
    } else if (c == '*') {
      seq.push_back(kTimes);
    } else {
      throw UsageError(std::string("parse_arithmetic: unexpected character '") + c + "'");
    }
  }
  return seq;
}

void write_transition_table(std::ostream& out, const Semiautomaton& aut) {
  out << aut.num_states() << ' ' << aut.alphabet_size() << ' ' << aut.initial_state() << '\n';
  for (State q = 0; q < aut.num_states(); ++q) {
    for (Symbol a = 0; a < aut.alphabet_size(); ++a) {
      if (a) out << ' ';
      out << aut.step(q, a);
    }
    out << '\n';
  }
}

Semiautomaton read_transition_table(std::istream& in) {
  int states = 0;
  int symbols = 0;
  int init = 0;
  if (!(in >> states >> symbols >> init)) throw UsageError("transition table: bad header");
  if (states <= 0 || symbols <= 0) throw UsageError("transition table: non-positive sizes");
  std::vector<State> delta(static_cast<std::size_t>(states) * symbols);
  for (auto& d : delta) {
    if (!(in >> d)) throw UsageError("transition table: truncated body");
  }
  return Semiautomaton(states, symbols, std::move(delta), init);
}

}  // namespace ssmfsa::automata
