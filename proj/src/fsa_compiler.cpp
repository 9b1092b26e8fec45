#include "ssmfsa/fsa_compiler.hpp"

#include "ssmfsa/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ssmfsa::compiler {

EncodingKind parse_encoding(std::string_view name) {
  if (name == "one_hot") return EncodingKind::OneHot;
  if (name == "random_orthogonal") return EncodingKind::RandomOrthogonal;
  throw UsageError("unknown encoding '" + std::string(name) + "' (one_hot | random_orthogonal)");
}

std::string encoding_name(EncodingKind kind) {
  return kind == EncodingKind::OneHot ? "one_hot" : "random_orthogonal";
}

namespace {

Matrix random_orthogonal(Eigen::Index n, Rng& rng) {
  Matrix g(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

}  // namespace

CompiledSelectiveSsm compile(const automata::Semiautomaton& aut, EncodingKind kind, Eigen::Index n, Rng& rng) {
  const Eigen::Index states = aut.num_states();
  if (n < states) throw UsageError("compile: dimension " + std::to_string(n) + " < |Q| = " + std::to_string(states));
  if (kind == EncodingKind::OneHot && n != states) throw UsageError("compile: one_hot needs n == |Q|");

  CompiledSelectiveSsm c;
  if (kind == EncodingKind::OneHot) {
    c.encodings = Matrix::Identity(states, states);
  } else {
    c.encodings = random_orthogonal(n, rng).topRows(states);
  }
  c.transitions.assign(aut.alphabet_size(), Matrix::Zero(n, n));
  for (automata::Symbol a = 0; a < aut.alphabet_size(); ++a) {
    for (automata::State q = 0; q < states; ++q) {
      c.transitions[a].noalias() += c.encodings.row(aut.step(q, a)).transpose() * c.encodings.row(q);
    }
  }
  c.x0 = c.encodings.row(aut.initial_state()).transpose();
  c.b_term = Vector::Zero(n);
  return c;
}

CompiledSelectiveSsm compile(const automata::Semiautomaton& aut, EncodingKind kind) {
  Rng rng(0);
  return compile(aut, kind, aut.num_states(), rng);
}

Vector final_state(const CompiledSelectiveSsm& c, const automata::Sequence& seq, scan::Mode mode,
                   const scan::ScanOptions& options) {
  if (seq.empty()) return c.x0;
  std::vector<scan::AffineRef> refs;
  refs.reserve(seq.size());
  for (automata::Symbol a : seq) {
    if (a < 0 || a >= c.alphabet_size()) throw std::out_of_range("emulate: symbol out of range");
    refs.push_back({&c.transitions[a], nullptr, false});
  }
  auto states = scan::run_scan(refs, c.x0, mode, options);
  return std::move(states.back());
}

automata::State decode(const CompiledSelectiveSsm& c, const Vector& x) {
  const Vector scores = c.encodings * x;
  automata::State best = 0;
  for (Eigen::Index q = 1; q < scores.size(); ++q) {
    if (scores[q] > scores[best]) best = static_cast<automata::State>(q);
  }
  return best;
}

automata::State emulate(const CompiledSelectiveSsm& c, const automata::Sequence& seq, scan::Mode mode,
                        const scan::ScanOptions& options) {
  return decode(c, final_state(c, seq, mode, options));
}

TransitionCommutation transitions_commute(const CompiledSelectiveSsm& c, double tol) {
  TransitionCommutation out;
  for (int a = 0; a < c.alphabet_size(); ++a) {
    for (int b = a + 1; b < c.alphabet_size(); ++b) {
      const Matrix comm = c.transitions[a] * c.transitions[b] - c.transitions[b] * c.transitions[a];
      const double defect = comm.size() ? comm.cwiseAbs().maxCoeff() : 0.0;
      out.max_defect = std::max(out.max_defect, defect);
      if (defect > tol && out.commute) {
        out.commute = false;
        out.witness = std::make_pair(a, b);
      }
    }
  }
  return out;
}

namespace {

automata::Sequence random_sequence(std::size_t alphabet, std::size_t max_length, Rng& rng) {
  const std::size_t len = 1 + rng.uniform_int(max_length);
  automata::Sequence seq(len);
  for (auto& s : seq) s = static_cast<automata::Symbol>(rng.uniform_int(alphabet));
  return seq;
}

}  // namespace

OrderInvarianceReport proposition1_check(const std::vector<ComplexVector>& diag_values, const ComplexVector& x0,
                                         Rng& rng, const OrderInvarianceOptions& options) {
  if (diag_values.empty()) throw UsageError("proposition1_check: no symbols");
  for (const auto& d : diag_values) {
    if (d.size() != x0.size()) throw ShapeError("proposition1_check: diagonal/state length mismatch");
    num::require_finite(d.re, "proposition1_check diagonal");
    num::require_finite(d.im, "proposition1_check diagonal");
  }
  auto run = [&](const automata::Sequence& seq) {
    ComplexVector x = x0;
    for (automata::Symbol s : seq) x = diag_values[s].hadamard(x);
    return x;
  };
  OrderInvarianceReport report;
  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    automata::Sequence seq = random_sequence(diag_values.size(), options.max_length, rng);
    automata::Sequence permuted = seq;
    rng.shuffle(std::span(permuted));
    const double diff = run(seq).max_abs_diff(run(permuted));
    report.max_diff = std::max(report.max_diff, diff);
    if (diff > options.tol) ++report.violations;
  }
  report.invariant = report.violations == 0;
  return report;
}

OrderInvarianceReport order_invariance_check(const std::vector<Matrix>& matrices,
                                             const std::vector<Vector>& b_vectors, const Vector& x0, Rng& rng,
                                             const OrderInvarianceOptions& options) {
  if (matrices.empty()) throw UsageError("order_invariance_check: no symbols");
  if (!b_vectors.empty() && b_vectors.size() != matrices.size()) {
    throw ShapeError("order_invariance_check: one b vector per symbol required");
  }
  auto run = [&](const automata::Sequence& seq) {
    Vector x = x0;
    for (automata::Symbol s : seq) {
      x = matrices[s] * x;
      if (!b_vectors.empty()) x += b_vectors[s];
    }
    return x;
  };
  OrderInvarianceReport report;
  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    automata::Sequence seq = random_sequence(matrices.size(), options.max_length, rng);
    automata::Sequence permuted = seq;
    rng.shuffle(std::span(permuted));
    const double diff = (run(seq) - run(permuted)).cwiseAbs().maxCoeff();
    report.max_diff = std::max(report.max_diff, diff);
    if (diff > options.tol) ++report.violations;
  }
  report.invariant = report.violations == 0;
  return report;
}

Vector unrolled_b_term_check(const std::vector<Matrix>& matrices, const std::vector<Vector>& b_vectors,
                             const Vector& x0, const automata::Sequence& seq) {
  const Eigen::Index n = x0.size();
  for (const auto& m : matrices) {
    if (m.rows() != n || m.cols() != n) throw ShapeError("unrolled_b_term_check: matrix dimension");
  }
  if (!b_vectors.empty() && b_vectors.size() != matrices.size()) throw ShapeError("unrolled_b_term_check: b count");
  for (const auto& b : b_vectors) {
    if (b.size() != n) throw ShapeError("unrolled_b_term_check: b dimension");
  }
  for (auto s : seq) {
    if (s < 0 || static_cast<std::size_t>(s) >= matrices.size()) throw std::out_of_range("unrolled: bad symbol");
  }
  // suffix(t) = A_T ··· A_{t+1}, built explicitly for each term.
  auto suffix_product = [&](std::size_t from) {
    Matrix p = Matrix::Identity(n, n);
    for (std::size_t i = from; i < seq.size(); ++i) p = matrices[seq[i]] * p;
    return p;
  };
  Vector total = suffix_product(0) * x0;
  if (!b_vectors.empty()) {
    for (std::size_t t = 0; t < seq.size(); ++t) total += suffix_product(t + 1) * b_vectors[seq[t]];
  }
  return total;
}

}  // namespace ssmfsa::compiler
