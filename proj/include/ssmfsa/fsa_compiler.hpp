#pragma once

#include "ssmfsa/automata.hpp"
#include "ssmfsa/numkit/tensor.hpp"
#include "ssmfsa/rng.hpp"
#include "ssmfsa/scan.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace ssmfsa::compiler {

using num::ComplexVector;
using num::Matrix;
using num::Vector;

enum class EncodingKind { OneHot, RandomOrthogonal };

EncodingKind parse_encoding(std::string_view name);
std::string encoding_name(EncodingKind kind);

/// Exact selective-SSM image of a semiautomaton: x_t = A(σ_t) x_{t-1}, b = 0.
struct CompiledSelectiveSsm {
  Matrix encodings;                // |Q| x n, row q is enc(q)
  std::vector<Matrix> transitions;  // A(σ) = Σ_q enc(δ(q,σ)) enc(q)ᵀ
  Vector x0;                        // enc(q_init)
  Vector b_term;                    // always zero

  Eigen::Index dim() const { return x0.size(); }
  int num_states() const { return static_cast<int>(encodings.rows()); }
  int alphabet_size() const { return static_cast<int>(transitions.size()); }
};

/// Builds enc and A(σ). one_hot requires n == |Q|; random_orthogonal takes
/// the first |Q| rows of a sign-fixed QR factor of an n x n Gaussian matrix.
/// Throws UsageError if n < |Q| (or n != |Q| for one_hot).
CompiledSelectiveSsm compile(const automata::Semiautomaton& aut, EncodingKind kind, Eigen::Index n, Rng& rng);
CompiledSelectiveSsm compile(const automata::Semiautomaton& aut, EncodingKind kind = EncodingKind::OneHot);

/// Final state vector after running the sequence from x0.
Vector final_state(const CompiledSelectiveSsm& c, const automata::Sequence& seq,
                   scan::Mode mode = scan::Mode::Sequential, const scan::ScanOptions& options = {});

/// State whose encoding has the largest inner product with x (lowest index on ties).
automata::State decode(const CompiledSelectiveSsm& c, const Vector& x);

/// decode(final_state(...)). An empty sequence yields q_init.
automata::State emulate(const CompiledSelectiveSsm& c, const automata::Sequence& seq,
                        scan::Mode mode = scan::Mode::Sequential, const scan::ScanOptions& options = {});

inline constexpr double kCommuteTol = 1e-8;
inline constexpr double kPropositionTol = 1e-9;

struct TransitionCommutation {
  bool commute = true;
  std::optional<std::pair<automata::Symbol, automata::Symbol>> witness;
  double max_defect = 0.0;  // max over pairs of ‖A(a)A(b) - A(b)A(a)‖_max
};

TransitionCommutation transitions_commute(const CompiledSelectiveSsm& c, double tol = kCommuteTol);

struct OrderInvarianceOptions {
  std::size_t trials = 100;
  std::size_t max_length = 200;
  double tol = kPropositionTol;
};

struct OrderInvarianceReport {
  bool invariant = true;
  std::size_t violations = 0;
  double max_diff = 0.0;
};

/// Runs x_{t+1} = Λ(u_t) ⊙ x_t for a random sequence and a random permutation
/// of it, per trial, and reports whether the final states always agree.
OrderInvarianceReport proposition1_check(const std::vector<ComplexVector>& diag_values, const ComplexVector& x0,
                                         Rng& rng, const OrderInvarianceOptions& options = {});

/// Same experiment for dense (and optionally affine) per-symbol maps; used
/// for the non-commuting controls. Empty `b_vectors` means b = 0.
OrderInvarianceReport order_invariance_check(const std::vector<Matrix>& matrices,
                                             const std::vector<Vector>& b_vectors, const Vector& x0, Rng& rng,
                                             const OrderInvarianceOptions& options = {});

/// Evaluates the unrolled closed form
///   x_T = A_T···A_1 x0 + Σ_t A_T···A_{t+1} b(u_t)
/// term by term, where `matrices[σ]` and `b_vectors[σ]` are the per-symbol
/// maps. Independent of the step-by-step recurrence.
Vector unrolled_b_term_check(const std::vector<Matrix>& matrices, const std::vector<Vector>& b_vectors,
                             const Vector& x0, const automata::Sequence& seq);

}  // namespace ssmfsa::compiler
