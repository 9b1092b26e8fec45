#pragma once

#include "ssmfsa/automata.hpp"
#include "ssmfsa/numkit/tensor.hpp"
#include "ssmfsa/rng.hpp"
#include "ssmfsa/scan.hpp"
#include "ssmfsa/sdssm.hpp"

#include <vector>

namespace ssmfsa::diag {

using num::ComplexVector;
using num::Matrix;
using num::Vector;
using sdssm::ReadoutKind;

inline constexpr double kModulusEps = 1e-12;

struct DiagSsmConfig {
  int alphabet_size = 2;
  int n = 64;
  int d = 64;
  bool use_B = false;
  ReadoutKind readout = ReadoutKind::Linear;
  int label_space = 2;
  int max_train_len = 90;

  void validate() const;
};

/// Complex-diagonal selective SSM:
///   Ã_{Re,Im}(u) = W^o_{Re,Im} ReLU(W^i_{Re,Im} u),  A(u) = Ã / |Ã| (elementwise)
///   x_t = A(u_t) ⊙ x_{t-1} + B u_t,  y = readout(Re x_T ⊕ Im x_T).
class DiagSsmParams {
 public:
  explicit DiagSsmParams(const DiagSsmConfig& config);

  const DiagSsmConfig& config() const { return config_; }
  num::ParamStore& store() { return store_; }
  const num::ParamStore& store() const { return store_; }

  struct Slots {
    std::size_t embed, Wi_re, Wi_im, Wo_re, Wo_im, B_re, B_im, W_lin, Wy_i, Wy_o, x0_re, x0_im;
  };
  const Slots& slots() const { return slots_; }
  const Matrix& at(std::size_t slot) const { return store_.at(slot); }
  ComplexVector x0() const;

 private:
  DiagSsmConfig config_;
  num::ParamStore store_;
  Slots slots_{};
};

DiagSsmParams init(const DiagSsmConfig& config, Rng& rng);

struct GeneratedDiagonal {
  Vector pre_re, pre_im;  // W^i u
  Vector raw_re, raw_im;  // Ã before normalization
  Vector modulus;         // |Ã|
  ComplexVector value;    // A(u), unit modulus unless |Ã| = 0
};

GeneratedDiagonal generate_diagonal_detail(const DiagSsmParams& params, const Vector& u);
/// The normalized diagonal for one symbol.
ComplexVector generate_diagonal(const DiagSsmParams& params, automata::Symbol sigma);

/// Elementwise normalization z / (|z| + eps) on raw parts.
ComplexVector normalize_modulus(const Vector& re, const Vector& im);

/// Complex diagonal affine step x ↦ a ⊙ x + b; b may be empty (zero).
struct DiagElement {
  const ComplexVector* a = nullptr;
  const ComplexVector* b = nullptr;
  bool conjugate = false;  // use conj(a)
};

/// States x_1..x_T, sequential or chunked-parallel (elementwise prefix
/// products with accumulated offset sums).
std::vector<ComplexVector> diag_scan(std::span<const DiagElement> elems, const ComplexVector& x0, scan::Mode mode,
                                     const scan::ScanOptions& options = {});

struct DiagRunOptions {
  scan::Mode mode = scan::Mode::Sequential;
  scan::ScanOptions scan{};
};

struct DiagForward {
  automata::Sequence tokens;
  std::vector<automata::Symbol> slot_symbol;
  std::vector<std::size_t> slot_of_token;
  std::vector<GeneratedDiagonal> diagonals;  // per distinct symbol
  std::vector<ComplexVector> b_terms;        // per distinct symbol (use_B)
  std::vector<ComplexVector> states;         // x_0..x_T
  Vector features;                           // Re x_T ⊕ Im x_T
  Vector hidden_pre, hidden;                 // MLP readout only
  Vector logits;
};

/// Throws UsageError on empty input and NonFiniteError on a non-finite state.
DiagForward forward(const DiagSsmParams& params, const automata::Sequence& tokens,
                    const DiagRunOptions& options = {});

/// Cross-entropy at the final step; gradients added into grads. Returns loss.
double backward(const DiagSsmParams& params, const DiagForward& fwd, int target, num::GradStore& grads,
                const DiagRunOptions& options = {});

num::GradStore gradients(const DiagSsmParams& params, const automata::Sequence& tokens, int target,
                         const DiagRunOptions& options = {}, double* loss_out = nullptr);
double loss(const DiagSsmParams& params, const automata::Sequence& tokens, int target);
Eigen::Index predict(const DiagSsmParams& params, const automata::Sequence& tokens);

}  // namespace ssmfsa::diag
