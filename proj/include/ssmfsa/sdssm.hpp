#pragma once

#include "ssmfsa/automata.hpp"
#include "ssmfsa/numkit/ops.hpp"
#include "ssmfsa/numkit/tensor.hpp"
#include "ssmfsa/rng.hpp"
#include "ssmfsa/scan.hpp"

#include <string>
#include <vector>

namespace ssmfsa::sdssm {

using num::Matrix;
using num::Vector;

enum class ReadoutKind { Linear, Mlp };

ReadoutKind parse_readout(std::string_view name);
std::string readout_name(ReadoutKind kind);

struct SdSsmConfig {
  int alphabet_size = 2;
  int n = 16;  // state size
  int d = 16;  // embedding size
  int k = 4;   // dictionary size
  double p = 1.2;
  bool use_B = true;
  ReadoutKind readout = ReadoutKind::Linear;
  int mlp_hidden = 0;  // 0 means n
  int label_space = 2;
  int max_train_len = 40;
  num::ColumnNormKind opnorm = num::ColumnNormKind::Unit;

  /// Throws UsageError on k < 1, p outside [1, 1.5], mlp_hidden != n, etc.
  void validate() const;
  int hidden() const { return mlp_hidden > 0 ? mlp_hidden : n; }
};

/// Trainable tensors of the single-layer model
///   A(u) = OpNorm(Σ_i softmax(S u)[i] A_i),  x_t = A(u_t) x_{t-1} + B u_t,
///   y = C · LayerNorm(x_T)   (or the ReLU MLP readout).
/// All tensors live in one ParamStore so the optimizer, the gradient checker
/// and serialization can treat them generically. Gradients use the same
/// layout, so the slot accessors work on either.
class SdSsmParams {
 public:
  explicit SdSsmParams(const SdSsmConfig& config);

  const SdSsmConfig& config() const { return config_; }
  num::ParamStore& store() { return store_; }
  const num::ParamStore& store() const { return store_; }

  // Slot indices into store() (and into any GradStore of the same layout).
  struct Slots {
    std::size_t embed, selector, dict0, B, ln_gain, ln_bias, C, W1, b1, W2, b2, x0;
  };
  const Slots& slots() const { return slots_; }

  const Matrix& embed() const { return store_.at(slots_.embed); }  // |Σ| x d
  const Matrix& selector() const { return store_.at(slots_.selector); }  // k x d
  const Matrix& dict(int i) const { return store_.at(slots_.dict0 + i); }  // n x n
  Matrix& dict(int i) { return store_.at(slots_.dict0 + i); }
  const Matrix& B() const { return store_.at(slots_.B); }  // n x d
  const Matrix& x0() const { return store_.at(slots_.x0); }  // n x 1

 private:
  SdSsmConfig config_;
  num::ParamStore store_;
  Slots slots_{};
};

/// Gaussian init: embed std 1, S / readout std 1/sqrt(fan_in), A_i = I + noise
/// (std 0.1/sqrt(n)), B = 0, LayerNorm gain 1 / bias 0, x0 std 1/sqrt(n).
SdSsmParams init(const SdSsmConfig& config, Rng& rng);

/// One generated transition and what its backward pass needs.
struct GeneratedTransition {
  Vector weights;  // softmax(S u), k entries
  Matrix mixed;    // Σ_i w_i A_i
  num::ColumnNormCache norm_cache;
  Matrix A;  // OpNorm(mixed)
};

GeneratedTransition generate_transition(const SdSsmParams& params, const Vector& u);

/// A(u_t) for every token, in order.
std::vector<Matrix> generate_transitions(const SdSsmParams& params, const automata::Sequence& tokens);

/// PerSymbol generates one transition per distinct symbol and reuses it (the
/// inputs are discrete, so this is exact). PerToken generates one per time
/// step, as a continuous-input model would.
enum class Sharing { PerSymbol, PerToken };

struct RunOptions {
  scan::Mode mode = scan::Mode::Sequential;
  scan::ScanOptions scan{};
  Sharing sharing = Sharing::PerSymbol;
  /// Workers for the time-parallel parts outside the scan.
  std::size_t workers() const { return mode == scan::Mode::Parallel ? scan.workers : 1; }
};

struct RecurrenceTrace {
  automata::Sequence tokens;
  std::vector<automata::Symbol> slot_symbol;    // symbol each generated slot came from
  std::vector<std::size_t> slot_of_token;       // token t -> generated slot
  std::vector<GeneratedTransition> transitions;  // per slot
  std::vector<Vector> b_terms;                  // per slot, B u (use_B only)
  std::vector<Vector> states;                   // x_0..x_T
};

/// Generates transitions and runs the recurrence from x0.
/// Throws NonFiniteError if a state is not finite.
RecurrenceTrace run_recurrence(const SdSsmParams& params, const automata::Sequence& tokens, const Vector& x0,
                               const RunOptions& options = {});

/// Backpropagates dL/dx_T through the recurrence and the transition
/// generator, accumulating into grads. Returns dL/dx0.
Vector backward_recurrence(const SdSsmParams& params, const RecurrenceTrace& trace, const Vector& dxT,
                           num::GradStore& grads, const RunOptions& options = {});

struct ReadoutCache {
  num::LayerNormCache ln;
  Vector normalized_out;  // LayerNorm output
  Vector hidden_pre;      // MLP only
  Vector hidden;          // MLP only
};

Vector readout(const SdSsmParams& params, const Vector& xT, ReadoutCache* cache = nullptr);
/// Returns dL/dx_T.
Vector backward_readout(const SdSsmParams& params, const ReadoutCache& cache, const Vector& dlogits,
                        num::GradStore& grads);

struct ForwardResult {
  Vector logits;
  RecurrenceTrace trace;
  ReadoutCache readout;
};

/// Logits at the final step. Throws UsageError on an empty sequence.
ForwardResult forward(const SdSsmParams& params, const automata::Sequence& tokens, const RunOptions& options = {});

struct LossResult {
  double loss = 0.0;
  Eigen::Index predicted = 0;
};

/// Cross-entropy at the final step; gradients of every tensor are added to
/// `grads` (learned x0 included).
LossResult backward(const SdSsmParams& params, const ForwardResult& fwd, int target, num::GradStore& grads,
                    const RunOptions& options = {});

/// forward + backward into a fresh GradStore.
num::GradStore gradients(const SdSsmParams& params, const automata::Sequence& tokens, int target,
                         const RunOptions& options = {}, LossResult* loss = nullptr);

double loss(const SdSsmParams& params, const automata::Sequence& tokens, int target,
            const RunOptions& options = {});

Eigen::Index predict(const SdSsmParams& params, const automata::Sequence& tokens);

}  // namespace ssmfsa::sdssm
