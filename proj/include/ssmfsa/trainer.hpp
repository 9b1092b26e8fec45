#pragma once

#include "ssmfsa/automata.hpp"
#include "ssmfsa/diag_ssm.hpp"
#include "ssmfsa/fsa_compiler.hpp"
#include "ssmfsa/numkit/tensor.hpp"
#include "ssmfsa/sdssm.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ssmfsa::trainer {

using automata::TaskSpec;
using num::Matrix;
using num::Vector;

enum class ModelKind { SdSsm, Diag };

ModelKind parse_model_kind(std::string_view name);
std::string model_kind_name(ModelKind kind);

inline constexpr int kLengthEfficiencyDim = 512;

/// SD-SSM core with the random-initial-state head:
///   x0 = init_proj · X[q0],  logits = X (M x_T).
/// X is frozen; init_proj and M are trained. The core's own readout and x0
/// are unused.
struct LengthEfficiencyModel {
  sdssm::SdSsmParams core;
  Matrix X;              // |Q| x 512, entries N(0, std 1/sqrt(512))
  num::ParamStore head;  // "init_proj" (n x 512), "M" (512 x n)

  const Matrix& init_proj() const { return head.at(0); }
  const Matrix& M() const { return head.at(1); }
};

LengthEfficiencyModel make_length_efficiency_model(const sdssm::SdSsmConfig& config, int num_states, Rng& rng);

using Model = std::variant<compiler::CompiledSelectiveSsm, sdssm::SdSsmParams, diag::DiagSsmParams,
                           LengthEfficiencyModel>;

struct TrainConfig {
  TaskSpec task;
  ModelKind model_kind = ModelKind::SdSsm;
  sdssm::SdSsmConfig sdssm{};
  diag::DiagSsmConfig diag{};
  int max_train_len = 40;
  int batch_size = 64;
  std::size_t steps = 20000;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::vector<int> eval_lengths;  // empty means the default grid
  int eval_samples_per_length = 256;
  bool length_efficiency_mode = false;
  std::size_t validate_every = 500;
  int validation_max_len = 40;
  int validation_samples_per_length = 64;
  std::size_t workers = 1;

  /// Fills alphabet/label sizes from the task and checks ranges.
  /// Throws UsageError.
  void finalize();
};

struct LogRow {
  std::size_t step = 0;
  double loss = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<LogRow> log;
  std::optional<std::size_t> best_step;  // length-efficiency checkpoint
  std::optional<double> best_validation;
};

using ProgressFn = std::function<void(std::size_t step, double loss)>;

/// Adam on cross-entropy at the final step. Each step draws batch_size
/// sequences with length uniform in [1, L]. Deterministic given the config.
/// Throws DivergenceError with the step index on a non-finite loss.
TrainResult train(const TrainConfig& config, const ProgressFn& progress = {});

struct EvalCurve {
  std::map<int, double> accuracy;  // length -> accuracy in [0, 1]

  double max_acc() const;
  double avg_acc() const;  // uniform mean over evaluated lengths
};

/// 1..40 followed by every 10th length up to max_length (and max_length itself).
std::vector<int> default_eval_lengths(int max_length = 500);

/// Fraction of samples per length where the model's prediction equals the
/// oracle label. Never mutates the model. Throws UsageError on
/// samples_per_length < 1 or a length < 1.
EvalCurve evaluate_lengths(const Model& model, const TaskSpec& task, const std::vector<int>& lengths,
                           int samples_per_length, std::uint64_t seed, std::size_t workers = 1);

struct Summary {
  double in_domain_acc = 0.0;
  std::optional<double> ood_acc;  // none if no length exceeds split_at
  double max_acc = 0.0;
  double avg_acc = 0.0;
};

/// in-domain = lengths <= split_at, OOD = lengths > split_at.
/// Throws UsageError on an empty curve or if no length is <= split_at.
Summary compute_summary(const EvalCurve& curve, int split_at);

/// Predicted label for one sequence; needs the automaton for compiled models
/// and a start state for length-efficiency models.
int predict_label(const Model& model, const TaskSpec& task, const automata::Semiautomaton& aut,
                  const automata::Sequence& seq, automata::State q0);

struct AblationCell {
  TaskSpec task;
  std::string variant;  // "B=0/linear", ..., or "sdssm"
  bool use_B = false;
  sdssm::ReadoutKind readout = sdssm::ReadoutKind::Linear;
  double lr = 0.0;
  std::vector<double> seed_avg_acc;
  double best_avg_acc = 0.0;
};

struct AblationOptions {
  std::vector<TaskSpec> tasks;  // default c2xcn(30), dn(30)
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t steps = 50000;
  int batch_size = 64;
  int max_train_len = 90;
  int eval_max_length = 600;
  int eval_samples_per_length = 256;
  int n = 64;
  bool include_sdssm_reference = true;
  bool only_b0_linear = false;
  std::size_t workers = 1;
};

/// Learning rate used for a diag variant on c2xcn / dn.
double table4_learning_rate(const TaskSpec& task, bool use_B, sdssm::ReadoutKind readout);

/// Trains every (task, B, readout) diag variant for every seed, evaluates up
/// to eval_max_length and keeps the best seed per cell.
std::vector<AblationCell> run_table4_ablation(const AblationOptions& options,
                                              const std::function<void(const std::string&)>& log = {});

}  // namespace ssmfsa::trainer
