#include "ssmfsa/trainer.hpp"

#include "ssmfsa/error.hpp"
#include "ssmfsa/numkit/adam.hpp"
#include "ssmfsa/numkit/ops.hpp"
#include "ssmfsa/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ssmfsa::trainer {

using automata::Semiautomaton;
using automata::Sequence;
using automata::State;

ModelKind parse_model_kind(std::string_view name) {
  if (name == "sdssm") return ModelKind::SdSsm;
  if (name == "diag") return ModelKind::Diag;
  throw UsageError("unknown model kind '" + std::string(name) + "' (sdssm | diag)");
}

std::string model_kind_name(ModelKind kind) { return kind == ModelKind::SdSsm ? "sdssm" : "diag"; }

LengthEfficiencyModel make_length_efficiency_model(const sdssm::SdSsmConfig& config, int num_states, Rng& rng) {
  LengthEfficiencyModel m{sdssm::init(config, rng), Matrix(num_states, kLengthEfficiencyDim), {}};
  const double x_std = 1.0 / std::sqrt(static_cast<double>(kLengthEfficiencyDim));
  for (Eigen::Index j = 0; j < m.X.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.X.rows(); ++i) m.X(i, j) = rng.normal(0.0, x_std);
  }
  const int n = config.n;
  Matrix proj(n, kLengthEfficiencyDim);
  Matrix M(kLengthEfficiencyDim, n);
  for (Eigen::Index j = 0; j < proj.cols(); ++j) {
    for (Eigen::Index i = 0; i < proj.rows(); ++i) proj(i, j) = rng.normal(0.0, 1.0);
  }
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    for (Eigen::Index i = 0; i < M.rows(); ++i) M(i, j) = rng.normal(0.0, 1.0 / std::sqrt(n));
  }
  // X rows have unit norm, so init_proj · X[q] has entries of std 1.
  proj /= std::sqrt(static_cast<double>(n));
  m.head.add("init_proj", std::move(proj));
  m.head.add("M", std::move(M));
  return m;
}

void TrainConfig::finalize() {
  if (max_train_len < 1) throw UsageError("train: max_train_len must be >= 1");
  if (batch_size < 1) throw UsageError("train: batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw UsageError("train: lr must be positive");
  if (eval_samples_per_length < 1) throw UsageError("train: eval_samples_per_length must be >= 1");
  if (length_efficiency_mode && model_kind != ModelKind::SdSsm) {
    throw UsageError("train: the length-efficiency protocol uses the sdssm model");
  }
  if (length_efficiency_mode && (validate_every < 1 || validation_max_len < 1)) {
    throw UsageError("train: validation settings must be positive");
  }
  const auto aut = automata::build_task(task);
  const int labels = length_efficiency_mode ? aut.num_states() : task.label_space();
  sdssm.alphabet_size = diag.alphabet_size = aut.alphabet_size();
  sdssm.label_space = diag.label_space = labels;
  sdssm.max_train_len = diag.max_train_len = max_train_len;
  if (model_kind == ModelKind::SdSsm) {
    sdssm.validate();
  } else {
    diag.validate();
  }
  for (int len : eval_lengths) {
    if (len < 1) throw UsageError("train: eval lengths must be >= 1");
  }
}

namespace {

struct Sample {
  Sequence seq;
  State q0 = 0;
  int target = 0;
};

Sample draw_sample(const TaskSpec& task, const Semiautomaton& aut, int length, bool random_start, Rng& rng) {
  Sample s;
  s.seq = automata::sample_sequence(task, static_cast<std::size_t>(length), rng);
  if (random_start) {
    s.q0 = static_cast<State>(rng.uniform_int(static_cast<std::uint64_t>(aut.num_states())));
    s.target = automata::run_oracle(aut, s.q0, s.seq);
  } else {
    s.q0 = aut.initial_state();
    s.target = automata::label_of_state(task, aut, automata::run_oracle(aut, s.q0, s.seq));
  }
  return s;
}

struct LeForward {
  Vector x0;
  sdssm::RecurrenceTrace trace;
  Vector z;  // M x_T
  Vector logits;
};

LeForward le_forward(const LengthEfficiencyModel& m, const Sequence& seq, State q0) {
  LeForward f;
  f.x0 = m.init_proj() * m.X.row(q0).transpose();
  f.trace = sdssm::run_recurrence(m.core, seq, f.x0);
  f.z = m.M() * f.trace.states.back();
  f.logits = m.X * f.z;
  return f;
}

/// Parameters and gradients of all trainable tensors of a model, in one list,
/// so one Adam serves every model kind.
struct Grads {
  num::GradStore primary;
  num::GradStore head;  // length-efficiency only
};

Grads zero_grads(const Model& model) {
  return std::visit(
      [](const auto& m) -> Grads {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LengthEfficiencyModel>) {
          return {m.core.store().zeros_like(), m.head.zeros_like()};
        } else if constexpr (std::is_same_v<T, compiler::CompiledSelectiveSsm>) {
          throw UsageError("compiled models are not trainable");
        } else {
          return {m.store().zeros_like(), {}};
        }
      },
      model);
}

double sample_gradient(const Model& model, const Sample& s, Grads& g) {
  if (const auto* p = std::get_if<sdssm::SdSsmParams>(&model)) {
    const auto fwd = sdssm::forward(*p, s.seq);
    return sdssm::backward(*p, fwd, s.target, g.primary).loss;
  }
  if (const auto* p = std::get_if<diag::DiagSsmParams>(&model)) {
    const auto fwd = diag::forward(*p, s.seq);
    return diag::backward(*p, fwd, s.target, g.primary);
  }
  const auto& m = std::get<LengthEfficiencyModel>(model);
  const auto f = le_forward(m, s.seq, s.q0);
  const auto ce = num::cross_entropy_from_logits(f.logits, s.target);
  const Vector dz = m.X.transpose() * ce.grad;
  g.head.at(1).noalias() += dz * f.trace.states.back().transpose();
  const Vector dxT = m.M().transpose() * dz;
  const Vector dx0 = sdssm::backward_recurrence(m.core, f.trace, dxT, g.primary);
  g.head.at(0).noalias() += dx0 * m.X.row(s.q0);
  return ce.loss;
}

num::ParamStore& primary_store(Model& model) {
  if (auto* p = std::get_if<sdssm::SdSsmParams>(&model)) return p->store();
  if (auto* p = std::get_if<diag::DiagSsmParams>(&model)) return p->store();
  return std::get<LengthEfficiencyModel>(model).core.store();
}

Model initial_model(const TrainConfig& config, const Semiautomaton& aut, Rng& rng) {
  if (config.length_efficiency_mode) return make_length_efficiency_model(config.sdssm, aut.num_states(), rng);
  if (config.model_kind == ModelKind::SdSsm) return sdssm::init(config.sdssm, rng);
  return diag::init(config.diag, rng);
}

}  // namespace

TrainResult train(const TrainConfig& raw_config, const ProgressFn& progress) {
  TrainConfig config = raw_config;
  config.finalize();
  const auto aut = automata::build_task(config.task);
  Rng root(config.seed);
  Rng init_rng(root.fork_seed());
  Rng data_rng(root.fork_seed());
  const std::uint64_t validation_seed = root.fork_seed();

  TrainResult result{initial_model(config, aut, init_rng), {}, std::nullopt, std::nullopt};
  Model& model = result.model;
  num::AdamConfig adam_config;
  adam_config.lr = config.lr;
  num::Adam adam(primary_store(model), adam_config);
  std::optional<num::Adam> head_adam;
  if (auto* le = std::get_if<LengthEfficiencyModel>(&model)) head_adam.emplace(le->head, adam_config);

  std::optional<Model> best;
  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::vector<Sample> samples(batch);
  std::vector<Grads> per_item;
  std::vector<double> losses(batch);
  result.log.reserve(config.steps);

  for (std::size_t step = 1; step <= config.steps; ++step) {
    for (auto& s : samples) {
      const int length = static_cast<int>(data_rng.uniform_range(1, config.max_train_len));
      s = draw_sample(config.task, aut, length, config.length_efficiency_mode, data_rng);
    }
    per_item.assign(batch, Grads{});
    try {
      parallel_for(batch, config.workers, [&](std::size_t i) {
        per_item[i] = zero_grads(model);
        losses[i] = sample_gradient(model, samples[i], per_item[i]);
      });
    } catch (const NonFiniteError& e) {
      throw DivergenceError(step, "training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    Grads total = std::move(per_item[0]);
    for (std::size_t i = 1; i < batch; ++i) {
      total.primary.add_scaled(per_item[i].primary, 1.0);
      if (head_adam) total.head.add_scaled(per_item[i].head, 1.0);
    }
    const double inv = 1.0 / static_cast<double>(batch);
    total.primary.scale(inv);
    const double mean_loss = std::accumulate(losses.begin(), losses.end(), 0.0) * inv;
    if (!std::isfinite(mean_loss) || !std::isfinite(total.primary.max_abs())) {
      throw DivergenceError(step, "training diverged at step " + std::to_string(step) + ": non-finite loss");
    }
    adam.step(primary_store(model), total.primary);
    if (head_adam) {
      total.head.scale(inv);
      head_adam->step(std::get<LengthEfficiencyModel>(model).head, total.head);
    }
    result.log.push_back({step, mean_loss});
    if (progress) progress(step, mean_loss);

    if (config.length_efficiency_mode && (step % config.validate_every == 0 || step == config.steps)) {
      std::vector<int> lengths(static_cast<std::size_t>(config.validation_max_len));
      std::iota(lengths.begin(), lengths.end(), 1);
      const auto curve = evaluate_lengths(model, config.task, lengths, config.validation_samples_per_length,
                                          validation_seed, config.workers);
      const double acc = curve.avg_acc();
      if (!result.best_validation || acc > *result.best_validation) {
        result.best_validation = acc;
        result.best_step = step;
        best = model;
      }
    }
  }
  if (best) result.model = std::move(*best);
  return result;
}

double EvalCurve::max_acc() const {
  if (accuracy.empty()) throw UsageError("empty evaluation curve");
  double best = 0.0;
  for (const auto& [len, acc] : accuracy) best = std::max(best, acc);
  return best;
}

double EvalCurve::avg_acc() const {
  if (accuracy.empty()) throw UsageError("empty evaluation curve");
  double sum = 0.0;
  for (const auto& [len, acc] : accuracy) sum += acc;
  return sum / static_cast<double>(accuracy.size());
}

std::vector<int> default_eval_lengths(int max_length) {
  std::vector<int> lengths;
  for (int l = 1; l <= std::min(40, max_length); ++l) lengths.push_back(l);
  for (int l = 50; l <= max_length; l += 10) lengths.push_back(l);
  if (lengths.back() != max_length && max_length > 40) lengths.push_back(max_length);
  return lengths;
}

int predict_label(const Model& model, const TaskSpec& task, const Semiautomaton& aut, const Sequence& seq,
                  State q0) {
  if (const auto* c = std::get_if<compiler::CompiledSelectiveSsm>(&model)) {
    if (q0 != aut.initial_state()) throw UsageError("compiled models start from the initial state");
    return automata::label_of_state(task, aut, compiler::emulate(*c, seq));
  }
  if (const auto* p = std::get_if<sdssm::SdSsmParams>(&model)) return static_cast<int>(sdssm::predict(*p, seq));
  if (const auto* p = std::get_if<diag::DiagSsmParams>(&model)) return static_cast<int>(diag::predict(*p, seq));
  return static_cast<int>(num::argmax(le_forward(std::get<LengthEfficiencyModel>(model), seq, q0).logits));
}

EvalCurve evaluate_lengths(const Model& model, const TaskSpec& task, const std::vector<int>& lengths,
                           int samples_per_length, std::uint64_t seed, std::size_t workers) {
  if (samples_per_length < 1) throw UsageError("eval: samples_per_length must be >= 1");
  const auto aut = automata::build_task(task);
  const bool random_start = std::holds_alternative<LengthEfficiencyModel>(model);
  EvalCurve curve;
  for (int len : lengths) {
    if (len < 1) throw UsageError("eval: lengths must be >= 1");
    // Each length gets its own stream so adding lengths leaves the others unchanged.
    Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(len)));
    std::vector<Sample> samples(static_cast<std::size_t>(samples_per_length));
    for (auto& s : samples) s = draw_sample(task, aut, len, random_start, rng);
    std::vector<char> hit(samples.size(), 0);
    parallel_for(samples.size(), workers, [&](std::size_t i) {
      hit[i] = predict_label(model, task, aut, samples[i].seq, samples[i].q0) == samples[i].target;
    });
    const auto correct = std::count(hit.begin(), hit.end(), 1);
    curve.accuracy[len] = static_cast<double>(correct) / static_cast<double>(samples.size());
  }
  return curve;
}

Summary compute_summary(const EvalCurve& curve, int split_at) {
  if (curve.accuracy.empty()) throw UsageError("summary: empty curve");
  double in_sum = 0.0, out_sum = 0.0;
  std::size_t in_count = 0, out_count = 0;
  for (const auto& [len, acc] : curve.accuracy) {
    if (len <= split_at) {
      in_sum += acc;
      ++in_count;
    } else {
      out_sum += acc;
      ++out_count;
    }
  }
  if (in_count == 0) throw UsageError("summary: split_at is below every evaluated length");
  Summary s;
  s.in_domain_acc = in_sum / static_cast<double>(in_count);
  if (out_count > 0) s.ood_acc = out_sum / static_cast<double>(out_count);
  s.max_acc = curve.max_acc();
  s.avg_acc = curve.avg_acc();
  return s;
}

double table4_learning_rate(const TaskSpec& task, bool use_B, sdssm::ReadoutKind readout) {
  const bool linear = readout == sdssm::ReadoutKind::Linear;
  if (task.kind == automata::TaskKind::C2xCn) {
    return (use_B && !linear) ? 1e-2 : 1e-3;
  }
  if (task.kind == automata::TaskKind::Dn) {
    if (!use_B) return 1e-4;
    return linear ? 5e-4 : 5e-3;
  }
  throw UsageError("table4: task must be c2xcn or dn");
}

std::vector<AblationCell> run_table4_ablation(const AblationOptions& raw_options,
                                              const std::function<void(const std::string&)>& log) {
  AblationOptions options = raw_options;
  if (options.tasks.empty()) {
    options.tasks = {automata::parse_task("c2xcn", 30), automata::parse_task("dn", 30)};
  }
  if (options.seeds.empty()) throw UsageError("table4: at least one seed is required");
  const auto lengths = default_eval_lengths(options.eval_max_length);

  std::vector<AblationCell> cells;
  for (const auto& task : options.tasks) {
    for (bool use_B : {false, true}) {
      for (auto readout : {sdssm::ReadoutKind::Linear, sdssm::ReadoutKind::Mlp}) {
        if (options.only_b0_linear && (use_B || readout != sdssm::ReadoutKind::Linear)) continue;
        AblationCell cell;
        cell.task = task;
        cell.use_B = use_B;
        cell.readout = readout;
        cell.variant = std::string(use_B ? "B!=0" : "B=0") + "/" + sdssm::readout_name(readout);
        cell.lr = table4_learning_rate(task, use_B, readout);
        cells.push_back(cell);
      }
    }
    if (options.include_sdssm_reference) {
      AblationCell cell;
      cell.task = task;
      cell.variant = "sdssm";
      cell.use_B = true;
      cell.lr = 1e-4;
      cells.push_back(cell);
    }
  }

  for (auto& cell : cells) {
    for (auto seed : options.seeds) {
      TrainConfig config;
      config.task = cell.task;
      config.steps = options.steps;
      config.batch_size = options.batch_size;
      config.max_train_len = options.max_train_len;
      config.lr = cell.lr;
      config.seed = seed;
      config.workers = options.workers;
      if (cell.variant == "sdssm") {
        config.model_kind = ModelKind::SdSsm;
        config.sdssm.n = options.n;
        config.sdssm.d = options.n;
        config.sdssm.k = 6;
      } else {
        config.model_kind = ModelKind::Diag;
        config.diag.n = options.n;
        config.diag.d = options.n;
        config.diag.use_B = cell.use_B;
        config.diag.readout = cell.readout;
      }
      const auto trained = train(config);
      const auto curve = evaluate_lengths(trained.model, cell.task, lengths, options.eval_samples_per_length,
                                          seed + 1000, options.workers);
      const double avg = curve.avg_acc();
      cell.seed_avg_acc.push_back(avg);
      cell.best_avg_acc = std::max(cell.best_avg_acc, avg);
      if (log) {
        std::ostringstream msg;
        msg << cell.task.display_name() << " " << cell.variant << " seed " << seed << " avg_acc " << avg;
        log(msg.str());
      }
    }
  }
  return cells;
}

}  // namespace ssmfsa::trainer
