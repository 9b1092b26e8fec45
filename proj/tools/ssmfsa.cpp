// ssmfsa: compile, verify, train and evaluate automaton-emulating SSMs.

#include "ssmfsa/checks.hpp"
#include "ssmfsa/error.hpp"
#include "ssmfsa/io.hpp"
#include "ssmfsa/parallel.hpp"
#include "ssmfsa/scan_bench.hpp"
#include "ssmfsa/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <optional>
#include <string>

using namespace ssmfsa;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerification = 2;
constexpr int kExitDivergence = 3;

automata::TaskSpec task_from(const std::string& name, int size) {
  return automata::parse_task(name, size > 0 ? std::optional<int>(size) : std::nullopt);
}

json task_json(const automata::TaskSpec& t) { return t.display_name(); }

json curve_json(const trainer::EvalCurve& curve, int split_at) {
  const auto s = trainer::compute_summary(curve, split_at);
  json j{{"avg_acc", s.avg_acc}, {"max_acc", s.max_acc}, {"in_domain_acc", s.in_domain_acc}};
  j["ood_acc"] = s.ood_acc ? json(*s.ood_acc) : json(nullptr);
  double min_acc = 1.0;
  for (const auto& [len, acc] : curve.accuracy) min_acc = std::min(min_acc, acc);
  j["min_acc"] = min_acc;
  return j;
}

int training_length(const trainer::Model& model) {
  if (const auto* p = std::get_if<sdssm::SdSsmParams>(&model)) return p->config().max_train_len;
  if (const auto* p = std::get_if<diag::DiagSsmParams>(&model)) return p->config().max_train_len;
  if (const auto* p = std::get_if<trainer::LengthEfficiencyModel>(&model)) return p->core.config().max_train_len;
  return 0;
}

void write_eval_artifacts(const io::fs::path& dir, const trainer::EvalCurve& curve, int train_len,
                          const std::string& title) {
  io::write_file_atomic(dir / "eval.csv", io::curve_csv(curve));
  io::write_file_atomic(dir / "eval.svg", io::curve_svg(curve, train_len, title));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emulate finite-state automata with selective state-space models"};
  app.require_subcommand(1);
  app.fallthrough();
  std::size_t workers = default_workers();
  app.add_option("--workers", workers, "Worker threads (default: SSMFSA_WORKERS or hardware concurrency)")
      ->check(CLI::PositiveNumber);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Random seed");
  std::string out_root = "runs";
  app.add_option("--out-root", out_root, "Directory under which run directories are created");

  std::string task_name = "parity";
  int task_size = 0;
  auto add_task = [&](CLI::App* cmd) {
    cmd->add_option("--task", task_name, "parity | even_pairs | cycle | arithmetic | c2xcn | dn | a5");
    cmd->add_option("--n,--size", task_size, "Group size for c2xcn / dn");
  };

  int exit_code = kExitOk;

  // compile
  auto* compile = app.add_subcommand("compile", "Compile an automaton into selective-SSM weights");
  add_task(compile);
  std::string encoding = "one_hot";
  int state_dim = 0;
  std::string model_out;
  compile->add_option("--encoding", encoding, "one_hot | random_orthogonal");
  compile->add_option("--dim", state_dim, "State size for random_orthogonal (default |Q|)");
  compile->add_option("--out", model_out, "Model file path (default: <run dir>/model.bin)");
  compile->callback([&] {
    const auto task = task_from(task_name, task_size);
    const auto aut = automata::build_task(task);
    const auto kind = compiler::parse_encoding(encoding);
    Rng rng(seed);
    const Eigen::Index n = state_dim > 0 ? state_dim : aut.num_states();
    const auto compiled = compiler::compile(aut, kind, n, rng);
    const auto check = checks::verify_compiled(compiled, task, 100, 500, seed + 1);
    json report{{"task", task_json(task)}, {"encoding", encoding}, {"states", aut.num_states()}, {"dim", n},
                {"checked", check.sequences}, {"mismatches", check.mismatches}};
    if (check.mismatches > 0) {
      report["verification"] = "fail";
      std::cout << report.dump(2) << '\n';
      throw VerificationError("compiled model disagrees with the oracle; nothing written");
    }
    const io::fs::path path = model_out.empty() ? io::make_run_directory(out_root, seed) / "model.bin" : io::fs::path(model_out);
    io::save_model(path, {compiled, task});
    report["verification"] = "pass";
    report["model"] = path.string();
    std::cout << report.dump(2) << '\n';
  });

  // verify
  auto* verify = app.add_subcommand("verify", "Check compiled emulation against the oracle");
  std::string verify_task = "all";
  int verify_size = 0;
  std::size_t verify_sequences = 1000;
  std::size_t verify_max_len = 500;
  std::string verify_model;
  verify->add_option("--task", verify_task, "Task name or 'all'");
  verify->add_option("--n,--size", verify_size, "Group size for c2xcn / dn (all: 4)");
  verify->add_option("--sequences", verify_sequences, "Random sequences per task and encoding");
  verify->add_option("--max-length", verify_max_len, "Maximum sequence length");
  verify->add_option("--model", verify_model, "Verify a compiled model file instead");
  verify->callback([&] {
    std::vector<checks::CompileVerification> results;
    if (!verify_model.empty()) {
      const auto file = io::load_model(verify_model);
      const auto* c = std::get_if<compiler::CompiledSelectiveSsm>(&file.model);
      if (!c) throw UsageError("verify --model expects a compiled model");
      results.push_back(checks::verify_compiled(*c, file.task, verify_sequences, verify_max_len, seed));
    } else {
      std::vector<automata::TaskSpec> tasks;
      if (verify_task == "all") {
        tasks = automata::all_tasks(verify_size > 0 ? verify_size : 4);
      } else {
        tasks.push_back(task_from(verify_task, verify_size));
      }
      for (const auto& task : tasks) {
        const auto aut = automata::build_task(task);
        for (auto kind : {compiler::EncodingKind::OneHot, compiler::EncodingKind::RandomOrthogonal}) {
          Rng rng(seed);
          const auto compiled = compiler::compile(aut, kind, aut.num_states(), rng);
          auto r = checks::verify_compiled(compiled, task, verify_sequences, verify_max_len, seed + 1);
          r.encoding = kind;
          results.push_back(std::move(r));
        }
      }
    }
    json report = json::array();
    bool ok = true;
    for (const auto& r : results) {
      report.push_back({{"task", task_json(r.task)}, {"encoding", compiler::encoding_name(r.encoding)},
                        {"sequences", r.sequences}, {"mismatches", r.mismatches},
                        {"verdict", r.mismatches == 0 ? "pass" : "fail"}});
      ok = ok && r.mismatches == 0;
    }
    std::cout << report.dump(2) << '\n';
    if (!ok) exit_code = kExitVerification;
  });

  // train
  auto* train = app.add_subcommand("train", "Train a model from a config file");
  std::string config_path;
  bool print_defaults = false;
  train->add_option("config", config_path, "Run config file");
  train->add_flag("--print-default-config", print_defaults, "Print the default config with documentation and exit");
  train->callback([&] {
    if (print_defaults) {
      std::cout << io::default_run_config_text();
      return;
    }
    if (config_path.empty()) throw UsageError("train: a config file is required");
    auto cfg = io::load_run_config(config_path);
    if (app.get_option("--seed")->count() > 0) cfg.train.seed = seed;
    if (app.get_option("--workers")->count() > 0) cfg.train.workers = workers;
    const auto dir = io::make_run_directory(out_root, cfg.train.seed);
    std::cerr << "run directory " << dir.string() << '\n';
    const auto result = trainer::train(cfg.train, [&](std::size_t step, double loss) {
      if (step % 1000 == 0) std::cerr << "step " << step << " loss " << loss << '\n';
    });
    io::save_model(dir / "model.bin", {result.model, cfg.train.task});
    io::write_file_atomic(dir / "train_log.csv", io::training_log_csv(result.log));
    const auto lengths =
        cfg.eval.lengths.empty() ? trainer::default_eval_lengths(cfg.eval.max_length) : cfg.eval.lengths;
    const auto curve = trainer::evaluate_lengths(result.model, cfg.train.task, lengths, cfg.eval.samples_per_length,
                                                 cfg.train.seed + 1, cfg.train.workers);
    write_eval_artifacts(dir, curve, cfg.train.max_train_len, cfg.train.task.display_name());
    json report{{"task", task_json(cfg.train.task)}, {"model_kind", trainer::model_kind_name(cfg.train.model_kind)},
                {"seed", cfg.train.seed}, {"steps", cfg.train.steps}, {"lr", cfg.train.lr},
                {"batch_size", cfg.train.batch_size}, {"max_train_len", cfg.train.max_train_len},
                {"final_loss", result.log.empty() ? json(nullptr) : json(result.log.back().loss)},
                {"summary", curve_json(curve, cfg.train.max_train_len)}, {"run_dir", dir.string()}};
    if (result.best_step) report["best_step"] = *result.best_step;
    io::write_file_atomic(dir / "report.json", report.dump(2));
    std::cout << report.dump(2) << '\n';
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a model file over sequence lengths");
  std::string eval_model;
  std::string eval_lengths;
  int eval_max_length = 500;
  int eval_samples = 256;
  eval->add_option("model", eval_model, "Model file")->required();
  eval->add_option("--lengths", eval_lengths, "Comma separated lengths (default grid otherwise)");
  eval->add_option("--max-length", eval_max_length, "Largest length of the default grid");
  eval->add_option("--samples", eval_samples, "Samples per length");
  eval->callback([&] {
    if (eval_samples < 1) throw UsageError("eval: --samples must be >= 1");
    const auto file = io::load_model(eval_model);
    const auto lengths = eval_lengths.empty() ? trainer::default_eval_lengths(eval_max_length) : io::parse_int_list(eval_lengths);
    const auto curve = trainer::evaluate_lengths(file.model, file.task, lengths, eval_samples, seed, workers);
    const auto dir = io::make_run_directory(out_root, seed);
    const int train_len = training_length(file.model);
    write_eval_artifacts(dir, curve, train_len, file.task.display_name());
    json report{{"task", task_json(file.task)}, {"kind", io::model_kind_tag(file.model)},
                {"summary", curve_json(curve, train_len > 0 ? train_len : curve.accuracy.rbegin()->first)},
                {"run_dir", dir.string()}};
    io::write_file_atomic(dir / "report.json", report.dump(2));
    std::cout << report.dump(2) << '\n';
  });

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Commutativity of a task's transformation semigroup");
  add_task(analyze);
  analyze->callback([&] {
    const auto a = checks::analyze_commutativity(task_from(task_name, task_size));
    json report{{"task", task_json(a.task)}, {"commutative", a.automaton.commutative},
                {"compiled_commute", a.compiled.commute}, {"compiled_max_defect", a.compiled.max_defect},
                {"agree", a.agree()}};
    if (a.automaton.witness) {
      const auto aut = automata::build_task(a.task);
      const auto& w = *a.automaton.witness;
      report["witness"] = {{"state", w.state}, {"a", w.a}, {"b", w.b},
                           {"ab", aut.step(aut.step(w.state, w.a), w.b)}, {"ba", aut.step(aut.step(w.state, w.b), w.a)}};
    }
    std::cout << report.dump(2) << '\n';
    if (!a.agree()) exit_code = kExitVerification;
  });

  // prop1
  auto* prop1 = app.add_subcommand("prop1", "Order invariance of diagonal selective systems with b = 0");
  std::size_t prop_trials = 100;
  std::size_t prop_max_len = 200;
  int prop_n = 8;
  int prop_alphabet = 3;
  prop1->add_option("--trials", prop_trials, "Random sequence pairs per system");
  prop1->add_option("--max-length", prop_max_len, "Maximum sequence length");
  prop1->add_option("--dim", prop_n, "State size of the diagonal system");
  prop1->add_option("--alphabet", prop_alphabet, "Number of input symbols");
  prop1->callback([&] {
    const auto s = checks::run_prop1_suite(prop_trials, prop_max_len, prop_n, prop_alphabet, seed);
    auto rep = [](const compiler::OrderInvarianceReport& r) {
      return json{{"invariant", r.invariant}, {"violations", r.violations}, {"max_diff", r.max_diff}};
    };
    json report{{"diagonal_b0", rep(s.diagonal)}, {"dense_d4_control", rep(s.dense_control)},
                {"diagonal_b_nonzero_control", rep(s.affine_control)}, {"verdict", s.pass() ? "pass" : "fail"}};
    std::cout << report.dump(2) << '\n';
    if (!s.pass()) exit_code = kExitVerification;
  });

  // bench-scan
  auto* bench = app.add_subcommand("bench-scan", "Sequential vs parallel forward+backward timing");
  scan::BenchOptions bench_opts;
  std::string bench_lengths = "64,128,256,512";
  bench->add_option("--lengths", bench_lengths, "Comma separated sequence lengths");
  bench->add_option("--dim", bench_opts.n, "State size");
  bench->add_option("--batch", bench_opts.batch, "Batch size");
  bench->add_option("--repeats", bench_opts.repeats, "Timed repeats (median reported)");
  bench->add_option("--warmup", bench_opts.warmup, "Untimed warmup runs");
  bench->add_option("--chunk-size", bench_opts.chunk_size, "Scan chunk length");
  bench->callback([&] {
    bench_opts.lengths = io::parse_int_list(bench_lengths);
    bench_opts.workers = workers;
    bench_opts.seed = seed;
    const auto report = scan::bench(bench_opts);
    const auto dir = io::make_run_directory(out_root, seed);
    io::write_file_atomic(dir / "bench.csv", scan::bench_csv(report));
    io::write_file_atomic(dir / "bench.json", scan::bench_json(report));
    std::cout << scan::bench_csv(report);
    std::cerr << scan::bench_json(report) << '\n';
  });

  // ablate-table4
  auto* ablate = app.add_subcommand("ablate-table4", "Diagonal-SSM variants on c2xcn(30) and dn(30)");
  trainer::AblationOptions ab;
  std::string ab_seeds = "0,1,2";
  int ab_group = 30;
  ablate->add_option("--steps", ab.steps, "Training steps per run");
  ablate->add_option("--seeds", ab_seeds, "Comma separated seeds");
  ablate->add_option("--group-size", ab_group, "n for c2xcn / dn");
  ablate->add_option("--dim", ab.n, "State size");
  ablate->add_option("--batch-size", ab.batch_size, "Batch size");
  ablate->add_option("--train-length", ab.max_train_len, "Maximum training length");
  ablate->add_option("--eval-max-length", ab.eval_max_length, "Largest evaluated length");
  ablate->add_option("--samples", ab.eval_samples_per_length, "Samples per evaluated length");
  ablate->add_flag("--only-b0-linear", ab.only_b0_linear, "Train only the B=0 / linear readout variant");
  ablate->add_flag("!--no-sdssm", ab.include_sdssm_reference, "Skip the SD-SSM reference row");
  ablate->callback([&] {
    ab.workers = workers;
    ab.tasks = {automata::parse_task("c2xcn", ab_group), automata::parse_task("dn", ab_group)};
    ab.seeds.clear();
    for (int s : io::parse_int_list(ab_seeds)) ab.seeds.push_back(static_cast<std::uint64_t>(s));
    const auto cells = trainer::run_table4_ablation(ab, [](const std::string& m) { std::cerr << m << '\n'; });
    json report = json::array();
    for (const auto& c : cells) {
      report.push_back({{"task", task_json(c.task)}, {"variant", c.variant}, {"lr", c.lr},
                        {"seed_avg_acc", c.seed_avg_acc}, {"best_avg_acc", c.best_avg_acc}});
    }
    const auto dir = io::make_run_directory(out_root, seed);
    io::write_file_atomic(dir / "table4.json", report.dump(2));
    std::cout << report.dump(2) << '\n';
  });

  // length-efficiency
  auto* le = app.add_subcommand("length-efficiency", "Train on very short sequences from random start states");
  add_task(le);
  trainer::TrainConfig le_cfg;
  le_cfg.max_train_len = 8;
  le_cfg.steps = 20000;
  le_cfg.lr = 1e-4;
  le_cfg.sdssm.n = 64;
  le_cfg.sdssm.d = 64;
  le_cfg.sdssm.k = 6;
  int le_eval_max = 500;
  int le_samples = 256;
  le->add_option("--train-length", le_cfg.max_train_len, "Maximum training length");
  le->add_option("--steps", le_cfg.steps, "Training steps");
  le->add_option("--lr", le_cfg.lr, "Learning rate");
  le->add_option("--batch-size", le_cfg.batch_size, "Batch size");
  le->add_option("--dim", le_cfg.sdssm.n, "State size");
  le->add_option("--k", le_cfg.sdssm.k, "Dictionary size");
  le->add_option("--validate-every", le_cfg.validate_every, "Validation interval in steps");
  le->add_option("--eval-max-length", le_eval_max, "Largest evaluated length");
  le->add_option("--samples", le_samples, "Samples per evaluated length");
  le->callback([&] {
    le_cfg.task = task_from(task_name, task_size);
    le_cfg.model_kind = trainer::ModelKind::SdSsm;
    le_cfg.sdssm.d = le_cfg.sdssm.n;
    le_cfg.length_efficiency_mode = true;
    le_cfg.seed = seed;
    le_cfg.workers = workers;
    const auto dir = io::make_run_directory(out_root, seed);
    const auto result = trainer::train(le_cfg, [&](std::size_t step, double loss) {
      if (step % 1000 == 0) std::cerr << "step " << step << " loss " << loss << '\n';
    });
    io::save_model(dir / "model.bin", {result.model, le_cfg.task});
    io::write_file_atomic(dir / "train_log.csv", io::training_log_csv(result.log));
    const auto curve = trainer::evaluate_lengths(result.model, le_cfg.task, trainer::default_eval_lengths(le_eval_max),
                                                 le_samples, seed + 1, workers);
    write_eval_artifacts(dir, curve, le_cfg.max_train_len, le_cfg.task.display_name() + " (random start)");
    json report{{"task", task_json(le_cfg.task)}, {"train_length", le_cfg.max_train_len}, {"seed", seed},
                {"best_step", result.best_step ? json(*result.best_step) : json(nullptr)},
                {"best_validation_acc", result.best_validation ? json(*result.best_validation) : json(nullptr)},
                {"summary", curve_json(curve, le_cfg.max_train_len)}, {"run_dir", dir.string()}};
    io::write_file_atomic(dir / "report.json", report.dump(2));
    std::cout << report.dump(2) << '\n';
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << " (step " << e.step() << ")\n";
    return kExitDivergence;
  } catch (const NonFiniteError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const VerificationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitVerification;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return exit_code;
}
