#include "ssmfsa/scan_bench.hpp"

#include "ssmfsa/error.hpp"
#include "ssmfsa/sdssm.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <sstream>

namespace ssmfsa::scan {

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

BenchReport bench(const BenchOptions& options) {
  if (options.n < 2 || options.batch < 1 || options.repeats < 1 || options.warmup < 0) {
    throw UsageError("bench: n >= 2, batch >= 1, repeats >= 1 required");
  }
  sdssm::SdSsmConfig config;
  config.alphabet_size = 2;
  config.n = options.n;
  config.d = options.n;
  config.k = 4;
  Rng rng(options.seed);
  const auto params = sdssm::init(config, rng);

  BenchReport report;
  report.options = options;
  for (int length : options.lengths) {
    if (length < 1) throw UsageError("bench: lengths must be >= 1");
    std::vector<automata::Sequence> batch(static_cast<std::size_t>(options.batch));
    std::vector<int> targets(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      batch[b].resize(static_cast<std::size_t>(length));
      for (auto& s : batch[b]) s = static_cast<int>(rng.uniform_int(2));
      targets[b] = static_cast<int>(rng.uniform_int(2));
    }
    for (Mode mode : {Mode::Sequential, Mode::Parallel}) {
      sdssm::RunOptions run;
      run.mode = mode;
      run.sharing = sdssm::Sharing::PerToken;
      run.scan.chunk_size = options.chunk_size;
      run.scan.workers = options.workers;
      BenchRow row;
      row.mode = mode == Mode::Sequential ? "sequential" : "parallel";
      row.length = length;
      for (int r = 0; r < options.warmup + options.repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t b = 0; b < batch.size(); ++b) {
          auto grads = sdssm::gradients(params, batch[b], targets[b], run);
          (void)grads;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (r >= options.warmup) row.samples.push_back(secs);
      }
      row.seconds = median(row.samples);
      report.rows.push_back(std::move(row));
    }
    const double seq = report.rows[report.rows.size() - 2].seconds;
    const double par = report.rows.back().seconds;
    report.speedup[length] = par > 0.0 ? seq / par : 0.0;
  }
  return report;
}

std::string bench_csv(const BenchReport& report) {
  std::ostringstream out;
  out << "mode,length,seconds\n";
  for (const auto& row : report.rows) out << row.mode << ',' << row.length << ',' << row.seconds << '\n';
  return out.str();
}

std::string bench_json(const BenchReport& report) {
  nlohmann::json j;
  j["n"] = report.options.n;
  j["batch"] = report.options.batch;
  j["repeats"] = report.options.repeats;
  j["workers"] = report.options.workers;
  j["chunk_size"] = report.options.chunk_size;
  for (const auto& row : report.rows) j["seconds"][row.mode][std::to_string(row.length)] = row.seconds;
  for (const auto& [len, s] : report.speedup) j["speedup"][std::to_string(len)] = s;
  return j.dump(2);
}

}  // namespace ssmfsa::scan
