#pragma once

#include "ssmfsa/scan.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ssmfsa::scan {

struct BenchOptions {
  int n = 64;
  int batch = 16;
  std::vector<int> lengths{64, 128, 256, 512};
  int repeats = 3;
  int warmup = 1;
  std::size_t workers = 1;
  std::size_t chunk_size = 32;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string mode;  // "sequential" | "parallel"
  int length = 0;
  double seconds = 0.0;  // median of repeats
  std::vector<double> samples;
};

struct BenchReport {
  BenchOptions options;
  std::vector<BenchRow> rows;
  std::map<int, double> speedup;  // length -> sequential / parallel
};

/// Wall time of SD-SSM forward + backward over a batch of random sequences,
/// one transition generated per time step. Sequential mode is one thread
/// over the time axis; parallel mode uses the chunked scan, the parallel
/// adjoint and `workers` threads for per-step generation and gradients.
/// Warmup runs are discarded; the reported time is the median.
BenchReport bench(const BenchOptions& options);

std::string bench_csv(const BenchReport& report);
std::string bench_json(const BenchReport& report);

}  // namespace ssmfsa::scan
