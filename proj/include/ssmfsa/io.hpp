#pragma once

#include "ssmfsa/error.hpp"
#include "ssmfsa/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ssmfsa::io {

namespace fs = std::filesystem;

/// Config parse error carrying the 1-based line number (0 if not line bound).
class ConfigError : public UsageError {
 public:
  ConfigError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct EvalSettings {
  std::vector<int> lengths;  // empty means default grid up to max_length
  int max_length = 500;
  int samples_per_length = 256;
};

struct RunConfig {
  trainer::TrainConfig train;
  EvalSettings eval;
};

/// Sectioned key = value text:
///
///   seed = 0
///   [task]   name, size
///   [model]  kind, n, d, k, p, use_b, readout, opnorm
///   [train]  max_train_len, batch_size, steps, lr, length_efficiency,
///            validate_every, validation_max_len, workers
///   [eval]   lengths, max_length, samples_per_length
///
/// '#' starts a comment. Unknown sections or keys, duplicate keys and bad
/// values raise ConfigError with the line number.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const fs::path& path);
/// Documented defaults, in the same format.
std::string default_run_config_text();

inline constexpr std::uint32_t kModelFormatVersion = 1;

struct ModelFile {
  trainer::Model model;
  automata::TaskSpec task;
};

/// Layout: 8-byte magic "SSMFSAMD", u32 version, u64 header size, JSON header,
/// then little-endian float64 tensor data. The header lists kind, task,
/// config, every tensor's name/shape/offset and the CRC-32 of the data.
/// Written atomically.
void save_model(const fs::path& path, const ModelFile& file);
/// Throws UsageError on a malformed file and VerificationError on a
/// checksum mismatch.
ModelFile load_model(const fs::path& path);

std::string model_kind_tag(const trainer::Model& model);

/// Writes via a sibling temp file and rename.
void write_file_atomic(const fs::path& path, std::string_view contents);

std::string training_log_csv(const std::vector<trainer::LogRow>& log);
std::string curve_csv(const trainer::EvalCurve& curve);

/// 800x400 polyline of accuracy vs length, x ticks every 100, with a dashed
/// vertical line at the training length.
std::string curve_svg(const trainer::EvalCurve& curve, int train_length, std::string_view title);

/// "<root>/<YYYYmmdd-HHMMSS>-seed<seed>", created if missing.
fs::path make_run_directory(const fs::path& root, std::uint64_t seed);

std::vector<int> parse_int_list(std::string_view text);

}  // namespace ssmfsa::io
