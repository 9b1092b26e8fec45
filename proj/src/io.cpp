#include "ssmfsa/io.hpp"

#include "ssmfsa/error.hpp"

#include <json.hpp>
#include <zlib.h>

#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace ssmfsa::io {

using nlohmann::json;
using num::Matrix;
using num::Vector;
using trainer::Model;

ConfigError::ConfigError(std::size_t line, const std::string& what)
    : UsageError(line > 0 ? "config line " + std::to_string(line) + ": " + what : "config: " + what), line_(line) {}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

int to_int(const std::string& v, std::size_t line, const std::string& key) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(line, key + ": expected an integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& v, std::size_t line, const std::string& key) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(out)) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(line, key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& v, std::size_t line, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(line, key + ": expected true or false, got '" + v + "'");
}

}  // namespace

std::vector<int> parse_int_list(std::string_view text) {
  std::vector<int> out;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) throw UsageError("empty item in list '" + std::string(text) + "'");
    int v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size()) throw UsageError("not an integer: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  std::string task_name = "parity";
  std::optional<int> task_size;
  std::size_t task_line = 0;
  std::set<std::string> seen;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  auto& t = cfg.train;

  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(line_no, "malformed section header '" + line + "'");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section != "task" && section != "model" && section != "train" && section != "eval") {
        throw ConfigError(line_no, "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line_no, "expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    if (value.empty()) throw ConfigError(line_no, full + ": missing value");
    if (!seen.insert(full).second) throw ConfigError(line_no, "duplicate key '" + full + "'");

    try {
      if (full == "seed") {
        t.seed = static_cast<std::uint64_t>(std::stoull(value));
      } else if (full == "task.name") {
        task_name = value;
        task_line = line_no;
      } else if (full == "task.size") {
        task_size = to_int(value, line_no, full);
      } else if (full == "model.kind") {
        t.model_kind = trainer::parse_model_kind(value);
      } else if (full == "model.n") {
        t.sdssm.n = t.diag.n = to_int(value, line_no, full);
      } else if (full == "model.d") {
        t.sdssm.d = t.diag.d = to_int(value, line_no, full);
      } else if (full == "model.k") {
        t.sdssm.k = to_int(value, line_no, full);
      } else if (full == "model.p") {
        t.sdssm.p = to_double(value, line_no, full);
      } else if (full == "model.use_b") {
        t.sdssm.use_B = t.diag.use_B = to_bool(value, line_no, full);
      } else if (full == "model.readout") {
        t.sdssm.readout = t.diag.readout = sdssm::parse_readout(value);
      } else if (full == "model.opnorm") {
        if (value == "unit") {
          t.sdssm.opnorm = num::ColumnNormKind::Unit;
        } else if (value == "at_most_one") {
          t.sdssm.opnorm = num::ColumnNormKind::AtMostOne;
        } else {
          throw ConfigError(line_no, full + ": expected unit or at_most_one");
        }
      } else if (full == "train.max_train_len") {
        t.max_train_len = to_int(value, line_no, full);
      } else if (full == "train.batch_size") {
        t.batch_size = to_int(value, line_no, full);
      } else if (full == "train.steps") {
        const int steps = to_int(value, line_no, full);
        if (steps < 0) throw ConfigError(line_no, full + ": must be >= 0");
        t.steps = static_cast<std::size_t>(steps);
      } else if (full == "train.lr") {
        t.lr = to_double(value, line_no, full);
      } else if (full == "train.length_efficiency") {
        t.length_efficiency_mode = to_bool(value, line_no, full);
      } else if (full == "train.validate_every") {
        t.validate_every = static_cast<std::size_t>(to_int(value, line_no, full));
      } else if (full == "train.validation_max_len") {
        t.validation_max_len = to_int(value, line_no, full);
      } else if (full == "train.workers") {
        t.workers = static_cast<std::size_t>(std::max(1, to_int(value, line_no, full)));
      } else if (full == "eval.lengths") {
        cfg.eval.lengths = value == "default" ? std::vector<int>{} : parse_int_list(value);
      } else if (full == "eval.max_length") {
        cfg.eval.max_length = to_int(value, line_no, full);
      } else if (full == "eval.samples_per_length") {
        cfg.eval.samples_per_length = to_int(value, line_no, full);
      } else {
        throw ConfigError(line_no, "unknown key '" + full + "'");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(line_no, full + ": " + e.what());
    }
  }

  try {
    t.task = automata::parse_task(task_name, task_size);
  } catch (const UsageError& e) {
    throw ConfigError(task_line, e.what());
  }
  if (cfg.eval.samples_per_length < 1) throw ConfigError(0, "eval.samples_per_length must be >= 1");
  if (cfg.eval.max_length < 1) throw ConfigError(0, "eval.max_length must be >= 1");
  try {
    t.finalize();
  } catch (const UsageError& e) {
    throw ConfigError(0, e.what());
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string default_run_config_text() {
  return R"(seed = 0

[task]
name = parity          # parity | even_pairs | cycle | arithmetic | c2xcn | dn | a5
# size = 4             # group size for c2xcn / dn

[model]
kind = sdssm           # sdssm | diag
n = 16
d = 16
k = 4                  # sdssm dictionary size
p = 1.2                # sdssm column-norm exponent, in [1, 1.5]
use_b = true
readout = linear       # linear | mlp
opnorm = unit          # unit | at_most_one

[train]
max_train_len = 40
batch_size = 64
steps = 20000
lr = 0.001
length_efficiency = false
validate_every = 500
validation_max_len = 40
workers = 1

[eval]
lengths = default      # or a comma separated list
max_length = 500
samples_per_length = 256
)";
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw UsageError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// model files

namespace {

constexpr char kMagic[8] = {'S', 'S', 'M', 'F', 'S', 'A', 'M', 'D'};

json task_json(const automata::TaskSpec& task) {
  json j{{"name", task.name()}};
  if (task.size_param) j["size"] = *task.size_param;
  return j;
}

automata::TaskSpec task_from_json(const json& j) {
  std::optional<int> size;
  if (j.contains("size")) size = j.at("size").get<int>();
  return automata::parse_task(j.at("name").get<std::string>(), size);
}

json sdssm_config_json(const sdssm::SdSsmConfig& c) {
  return {{"alphabet_size", c.alphabet_size}, {"n", c.n},
          {"d", c.d},
          {"k", c.k},
          {"p", c.p},
          {"use_B", c.use_B},
          {"readout", sdssm::readout_name(c.readout)},
          {"mlp_hidden", c.mlp_hidden},
          {"label_space", c.label_space},
          {"max_train_len", c.max_train_len},
          {"opnorm", c.opnorm == num::ColumnNormKind::Unit ? "unit" : "at_most_one"}};
}

sdssm::SdSsmConfig sdssm_config_from_json(const json& j) {
  sdssm::SdSsmConfig c;
  c.alphabet_size = j.at("alphabet_size");
  c.n = j.at("n");
  c.d = j.at("d");
  c.k = j.at("k");
  c.p = j.at("p");
  c.use_B = j.at("use_B");
  c.readout = sdssm::parse_readout(j.at("readout").get<std::string>());
  c.mlp_hidden = j.at("mlp_hidden");
  c.label_space = j.at("label_space");
  c.max_train_len = j.at("max_train_len");
  c.opnorm = j.at("opnorm") == "unit" ? num::ColumnNormKind::Unit : num::ColumnNormKind::AtMostOne;
  return c;
}

json diag_config_json(const diag::DiagSsmConfig& c) {
  return {{"alphabet_size", c.alphabet_size}, {"n", c.n},
          {"d", c.d},
          {"use_B", c.use_B},
          {"readout", sdssm::readout_name(c.readout)},
          {"label_space", c.label_space},
          {"max_train_len", c.max_train_len}};
}

diag::DiagSsmConfig diag_config_from_json(const json& j) {
  diag::DiagSsmConfig c;
  c.alphabet_size = j.at("alphabet_size");
  c.n = j.at("n");
  c.d = j.at("d");
  c.use_B = j.at("use_B");
  c.readout = sdssm::parse_readout(j.at("readout").get<std::string>());
  c.label_space = j.at("label_space");
  c.max_train_len = j.at("max_train_len");
  return c;
}

void append_le_doubles(std::string& out, const Matrix& m) {
  // Column-major, as Eigen stores it.
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(m.data()[i]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.append(bytes, 8);
  }
}

Matrix read_le_doubles(std::string_view data, std::size_t offset, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  if (offset + static_cast<std::size_t>(m.size()) * 8 > data.size()) throw UsageError("model file: tensor out of range");
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, data.data() + offset + static_cast<std::size_t>(i) * 8, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    m.data()[i] = std::bit_cast<double>(bits);
  }
  return m;
}

/// The named tensors of a model, in storage order.
std::vector<std::pair<std::string, const Matrix*>> tensors_of(const Model& model) {
  std::vector<std::pair<std::string, const Matrix*>> out;
  auto add_store = [&](const num::TensorStore& s, const std::string& prefix) {
    for (const auto& t : s.tensors()) out.emplace_back(prefix + t.name, &t.value);
  };
  if (const auto* c = std::get_if<compiler::CompiledSelectiveSsm>(&model)) {
    out.emplace_back("encodings", &c->encodings);
    for (std::size_t s = 0; s < c->transitions.size(); ++s) out.emplace_back("A." + std::to_string(s), &c->transitions[s]);
  } else if (const auto* p = std::get_if<sdssm::SdSsmParams>(&model)) {
    add_store(p->store(), "");
  } else if (const auto* p = std::get_if<diag::DiagSsmParams>(&model)) {
    add_store(p->store(), "");
  } else {
    const auto& le = std::get<trainer::LengthEfficiencyModel>(model);
    add_store(le.core.store(), "");
    out.emplace_back("le.X", &le.X);
    add_store(le.head, "le.");
  }
  return out;
}

}  // namespace

std::string model_kind_tag(const Model& model) {
  if (std::holds_alternative<compiler::CompiledSelectiveSsm>(model)) return "compiled";
  if (std::holds_alternative<diag::DiagSsmParams>(model)) return "diag";
  return "sdssm";
}

void save_model(const fs::path& path, const ModelFile& file) {
  json header;
  header["format_version"] = kModelFormatVersion;
  header["kind"] = model_kind_tag(file.model);
  header["task"] = task_json(file.task);
  if (const auto* c = std::get_if<compiler::CompiledSelectiveSsm>(&file.model)) {
    header["config"] = {{"num_states", c->num_states()}, {"alphabet_size", c->alphabet_size()}, {"n", c->dim()}};
  } else if (const auto* p = std::get_if<sdssm::SdSsmParams>(&file.model)) {
    header["config"] = sdssm_config_json(p->config());
  } else if (const auto* p = std::get_if<diag::DiagSsmParams>(&file.model)) {
    header["config"] = diag_config_json(p->config());
  } else {
    header["config"] = sdssm_config_json(std::get<trainer::LengthEfficiencyModel>(file.model).core.config());
    header["length_efficiency"] = true;
  }
  std::string payload;
  json tensors = json::array();
  for (const auto& [name, m] : tensors_of(file.model)) {
    tensors.push_back({{"name", name}, {"shape", {m->rows(), m->cols()}}, {"offset", payload.size()}});
    append_le_doubles(payload, *m);
  }
  header["tensors"] = tensors;
  header["data_bytes"] = payload.size();
  header["crc32"] = crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size()));

  const std::string header_text = header.dump(1);
  std::string out(kMagic, sizeof kMagic);
  auto put_u = [&](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put_u(kModelFormatVersion, 4);
  put_u(header_text.size(), 8);
  out += header_text;
  out += payload;
  write_file_atomic(path, out);
}

ModelFile load_model(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read model " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string raw = ss.str();
  if (raw.size() < 20 || std::memcmp(raw.data(), kMagic, 8) != 0) throw UsageError("not a model file: " + path.string());
  auto get_u = [&](std::size_t at, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(raw[at + i])) << (8 * i);
    return v;
  };
  const auto version = get_u(8, 4);
  if (version != kModelFormatVersion) throw UsageError("unsupported model format version " + std::to_string(version));
  const auto header_size = get_u(12, 8);
  if (20 + header_size > raw.size()) throw UsageError("model file truncated");
  json header;
  try {
    header = json::parse(raw.substr(20, header_size));
  } catch (const json::exception& e) {
    throw UsageError(std::string("model header: ") + e.what());
  }
  const std::string_view data = std::string_view(raw).substr(20 + header_size);
  if (data.size() != header.at("data_bytes").get<std::size_t>()) throw UsageError("model file truncated");
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size()));
  if (crc != header.at("crc32").get<std::uint64_t>()) throw VerificationError("model file checksum mismatch: " + path.string());

  std::map<std::string, Matrix> tensors;
  for (const auto& t : header.at("tensors")) {
    tensors[t.at("name").get<std::string>()] =
        read_le_doubles(data, t.at("offset").get<std::size_t>(), t.at("shape")[0].get<Eigen::Index>(),
                        t.at("shape")[1].get<Eigen::Index>());
  }
  auto take = [&](const std::string& name, const Matrix& like) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw UsageError("model file: missing tensor " + name);
    if (it->second.rows() != like.rows() || it->second.cols() != like.cols()) {
      throw UsageError("model file: wrong shape for tensor " + name);
    }
    return it->second;
  };
  auto fill_store = [&](num::TensorStore& store, const std::string& prefix) {
    for (auto& t : store.tensors()) t.value = take(prefix + t.name, t.value);
  };

  ModelFile file{compiler::CompiledSelectiveSsm{}, task_from_json(header.at("task"))};
  const std::string kind = header.at("kind");
  const json& cfg = header.at("config");
  if (kind == "compiled") {
    compiler::CompiledSelectiveSsm c;
    const int states = cfg.at("num_states");
    const int symbols = cfg.at("alphabet_size");
    const Eigen::Index n = cfg.at("n");
    c.encodings = take("encodings", Matrix(states, n));
    for (int s = 0; s < symbols; ++s) c.transitions.push_back(take("A." + std::to_string(s), Matrix(n, n)));
    const auto aut = automata::build_task(file.task);
    c.x0 = c.encodings.row(aut.initial_state()).transpose();
    c.b_term = Vector::Zero(n);
    file.model = std::move(c);
  } else if (kind == "sdssm" && header.value("length_efficiency", false)) {
    const auto config = sdssm_config_from_json(cfg);
    trainer::LengthEfficiencyModel le{sdssm::SdSsmParams(config), Matrix(), {}};
    fill_store(le.core.store(), "");
    auto it = tensors.find("le.X");
    if (it == tensors.end()) throw UsageError("model file: missing tensor le.X");
    le.X = it->second;
    le.head.add("init_proj", Matrix::Zero(config.n, trainer::kLengthEfficiencyDim));
    le.head.add("M", Matrix::Zero(trainer::kLengthEfficiencyDim, config.n));
    fill_store(le.head, "le.");
    file.model = std::move(le);
  } else if (kind == "sdssm") {
    sdssm::SdSsmParams p(sdssm_config_from_json(cfg));
    fill_store(p.store(), "");
    file.model = std::move(p);
  } else if (kind == "diag") {
    diag::DiagSsmParams p(diag_config_from_json(cfg));
    fill_store(p.store(), "");
    file.model = std::move(p);
  } else {
    throw UsageError("model file: unknown kind '" + kind + "'");
  }
  return file;
}

// ---------------------------------------------------------------------------
// CSV / SVG / run directories

std::string training_log_csv(const std::vector<trainer::LogRow>& log) {
  std::ostringstream out;
  out << "step,loss\n" << std::setprecision(10);
  for (const auto& row : log) out << row.step << ',' << row.loss << '\n';
  return out.str();
}

std::string curve_csv(const trainer::EvalCurve& curve) {
  std::ostringstream out;
  out << "length,accuracy\n" << std::setprecision(10);
  for (const auto& [len, acc] : curve.accuracy) out << len << ',' << acc << '\n';
  return out.str();
}

std::string curve_svg(const trainer::EvalCurve& curve, int train_length, std::string_view title) {
  constexpr double W = 800, H = 400, left = 60, right = 20, top = 30, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  const int max_len = curve.accuracy.empty() ? 100 : std::max(100, curve.accuracy.rbegin()->first);
  const int x_max = ((max_len + 99) / 100) * 100;
  auto sx = [&](double len) { return left + pw * len / x_max; };
  auto sy = [&](double acc) { return top + ph * (1.0 - acc); };

  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"400\" viewBox=\"0 0 800 400\">\n";
  out << "<rect width=\"800\" height=\"400\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" << title
      << "</text>\n";
  out << "<g stroke=\"black\" stroke-width=\"1\">\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph << "\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\"/>\n";
  for (int x = 0; x <= x_max; x += 100) {
    out << "<line x1=\"" << sx(x) << "\" y1=\"" << top + ph << "\" x2=\"" << sx(x) << "\" y2=\"" << top + ph + 5 << "\"/>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    out << "<line x1=\"" << left - 5 << "\" y1=\"" << sy(i / 4.0) << "\" x2=\"" << left << "\" y2=\"" << sy(i / 4.0)
        << "\"/>\n";
  }
  out << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int x = 0; x <= x_max; x += 100) {
    out << "<text x=\"" << sx(x) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << x << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    out << "<text x=\"" << left - 8 << "\" y=\"" << sy(i / 4.0) + 4 << "\" text-anchor=\"end\">" << i / 4.0 << "</text>\n";
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">length</text>\n";
  out << "<text x=\"15\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 15 " << top + ph / 2
      << ")\" text-anchor=\"middle\">accuracy</text>\n</g>\n";
  if (train_length > 0) {
    out << "<line x1=\"" << sx(train_length) << "\" y1=\"" << top << "\" x2=\"" << sx(train_length) << "\" y2=\"" << top + ph
        << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    out << "<text x=\"" << sx(train_length) + 4 << "\" y=\"" << top + 12
        << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"gray\">L=" << train_length << "</text>\n";
  }
  out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
  for (const auto& [len, acc] : curve.accuracy) out << sx(len) << ',' << sy(acc) << ' ';
  out << "\"/>\n</svg>\n";
  return out.str();
}

fs::path make_run_directory(const fs::path& root, std::uint64_t seed) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream name;
  name << std::put_time(&tm, "%Y%m%d-%H%M%S") << "-seed" << seed;
  fs::path dir = root / name.str();
  for (int i = 1; fs::exists(dir); ++i) dir = root / (name.str() + "-" + std::to_string(i));
  fs::create_directories(dir);
  return dir;
}

}  // namespace ssmfsa::io
