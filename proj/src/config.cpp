#include "nnqs/config.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "nnqs/error.hpp"

namespace nnqs {

namespace {

namespace fs = std::filesystem;

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(std::string_view v, std::size_t line, const std::string& key) {
  double x = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(x)) {
    throw ParseError(line, "'" + key + "' expects a number, got '" + std::string(v) + "'");
  }
  return x;
}

/// Accepts plain integers and exact exponent forms such as 1e12.
std::uint64_t to_uint(std::string_view v, std::size_t line, const std::string& key) {
  std::uint64_t n = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
  if (ec == std::errc() && p == v.data() + v.size()) return n;
  const double x = to_double(v, line, key);
  if (x < 0 || x > 1.8e19 || std::floor(x) != x) {
    throw ParseError(line, "'" + key + "' expects a nonnegative integer, got '" + std::string(v) + "'");
  }
  return static_cast<std::uint64_t>(x);
}

int to_int(std::string_view v, std::size_t line, const std::string& key) {
  const std::uint64_t n = to_uint(v, line, key);
  if (n > 1'000'000'000) throw ParseError(line, "'" + key + "' is out of range");
  return static_cast<int>(n);
}

std::vector<int> to_int_list(std::string_view v, std::size_t line, const std::string& key) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    const auto comma = v.find(',', pos);
    const auto item = trim(v.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (item.empty()) throw ParseError(line, "'" + key + "' has an empty list entry");
    out.push_back(to_int(item, line, key));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

using Setter = std::function<void(RunConfig&, std::string_view, std::size_t, const std::string&)>;

struct KeySpec {
  Setter set;
  std::string fallback;
};

const std::map<std::string, KeySpec>& key_table() {
  static const std::map<std::string, KeySpec> table = [] {
    std::map<std::string, KeySpec> t;
    const RunConfig d;
    auto u64 = [](std::uint64_t TrainConfig::*f) {
      return [f](RunConfig& c, std::string_view v, std::size_t l, const std::string& k) { c.train.*f = to_uint(v, l, k); };
    };
    auto real = [](double TrainConfig::*f) {
      return [f](RunConfig& c, std::string_view v, std::size_t l, const std::string& k) { c.train.*f = to_double(v, l, k); };
    };
    auto adam = [](double AdamWConfig::*f) {
      return [f](RunConfig& c, std::string_view v, std::size_t l, const std::string& k) {
        c.train.adam.*f = to_double(v, l, k);
      };
    };
    auto arch = [](int AnsatzConfig::*f) {
      return [f](RunConfig& c, std::string_view v, std::size_t l, const std::string& k) { c.ansatz.*f = to_int(v, l, k); };
    };

    t["seed"] = {[](RunConfig& c, std::string_view v, std::size_t l, const std::string& k) {
                   c.ansatz.seed = c.train.seed = to_uint(v, l, k);
                 },
                 "0"};
    t["threads"] = {[](RunConfig& c, std::string_view v, std::size_t l, const std::string& k) { c.threads = to_int(v, l, k); },
                    "0 (hardware concurrency)"};
    t["hamiltonian.path"] = {[](RunConfig& c, std::string_view v, std::size_t, const std::string&) {
                               c.hamiltonian = std::string(v);
                             },
                             "(required)"};
    t["ansatz.d_model"] = {arch(&AnsatzConfig::d_model), std::to_string(d.ansatz.d_model)};
    t["ansatz.n_heads"] = {arch(&AnsatzConfig::n_heads), std::to_string(d.ansatz.n_heads)};
    t["ansatz.n_decoders"] = {arch(&AnsatzConfig::n_decoders), std::to_string(d.ansatz.n_decoders)};
    t["ansatz.mlp_widths"] = {[](RunConfig& c, std::string_view v, std::size_t l, const std::string& k) {
                                c.ansatz.mlp_widths = to_int_list(v, l, k);
                              },
                              "512, 512"};
    t["train.max_iters"] = {u64(&TrainConfig::max_iters), std::to_string(d.train.max_iters)};
    t["train.warmup"] = {[](RunConfig& c, std::string_view v, std::size_t l, const std::string& k) {
                           c.train.warmup = to_int(v, l, k);
                         },
                         std::to_string(d.train.warmup)};
    t["train.samples_initial"] = {u64(&TrainConfig::samples_initial), "1e5"};
    t["train.samples_initial_iters"] = {u64(&TrainConfig::samples_initial_iters),
                                        std::to_string(d.train.samples_initial_iters)};
    t["train.samples_ramp_factor"] = {u64(&TrainConfig::samples_ramp_factor), std::to_string(d.train.samples_ramp_factor)};
    t["train.samples_ramp_interval"] = {u64(&TrainConfig::samples_ramp_interval),
                                        std::to_string(d.train.samples_ramp_interval)};
    t["train.samples_max"] = {u64(&TrainConfig::samples_max), "1e12"};
    t["train.n_workers"] = {[](RunConfig& c, std::string_view v, std::size_t l, const std::string& k) {
                              c.train.n_workers = to_int(v, l, k);
                            },
                            "1"};
    t["train.n_u_star"] = {[](RunConfig& c, std::string_view v, std::size_t l, const std::string& k) {
                             c.train.n_u_star = static_cast<std::size_t>(to_uint(v, l, k));
                           },
                           "0 (1024 * n_workers)"};
    t["train.energy_mode"] = {[](RunConfig& c, std::string_view v, std::size_t l, const std::string&) {
                                try {
                                  c.train.energy_mode = parse_energy_mode(std::string(v));
                                } catch (const Error& e) {
                                  throw ParseError(l, e.what());
                                }
                              },
                              "sample-aware"};
    t["train.plateau_window"] = {u64(&TrainConfig::plateau_window), std::to_string(d.train.plateau_window)};
    t["train.plateau_rtol"] = {real(&TrainConfig::plateau_rtol), "1e-7"};
    t["train.imag_abort_ratio"] = {real(&TrainConfig::imag_abort_ratio), "1e-3"};
    t["train.imag_abort_window"] = {u64(&TrainConfig::imag_abort_window), std::to_string(d.train.imag_abort_window)};
    t["optimizer.beta1"] = {adam(&AdamWConfig::beta1), "0.9"};
    t["optimizer.beta2"] = {adam(&AdamWConfig::beta2), "0.999"};
    t["optimizer.eps"] = {adam(&AdamWConfig::eps), "1e-8"};
    t["optimizer.weight_decay"] = {adam(&AdamWConfig::weight_decay), "0.01"};
    t["output.dir"] = {[](RunConfig& c, std::string_view v, std::size_t, const std::string&) {
                         c.output_dir = std::string(v);
                       },
                       d.output_dir};
    t["output.checkpoint_interval"] = {[](RunConfig& c, std::string_view v, std::size_t l, const std::string& k) {
                                         c.checkpoint_interval = to_uint(v, l, k);
                                       },
                                       std::to_string(d.checkpoint_interval)};
    return t;
  }();
  return table;
}

std::string resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::string& base_dir, bool require_hamiltonian) {
  RunConfig cfg;
  const auto& table = key_table();
  std::set<std::string> seen;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(line_no, "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ParseError(line_no, "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    const std::string_view name = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (name.empty()) throw ParseError(line_no, "missing key before '='");
    const std::string key = section.empty() ? std::string(name) : section + "." + std::string(name);
    const auto it = table.find(key);
    if (it == table.end()) throw ParseError(line_no, "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ParseError(line_no, "key '" + key + "' given twice");
    if (value.empty()) throw ParseError(line_no, "key '" + key + "' has no value");
    it->second.set(cfg, value, line_no, key);
  }
  if (cfg.hamiltonian.empty() && require_hamiltonian) throw Error("missing required key 'hamiltonian.path'");
  cfg.hamiltonian = resolve(cfg.hamiltonian, base_dir);
  if (!cfg.hamiltonian.empty() && !fs::is_regular_file(cfg.hamiltonian)) {
    throw Error("hamiltonian.path: file '" + cfg.hamiltonian + "' does not exist");
  }
  cfg.output_dir = resolve(cfg.output_dir, base_dir);
  cfg.train.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path, bool require_hamiltonian) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string base = fs::path(path).parent_path().string();
  try {
    return parse_run_config(ss.str(), base, require_hamiltonian);
  } catch (const ParseError& e) {
    throw ParseError(path, e);
  }
}

std::string config_reference() {
  std::ostringstream os;
  for (const auto& [key, spec] : key_table()) os << key << " = " << spec.fallback << '\n';
  return os.str();
}

}  // namespace nnqs
