#include "dyg2vec/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dyg2vec/error.hpp"

namespace dyg {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::uint64_t default_seed() {
  const char* env = std::getenv("DYG_SEED");
  if (env == nullptr || *env == '\0') return 0;
  std::uint64_t v = 0;
  const std::string s(env);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("DYG_SEED is not an unsigned integer");
  return v;
}

const std::map<std::string, std::string>& RunConfig::defaults() {
  static const std::map<std::string, std::string> d = {
      // data and run layout
      {"dataset", ""},
      {"out_dir", "runs"},
      {"seed", "0"},
      {"precision", "float"},
      {"split_mode", "transductive"},
      {"split_manifest", ""},
      {"inductive_fraction", "0.1"},
      {"require_labels", "false"},
      {"synthetic_nodes", "1000"},
      {"synthetic_edges", "5000"},
      {"synthetic_seed", "0"},
      // encoder
      {"num_layers", "3"},
      {"num_heads", "2"},
      {"node_dim", "100"},
      {"time_dim", "100"},
      {"num_neighbors", "20"},
      {"dropout", "0.1"},
      {"edge_enc_scale", "log1p"},
      // pre-training
      {"ssl_window", "32000"},
      {"ssl_stride", "200"},
      {"p_drop_edge", "0.3"},
      {"p_mask_feat", "0.3"},
      // downstream
      {"task", "flp"},
      {"window_size", "4096"},
      {"target_size", "200"},
      {"epochs", "100"},
      {"lr", "0.0001"},
      {"weight_decay", "auto"},
      {"freeze_encoder", "false"},
      {"encoder_init", "random"},
      {"checkpoint", ""},
      {"label_fraction", "1.0"},
      {"eval_horizon", "1,200,2000"},
      {"rank_negatives", "500"},
  };
  return d;
}

RunConfig::RunConfig() : values_(defaults()) { values_["seed"] = std::to_string(default_seed()); }

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  load_text(ss.str(), path);
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  long n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(n) + ": expected 'key = value'");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!defaults().count(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

void RunConfig::apply_overrides(const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + a + "' is not key=value");
    set(trim(a.substr(0, eq)), trim(a.substr(eq + 1)));
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

long long RunConfig::integer(const std::string& key) const {
  const auto& s = get(key);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ConfigError(key + ": '" + s + "' is not an integer");
  return v;
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  const auto& s = get(key);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ConfigError(key + ": '" + s + "' is not an unsigned integer");
  return v;
}

double RunConfig::real(const std::string& key) const {
  const auto& s = get(key);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ConfigError(key + ": '" + s + "' is not a number");
  return v;
}

bool RunConfig::flag(const std::string& key) const {
  const auto& s = get(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": '" + s + "' is not a boolean");
}

std::vector<long long> RunConfig::int_list(const std::string& key) const {
  std::vector<long long> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size() || item.empty())
      throw ConfigError(key + ": '" + item + "' is not an integer");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::string RunConfig::resolved() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : resolved()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace dyg
