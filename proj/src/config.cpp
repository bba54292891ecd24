#include "qdoor/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "qdoor/circuit_io.hpp"

namespace qdoor {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void flatten(const nlohmann::json& j, const std::string& prefix, std::map<std::string, std::string>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    }
    return;
  }
  if (j.is_array()) {
    std::string joined;
    for (const auto& v : j) {
      if (!joined.empty()) joined += ',';
      joined += v.is_string() ? v.get<std::string>() : v.dump();
    }
    out[prefix] = joined;
    return;
  }
  out[prefix] = j.is_string() ? j.get<std::string>() : j.dump();
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "dataset", "model", "loss", "out", "seed", "data.dir", "data.n_per_class", "data.sigma", "data.train_frac",
      "data.idx_dir", "data.seed",
      "train.lambda", "train.alpha", "train.beta", "train.eps_budgets", "train.n_syn", "train.lr",
      "train.weight_decay", "train.epochs", "train.batch_size", "train.resynth_period", "train.seed",
      "train.target_class", "train.init_scale", "train.trajectories",
      "synth.eps", "synth.max_blocks", "synth.multistart", "synth.seed", "synth.piece_width", "synth.beam_width",
      "synth.max_iters", "synth.n_syn",
      "poison.ratio", "poison.target_class", "poison.trigger_index", "poison.trigger_value", "poison.seed",
      "eval.noise", "eval.shots", "eval.trajectories", "eval.eps_list", "eval.schemes", "eval.seed", "eval.n_syn",
      "eval.max_blocks", "eval.multistart", "eval.max_iters", "eval.beam_width", "eval.piece_width",
      "sweep.eps_grid"};
  return keys;
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  c.origin_ = origin;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("cli", origin + ": " + e.what());
    }
    flatten(j, "", c.entries_);
    return c;
  }
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("cli", origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("cli", origin + ":" + std::to_string(lineno) + ": empty key");
    c.entries_[key] = trim(line.substr(eq + 1));
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cli", "cannot read config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path);
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  try {
    return parse_double(entries_.at(key));
  } catch (const std::exception&) {
    throw ConfigError("cli", origin_ + ": key " + key + " is not a number: '" + entries_.at(key) + "'");
  }
}

int Config::get_int(const std::string& key, int fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = entries_.at(key);
  try {
    std::size_t used = 0;
    const int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("cli", origin_ + ": key " + key + " is not an integer: '" + v + "'");
  }
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = entries_.at(key);
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const auto out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("cli", origin_ + ": key " + key + " is not an unsigned integer: '" + v + "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = entries_.at(key);
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("cli", origin_ + ": key " + key + " is not a boolean: '" + v + "'");
}

std::vector<std::string> Config::get_strings(const std::string& key, const std::vector<std::string>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<std::string> out;
  std::istringstream ss(entries_.at(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty() && item.front() == '[') item.erase(0, 1);
    if (!item.empty() && item.back() == ']') item.pop_back();
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& s : get_strings(key, {})) {
    try {
      out.push_back(parse_double(s));
    } catch (const std::exception&) {
      throw ConfigError("cli", origin_ + ": key " + key + " has a non-numeric entry '" + s + "'");
    }
  }
  return out;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t Config::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string Config::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

void Config::check_known_keys() const {
  for (const auto& [k, v] : entries_) {
    if (!known_keys().count(k)) throw ConfigError("cli", origin_ + ": unknown key '" + k + "'");
  }
}

TrainConfig train_config_from(const Config& c) {
  TrainConfig t;
  t.lambda = c.get_double("train.lambda", t.lambda);
  t.alpha = c.get_double("train.alpha", t.alpha);
  t.beta = c.get_double("train.beta", t.beta);
  t.eps_budgets = c.get_doubles("train.eps_budgets", t.eps_budgets);
  t.n_syn = c.get_int("train.n_syn", t.n_syn);
  t.lr = c.get_double("train.lr", t.lr);
  t.weight_decay = c.get_double("train.weight_decay", t.weight_decay);
  t.epochs = c.get_int("train.epochs", t.epochs);
  t.batch_size = c.get_int("train.batch_size", t.batch_size);
  t.resynth_period = c.get_int("train.resynth_period", t.resynth_period);
  t.seed = c.get_u64("train.seed", c.get_u64("seed", t.seed));
  t.target_class = c.get_int("train.target_class", t.target_class);
  t.init_scale = c.get_double("train.init_scale", t.init_scale);
  t.trajectories = c.get_int("train.trajectories", t.trajectories);
  t.synth.seed = c.get_u64("synth.seed", t.synth.seed);
  t.synth.max_blocks = c.get_int("synth.max_blocks", t.synth.max_blocks);
  t.synth.multistart = c.get_int("synth.multistart", t.synth.multistart);
  t.synth.piece_width = c.get_int("synth.piece_width", t.synth.piece_width);
  t.synth.beam_width = c.get_int("synth.beam_width", t.synth.beam_width);
  t.synth.max_iters = c.get_int("synth.max_iters", t.synth.max_iters);
  return t;
}

PoisonPlan poison_plan_from(const Config& c, int feature_dim) {
  PoisonPlan p;
  p.trigger = default_trigger(feature_dim);
  p.ratio = c.get_double("poison.ratio", p.ratio);
  p.target_class = c.get_int("poison.target_class", p.target_class);
  p.trigger.feature_index = c.get_int("poison.trigger_index", p.trigger.feature_index);
  p.trigger.trigger_value = c.get_double("poison.trigger_value", p.trigger.trigger_value);
  p.seed = c.get_u64("poison.seed", c.get_u64("seed", p.seed));
  p.validate();
  return p;
}

EvalConfig eval_config_from(const Config& c) {
  EvalConfig e;
  const std::string noise = c.get_string("eval.noise", "ideal");
  e.noise = (noise == "ideal" || noise == "mel" || noise == "cam") ? NoiseModel::preset(noise) : NoiseModel::load(noise);
  e.shots = c.get_int("eval.shots", e.shots);
  e.trajectories = c.get_int("eval.trajectories", e.trajectories);
  e.eps_list = c.get_doubles("eval.eps_list", e.eps_list);
  e.schemes = c.get_strings("eval.schemes", e.schemes);
  e.seed = c.get_u64("eval.seed", c.get_u64("seed", e.seed));
  e.n_syn = c.get_int("eval.n_syn", e.n_syn);
  e.synth.seed = c.get_u64("synth.seed", e.synth.seed);
  e.synth.max_blocks = c.get_int("eval.max_blocks", c.get_int("synth.max_blocks", e.synth.max_blocks));
  e.synth.multistart = c.get_int("eval.multistart", c.get_int("synth.multistart", e.synth.multistart));
  e.synth.max_iters = c.get_int("eval.max_iters", c.get_int("synth.max_iters", e.synth.max_iters));
  e.synth.beam_width = c.get_int("eval.beam_width", c.get_int("synth.beam_width", e.synth.beam_width));
  e.synth.piece_width = c.get_int("eval.piece_width", c.get_int("synth.piece_width", e.synth.piece_width));
  e.validate();
  return e;
}

}  // namespace qdoor
