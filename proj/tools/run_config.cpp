#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "blendnet/errors.hpp"

namespace blendnet::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

const KeySpec* find_key(const std::string& section, const std::string& key) {
  for (const KeySpec& k : all_keys())
    if (k.section == section && k.key == key) return &k;
  return nullptr;
}

bool known_section(const std::string& section) {
  return std::any_of(all_keys().begin(), all_keys().end(), [&](const KeySpec& k) { return k.section == section; });
}

}  // namespace

const std::vector<KeySpec>& all_keys() {
  static const std::vector<KeySpec> keys = {
      {"gen", "task", "open_ended", "open_ended | count | multi_choice"},
      {"gen", "d", "32", "feature dimension"},
      {"gen", "clips", "2", "clips per video"},
      {"gen", "frames", "4", "frames per clip"},
      {"gen", "events", "4", "number of event types"},
      {"gen", "vocab", "4", "answer vocabulary size"},
      {"gen", "candidates", "5", "answer candidates (multi_choice)"},
      {"gen", "noise", "0.05", "per-component noise std"},
      {"gen", "samples", "200", "training samples"},
      {"gen", "val_samples", "0", "validation samples drawn from the same bank; > 0 writes <name>_train and <name>_val"},
      {"gen", "seed", "0", "generator seed"},
      {"gen", "name", "data", "output file base name"},

      {"data", "train", "", "training dataset base path"},
      {"data", "val", "", "validation dataset base path"},

      {"network", "sharing", "per_module", "per_module | per_level"},
      {"network", "attention", "component", "component | temporal"},
      {"network", "activation", "elu", "elu | relu"},
      {"network", "epsilon", "1e-05", "layer norm epsilon"},

      {"train", "lr", "0.0001", "base learning rate"},
      {"train", "epochs", "25", "epochs (total, including resumed ones)"},
      {"train", "batch", "128", "batch size"},
      {"train", "decay", "halve_every_5", "halve_every_5 | halve_every_3"},
      {"train", "optimizer", "adam", "adam | sgd"},
      {"train", "clip_norm", "5", "global gradient norm cap, 0 disables"},
      {"train", "seed", "0", "initialization and shuffling seed"},
      {"train", "max_steps", "0", "stop after this many steps, 0 = no cap"},

      {"multipliers", "clip.motion", "", "learning-rate multiplier"},
      {"multipliers", "clip.candidate", "", "learning-rate multiplier"},
      {"multipliers", "clip.question", "", "learning-rate multiplier"},
      {"multipliers", "video.motion", "", "learning-rate multiplier"},
      {"multipliers", "video.candidate", "", "learning-rate multiplier"},
      {"multipliers", "video.question", "", "learning-rate multiplier"},
      {"multipliers", "decoder", "", "learning-rate multiplier"},

      {"two_stage", "warm_epochs", "5", "warm-up stage epochs"},
      {"two_stage", "fine_epochs", "25", "fine-tune stage epochs"},

      {"eval", "checkpoint", "", "checkpoint file"},
      {"eval", "data", "", "dataset base path"},
      {"eval", "warm_up", "false", "evaluate with the warm-up decoders and no question"},

      {"gradcheck", "d", "8", "feature dimension"},
      {"gradcheck", "n", "6", "sequence length"},
      {"gradcheck", "seed", "0", "parameter seed"},
      {"gradcheck", "tolerance", "0.0001", "pass threshold on max relative error"},
      {"gradcheck", "corrupt", "", "test hook: perturb the analytic gradient of this parameter"},

      {"params", "d", "512", "feature dimension"},
      {"params", "clips", "8", "clips per video"},
      {"params", "frames", "16", "frames per clip"},
      {"params", "task", "open_ended", "open_ended | count | multi_choice"},
      {"params", "attention", "temporal", "component | temporal"},
      {"params", "sharing", "per_level", "per_module | per_level"},
      {"params", "tamper", "false", "test hook: reshape one parameter so the audit fails"},
  };
  return keys;
}

std::vector<std::string> sections_for(const std::string& command) {
  if (command == "gen") return {"gen"};
  if (command == "train") return {"data", "network", "train", "multipliers"};
  if (command == "train2") return {"data", "network", "train", "multipliers", "two_stage"};
  if (command == "eval") return {"eval"};
  if (command == "gradcheck") return {"gradcheck"};
  if (command == "params") return {"params"};
  throw UsageError("unknown subcommand " + command);
}

RunConfig::RunConfig(std::string command) : command_(std::move(command)) {
  for (const KeySpec& k : all_keys())
    if (!k.default_value.empty()) values_[k.section + "." + k.key] = k.default_value;
}

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
  if (!known_section(section)) throw ConfigError("unknown config section [" + section + "]");
  if (!find_key(section, key)) throw ConfigError("unknown config key '" + key + "' in [" + section + "]");
  if (value.empty())
    values_.erase(section + "." + key);
  else
    values_[section + "." + key] = value;
}

void RunConfig::apply_assignment(const std::string& text) {
  const auto eq = text.find('=');
  const std::string lhs = trim(text.substr(0, eq));
  const auto dot = lhs.find('.');
  if (eq == std::string::npos || dot == std::string::npos)
    throw ConfigError("expected section.key=value, got '" + text + "'");
  set(lhs.substr(0, dot), lhs.substr(dot + 1), trim(text.substr(eq + 1)));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  std::string line, section;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    const auto comment = line.find_first_of("#;");
    line = trim(line.substr(0, comment));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "bad section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (!known_section(section)) throw ConfigError(where + "unknown config section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of a section");
    try {
      set(section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

std::optional<std::string> RunConfig::get(const std::string& section, const std::string& key) const {
  auto it = values_.find(section + "." + key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string RunConfig::str(const std::string& section, const std::string& key) const {
  auto v = get(section, key);
  if (!v) throw ConfigError(section + "." + key + " is required");
  return *v;
}

double RunConfig::number(const std::string& section, const std::string& key) const {
  const std::string v = str(section, key);
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size() && std::isfinite(x)) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(section + "." + key + " is not a number: '" + v + "'");
}

std::size_t RunConfig::count(const std::string& section, const std::string& key) const {
  const std::string v = str(section, key);
  std::size_t x = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || end != v.data() + v.size())
    throw ConfigError(section + "." + key + " is not a nonnegative integer: '" + v + "'");
  return x;
}

bool RunConfig::flag(const std::string& section, const std::string& key) const {
  const std::string v = str(section, key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(section + "." + key + " must be true or false, got '" + v + "'");
}

std::string RunConfig::render() const {
  std::ostringstream out;
  out << "# resolved config for '" << command_ << "'\n";
  for (const std::string& section : sections_for(command_)) {
    out << "\n[" << section << "]\n";
    for (const KeySpec& k : all_keys())
      if (k.section == section) out << k.key << " = " << get(section, k.key).value_or("") << '\n';
  }
  return out.str();
}

std::string key_listing(const std::string& command) {
  std::ostringstream out;
  out << "Config keys (file sections, or --set section.key=value):\n";
  for (const std::string& section : sections_for(command)) {
    out << "  [" << section << "]\n";
    for (const KeySpec& k : all_keys()) {
      if (k.section != section) continue;
      std::string left = "    " + k.key + " = " + (k.default_value.empty() ? "(unset)" : k.default_value);
      if (left.size() < 36) left.resize(36, ' ');
      out << left << "  " << k.help << '\n';
    }
  }
  return out.str();
}

}  // namespace blendnet::cli
