#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace blendnet::cli {

struct KeySpec {
  std::string section;
  std::string key;
  std::string default_value;  // empty means unset
  std::string help;
};

// Every key a config file may contain, in rendering order.
const std::vector<KeySpec>& all_keys();

// Sections a subcommand reads.
std::vector<std::string> sections_for(const std::string& command);

// Resolved values, keyed "section.key". Layers apply in order: defaults,
// config file, --set, named flags.
class RunConfig {
 public:
  explicit RunConfig(std::string command);

  // ConfigError on an unknown section or key, or a line that is not
  // "[section]" / "key = value".
  void load_file(const std::filesystem::path& path);
  // "section.key=value".
  void apply_assignment(const std::string& text);
  void set(const std::string& section, const std::string& key, const std::string& value);

  const std::string& command() const { return command_; }
  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  std::string str(const std::string& section, const std::string& key) const;  // ConfigError if unset
  double number(const std::string& section, const std::string& key) const;
  std::size_t count(const std::string& section, const std::string& key) const;
  bool flag(const std::string& section, const std::string& key) const;

  // The sections of this subcommand as a loadable config file.
  std::string render() const;

 private:
  std::string command_;
  std::map<std::string, std::string> values_;
};

// Help footer listing every key of a subcommand with its default.
std::string key_listing(const std::string& command);

}  // namespace blendnet::cli
