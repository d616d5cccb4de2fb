#include "blendnet/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "blendnet/errors.hpp"
#include "blendnet/serialize.hpp"

namespace blendnet {

namespace {
constexpr const char* kMagic = "blendnet-checkpoint 1";
}

void Checkpoint::set(const std::string& key, const std::string& value) {
  if (key.find('=') != std::string::npos || key.find('\n') != std::string::npos ||
      value.find('\n') != std::string::npos) {
    throw UsageError("checkpoint header entries must be single-line key=value, got key '" + key + "'");
  }
  for (auto& [k, v] : header) {
    if (k == key) {
      v = value;
      return;
    }
  }
  header.emplace_back(key, value);
}

const std::string& Checkpoint::get(const std::string& key) const {
  for (const auto& [k, v] : header)
    if (k == key) return v;
  throw FormatError("checkpoint header has no '" + key + "' entry");
}

bool Checkpoint::has(const std::string& key) const {
  for (const auto& [k, v] : header)
    if (k == key) return true;
  return false;
}

const Matrix<float>& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return m;
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

void Checkpoint::write(std::ostream& out) const {
  out << kMagic << '\n';
  for (const auto& [k, v] : header) out << k << '=' << v << '\n';
  for (const auto& [name, m] : tensors) out << "tensor=" << name << '\n';
  out << "end\n";
  for (const auto& [name, m] : tensors) write_tensor(out, m);
}

Checkpoint Checkpoint::read(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw FormatError("not a blendnet checkpoint");
  Checkpoint ck;
  std::vector<std::string> names;
  while (true) {
    if (!std::getline(in, line)) throw FormatError("checkpoint header is not terminated");
    if (line == "end") break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed checkpoint header line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "tensor") {
      names.push_back(value);
    } else {
      ck.header.emplace_back(key, value);
    }
  }
  for (const std::string& name : names) {
    try {
      ck.tensors.emplace_back(name, read_tensor<float>(in));
    } catch (const FormatError& e) {
      throw FormatError("checkpoint tensor '" + name + "': " + e.what());
    }
  }
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write(out);
  if (!out) throw Error("failed writing " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read(in);
}

}  // namespace blendnet
