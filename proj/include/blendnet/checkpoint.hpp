#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "blendnet/matrix.hpp"

namespace blendnet {

// On-disk container: a text header of key=value lines followed by tensor
// payloads in the order their names are listed.
//
//   blendnet-checkpoint 1
//   <key>=<value>          (any number)
//   tensor=<name>          (one per payload, in payload order)
//   end
//   <payloads>
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<std::pair<std::string, Matrix<float>>> tensors;

  void set(const std::string& key, const std::string& value);
  // Throws FormatError when the key is absent.
  const std::string& get(const std::string& key) const;
  bool has(const std::string& key) const;

  template <typename T>
  void add(const std::string& name, const Matrix<T>& m) {
    tensors.emplace_back(name, m.template cast<float>());
  }
  // Throws FormatError when absent.
  const Matrix<float>& tensor(const std::string& name) const;

  void write(std::ostream& out) const;
  static Checkpoint read(std::istream& in);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace blendnet
