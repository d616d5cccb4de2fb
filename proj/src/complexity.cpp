#include "blendnet/complexity.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "blendnet/errors.hpp"

namespace blendnet {

std::uint64_t count_conv(std::uint64_t c_in, std::uint64_t s, std::uint64_t c_out, bool bias) {
  if (c_in == 0 || s == 0 || c_out == 0) throw UsageError("count_conv arguments must be >= 1");
  return c_in * s * c_out + (bias ? c_out : 0);
}

std::uint64_t count_linear(std::uint64_t l_in, std::uint64_t l_out, bool bias) {
  if (l_in == 0 || l_out == 0) throw UsageError("count_linear arguments must be >= 1");
  return l_in * l_out + (bias ? l_out : 0);
}

GnnmPartCounts count_gnnm_parts(const GnnmConfig& config) {
  config.validate();
  const std::uint64_t d = config.d;
  // Attention runs over components (length n) or over time (length d).
  const std::uint64_t len = config.attention_variant == AttentionVariant::component ? config.n : d;
  GnnmPartCounts p;
  p.conv = count_conv(1, 3, 1, false);
  p.atten = 4 * count_linear(len, len / 2, false);
  p.hybrid = count_linear(d, d, false) + 2 * count_linear(2 * d, d, false);
  p.layernorm = 3 * 2 * d;
  return p;
}

std::uint64_t count_gnnm_params(const GnnmConfig& config) { return count_gnnm_parts(config).total(); }

SpaceBound space_lower_bound(std::uint64_t m) {
  SpaceBound b;
  b.slots = 2 * m + 1;
  b.bytes = b.slots * 4;
  return b;
}

template <typename T>
CountReport audit_network(const SharingRegistry<T>& registry, std::uint64_t decoder_scalars) {
  CountReport r;
  r.physical_sets = registry.sets.size();
  r.decoder_total = decoder_scalars;
  for (const LogicalSlot& slot : registry.slots) {
    ModuleCount m;
    m.slot = slot.name();
    m.physical = slot.physical;
    m.parts = count_gnnm_parts(registry.set_configs.at(slot.physical));
    m.formula = m.parts.total();
    m.enumerated = registry.sets.at(slot.physical).scalar_count();
    if (m.formula != m.enumerated) {
      r.mismatches.push_back(m.slot + ": formula " + std::to_string(m.formula) + " != enumerated " +
                             std::to_string(m.enumerated));
    }
    r.logical_total += m.formula;
    r.modules.push_back(m);
  }
  for (std::size_t p = 0; p < registry.sets.size(); ++p) {
    const std::uint64_t formula = count_gnnm_params(registry.set_configs[p]);
    const std::uint64_t enumerated = registry.sets[p].scalar_count();
    if (formula != enumerated) {
      r.mismatches.push_back("set " + std::to_string(p) + ": formula " + std::to_string(formula) +
                             " != enumerated " + std::to_string(enumerated));
    }
    r.physical_total += formula;
  }
  r.space = space_lower_bound(r.physical_total);
  return r;
}

std::string CountReport::table() const {
  std::vector<std::vector<std::string>> rows = {{"slot", "set", "conv", "atten", "hybrid", "layernorm", "total"}};
  for (const ModuleCount& m : modules) {
    rows.push_back({m.slot, std::to_string(m.physical), std::to_string(m.parts.conv), std::to_string(m.parts.atten),
                    std::to_string(m.parts.hybrid), std::to_string(m.parts.layernorm), std::to_string(m.formula)});
  }
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());

  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == 0) {
        out << row[c] << std::string(width[c] - row[c].size(), ' ');
      } else {
        out << "  " << std::string(width[c] - row[c].size(), ' ') << row[c];
      }
    }
    out << '\n';
  }
  out << "logical total   " << logical_total << '\n';
  out << "physical total  " << physical_total << " (" << physical_sets << " sets)\n";
  out << "space bound     " << space.slots << " slots, " << space.bytes << " bytes\n";
  out << "decoder         " << decoder_total << '\n';
  for (const std::string& m : mismatches) out << "MISMATCH " << m << '\n';
  return out.str();
}

std::string CountReport::key_values() const {
  std::ostringstream out;
  for (const ModuleCount& m : modules) {
    out << "module." << m.slot << ".set=" << m.physical << '\n';
    out << "module." << m.slot << ".conv=" << m.parts.conv << '\n';
    out << "module." << m.slot << ".atten=" << m.parts.atten << '\n';
    out << "module." << m.slot << ".hybrid=" << m.parts.hybrid << '\n';
    out << "module." << m.slot << ".layernorm=" << m.parts.layernorm << '\n';
    out << "module." << m.slot << ".total=" << m.formula << '\n';
    out << "module." << m.slot << ".enumerated=" << m.enumerated << '\n';
  }
  out << "physical_sets=" << physical_sets << '\n';
  out << "logical_total=" << logical_total << '\n';
  out << "physical_total=" << physical_total << '\n';
  out << "space_slots=" << space.slots << '\n';
  out << "space_bytes=" << space.bytes << '\n';
  out << "decoder_total=" << decoder_total << '\n';
  out << "mismatches=" << mismatches.size() << '\n';
  return out.str();
}

template CountReport audit_network(const SharingRegistry<float>&, std::uint64_t);
template CountReport audit_network(const SharingRegistry<double>&, std::uint64_t);

}  // namespace blendnet
