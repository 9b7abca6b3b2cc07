#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dosa/mapping.hpp"
#include "dosa/workload.hpp"

namespace dosa {

// Which tensors each memory level stores. Default: registers hold W,
// the accumulator holds O, the scratchpad holds W and I, DRAM holds all.
struct BypassMatrix {
  bool stored[kNumLevels][kNumTensors] = {
      {true, false, false},
      {false, false, true},
      {true, true, false},
      {true, true, true},
  };
  // Innermost level holding tensor t (smallest level index with B=1).
  int innermost_level(int tensor) const {
    for (int i = 0; i < kNumLevels; ++i)
      if (stored[i][tensor]) return i;
    return kNumLevels - 1;
  }
  // Largest level < i holding tensor t, or -1.
  int next_inner_level(int i, int tensor) const {
    for (int j = i - 1; j >= 0; --j)
      if (stored[j][tensor]) return j;
    return -1;
  }
};

// Energy-per-access parameters (abstract energy units, 40nm defaults).
struct EnergyParams {
  double pe = 0.561;
  double reg = 0.487;
  double acc_base = 1.94, acc_slope = 0.1005;  // + slope * C1 / sqrt(C_PE)
  double sp_base = 0.49, sp_slope = 0.025;     // + slope * C2
  double dram = 100.0;
};

struct ArchTemplate {
  int pe_cap_side = 128;
  double dram_bandwidth = 8.0;  // words/cycle
  // Word widths: 8-bit operands in registers/scratchpad, 32-bit partial
  // sums in the accumulator.
  int word_bytes[kNumLevels] = {1, 4, 1, 1};
  EnergyParams epa;
  BypassMatrix bypass;
};

ArchTemplate parse_arch_template(const std::string& text);
ArchTemplate load_arch_template(const std::string& path);
std::string serialize_arch_template(const ArchTemplate& t);

struct ArchConfig {
  ArchTemplate templ;
  int pe_side = 1;          // sqrt(C_PE)
  double acc_words = 1.0;   // exact parameter-wise max, before 1 KB rounding
  double sp_words = 1.0;
  std::int64_t acc_bytes = 1024;  // finalized, rounded up to 1 KB
  std::int64_t sp_bytes = 1024;
  bool pe_capped = false;   // some mapping needed more PEs than the cap
  // Index of the mapping attaining the max for each parameter.
  int pe_witness = 0, acc_witness = 0, sp_witness = 0;

  std::int64_t num_pes() const {
    return static_cast<std::int64_t>(pe_side) * pe_side;
  }
  // Finalized capacities in words (after byte rounding).
  double acc_words_final() const {
    return static_cast<double>(acc_bytes) / templ.word_bytes[kLevelAcc];
  }
  double sp_words_final() const {
    return static_cast<double>(sp_bytes) / templ.word_bytes[kLevelSp];
  }
};

struct CapacityReport {
  double words[kNumLevels][kNumTensors];  // C_{i,t}
  double total[kNumLevels];               // sum over stored tensors
};

// max(f_S,1,C, f_S,2,K)^2.
double pe_requirement(const MappingTensor& f);

// Per-level, per-tensor tile footprints C_{i,t}: the words of tensor t
// indexed by the loops at levels i..0 (inputs via the stride/halo
// expression). Defined over reals so continuous factors are accepted.
CapacityReport capacity_requirements(const MappingTensor& f,
                                     const LayerShape& layer);

// Parameter-wise max over mappings (Fig-3-style minimal hardware):
// PE side, accumulator C_{1,O}, scratchpad C_{2,W}+C_{2,I}; byte
// capacities rounded up to 1 KB.
ArchConfig infer_min_hw(const std::vector<LayerMapping>& mappings,
                        const std::vector<const LayerShape*>& layers,
                        const ArchTemplate& templ);

// EPA and bandwidth per level from the finalized configuration.
double epa(const ArchConfig& arch, int level);
double epa_pe(const ArchConfig& arch);
double bandwidth(const ArchConfig& arch, int level);

std::int64_t round_up_1kb(double bytes);

std::string serialize_arch(const ArchConfig& arch);
// Parses the "arch ..." record written by serialize_arch, using templ
// for the constants not stored per-design.
ArchConfig parse_arch(const std::string& text, const ArchTemplate& templ);

}  // namespace dosa
