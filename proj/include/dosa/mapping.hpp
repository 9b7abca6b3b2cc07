#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dosa/workload.hpp"

namespace dosa {

constexpr int kNumLevels = 4;  // 0 registers, 1 accumulator, 2 scratchpad, 3 DRAM
constexpr int kLevelReg = 0;
constexpr int kLevelAcc = 1;
constexpr int kLevelSp = 2;
constexpr int kLevelDram = 3;

// Clamp floor for continuous factors during optimization.
constexpr double kFactorEps = 1e-3;

// Per-level loop ordering. An X-stationary ordering places the dims of
// D_X outermost at that level, so the X tile held below stays resident
// while the remaining (irrelevant) dims iterate innermost. This is the
// ordering that minimizes tensor X's refetch traffic at that level.
enum class Ordering : int { WS = 0, IS = 1, OS = 2 };
constexpr const char* kOrderingNames[3] = {"WS", "IS", "OS"};

struct LoopOrdering {
  // Levels 1..3 carry a choice; level 0 has only factor-1 temporal loops.
  std::array<Ordering, kNumLevels> level{Ordering::WS, Ordering::WS,
                                         Ordering::WS, Ordering::WS};
  bool operator==(const LoopOrdering& o) const { return level == o.level; }
};

// Dim positions at one level under an ordering, outermost first.
// Stationary-tensor dims come first (outer), the rest innermost; within
// each group dims keep the canonical R,S,P,Q,C,K,N order.
std::array<int, kNumDims> level_dim_order(Ordering ord);

// Tiling-factor tensor f[k][i][d], k in {S,T}, i in {0..3}, d in {0..6}.
// Spatial factors are fixed at 1 everywhere except (level 1, C) and
// (level 2, K); DRAM temporal factors are derived, never free.
struct MappingTensor {
  std::array<double, 2 * kNumLevels * kNumDims> v;

  MappingTensor() { v.fill(1.0); }
  double& at(int k, int i, int d) {
    return v[(k * kNumLevels + i) * kNumDims + d];
  }
  double at(int k, int i, int d) const {
    return v[(k * kNumLevels + i) * kNumDims + d];
  }
};

constexpr int kSpatial = 0;
constexpr int kTemporal = 1;

// Free-variable packing for one layer:
//   [0]      f_S,1,C
//   [1]      f_S,2,K
//   [2..8]   f_T,1,{R,S,P,Q,C,K,N}
//   [9..15]  f_T,2,{R,S,P,Q,C,K,N}
// Level-0 temporal factors are fixed at 1 (one weight word per PE) and
// DRAM temporal factors are derived.
constexpr int kNumFreeVars = 16;

std::array<double, kNumFreeVars> pack_free(const MappingTensor& f);
void unpack_free(const std::array<double, kNumFreeVars>& x, MappingTensor* f);

struct LayerMapping {
  MappingTensor factors;
  LoopOrdering ordering;
};

// Fills f_T,3,d = extent(d) / prod of all other factors of d. Exact in
// real arithmetic; a derived factor < 1 signals an over-tiled dimension
// and is left in place for the penalty term to see.
void derive_dram_factors(MappingTensor* f, const LayerShape& layer);

// All free factors 1, DRAM factors = full extents, WS ordering everywhere.
LayerMapping uniform_mapping(const LayerShape& layer);

struct ValidationResult {
  bool valid = true;
  std::vector<std::string> diagnostics;
  explicit operator bool() const { return valid; }
};

// VALID means: every entry a positive integer, per-dimension factor
// products equal to the layer extents, and spatial factors 1 outside
// {(1,C),(2,K)}.
ValidationResult validate(const LayerMapping& m, const LayerShape& layer);

// Projects continuous factors onto a VALID integer mapping. Iterates
// levels innermost to outermost (0,1,2; spatial entry first, then
// temporal dims in R,S,P,Q,C,K,N order), replacing each factor by the
// nearest divisor of the dimension's remaining quotient so the running
// product can never exceed the extent; exact ties go to the smaller
// divisor. DRAM factors are then re-derived as integer quotients.
LayerMapping round_mapping(const MappingTensor& f, const LayerShape& layer,
                           const LoopOrdering& ordering);

// Structured-text record: 8 factor rows (S0,S1,S2,S3,T0..T3 of 7 ints)
// plus one ordering line.
std::string serialize_mapping(const LayerMapping& m);
LayerMapping parse_mapping(const std::string& text);

// Divisors of n in increasing order.
std::vector<std::int64_t> divisors(std::int64_t n);

// Nearest divisor of n to x; ties broken toward the smaller divisor.
std::int64_t nearest_divisor(std::int64_t n, double x);

}  // namespace dosa
