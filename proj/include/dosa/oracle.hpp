#pragma once

#include <cstdint>

#include "dosa/perfmodel.hpp"

// Brute-force loop-nest simulator. Traffic is counted by walking the
// concrete temporal iteration space and detecting tile changes, and
// tile footprints by enumerating distinct tensor coordinates — no reuse
// of the closed-form expressions, so the two paths can be compared.

namespace dosa::oracle {

inline constexpr std::int64_t kMaxIterations = 10'000'000;

// Distinct words of tensor t touched by the loops at levels <= level.
// Counts actual coordinates (for inputs: c, n, p*stride+r, q*stride+s).
std::int64_t tile_words(const MappingTensor& f, const LayerShape& layer,
                        int level, int tensor);

// Simulated per-level access counts for an integral mapping. Throws
// ValidationError for a non-integral or inconsistent mapping and
// runtime_error when the temporal iteration space exceeds
// kMaxIterations.
TrafficReport simulate_traffic(const LayerMapping& m, const LayerShape& layer,
                               const BypassMatrix& bypass);

// Largest relative error between two traffic reports across every
// stored (level, tensor) writes/reads/updates entry and the per-level
// access totals.
double max_rel_err(const TrafficReport& a, const TrafficReport& b,
                   const BypassMatrix& bypass);

}  // namespace dosa::oracle
