#pragma once

#include "dosa/mapping.hpp"
#include "dosa/rng.hpp"

// Random valid mappings: each dimension's extent is split into a chain
// of divisors across the free slots (innermost first), so the factor
// product always equals the extent.

namespace dosa {

inline std::int64_t random_divisor(Rng& rng, std::int64_t n) {
  auto divs = divisors(n);
  return divs[rng.below(divs.size())];
}

inline LoopOrdering random_ordering(Rng& rng) {
  LoopOrdering ord;
  for (int i = 1; i < kNumLevels; ++i)
    ord.level[i] = static_cast<Ordering>(rng.below(3));
  return ord;
}

inline LayerMapping random_mapping(Rng& rng, const LayerShape& layer,
                                   int max_spatial = 128) {
  LayerMapping m;
  for (int d = 0; d < kNumDims; ++d) {
    std::int64_t rem = layer.dims[d];
    if (d == DimC) {
      std::int64_t s = random_divisor(rng, rem);
      while (s > max_spatial) s = random_divisor(rng, rem);
      m.factors.at(kSpatial, 1, DimC) = static_cast<double>(s);
      rem /= s;
    }
    std::int64_t t1 = random_divisor(rng, rem);
    m.factors.at(kTemporal, 1, d) = static_cast<double>(t1);
    rem /= t1;
    if (d == DimK) {
      std::int64_t s = random_divisor(rng, rem);
      while (s > max_spatial) s = random_divisor(rng, rem);
      m.factors.at(kSpatial, 2, DimK) = static_cast<double>(s);
      rem /= s;
    }
    std::int64_t t2 = random_divisor(rng, rem);
    m.factors.at(kTemporal, 2, d) = static_cast<double>(t2);
    rem /= t2;
    m.factors.at(kTemporal, kLevelDram, d) = static_cast<double>(rem);
  }
  m.ordering = random_ordering(rng);
  return m;
}

}  // namespace dosa
