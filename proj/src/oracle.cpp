#include "dosa/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

namespace dosa::oracle {

namespace {

int int_factor(double v) { return static_cast<int>(std::llround(v)); }

// One concrete temporal loop of the nest, outermost first.
struct Loop {
  int level;
  int dim;
  int extent;
};

std::vector<Loop> build_nest(const MappingTensor& f, const LoopOrdering& ord) {
  std::vector<Loop> nest;
  for (int j = kNumLevels - 1; j >= 1; --j) {
    std::array<int, kNumDims> order = level_dim_order(ord.level[j]);
    for (int d : order) {
      int e = int_factor(f.at(kTemporal, j, d));
      if (e > 1) nest.push_back({j, d, e});
    }
  }
  return nest;
}

}  // namespace

std::int64_t tile_words(const MappingTensor& f, const LayerShape& layer,
                        int level, int tensor) {
  // Per-dimension index extents from all loops (temporal and spatial)
  // at levels <= level.
  std::int64_t ext[kNumDims];
  for (int d = 0; d < kNumDims; ++d) {
    std::int64_t e = 1;
    for (int k = 0; k < 2; ++k)
      for (int j = 0; j <= level; ++j) e *= int_factor(f.at(k, j, d));
    ext[d] = e;
  }
  if (tensor == TenI) {
    // Input tiles are filled as the contiguous span covering every
    // coordinate the window touches (a strided fetch still transfers
    // the bounding rows/columns).
    std::set<std::int64_t> rows, cols;
    for (std::int64_t p = 0; p < ext[DimP]; ++p)
      for (std::int64_t r = 0; r < ext[DimR]; ++r)
        rows.insert(p * layer.pstride + r);
    for (std::int64_t q = 0; q < ext[DimQ]; ++q)
      for (std::int64_t s = 0; s < ext[DimS]; ++s)
        cols.insert(q * layer.qstride + s);
    std::int64_t row_span = *rows.rbegin() - *rows.begin() + 1;
    std::int64_t col_span = *cols.rbegin() - *cols.begin() + 1;
    return ext[DimC] * ext[DimN] * row_span * col_span;
  }
  std::int64_t words = 1;
  for (int d = 0; d < kNumDims; ++d)
    if (kRelevant[tensor][d]) words *= ext[d];
  return words;
}

TrafficReport simulate_traffic(const LayerMapping& m, const LayerShape& layer,
                               const BypassMatrix& bypass) {
  ValidationResult vr = validate(m, layer);
  if (!vr) {
    std::string msg = "simulate_traffic: invalid mapping";
    for (const auto& d : vr.diagnostics) msg += "; " + d;
    throw ValidationError(msg);
  }
  const MappingTensor& f = m.factors;
  std::vector<Loop> nest = build_nest(f, m.ordering);

  std::int64_t iters = 1;
  for (const Loop& l : nest) {
    iters *= l.extent;
    if (iters > kMaxIterations)
      throw std::runtime_error(
          "simulate_traffic: temporal iteration space exceeds cap");
  }

  // Spatial factor products per tensor: relevant (replicated tiles fed
  // in parallel) and irrelevant (broadcast/reduction fan) at levels > i.
  auto spatial_rel_above = [&](int level, int tensor) {
    double p = 1.0;
    for (int j = level + 1; j < kNumLevels; ++j)
      for (int d = 0; d < kNumDims; ++d)
        if (kRelevant[tensor][d]) p *= f.at(kSpatial, j, d);
    return p;
  };
  auto spatial_irrel_at = [&](int level, int tensor) {
    double p = 1.0;
    for (int d = 0; d < kNumDims; ++d)
      if (!kRelevant[tensor][d]) p *= f.at(kSpatial, level, d);
    return p;
  };

  // Count maximal runs of a constant tile per stored (level, tensor) by
  // walking the loop nest as an odometer and watching the relevant
  // outer-loop indices.
  int n_loops = static_cast<int>(nest.size());
  std::vector<int> idx(n_loops, 0);
  // runs[i][t]; prev[i][t] = last seen relevant index tuple (flattened).
  std::int64_t runs[kNumLevels][kNumTensors] = {};
  std::vector<std::vector<std::vector<int>>> prev(
      kNumLevels, std::vector<std::vector<int>>(kNumTensors));

  bool done = false;
  while (!done) {
    for (int i = 0; i < kNumLevels; ++i)
      for (int t = 0; t < kNumTensors; ++t) {
        if (!bypass.stored[i][t]) continue;
        std::vector<int> key;
        for (int l = 0; l < n_loops; ++l)
          if (nest[l].level > i && kRelevant[t][nest[l].dim])
            key.push_back(idx[l]);
        if (prev[i][t].empty() && runs[i][t] == 0) {
          runs[i][t] = 1;
          prev[i][t] = key;
        } else if (key != prev[i][t]) {
          ++runs[i][t];
          prev[i][t] = key;
        }
      }
    // Odometer step, innermost loop fastest.
    done = true;
    for (int l = n_loops - 1; l >= 0; --l) {
      if (++idx[l] < nest[l].extent) {
        done = false;
        break;
      }
      idx[l] = 0;
    }
  }

  TrafficReport tr{};
  tr.macs = static_cast<double>(layer_macs(layer));
  for (int i = 0; i < kNumLevels; ++i)
    for (int t = 0; t < kNumTensors; ++t) {
      tr.writes[i][t] = 0.0;
      tr.reads[i][t] = 0.0;
      tr.updates[i][t] = 0.0;
    }
  for (int t = 0; t < kNumTensors; ++t) {
    int innermost = bypass.innermost_level(t);
    for (int i = 0; i < kNumLevels; ++i) {
      if (!bypass.stored[i][t]) continue;
      tr.writes[i][t] = static_cast<double>(runs[i][t]) *
                        static_cast<double>(tile_words(f, layer, i, t)) *
                        spatial_rel_above(i, t);
      double fs = spatial_irrel_at(i, t);
      if (i == innermost) {
        tr.reads[i][t] = tr.macs / fs;
        if (t == TenO) tr.updates[i][t] = tr.macs / fs;
      } else {
        int inner = bypass.next_inner_level(i, t);
        tr.reads[i][t] = tr.writes[inner][t] / fs;
        if (t == TenO) tr.updates[i][t] = tr.writes[inner][t] / fs;
      }
    }
  }
  for (int i = 0; i < kNumLevels; ++i) {
    double a = 0.0;
    for (int t = 0; t < kNumTensors; ++t)
      if (bypass.stored[i][t])
        a += tr.reads[i][t] + tr.updates[i][t] + tr.writes[i][t];
    tr.accesses[i] = a;
  }
  return tr;
}

double max_rel_err(const TrafficReport& a, const TrafficReport& b,
                   const BypassMatrix& bypass) {
  auto rel = [](double x, double y) {
    double denom = std::max({std::abs(x), std::abs(y), 1.0});
    return std::abs(x - y) / denom;
  };
  double worst = 0.0;
  for (int i = 0; i < kNumLevels; ++i) {
    for (int t = 0; t < kNumTensors; ++t) {
      if (!bypass.stored[i][t]) continue;
      worst = std::max(worst, rel(a.writes[i][t], b.writes[i][t]));
      worst = std::max(worst, rel(a.reads[i][t], b.reads[i][t]));
      worst = std::max(worst, rel(a.updates[i][t], b.updates[i][t]));
    }
    worst = std::max(worst, rel(a.accesses[i], b.accesses[i]));
  }
  return worst;
}

}  // namespace dosa::oracle
