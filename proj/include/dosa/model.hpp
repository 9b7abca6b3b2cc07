#pragma once

#include <array>
#include <vector>

#include "dosa/arch.hpp"
#include "dosa/autodiff.hpp"
#include "dosa/mapping.hpp"
#include "dosa/workload.hpp"

// Closed-form traffic/latency/energy/EDP model, templated on the scalar
// type so the same expressions evaluate as plain doubles (reporting,
// oracle comparison) or as tape variables (gradient descent).

namespace dosa::model {

using ad::Var;

inline double value_of(double x) { return x; }
inline double value_of(const Var& v) { return v.value(); }

inline bool is_const_one(double x) { return x == 1.0; }
inline bool is_const_one(const Var& v) { return v.is_const() && v.cval == 1.0; }

template <class T>
inline void mul_in(T& acc, const T& x) {
  if (!is_const_one(x)) acc = acc * x;
}

template <class T>
inline T tmax(const T& a, const T& b);
template <>
inline double tmax(const double& a, const double& b) {
  return a >= b ? a : b;
}
template <>
inline Var tmax(const Var& a, const Var& b) {
  return ad::vmax(a, b);
}

// Factor-value predicate "> 1", recorded in the branch signature when
// evaluated on a tracked variable.
inline bool gt_one(double x) { return x > 1.0; }
inline bool gt_one(const Var& v) {
  bool b = v.value() > 1.0;
  if (v.tape) v.tape->note(b);
  return b;
}

template <class T>
struct Factors {
  std::array<T, 2 * kNumLevels * kNumDims> v;
  T& at(int k, int i, int d) { return v[(k * kNumLevels + i) * kNumDims + d]; }
  const T& at(int k, int i, int d) const {
    return v[(k * kNumLevels + i) * kNumDims + d];
  }

  MappingTensor to_tensor() const {
    MappingTensor m;
    for (std::size_t i = 0; i < v.size(); ++i) m.v[i] = value_of(v[i]);
    return m;
  }
};

inline Factors<double> from_tensor(const MappingTensor& m) {
  Factors<double> f;
  f.v = m.v;
  return f;
}

// Assembles the full factor grid from the 16 free entries: fixed slots
// become constants, DRAM temporal factors are derived as
// extent / prod(inner factors) so the product constraint holds exactly.
template <class T>
Factors<T> build_factors(const std::array<T, kNumFreeVars>& x,
                         const LayerShape& layer) {
  Factors<T> f;
  f.v.fill(T(1.0));
  f.at(kSpatial, 1, DimC) = x[0];
  f.at(kSpatial, 2, DimK) = x[1];
  for (int d = 0; d < kNumDims; ++d) {
    f.at(kTemporal, 1, d) = x[2 + d];
    f.at(kTemporal, 2, d) = x[9 + d];
  }
  for (int d = 0; d < kNumDims; ++d) {
    T inner(1.0);
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < kLevelDram; ++i) mul_in(inner, f.at(k, i, d));
    mul_in(inner, f.at(kSpatial, kLevelDram, d));
    f.at(kTemporal, kLevelDram, d) =
        T(static_cast<double>(layer.dims[d])) / inner;
  }
  return f;
}

// Tile footprint C_{i,t}: words of tensor t indexed by the loops at
// levels i..0, with the stride/halo expression for inputs.
template <class T>
T capacity(const Factors<T>& f, const LayerShape& layer, int level,
           int tensor) {
  T inner[kNumDims];
  for (int d = 0; d < kNumDims; ++d) {
    inner[d] = T(1.0);
    for (int k = 0; k < 2; ++k)
      for (int j = 0; j <= level; ++j) mul_in(inner[d], f.at(k, j, d));
  }
  if (tensor == TenI) {
    T c = inner[DimC] * inner[DimN];
    T ih = T(static_cast<double>(layer.pstride)) * (inner[DimP] - T(1.0)) +
           inner[DimR];
    T iw = T(static_cast<double>(layer.qstride)) * (inner[DimQ] - T(1.0)) +
           inner[DimS];
    return c * ih * iw;
  }
  T c(1.0);
  for (int d = 0; d < kNumDims; ++d)
    if (kRelevant[tensor][d]) mul_in(c, inner[d]);
  return c;
}

template <class T>
struct LayerTraffic {
  T writes[kNumLevels][kNumTensors];
  T reads[kNumLevels][kNumTensors];
  T updates[kNumLevels][kNumTensors];
  T accesses[kNumLevels];
  double macs = 0.0;
};

// Spatial reduction/broadcast factor F_{S,t}(i): product of spatial
// factors at level i over dims irrelevant to tensor t.
template <class T>
T spatial_irrelevant(const Factors<T>& f, int level, int tensor) {
  T p(1.0);
  for (int d = 0; d < kNumDims; ++d)
    if (!kRelevant[tensor][d]) mul_in(p, f.at(kSpatial, level, d));
  return p;
}

// Writes into level i for tensor t: the tile footprint times every
// factor outer to level i whose loop re-visits the tile — all relevant
// factors, plus irrelevant temporal loops that have a relevant temporal
// loop with factor > 1 somewhere inner to them.
template <class T>
T writes_for(const Factors<T>& f, const LayerShape& layer,
             const LoopOrdering& ord, int level, int tensor,
             const bool gt1[kNumLevels][kNumDims]) {
  T w = capacity(f, layer, level, tensor);
  for (int j = level + 1; j < kNumLevels; ++j) {
    // Any relevant temporal factor > 1 at levels strictly between i and j?
    bool rel_below = false;
    for (int jj = level + 1; jj < j; ++jj)
      for (int d = 0; d < kNumDims; ++d)
        if (kRelevant[tensor][d] && gt1[jj][d]) rel_below = true;
    std::array<int, kNumDims> order = level_dim_order(ord.level[j]);
    int pos[kNumDims];
    for (int p = 0; p < kNumDims; ++p) pos[order[p]] = p;
    for (int d = 0; d < kNumDims; ++d) {
      if (kRelevant[tensor][d]) {
        mul_in(w, f.at(kTemporal, j, d));
        mul_in(w, f.at(kSpatial, j, d));
      } else {
        bool rel_within = false;
        for (int d2 = 0; d2 < kNumDims; ++d2)
          if (kRelevant[tensor][d2] && pos[d2] > pos[d] && gt1[j][d2])
            rel_within = true;
        if (rel_below || rel_within) mul_in(w, f.at(kTemporal, j, d));
      }
    }
  }
  return w;
}

template <class T>
LayerTraffic<T> traffic(const Factors<T>& f, const LayerShape& layer,
                        const LoopOrdering& ord, const BypassMatrix& bypass) {
  LayerTraffic<T> tr;
  tr.macs = static_cast<double>(layer_macs(layer));
  // Evaluate every ">1" predicate once, in a fixed order, so the branch
  // signature has a stable length.
  bool gt1[kNumLevels][kNumDims];
  for (int j = 0; j < kNumLevels; ++j)
    for (int d = 0; d < kNumDims; ++d) gt1[j][d] = gt_one(f.at(kTemporal, j, d));

  for (int i = 0; i < kNumLevels; ++i)
    for (int t = 0; t < kNumTensors; ++t) {
      tr.writes[i][t] = T(0.0);
      tr.reads[i][t] = T(0.0);
      tr.updates[i][t] = T(0.0);
    }

  for (int t = 0; t < kNumTensors; ++t) {
    int innermost = bypass.innermost_level(t);
    for (int i = 0; i < kNumLevels; ++i) {
      if (!bypass.stored[i][t]) continue;
      tr.writes[i][t] = writes_for(f, layer, ord, i, t, gt1);
      T fs = spatial_irrelevant(f, i, t);
      if (i == innermost) {
        tr.reads[i][t] = T(tr.macs) / fs;
      } else {
        int inner = bypass.next_inner_level(i, t);
        tr.reads[i][t] = tr.writes[inner][t] / fs;
      }
      if (t == TenO) {
        if (i == innermost) {
          tr.updates[i][t] = T(tr.macs) / fs;
        } else {
          int inner = bypass.next_inner_level(i, t);
          tr.updates[i][t] = tr.writes[inner][t] / fs;
        }
      }
    }
  }
  for (int i = 0; i < kNumLevels; ++i) {
    T a(0.0);
    for (int t = 0; t < kNumTensors; ++t) {
      if (!bypass.stored[i][t]) continue;
      a = a + tr.reads[i][t] + tr.updates[i][t] + tr.writes[i][t];
    }
    tr.accesses[i] = a;
  }
  return tr;
}

// Hardware parameters as model scalars: either constants captured from
// a finalized ArchConfig or live expressions inferred from the factors.
template <class T>
struct HwParams {
  T pe_side;
  T acc_words;
  T sp_words;
};

template <class T>
HwParams<T> infer_hw(const std::vector<Factors<T>>& factors,
                     const std::vector<const LayerShape*>& layers) {
  HwParams<T> hw;
  hw.pe_side = T(1.0);
  hw.acc_words = T(1.0);
  hw.sp_words = T(1.0);
  for (std::size_t l = 0; l < factors.size(); ++l) {
    const auto& f = factors[l];
    hw.pe_side = tmax(hw.pe_side,
                      tmax(f.at(kSpatial, 1, DimC), f.at(kSpatial, 2, DimK)));
    hw.acc_words = tmax(hw.acc_words, capacity(f, *layers[l], kLevelAcc, TenO));
    hw.sp_words = tmax(hw.sp_words, capacity(f, *layers[l], kLevelSp, TenW) +
                                        capacity(f, *layers[l], kLevelSp, TenI));
  }
  return hw;
}

template <class T>
HwParams<T> fixed_hw(const ArchConfig& arch) {
  HwParams<T> hw;
  hw.pe_side = T(static_cast<double>(arch.pe_side));
  hw.acc_words = T(arch.acc_words_final());
  hw.sp_words = T(arch.sp_words_final());
  return hw;
}

template <class T>
T level_epa(const HwParams<T>& hw, const EnergyParams& e, int level) {
  switch (level) {
    case kLevelReg:
      return T(e.reg);
    case kLevelAcc:
      return T(e.acc_base) + T(e.acc_slope) * hw.acc_words / hw.pe_side;
    case kLevelSp:
      return T(e.sp_base) + T(e.sp_slope) * hw.sp_words;
    default:
      return T(e.dram);
  }
}

template <class T>
T level_bandwidth(const HwParams<T>& hw, double dram_bw, int level) {
  switch (level) {
    case kLevelReg:
      return T(2.0) * hw.pe_side * hw.pe_side;
    case kLevelAcc:
    case kLevelSp:
      return T(2.0) * hw.pe_side;
    default:
      return T(dram_bw);
  }
}

// max(compute latency, per-level access latency); exact max, so the
// gradient follows the binding resource.
template <class T>
T latency(const LayerTraffic<T>& tr, const Factors<T>& f,
          const HwParams<T>& hw, double dram_bw) {
  T spatial(1.0);
  for (int i = 0; i < kNumLevels; ++i)
    for (int d = 0; d < kNumDims; ++d) mul_in(spatial, f.at(kSpatial, i, d));
  T lat = T(tr.macs) / spatial;
  for (int i = 0; i < kNumLevels; ++i)
    lat = tmax(lat, tr.accesses[i] / level_bandwidth(hw, dram_bw, i));
  return lat;
}

template <class T>
T energy(const LayerTraffic<T>& tr, const HwParams<T>& hw,
         const EnergyParams& e) {
  T total = T(tr.macs) * T(e.pe);
  for (int i = 0; i < kNumLevels; ++i)
    total = total + tr.accesses[i] * level_epa(hw, e, i);
  return total;
}

// Penalty for sub-1 factors, summed over every grid entry including the
// derived DRAM factors.
template <class T>
T penalty(const Factors<T>& f) {
  T p(0.0);
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < kNumLevels; ++i)
      for (int d = 0; d < kNumDims; ++d)
        p = p + tmax(T(1.0) - f.at(k, i, d), T(0.0));
  return p;
}

struct ModelOptions {
  ArchTemplate templ;
  // When set, capacities/PE count come from this finalized configuration
  // instead of being inferred from the factors.
  const ArchConfig* fixed_arch = nullptr;
};

template <class T>
struct NetworkEval {
  T edp;
  T energy_sum;
  T latency_sum;
  std::vector<std::array<T, 2>> per_layer;  // {energy, latency}
  HwParams<T> hw;
};

template <class T>
NetworkEval<T> evaluate_network(const std::vector<Factors<T>>& factors,
                                const Network& net,
                                const std::vector<LoopOrdering>& ords,
                                const ModelOptions& opt) {
  std::vector<const LayerShape*> layers;
  for (const auto& e : net.layers) layers.push_back(&e.shape);
  NetworkEval<T> ev;
  ev.hw = opt.fixed_arch ? fixed_hw<T>(*opt.fixed_arch)
                         : infer_hw(factors, layers);
  ev.energy_sum = T(0.0);
  ev.latency_sum = T(0.0);
  for (std::size_t l = 0; l < factors.size(); ++l) {
    LayerTraffic<T> tr =
        traffic(factors[l], *layers[l], ords[l], opt.templ.bypass);
    T en = energy(tr, ev.hw, opt.templ.epa);
    T lat = latency(tr, factors[l], ev.hw, opt.templ.dram_bandwidth);
    ev.per_layer.push_back({en, lat});
    double rep = static_cast<double>(net.layers[l].repeat);
    ev.energy_sum = ev.energy_sum + T(rep) * en;
    ev.latency_sum = ev.latency_sum + T(rep) * lat;
  }
  ev.edp = ev.energy_sum * ev.latency_sum;
  return ev;
}

inline double ad_exp(double x) { return std::exp(x); }
inline Var ad_exp(const Var& v) { return ad::exp(v); }
inline double ad_log(double x) { return std::log(x); }
inline Var ad_log(const Var& v) { return ad::log(v); }

// Softmax-weighted ordering loss: per layer, the three canonical
// orderings applied uniformly across levels 1..3 are weighted by
// softmax of their inverse EDPs before the network sums are formed.
template <class T>
T softmax_ordering_loss(const std::vector<Factors<T>>& factors,
                        const Network& net, const ModelOptions& opt) {
  std::vector<const LayerShape*> layers;
  for (const auto& e : net.layers) layers.push_back(&e.shape);
  HwParams<T> hw = opt.fixed_arch ? fixed_hw<T>(*opt.fixed_arch)
                                  : infer_hw(factors, layers);
  T e_total(0.0), l_total(0.0);
  for (std::size_t l = 0; l < factors.size(); ++l) {
    std::vector<T> es, ls, inv;
    for (int o = 0; o < 3; ++o) {
      LoopOrdering ord;
      for (int i = 1; i < kNumLevels; ++i)
        ord.level[i] = static_cast<Ordering>(o);
      LayerTraffic<T> tr =
          traffic(factors[l], *layers[l], ord, opt.templ.bypass);
      T en = energy(tr, hw, opt.templ.epa);
      T lat = latency(tr, factors[l], hw, opt.templ.dram_bandwidth);
      es.push_back(en);
      ls.push_back(lat);
      inv.push_back(T(1.0) / (en * lat));
    }
    // softmax over inverse EDPs
    T m = tmax(inv[0], tmax(inv[1], inv[2]));
    std::vector<T> w(3);
    T s(0.0);
    for (int o = 0; o < 3; ++o) {
      w[o] = ad_exp(inv[o] - m);
      s = s + w[o];
    }
    double rep = static_cast<double>(net.layers[l].repeat);
    for (int o = 0; o < 3; ++o) {
      w[o] = w[o] / s;
      e_total = e_total + T(rep) * w[o] * es[o];
      l_total = l_total + T(rep) * w[o] * ls[o];
    }
  }
  return e_total * l_total;
}

}  // namespace dosa::model
