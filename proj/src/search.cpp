#include "dosa/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "dosa/adam.hpp"
#include "dosa/format.hpp"
#include "dosa/model.hpp"
#include "dosa/sampling.hpp"

namespace dosa::search {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kNone:
      return "none";
    case Strategy::kIterative:
      return "iterative";
    case Strategy::kSoftmax:
      return "softmax";
  }
  return "?";
}

bool parse_strategy(const std::string& name, Strategy* out) {
  for (Strategy s :
       {Strategy::kNone, Strategy::kIterative, Strategy::kSoftmax})
    if (name == strategy_name(s)) {
      *out = s;
      return true;
    }
  return false;
}

void SearchConfig::validate() const {
  if (n_start_points < 1) throw std::invalid_argument("need >= 1 start point");
  if (steps_per_start < 1) throw std::invalid_argument("need >= 1 step");
  if (rounding_period < 1 || rounding_period > steps_per_start)
    throw std::invalid_argument(
        "rounding period must be in [1, steps_per_start]");
  if (lr <= 0.0) throw std::invalid_argument("learning rate must be > 0");
}

ArchConfig random_hw(Rng& rng, const ArchTemplate& templ) {
  ArchConfig cfg;
  cfg.templ = templ;
  cfg.pe_side = 1 << rng.below(8);  // powers of two up to 128
  double lo = std::log(1024.0), hi = std::log(1024.0 * 1024.0);
  cfg.acc_bytes = round_up_1kb(std::exp(rng.uniform(lo, hi)));
  cfg.sp_bytes = round_up_1kb(std::exp(rng.uniform(lo, hi)));
  cfg.acc_words = cfg.acc_words_final();
  cfg.sp_words = cfg.sp_words_final();
  return cfg;
}

std::vector<LayerMapping> heuristic_start_mappings(const Network& net,
                                                   const ArchConfig& arch_seed,
                                                   Rng& rng) {
  std::vector<LayerMapping> maps;
  for (const auto& entry : net.layers) {
    const LayerShape& l = entry.shape;
    LayerMapping m;
    // Saturate the spatial factors up to the PE side.
    auto largest_fit = [&](std::int64_t n, std::int64_t cap) {
      std::int64_t best = 1;
      for (std::int64_t d : divisors(n))
        if (d <= cap) best = d;
      return best;
    };
    m.factors.at(kSpatial, 1, DimC) = static_cast<double>(
        largest_fit(l.dims[DimC], arch_seed.pe_side));
    m.factors.at(kSpatial, 2, DimK) = static_cast<double>(
        largest_fit(l.dims[DimK], arch_seed.pe_side));
    derive_dram_factors(&m.factors, l);

    // Grow temporal factors innermost-first while the accumulator and
    // scratchpad requirements still fit the seed hardware. Growth order
    // is shuffled per layer so different seeds explore different tilings.
    struct Slot {
      int level, dim;
    };
    std::vector<Slot> slots = {{1, DimP}, {1, DimQ}, {1, DimN}, {2, DimC},
                               {2, DimK}, {2, DimR}, {2, DimS}};
    for (std::size_t i = slots.size(); i > 1; --i)
      std::swap(slots[i - 1], slots[rng.below(i)]);

    auto fits = [&](const MappingTensor& f) {
      CapacityReport cap = capacity_requirements(f, l);
      return cap.words[kLevelAcc][TenO] <= arch_seed.acc_words_final() &&
             cap.words[kLevelSp][TenW] + cap.words[kLevelSp][TenI] <=
                 arch_seed.sp_words_final();
    };
    bool grew = true;
    while (grew) {
      grew = false;
      for (const Slot& s : slots) {
        std::int64_t rem = static_cast<std::int64_t>(
            m.factors.at(kTemporal, kLevelDram, s.dim));
        if (rem <= 1) continue;
        std::int64_t p = 2;
        while (rem % p != 0) ++p;  // smallest prime factor
        MappingTensor trial = m.factors;
        trial.at(kTemporal, s.level, s.dim) *= static_cast<double>(p);
        trial.at(kTemporal, kLevelDram, s.dim) /= static_cast<double>(p);
        if (fits(trial)) {
          m.factors = trial;
          grew = true;
        }
      }
    }
    maps.push_back(m);  // WS ordering everywhere by default
  }
  return maps;
}

bool reject_start_point(double candidate_edp, double best_edp) {
  return std::isfinite(best_edp) && candidate_edp > 10.0 * best_edp;
}

double evaluate_rounded(const std::vector<LayerMapping>& mappings,
                        const Network& net, const ArchTemplate& templ,
                        ArchConfig* arch_out) {
  std::vector<const LayerShape*> layers;
  for (const auto& e : net.layers) layers.push_back(&e.shape);
  ArchConfig arch = infer_min_hw(mappings, layers, templ);
  NetworkPerf perf = estimate_network(mappings, net, arch);
  if (arch_out) *arch_out = arch;
  return perf.edp;
}

namespace {

// Per-layer exhaustive ordering selection against the (fixed) inferred
// hardware: a combination is adopted only when it strictly lowers the
// network EDP, so the result can never be worse than the input.
void sweep_orderings(std::vector<LayerMapping>* maps, const Network& net,
                     const ArchConfig& arch, bool uniform_only) {
  std::size_t n = maps->size();
  std::vector<double> energy(n), latency(n);
  double sum_e = 0.0, sum_l = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    PerfEstimate est =
        estimate_layer((*maps)[l], net.layers[l].shape, arch);
    double rep = static_cast<double>(net.layers[l].repeat);
    energy[l] = rep * est.energy;
    latency[l] = rep * est.latency;
    sum_e += energy[l];
    sum_l += latency[l];
  }
  int n_combos = uniform_only ? 3 : 27;
  for (std::size_t l = 0; l < n; ++l) {
    double best_edp = sum_e * sum_l;
    LoopOrdering best_ord = (*maps)[l].ordering;
    double best_e = energy[l], best_lat = latency[l];
    for (int c = 0; c < n_combos; ++c) {
      LoopOrdering ord;
      if (uniform_only) {
        for (int i = 1; i < kNumLevels; ++i)
          ord.level[i] = static_cast<Ordering>(c);
      } else {
        ord.level[1] = static_cast<Ordering>(c % 3);
        ord.level[2] = static_cast<Ordering>((c / 3) % 3);
        ord.level[3] = static_cast<Ordering>(c / 9);
      }
      LayerMapping trial = (*maps)[l];
      trial.ordering = ord;
      PerfEstimate est = estimate_layer(trial, net.layers[l].shape, arch);
      double rep = static_cast<double>(net.layers[l].repeat);
      double e = rep * est.energy, lat = rep * est.latency;
      double edp = (sum_e - energy[l] + e) * (sum_l - latency[l] + lat);
      if (edp < best_edp) {
        best_edp = edp;
        best_ord = ord;
        best_e = e;
        best_lat = lat;
      }
    }
    sum_e += best_e - energy[l];
    sum_l += best_lat - latency[l];
    energy[l] = best_e;
    latency[l] = best_lat;
    (*maps)[l].ordering = best_ord;
  }
}

// log(objective) + sub-1 penalty over the concatenated free variables.
// The log keeps the descent scale-free so the unit-slope penalty is not
// drowned by EDP magnitudes.
ad::ObjectiveFn make_objective(const Network& net, Strategy strat,
                               const ArchTemplate& templ) {
  return [&net, strat, templ](ad::Tape&,
                              const std::vector<ad::Var>& xs) -> ad::Var {
    std::vector<model::Factors<ad::Var>> factors;
    std::vector<LoopOrdering> ords(net.layers.size());
    ad::Var pen(0.0);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      std::array<ad::Var, kNumFreeVars> x;
      for (int j = 0; j < kNumFreeVars; ++j)
        x[j] = xs[l * kNumFreeVars + j];
      factors.push_back(model::build_factors(x, net.layers[l].shape));
      pen = pen + model::penalty(factors.back());
    }
    model::ModelOptions opt;
    opt.templ = templ;
    ad::Var base =
        strat == Strategy::kSoftmax
            ? model::softmax_ordering_loss(factors, net, opt)
            : model::evaluate_network(factors, net, ords, opt).edp;
    return model::ad_log(base) + pen;
  };
}

std::vector<LayerMapping> round_all(const std::vector<double>& x,
                                    const Network& net) {
  std::vector<LayerMapping> maps;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    std::array<double, kNumFreeVars> xs;
    for (int j = 0; j < kNumFreeVars; ++j) xs[j] = x[l * kNumFreeVars + j];
    MappingTensor f;
    unpack_free(xs, &f);
    maps.push_back(round_mapping(f, net.layers[l].shape, LoopOrdering{}));
  }
  return maps;
}

struct Bounds {
  std::vector<double> lo, hi;
};

Bounds factor_bounds(const Network& net, int max_spatial) {
  Bounds b;
  for (const auto& e : net.layers) {
    auto push = [&](double hi) {
      b.lo.push_back(kFactorEps);
      b.hi.push_back(hi);
    };
    push(std::min<double>(e.shape.dims[DimC], max_spatial));
    push(std::min<double>(e.shape.dims[DimK], max_spatial));
    for (int d = 0; d < kNumDims; ++d)
      push(static_cast<double>(e.shape.dims[d]));
    for (int d = 0; d < kNumDims; ++d)
      push(static_cast<double>(e.shape.dims[d]));
  }
  return b;
}

void clamp(std::vector<double>* x, const Bounds& b) {
  for (std::size_t i = 0; i < x->size(); ++i)
    (*x)[i] = std::min(b.hi[i], std::max(b.lo[i], (*x)[i]));
}

void record(SearchResult* res, int start_point, int step,
            const std::vector<LayerMapping>& maps, const ArchConfig& arch,
            double edp) {
  ++res->evals_used;
  if (edp < res->best_edp) {
    res->best_edp = edp;
    res->best_mappings = maps;
    res->best_arch = arch;
  }
  TraceEntry e;
  e.eval_index = res->evals_used;
  e.start_point = start_point;
  e.step = step;
  e.model_edp = edp;
  e.best_edp = res->best_edp;
  e.arch = arch;
  e.mappings = maps;
  res->trace.push_back(std::move(e));
}

}  // namespace

SearchResult run_gd(const Network& net, const SearchConfig& config) {
  config.validate();
  if (net.layers.empty())
    throw std::invalid_argument("run_gd: network has no layers");
  Rng rng(config.seed);
  SearchResult res;
  res.best_edp = kInf;
  res.start_edp = kInf;
  Bounds bounds = factor_bounds(net, config.templ.pe_cap_side);
  ad::ObjectiveFn objective =
      make_objective(net, config.strategy, config.templ);

  auto budget_left = [&] {
    return config.eval_budget < 0 || res.evals_used < config.eval_budget;
  };

  int sp = 0;
  while (budget_left() &&
         (config.eval_budget >= 0 || sp < config.n_start_points)) {
    ArchConfig seed_hw = random_hw(rng, config.templ);
    std::vector<LayerMapping> maps =
        heuristic_start_mappings(net, seed_hw, rng);
    ArchConfig arch;
    double edp0 = evaluate_rounded(maps, net, config.templ, &arch);
    bool rejected = reject_start_point(edp0, res.start_edp);
    record(&res, sp, 0, maps, arch, edp0);
    if (!rejected) res.start_edp = std::min(res.start_edp, edp0);
    if (rejected || !budget_left()) {
      ++sp;
      continue;
    }

    std::vector<double> x;
    for (const auto& m : maps) {
      auto xs = pack_free(m.factors);
      x.insert(x.end(), xs.begin(), xs.end());
    }
    Adam opt(x.size(), config.lr, config.beta1, config.beta2);
    for (int step = 1; step <= config.steps_per_start && budget_left();
         ++step) {
      ad::EvalResult er = ad::grad(objective, x);
      opt.step(x, er.grad);
      clamp(&x, bounds);
      if (step % config.rounding_period == 0 ||
          step == config.steps_per_start) {
        std::vector<LayerMapping> rmaps = round_all(x, net);
        std::vector<const LayerShape*> layers;
        for (const auto& e : net.layers) layers.push_back(&e.shape);
        ArchConfig rarch = infer_min_hw(rmaps, layers, config.templ);
        if (config.strategy != Strategy::kNone)
          sweep_orderings(&rmaps, net, rarch,
                          config.strategy == Strategy::kSoftmax);
        double edp = estimate_network(rmaps, net, rarch).edp;
        record(&res, sp, step, rmaps, rarch, edp);
      }
    }
    ++sp;
  }
  return res;
}

SearchResult random_search(const Network& net, const ArchTemplate& templ,
                           std::int64_t budget, std::uint64_t seed) {
  if (budget < 1) throw std::invalid_argument("random_search: budget must be >= 1");
  if (net.layers.empty())
    throw std::invalid_argument("random_search: network has no layers");
  Rng rng(seed);
  SearchResult res;
  res.best_edp = kInf;
  res.start_edp = kInf;
  // A fresh hardware seed every tenth of the budget, mirroring the
  // 10-designs x N-mappings shape of the baseline.
  std::int64_t per_hw = std::max<std::int64_t>(1, budget / 10);
  ArchConfig hw;
  int hw_index = -1;
  for (std::int64_t i = 0; i < budget; ++i) {
    if (i % per_hw == 0) {
      hw = random_hw(rng, templ);
      ++hw_index;
    }
    std::vector<LayerMapping> maps;
    for (const auto& e : net.layers)
      maps.push_back(random_mapping(rng, e.shape, hw.pe_side));
    ArchConfig arch;
    double edp = evaluate_rounded(maps, net, templ, &arch);
    record(&res, hw_index, static_cast<int>(i % per_hw), maps, arch, edp);
    if (res.start_edp == kInf) res.start_edp = edp;
  }
  return res;
}

std::vector<LayerMapping> refine_mappings_fixed_hw(const Network& net,
                                                   const ArchConfig& arch,
                                                   const SearchConfig& config) {
  config.validate();
  if (net.layers.empty())
    throw std::invalid_argument("refine_mappings_fixed_hw: no layers");
  Rng rng(config.seed);
  std::vector<LayerMapping> start =
      heuristic_start_mappings(net, arch, rng);

  auto fits = [&](const std::vector<LayerMapping>& maps) {
    for (std::size_t l = 0; l < maps.size(); ++l) {
      if (pe_requirement(maps[l].factors) >
          static_cast<double>(arch.num_pes()))
        return false;
      CapacityReport cap =
          capacity_requirements(maps[l].factors, net.layers[l].shape);
      if (cap.words[kLevelAcc][TenO] > arch.acc_words_final()) return false;
      if (cap.words[kLevelSp][TenW] + cap.words[kLevelSp][TenI] >
          arch.sp_words_final())
        return false;
    }
    return true;
  };

  std::vector<LayerMapping> best = start;
  double best_edp = estimate_network(best, net, arch).edp;

  // Temporal factors only: 14 variables per layer, spatial frozen.
  constexpr int kPerLayer = 2 * kNumDims;
  std::vector<double> x;
  std::vector<double> spatial_c, spatial_k;
  for (const auto& m : start) {
    spatial_c.push_back(m.factors.at(kSpatial, 1, DimC));
    spatial_k.push_back(m.factors.at(kSpatial, 2, DimK));
    for (int d = 0; d < kNumDims; ++d)
      x.push_back(m.factors.at(kTemporal, 1, d));
    for (int d = 0; d < kNumDims; ++d)
      x.push_back(m.factors.at(kTemporal, 2, d));
  }

  ad::ObjectiveFn objective = [&](ad::Tape&,
                                  const std::vector<ad::Var>& xs) -> ad::Var {
    std::vector<model::Factors<ad::Var>> factors;
    std::vector<LoopOrdering> ords(net.layers.size());
    ad::Var pen(0.0);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      std::array<ad::Var, kNumFreeVars> v;
      v[0] = ad::Var(spatial_c[l]);
      v[1] = ad::Var(spatial_k[l]);
      for (int d = 0; d < kNumDims; ++d) {
        v[2 + d] = xs[l * kPerLayer + d];
        v[9 + d] = xs[l * kPerLayer + kNumDims + d];
      }
      factors.push_back(model::build_factors(v, net.layers[l].shape));
      pen = pen + model::penalty(factors.back());
      // Capacity overflow against the frozen hardware.
      ad::Var acc = model::capacity(factors.back(), net.layers[l].shape,
                                    kLevelAcc, TenO);
      ad::Var spw = model::capacity(factors.back(), net.layers[l].shape,
                                    kLevelSp, TenW) +
                    model::capacity(factors.back(), net.layers[l].shape,
                                    kLevelSp, TenI);
      pen = pen + model::tmax(acc / ad::Var(arch.acc_words_final()) -
                                  ad::Var(1.0),
                              ad::Var(0.0));
      pen = pen + model::tmax(spw / ad::Var(arch.sp_words_final()) -
                                  ad::Var(1.0),
                              ad::Var(0.0));
    }
    model::ModelOptions opt;
    opt.templ = arch.templ;
    opt.fixed_arch = &arch;
    ad::Var base = model::evaluate_network(factors, net, ords, opt).edp;
    return model::ad_log(base) + pen;
  };

  std::vector<double> lo(x.size(), kFactorEps), hi;
  for (const auto& e : net.layers)
    for (int rep = 0; rep < 2; ++rep)
      for (int d = 0; d < kNumDims; ++d)
        hi.push_back(static_cast<double>(e.shape.dims[d]));

  Adam opt(x.size(), config.lr, config.beta1, config.beta2);
  for (int step = 1; step <= config.steps_per_start; ++step) {
    ad::EvalResult er = ad::grad(objective, x);
    opt.step(x, er.grad);
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] = std::min(hi[i], std::max(lo[i], x[i]));
    if (step % config.rounding_period == 0 ||
        step == config.steps_per_start) {
      std::vector<LayerMapping> rmaps;
      for (std::size_t l = 0; l < net.layers.size(); ++l) {
        MappingTensor f;
        f.at(kSpatial, 1, DimC) = spatial_c[l];
        f.at(kSpatial, 2, DimK) = spatial_k[l];
        for (int d = 0; d < kNumDims; ++d) {
          f.at(kTemporal, 1, d) = x[l * kPerLayer + d];
          f.at(kTemporal, 2, d) = x[l * kPerLayer + kNumDims + d];
        }
        rmaps.push_back(
            round_mapping(f, net.layers[l].shape, LoopOrdering{}));
      }
      if (fits(rmaps)) {
        double edp = estimate_network(rmaps, net, arch).edp;
        if (edp < best_edp) {
          best_edp = edp;
          best = rmaps;
        }
      }
    }
  }
  return best;
}

std::string trace_to_csv(const std::vector<TraceEntry>& trace) {
  std::ostringstream os;
  os << "# dosa-trace-v1\n";
  os << "eval_index,start_point,step,model_edp,best_edp,pe_side,acc_bytes,"
        "sp_bytes\n";
  for (const auto& e : trace) {
    os << e.eval_index << "," << e.start_point << "," << e.step << ","
       << fmt_double(e.model_edp) << "," << fmt_double(e.best_edp) << ","
       << e.arch.pe_side << "," << e.arch.acc_bytes << "," << e.arch.sp_bytes
       << "\n";
  }
  return os.str();
}

std::string serialize_design(const ArchConfig& arch,
                             const std::vector<LayerMapping>& mappings) {
  std::ostringstream os;
  os << "# dosa-design-v1\n";
  os << serialize_arch(arch);
  for (std::size_t l = 0; l < mappings.size(); ++l) {
    os << "mapping " << l << "\n";
    os << serialize_mapping(mappings[l]);
  }
  return os.str();
}

void parse_design(const std::string& text, const ArchTemplate& templ,
                  ArchConfig* arch, std::vector<LayerMapping>* mappings) {
  std::istringstream in(text);
  std::string line;
  bool have_arch = false;
  std::string chunk;
  auto flush = [&] {
    if (!chunk.empty()) {
      mappings->push_back(parse_mapping(chunk));
      chunk.clear();
    }
  };
  while (std::getline(in, line)) {
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    if (line.rfind("arch", first) == first) {
      *arch = parse_arch(line, templ);
      have_arch = true;
    } else if (line.rfind("mapping", first) == first) {
      flush();
    } else {
      chunk += line + "\n";
    }
  }
  flush();
  if (!have_arch)
    throw std::runtime_error("design bundle is missing the arch record");
}

}  // namespace dosa::search
