#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dosa/arch.hpp"
#include "dosa/perfmodel.hpp"
#include "dosa/rng.hpp"
#include "dosa/workload.hpp"

// Mapping-first co-search: gradient descent over all layers' tiling
// factors jointly, with periodic rounding to integer mappings, minimal
// hardware inferred from the mappings, and a random-search baseline.

namespace dosa::search {

enum class Strategy { kNone = 0, kIterative, kSoftmax };
const char* strategy_name(Strategy s);
bool parse_strategy(const std::string& name, Strategy* out);

struct SearchConfig {
  int n_start_points = 7;
  int steps_per_start = 1490;
  int rounding_period = 500;
  Strategy strategy = Strategy::kIterative;
  double lr = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  // Rounded full-network evaluations allowed; < 0 means unlimited (run
  // exactly n_start_points trajectories). With a finite budget, fresh
  // start points keep spawning until the budget is spent.
  std::int64_t eval_budget = -1;
  ArchTemplate templ;

  void validate() const;  // throws std::invalid_argument
};

struct TraceEntry {
  std::int64_t eval_index = 0;  // 1-based, strictly increasing
  int start_point = 0;
  int step = 0;  // descent step at which the rounding happened (0 = start)
  double model_edp = 0.0;
  double best_edp = 0.0;  // best so far including this entry
  ArchConfig arch;        // minimal hardware inferred from the mappings
  std::vector<LayerMapping> mappings;
};

struct SearchResult {
  std::vector<TraceEntry> trace;
  std::vector<LayerMapping> best_mappings;
  ArchConfig best_arch;
  double best_edp = 0.0;
  // Best initial rounded EDP among accepted start points.
  double start_edp = 0.0;
  std::int64_t evals_used = 0;
};

// Random hardware seed used for start-point generation: PE side a power
// of two in [1,128], buffer bytes log-uniform in [1 KB, 1 MB].
ArchConfig random_hw(Rng& rng, const ArchTemplate& templ);

// Greedy start mappings for one hardware seed: saturate the C/K spatial
// factors up to the PE side, then grow temporal factors innermost-first
// while the accumulator/scratchpad requirements still fit. Always VALID;
// degenerates to the uniform mapping when nothing fits.
std::vector<LayerMapping> heuristic_start_mappings(const Network& net,
                                                   const ArchConfig& arch_seed,
                                                   Rng& rng);

// True iff a best exists and the candidate is worse than 10x the best.
bool reject_start_point(double candidate_edp, double best_edp);

// Evaluates integer mappings the mapping-first way: infer the minimal
// finalized hardware, then price the network on it.
double evaluate_rounded(const std::vector<LayerMapping>& mappings,
                        const Network& net, const ArchTemplate& templ,
                        ArchConfig* arch_out);

SearchResult run_gd(const Network& net, const SearchConfig& config);

SearchResult random_search(const Network& net, const ArchTemplate& templ,
                           std::int64_t budget, std::uint64_t seed);

// Descent over temporal factors only, spatial factors and hardware
// frozen; capacity overflows against the fixed configuration are fed
// back through the penalty. Returns the best rounded mappings that fit.
std::vector<LayerMapping> refine_mappings_fixed_hw(const Network& net,
                                                   const ArchConfig& arch,
                                                   const SearchConfig& config);

// Trace CSV: schema line then one row per rounded evaluation.
std::string trace_to_csv(const std::vector<TraceEntry>& trace);

// Design bundle: arch record followed by one mapping record per layer.
std::string serialize_design(const ArchConfig& arch,
                             const std::vector<LayerMapping>& mappings);
void parse_design(const std::string& text, const ArchTemplate& templ,
                  ArchConfig* arch, std::vector<LayerMapping>* mappings);

}  // namespace dosa::search
