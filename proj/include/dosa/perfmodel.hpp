#pragma once

#include <vector>

#include "dosa/arch.hpp"
#include "dosa/mapping.hpp"
#include "dosa/model.hpp"
#include "dosa/workload.hpp"

// Double-precision front end over the templated model: analytical
// traffic for a concrete mapping, plus latency/energy/EDP against a
// finalized hardware configuration.

namespace dosa {

using TrafficReport = model::LayerTraffic<double>;

TrafficReport compute_traffic(const MappingTensor& f, const LayerShape& layer,
                              const LoopOrdering& ord,
                              const BypassMatrix& bypass);

// Latency/energy from a traffic report. Shared composition for both the
// analytical and the simulated access counts, so comparisons differ only
// in the traffic itself.
double latency_from_traffic(const TrafficReport& tr, double spatial_product,
                            const ArchConfig& arch);
double energy_from_traffic(const TrafficReport& tr, const ArchConfig& arch);

struct PerfEstimate {
  TrafficReport traffic;
  double latency = 0.0;
  double energy = 0.0;
  double compute_latency = 0.0;
  int bound_level = -1;  // memory level that binds latency, -1 if compute
};

PerfEstimate estimate_layer(const LayerMapping& m, const LayerShape& layer,
                            const ArchConfig& arch);

struct NetworkPerf {
  double edp = 0.0;
  double energy = 0.0;   // repeat-weighted sum
  double latency = 0.0;  // repeat-weighted sum
  std::vector<PerfEstimate> layers;
};

NetworkPerf estimate_network(const std::vector<LayerMapping>& mappings,
                             const Network& net, const ArchConfig& arch);

}  // namespace dosa
