#include "dosa/perfmodel.hpp"

#include <stdexcept>

namespace dosa {

TrafficReport compute_traffic(const MappingTensor& f, const LayerShape& layer,
                              const LoopOrdering& ord,
                              const BypassMatrix& bypass) {
  return model::traffic(model::from_tensor(f), layer, ord, bypass);
}

double latency_from_traffic(const TrafficReport& tr, double spatial_product,
                            const ArchConfig& arch) {
  double lat = tr.macs / spatial_product;
  for (int i = 0; i < kNumLevels; ++i) {
    double l = tr.accesses[i] / bandwidth(arch, i);
    if (l > lat) lat = l;
  }
  return lat;
}

double energy_from_traffic(const TrafficReport& tr, const ArchConfig& arch) {
  double total = tr.macs * epa_pe(arch);
  for (int i = 0; i < kNumLevels; ++i) total += tr.accesses[i] * epa(arch, i);
  return total;
}

PerfEstimate estimate_layer(const LayerMapping& m, const LayerShape& layer,
                            const ArchConfig& arch) {
  PerfEstimate est;
  est.traffic =
      compute_traffic(m.factors, layer, m.ordering, arch.templ.bypass);
  double spatial = 1.0;
  for (int i = 0; i < kNumLevels; ++i)
    for (int d = 0; d < kNumDims; ++d) spatial *= m.factors.at(kSpatial, i, d);
  est.compute_latency = est.traffic.macs / spatial;
  est.latency = est.compute_latency;
  est.bound_level = -1;
  for (int i = 0; i < kNumLevels; ++i) {
    double l = est.traffic.accesses[i] / bandwidth(arch, i);
    if (l > est.latency) {
      est.latency = l;
      est.bound_level = i;
    }
  }
  est.energy = energy_from_traffic(est.traffic, arch);
  return est;
}

NetworkPerf estimate_network(const std::vector<LayerMapping>& mappings,
                             const Network& net, const ArchConfig& arch) {
  if (mappings.size() != net.layers.size())
    throw std::invalid_argument("estimate_network: need one mapping per layer");
  NetworkPerf perf;
  for (std::size_t l = 0; l < mappings.size(); ++l) {
    PerfEstimate est =
        estimate_layer(mappings[l], net.layers[l].shape, arch);
    double rep = static_cast<double>(net.layers[l].repeat);
    perf.energy += rep * est.energy;
    perf.latency += rep * est.latency;
    perf.layers.push_back(std::move(est));
  }
  perf.edp = perf.energy * perf.latency;
  return perf;
}

}  // namespace dosa
