#include "dosa/mapping.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace dosa {

std::array<int, kNumDims> level_dim_order(Ordering ord) {
  int ten = static_cast<int>(ord);  // WS->W, IS->I, OS->O
  std::array<int, kNumDims> order{};
  int pos = 0;
  for (int d = 0; d < kNumDims; ++d)
    if (kRelevant[ten][d]) order[pos++] = d;  // stationary dims outermost
  for (int d = 0; d < kNumDims; ++d)
    if (!kRelevant[ten][d]) order[pos++] = d;
  return order;
}

std::array<double, kNumFreeVars> pack_free(const MappingTensor& f) {
  std::array<double, kNumFreeVars> x;
  x[0] = f.at(kSpatial, 1, DimC);
  x[1] = f.at(kSpatial, 2, DimK);
  for (int d = 0; d < kNumDims; ++d) {
    x[2 + d] = f.at(kTemporal, 1, d);
    x[9 + d] = f.at(kTemporal, 2, d);
  }
  return x;
}

void unpack_free(const std::array<double, kNumFreeVars>& x, MappingTensor* f) {
  f->at(kSpatial, 1, DimC) = x[0];
  f->at(kSpatial, 2, DimK) = x[1];
  for (int d = 0; d < kNumDims; ++d) {
    f->at(kTemporal, 1, d) = x[2 + d];
    f->at(kTemporal, 2, d) = x[9 + d];
  }
}

void derive_dram_factors(MappingTensor* f, const LayerShape& layer) {
  for (int d = 0; d < kNumDims; ++d) {
    double inner = 1.0;
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < kNumLevels; ++i)
        if (!(k == kTemporal && i == kLevelDram)) inner *= f->at(k, i, d);
    f->at(kTemporal, kLevelDram, d) = static_cast<double>(layer.dims[d]) / inner;
  }
}

LayerMapping uniform_mapping(const LayerShape& layer) {
  LayerMapping m;
  derive_dram_factors(&m.factors, layer);
  return m;
}

namespace {

bool is_positive_integer(double x) {
  return x >= 1.0 && x == std::floor(x);
}

}  // namespace

ValidationResult validate(const LayerMapping& m, const LayerShape& layer) {
  ValidationResult res;
  auto fail = [&](const std::string& msg) {
    res.valid = false;
    res.diagnostics.push_back(msg);
  };
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < kNumLevels; ++i)
      for (int d = 0; d < kNumDims; ++d) {
        double f = m.factors.at(k, i, d);
        char buf[96];
        if (!is_positive_integer(f)) {
          std::snprintf(buf, sizeof buf, "f_{%c,%d,%s}=%g is not a positive integer",
                        k == kSpatial ? 'S' : 'T', i, kDimNames[d], f);
          fail(buf);
        }
        bool spatial_allowed =
            (i == 1 && d == DimC) || (i == 2 && d == DimK);
        if (k == kSpatial && !spatial_allowed && f != 1.0) {
          std::snprintf(buf, sizeof buf, "spatial factor f_{S,%d,%s}=%g outside C/K dataflow mask",
                        i, kDimNames[d], f);
          fail(buf);
        }
      }
  for (int d = 0; d < kNumDims; ++d) {
    double prod = 1.0;
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < kNumLevels; ++i) prod *= m.factors.at(k, i, d);
    if (prod != static_cast<double>(layer.dims[d])) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "factor product %g for dim %s != extent %lld",
                    prod, kDimNames[d],
                    static_cast<long long>(layer.dims[d]));
      fail(buf);
    }
  }
  return res;
}

std::vector<std::int64_t> divisors(std::int64_t n) {
  std::vector<std::int64_t> lo, hi;
  for (std::int64_t i = 1; i * i <= n; ++i) {
    if (n % i == 0) {
      lo.push_back(i);
      if (i != n / i) hi.push_back(n / i);
    }
  }
  lo.insert(lo.end(), hi.rbegin(), hi.rend());
  return lo;
}

std::int64_t nearest_divisor(std::int64_t n, double x) {
  std::int64_t best = 1;
  double best_dist = std::abs(x - 1.0);
  for (std::int64_t d : divisors(n)) {
    double dist = std::abs(x - static_cast<double>(d));
    if (dist < best_dist) {  // ties keep the earlier (smaller) divisor
      best = d;
      best_dist = dist;
    }
  }
  return best;
}

LayerMapping round_mapping(const MappingTensor& f, const LayerShape& layer,
                           const LoopOrdering& ordering) {
  LayerMapping out;
  out.ordering = ordering;
  std::int64_t remaining[kNumDims];
  for (int d = 0; d < kNumDims; ++d) remaining[d] = layer.dims[d];

  auto round_entry = [&](int k, int i, int d) {
    std::int64_t v = nearest_divisor(remaining[d], f.at(k, i, d));
    out.factors.at(k, i, d) = static_cast<double>(v);
    remaining[d] /= v;
  };
  for (int i = 0; i <= kLevelSp; ++i) {  // innermost to outermost
    if (i == 1) round_entry(kSpatial, 1, DimC);
    if (i == 2) round_entry(kSpatial, 2, DimK);
    for (int d = 0; d < kNumDims; ++d) round_entry(kTemporal, i, d);
  }
  for (int d = 0; d < kNumDims; ++d)
    out.factors.at(kTemporal, kLevelDram, d) = static_cast<double>(remaining[d]);
  return out;
}

std::string serialize_mapping(const LayerMapping& m) {
  std::ostringstream os;
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < kNumLevels; ++i) {
      os << (k == kSpatial ? 'S' : 'T') << i;
      for (int d = 0; d < kNumDims; ++d)
        os << " " << static_cast<std::int64_t>(m.factors.at(k, i, d));
      os << "\n";
    }
  os << "ordering";
  for (int i = 1; i < kNumLevels; ++i)
    os << " " << kOrderingNames[static_cast<int>(m.ordering.level[i])];
  os << "\n";
  return os.str();
}

LayerMapping parse_mapping(const std::string& text) {
  LayerMapping m;
  std::istringstream in(text);
  std::string tok;
  int lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    if (!(ls >> tok) || tok[0] == '#') continue;
    if (tok == "ordering") {
      for (int i = 1; i < kNumLevels; ++i) {
        std::string name;
        if (!(ls >> name)) throw ParseError("missing ordering entry", lineno);
        bool found = false;
        for (int o = 0; o < 3; ++o)
          if (name == kOrderingNames[o]) {
            m.ordering.level[i] = static_cast<Ordering>(o);
            found = true;
          }
        if (!found) throw ParseError("bad ordering '" + name + "'", lineno);
      }
      continue;
    }
    if (tok.size() != 2 || (tok[0] != 'S' && tok[0] != 'T') || tok[1] < '0' ||
        tok[1] > '3')
      throw ParseError("bad factor row '" + tok + "'", lineno);
    int k = tok[0] == 'S' ? kSpatial : kTemporal;
    int i = tok[1] - '0';
    for (int d = 0; d < kNumDims; ++d) {
      double v;
      if (!(ls >> v)) throw ParseError("missing factor value", lineno);
      m.factors.at(k, i, d) = v;
    }
  }
  return m;
}

}  // namespace dosa
