#include "dosa/arch.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace dosa {

double pe_requirement(const MappingTensor& f) {
  double side = std::max(f.at(kSpatial, 1, DimC), f.at(kSpatial, 2, DimK));
  return side * side;
}

CapacityReport capacity_requirements(const MappingTensor& f,
                                     const LayerShape& layer) {
  CapacityReport rep{};
  BypassMatrix bypass;  // totals use the default storage map
  for (int i = 0; i < kNumLevels; ++i) {
    // Per-dimension tile extents from the loops at levels i..0.
    double inner[kNumDims];
    for (int d = 0; d < kNumDims; ++d) {
      inner[d] = 1.0;
      for (int k = 0; k < 2; ++k)
        for (int j = 0; j <= i; ++j) inner[d] *= f.at(k, j, d);
    }
    double w = 1.0, o = 1.0, cn = 1.0;
    for (int d = 0; d < kNumDims; ++d) {
      if (kRelevant[TenW][d]) w *= inner[d];
      if (kRelevant[TenO][d]) o *= inner[d];
    }
    cn = inner[DimC] * inner[DimN];
    double ih = layer.pstride * (inner[DimP] - 1.0) + inner[DimR];
    double iw = layer.qstride * (inner[DimQ] - 1.0) + inner[DimS];
    rep.words[i][TenW] = w;
    rep.words[i][TenI] = cn * ih * iw;
    rep.words[i][TenO] = o;
    rep.total[i] = 0.0;
    for (int t = 0; t < kNumTensors; ++t)
      if (bypass.stored[i][t]) rep.total[i] += rep.words[i][t];
  }
  return rep;
}

std::int64_t round_up_1kb(double bytes) {
  double kb = std::ceil(bytes / 1024.0);
  if (kb < 1.0) kb = 1.0;
  return static_cast<std::int64_t>(kb) * 1024;
}

ArchConfig infer_min_hw(const std::vector<LayerMapping>& mappings,
                        const std::vector<const LayerShape*>& layers,
                        const ArchTemplate& templ) {
  if (mappings.empty() || mappings.size() != layers.size())
    throw std::invalid_argument("infer_min_hw: need one mapping per layer");
  ArchConfig cfg;
  cfg.templ = templ;
  double side = 1.0, acc = 1.0, sp = 1.0;
  for (std::size_t m = 0; m < mappings.size(); ++m) {
    const auto& f = mappings[m].factors;
    double s = std::max(f.at(kSpatial, 1, DimC), f.at(kSpatial, 2, DimK));
    CapacityReport cap = capacity_requirements(f, *layers[m]);
    double a = cap.words[kLevelAcc][TenO];
    double w = cap.words[kLevelSp][TenW] + cap.words[kLevelSp][TenI];
    if (s > side) { side = s; cfg.pe_witness = static_cast<int>(m); }
    if (a > acc) { acc = a; cfg.acc_witness = static_cast<int>(m); }
    if (w > sp) { sp = w; cfg.sp_witness = static_cast<int>(m); }
  }
  int iside = static_cast<int>(std::ceil(side - 1e-9));
  if (iside > templ.pe_cap_side) {
    iside = templ.pe_cap_side;
    cfg.pe_capped = true;
  }
  cfg.pe_side = iside < 1 ? 1 : iside;
  cfg.acc_words = acc;
  cfg.sp_words = sp;
  cfg.acc_bytes = round_up_1kb(acc * templ.word_bytes[kLevelAcc]);
  cfg.sp_bytes = round_up_1kb(sp * templ.word_bytes[kLevelSp]);
  return cfg;
}

double epa_pe(const ArchConfig& arch) { return arch.templ.epa.pe; }

double epa(const ArchConfig& arch, int level) {
  const EnergyParams& e = arch.templ.epa;
  switch (level) {
    case kLevelReg:
      return e.reg;
    case kLevelAcc:
      return e.acc_base +
             e.acc_slope * arch.acc_words_final() / arch.pe_side;
    case kLevelSp:
      return e.sp_base + e.sp_slope * arch.sp_words_final();
    case kLevelDram:
      return e.dram;
  }
  throw std::invalid_argument("epa: bad level");
}

double bandwidth(const ArchConfig& arch, int level) {
  switch (level) {
    case kLevelReg:
      return 2.0 * static_cast<double>(arch.num_pes());
    case kLevelAcc:
    case kLevelSp:
      return 2.0 * arch.pe_side;
    case kLevelDram:
      return arch.templ.dram_bandwidth;
  }
  throw std::invalid_argument("bandwidth: bad level");
}

namespace {

struct KvFile {
  std::vector<std::pair<std::string, std::string>> kv;
  bool get(const std::string& key, double* out) const {
    for (auto& [k, v] : kv)
      if (k == key) { *out = std::stod(v); return true; }
    return false;
  }
};

KvFile parse_kv(const std::string& text) {
  KvFile f;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("expected key=value in arch file", lineno);
    f.kv.emplace_back(line.substr(first, eq - first), line.substr(eq + 1));
  }
  return f;
}

}  // namespace

ArchTemplate parse_arch_template(const std::string& text) {
  ArchTemplate t;
  KvFile f = parse_kv(text);
  double v;
  if (f.get("pe_cap_side", &v)) t.pe_cap_side = static_cast<int>(v);
  if (f.get("dram_bandwidth", &v)) t.dram_bandwidth = v;
  if (f.get("word_bytes_reg", &v)) t.word_bytes[kLevelReg] = static_cast<int>(v);
  if (f.get("word_bytes_acc", &v)) t.word_bytes[kLevelAcc] = static_cast<int>(v);
  if (f.get("word_bytes_sp", &v)) t.word_bytes[kLevelSp] = static_cast<int>(v);
  if (f.get("epa_pe", &v)) t.epa.pe = v;
  if (f.get("epa_reg", &v)) t.epa.reg = v;
  if (f.get("epa_acc_base", &v)) t.epa.acc_base = v;
  if (f.get("epa_acc_slope", &v)) t.epa.acc_slope = v;
  if (f.get("epa_sp_base", &v)) t.epa.sp_base = v;
  if (f.get("epa_sp_slope", &v)) t.epa.sp_slope = v;
  if (f.get("epa_dram", &v)) t.epa.dram = v;
  return t;
}

ArchTemplate load_arch_template(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open arch template: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_arch_template(ss.str());
}

std::string serialize_arch_template(const ArchTemplate& t) {
  std::ostringstream os;
  os << "# dosa-arch-v1\n";
  os << "pe_cap_side=" << t.pe_cap_side << "\n";
  os << "dram_bandwidth=" << t.dram_bandwidth << "\n";
  os << "word_bytes_reg=" << t.word_bytes[kLevelReg] << "\n";
  os << "word_bytes_acc=" << t.word_bytes[kLevelAcc] << "\n";
  os << "word_bytes_sp=" << t.word_bytes[kLevelSp] << "\n";
  os << "epa_pe=" << t.epa.pe << "\n";
  os << "epa_reg=" << t.epa.reg << "\n";
  os << "epa_acc_base=" << t.epa.acc_base << "\n";
  os << "epa_acc_slope=" << t.epa.acc_slope << "\n";
  os << "epa_sp_base=" << t.epa.sp_base << "\n";
  os << "epa_sp_slope=" << t.epa.sp_slope << "\n";
  os << "epa_dram=" << t.epa.dram << "\n";
  return os.str();
}

std::string serialize_arch(const ArchConfig& arch) {
  std::ostringstream os;
  os << "arch pe_side=" << arch.pe_side << " acc_bytes=" << arch.acc_bytes
     << " sp_bytes=" << arch.sp_bytes << "\n";
  return os.str();
}

ArchConfig parse_arch(const std::string& text, const ArchTemplate& templ) {
  ArchConfig cfg;
  cfg.templ = templ;
  std::istringstream in(text);
  std::string tok;
  if (!(in >> tok) || tok != "arch")
    throw std::runtime_error("expected 'arch' record");
  std::string kv;
  while (in >> kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("bad arch field '" + kv + "'");
    std::string key = kv.substr(0, eq);
    double val = std::stod(kv.substr(eq + 1));
    if (key == "pe_side") cfg.pe_side = static_cast<int>(val);
    else if (key == "acc_bytes") cfg.acc_bytes = static_cast<std::int64_t>(val);
    else if (key == "sp_bytes") cfg.sp_bytes = static_cast<std::int64_t>(val);
    else throw std::runtime_error("unknown arch field '" + key + "'");
  }
  cfg.acc_words = cfg.acc_words_final();
  cfg.sp_words = cfg.sp_words_final();
  return cfg;
}

}  // namespace dosa
