#include "dosa/workload.hpp"

#include <fstream>
#include <sstream>

namespace dosa {

bool LayerShape::operator==(const LayerShape& o) const {
  for (int d = 0; d < kNumDims; ++d)
    if (dims[d] != o.dims[d]) return false;
  return pstride == o.pstride && qstride == o.qstride;
}

void LayerShape::validate() const {
  for (int d = 0; d < kNumDims; ++d) {
    if (dims[d] < 1)
      throw ValidationError(std::string("layer extent ") + kDimNames[d] +
                            " must be >= 1, got " + std::to_string(dims[d]));
  }
  if (pstride < 1 || qstride < 1)
    throw ValidationError("layer strides must be >= 1");
}

std::string LayerShape::to_string() const {
  std::ostringstream os;
  for (int d = 0; d < kNumDims; ++d)
    os << kDimNames[d] << "=" << dims[d] << " ";
  os << "Pstride=" << pstride << " Qstride=" << qstride;
  return os.str();
}

std::int64_t layer_macs(const LayerShape& layer) {
  std::int64_t macs = 1;
  for (int d = 0; d < kNumDims; ++d) macs *= layer.dims[d];
  return macs;
}

void Network::add_layer(const LayerShape& shape, std::int64_t repeat) {
  for (auto& e : layers) {
    if (e.shape == shape) {
      e.repeat += repeat;
      return;
    }
  }
  layers.push_back({shape, repeat});
}

namespace {

std::int64_t parse_int_field(const std::string& key, const std::string& val,
                             int line) {
  try {
    std::size_t pos = 0;
    std::int64_t v = std::stoll(val, &pos);
    if (pos != val.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError("bad integer for field '" + key + "': '" + val + "'",
                     line);
  }
}

}  // namespace

Network parse_workload(const std::string& text) {
  Network net;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok) || tok[0] == '#') continue;
    if (tok == "network") {
      if (!(ls >> net.name)) throw ParseError("missing network name", lineno);
      continue;
    }
    if (tok != "layer")
      throw ParseError("unknown record '" + tok + "'", lineno);
    LayerShape shape;
    std::int64_t repeat = 1;
    bool seen[kNumDims] = {};
    std::string kv;
    while (ls >> kv) {
      auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw ParseError("expected key=value, got '" + kv + "'", lineno);
      std::string key = kv.substr(0, eq);
      std::int64_t val = parse_int_field(key, kv.substr(eq + 1), lineno);
      if (key == "Pstride") {
        shape.pstride = val;
      } else if (key == "Qstride") {
        shape.qstride = val;
      } else if (key == "repeat") {
        if (val < 1) throw ParseError("repeat must be >= 1", lineno);
        repeat = val;
      } else {
        int d = -1;
        for (int i = 0; i < kNumDims; ++i)
          if (key == kDimNames[i]) d = i;
        if (d < 0) throw ParseError("unknown field '" + key + "'", lineno);
        shape.dims[d] = val;
        seen[d] = true;
      }
    }
    for (int d = 0; d < kNumDims; ++d)
      if (!seen[d])
        throw ParseError(std::string("missing field '") + kDimNames[d] + "'",
                         lineno);
    try {
      shape.validate();
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), lineno);
    }
    net.add_layer(shape, repeat);
  }
  return net;
}

Network load_workload(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open workload file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_workload(ss.str());
}

std::string serialize_workload(const Network& net) {
  std::ostringstream os;
  os << "# dosa-workload-v1\n";
  if (!net.name.empty()) os << "network " << net.name << "\n";
  for (const auto& e : net.layers) {
    os << "layer " << e.shape.to_string();
    if (e.repeat != 1) os << " repeat=" << e.repeat;
    os << "\n";
  }
  return os.str();
}

}  // namespace dosa
