#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dosa {

// Problem dimension indices. Order is fixed and used everywhere a
// per-dimension array appears (factor grids, loop orders, rounding).
enum Dim : int { DimR = 0, DimS, DimP, DimQ, DimC, DimK, DimN };
constexpr int kNumDims = 7;
constexpr const char* kDimNames[kNumDims] = {"R", "S", "P", "Q", "C", "K", "N"};

enum Tensor : int { TenW = 0, TenI, TenO };
constexpr int kNumTensors = 3;
constexpr const char* kTensorNames[kNumTensors] = {"W", "I", "O"};

// Dimension-relevance sets: which problem dimensions index each tensor.
constexpr bool kRelevant[kNumTensors][kNumDims] = {
    // R      S      P      Q      C      K      N
    {true, true, false, false, true, true, false},   // W
    {true, true, true, true, true, false, true},     // I
    {false, false, true, true, false, true, true},   // O
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg),
        line(line) {}
  int line;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One conv/matmul layer. A matmul is represented with R = S = 1 and
// unit strides.
struct LayerShape {
  std::int64_t dims[kNumDims] = {1, 1, 1, 1, 1, 1, 1};
  std::int64_t pstride = 1;
  std::int64_t qstride = 1;

  std::int64_t extent(int d) const { return dims[d]; }
  bool operator==(const LayerShape& o) const;
  // Throws ValidationError naming the offending field.
  void validate() const;
  std::string to_string() const;
};

// R*S*P*Q*C*K*N, the innermost iteration count of the full loop nest.
std::int64_t layer_macs(const LayerShape& layer);

struct Network {
  struct Entry {
    LayerShape shape;
    std::int64_t repeat = 1;
  };
  std::string name;
  std::vector<Entry> layers;  // deduplicated, first-occurrence order

  // Merges a layer into the list, absorbing duplicates into repeat counts.
  void add_layer(const LayerShape& shape, std::int64_t repeat = 1);
};

// Line-oriented key/value document, schema "dosa-workload-v1":
//   network <name>
//   layer R=3 S=3 P=56 Q=56 C=64 K=64 N=1 Pstride=1 Qstride=1 [repeat=2]
Network parse_workload(const std::string& text);
Network load_workload(const std::string& path);
std::string serialize_workload(const Network& net);

}  // namespace dosa
