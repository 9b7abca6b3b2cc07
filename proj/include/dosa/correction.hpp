#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dosa/arch.hpp"
#include "dosa/mapping.hpp"
#include "dosa/workload.hpp"

// Learned latency correction: a small fully-connected regressor predicts
// the residual between analytical and measured latency in log space, and
// composes multiplicatively (clamped to one decade) on top of the
// analytical estimate.

namespace dosa::correction {

struct MeasuredSample {
  LayerShape layer;
  LayerMapping mapping;
  double pe_side = 1.0;
  double acc_words = 1.0;
  double sp_words = 1.0;
  double measured_cycles = 0.0;
  double analytical_cycles = 0.0;  // filled on load from the model
};

// Feature vector: 7 dims, 2 strides, 16 free factors, 3 hardware
// parameters; all entered in log space before normalization.
constexpr int kNumFeatures = 7 + 2 + kNumFreeVars + 3;
std::array<double, kNumFeatures> features(const MeasuredSample& s);

// Analytical latency for a sample's mapping on its hardware parameters.
double analytical_latency(const MeasuredSample& s, const ArchTemplate& templ);

class CorrectionModel {
 public:
  static constexpr int kHiddenLayers = 7;
  static constexpr int kWidth = kNumFeatures;

  CorrectionModel();  // zero weights, unit normalization: exact identity

  std::size_t num_params() const { return params.size(); }
  bool is_zero() const;
  double predict_residual(const std::array<double, kNumFeatures>& feat) const;

  std::string serialize() const;
  static CorrectionModel deserialize(const std::string& text);
  static CorrectionModel load(const std::string& path);

  std::vector<double> params;  // flat weight/bias storage
  std::array<double, kNumFeatures> feat_mean{};
  std::array<double, kNumFeatures> feat_std{};
};

// analytical * exp(clamp(residual, +-ln 10)): a zero model reproduces
// the analytical latency bit-for-bit, and the correction never moves a
// prediction by more than one decade.
double corrected_latency(double analytical,
                         const std::array<double, kNumFeatures>& feat,
                         const CorrectionModel& model);

struct Dataset {
  std::vector<MeasuredSample> train;
  std::vector<MeasuredSample> test;
};

std::string samples_to_csv(const std::vector<MeasuredSample>& samples);
// Throws std::runtime_error naming the offending row; rows whose
// mapping fails validation are dropped with a diagnostic appended to
// *diagnostics (when given).
std::vector<MeasuredSample> parse_samples(const std::string& text,
                                          std::vector<std::string>* diagnostics);
Dataset load_samples(const std::string& path, const ArchTemplate& templ,
                     std::uint64_t seed, double test_fraction = 0.2,
                     std::vector<std::string>* diagnostics = nullptr);
Dataset split_samples(std::vector<MeasuredSample> samples, std::uint64_t seed,
                      double test_fraction);

struct TrainConfig {
  int epochs = 400;
  int batch_size = 32;
  double lr = 0.01;
  std::uint64_t seed = 0;
};

struct TrainResult {
  CorrectionModel model;
  // (train MSE, test MSE) after each epoch, in log-residual space.
  std::vector<std::pair<double, double>> loss_curve;
};

// Fits the residual log(measured) - log(analytical) by minibatch Adam
// through the reverse-mode tape. Requires >= 50 training samples;
// aborts with an error if the loss goes non-finite.
TrainResult train(const Dataset& data, const TrainConfig& config);

// Spearman rank correlation with average ranks on ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// Synthetic stand-in for measured hardware latencies: random mappings
// and hardware, measured = analytical * structured residual * noise.
std::vector<MeasuredSample> synthetic_samples(const Network& net,
                                              const ArchTemplate& templ,
                                              int count, std::uint64_t seed,
                                              double noise,
                                              bool structured_residual);

}  // namespace dosa::correction
