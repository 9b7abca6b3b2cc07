#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dosa/correction.hpp"
#include "dosa/workload.hpp"

using namespace dosa;
using namespace dosa::correction;

namespace {

Network toy_net() {
  Network net;
  LayerShape a;
  a.dims[DimR] = 3;
  a.dims[DimS] = 3;
  a.dims[DimP] = 8;
  a.dims[DimQ] = 8;
  a.dims[DimC] = 8;
  a.dims[DimK] = 8;
  LayerShape b;
  b.dims[DimP] = 8;
  b.dims[DimC] = 16;
  b.dims[DimK] = 16;
  net.add_layer(a);
  net.add_layer(b);
  return net;
}

}  // namespace

TEST_CASE("parameter count is 5713") {
  CorrectionModel m;
  CHECK(m.num_params() == 5713);
  CHECK(m.is_zero());
}

TEST_CASE("zero model reproduces analytical latency bit-for-bit") {
  CorrectionModel m;
  ArchTemplate templ;
  auto samples = synthetic_samples(toy_net(), templ, 20, 1, 0.1, true);
  for (const auto& s : samples) {
    double corrected =
        corrected_latency(s.analytical_cycles, features(s), m);
    CHECK(corrected == s.analytical_cycles);  // exact
  }
}

TEST_CASE("correction ratio is clamped to one decade") {
  CorrectionModel m;
  m.params.back() = 100.0;  // output bias forces a huge residual
  ArchTemplate templ;
  auto samples = synthetic_samples(toy_net(), templ, 5, 2, 0.0, false);
  for (const auto& s : samples) {
    double c = corrected_latency(s.analytical_cycles, features(s), m);
    CHECK(c == doctest::Approx(10.0 * s.analytical_cycles));
  }
  m.params.back() = -100.0;
  for (const auto& s : samples) {
    double c = corrected_latency(s.analytical_cycles, features(s), m);
    CHECK(c == doctest::Approx(0.1 * s.analytical_cycles));
  }
}

TEST_CASE("samples round-trip through CSV") {
  ArchTemplate templ;
  auto samples = synthetic_samples(toy_net(), templ, 30, 3, 0.05, true);
  std::vector<std::string> diags;
  auto back = parse_samples(samples_to_csv(samples), &diags);
  CHECK(diags.empty());
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(back[i].layer == samples[i].layer);
    CHECK(back[i].mapping.factors.v == samples[i].mapping.factors.v);
    CHECK(back[i].pe_side == samples[i].pe_side);
    CHECK(back[i].measured_cycles ==
          doctest::Approx(samples[i].measured_cycles).epsilon(1e-15));
  }
}

TEST_CASE("malformed rows raise errors naming the row; bad rows drop") {
  std::string csv =
      "# dosa-samples-v1\n"
      "header\n"
      "1,1,2,2,2,2,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,WS,WS,WS,4,256,"
      "1024,100\n";
  auto ok = parse_samples(csv, nullptr);
  CHECK(ok.size() == 1);

  std::string bad_cols =
      "# dosa-samples-v1\nheader\n1,2,3\n";
  try {
    parse_samples(bad_cols, nullptr);
    FAIL("expected error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }

  // Non-positive latency and non-divisible factors are dropped, not fatal.
  std::string droppable =
      "# dosa-samples-v1\n"
      "header\n"
      "1,1,2,2,2,2,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,WS,WS,WS,4,256,"
      "1024,-5\n"
      "1,1,2,2,2,2,1,1,1,1,1,1,1,1,1,1,1,3,1,1,1,1,1,1,1,WS,WS,WS,4,256,"
      "1024,100\n";
  std::vector<std::string> diags;
  auto kept = parse_samples(droppable, &diags);
  CHECK(kept.empty());
  CHECK(diags.size() == 2);
}

TEST_CASE("split is deterministic in the seed") {
  ArchTemplate templ;
  auto samples = synthetic_samples(toy_net(), templ, 40, 5, 0.05, true);
  Dataset a = split_samples(samples, 9, 0.25);
  Dataset b = split_samples(samples, 9, 0.25);
  CHECK(a.test.size() == 10);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i)
    CHECK(a.train[i].measured_cycles == b.train[i].measured_cycles);
}

TEST_CASE("training refuses tiny datasets") {
  ArchTemplate templ;
  auto samples = synthetic_samples(toy_net(), templ, 30, 6, 0.05, true);
  Dataset d = split_samples(samples, 1, 0.2);
  TrainConfig cfg;
  CHECK_THROWS_AS(train(d, cfg), std::invalid_argument);
}

TEST_CASE("constant-factor residual is learned on held-out data") {
  ArchTemplate templ;
  auto samples = synthetic_samples(toy_net(), templ, 160, 7, 0.0, false);
  for (auto& s : samples) s.measured_cycles = 2.0 * s.analytical_cycles;
  Dataset d = split_samples(samples, 2, 0.2);
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.seed = 4;
  TrainResult res = train(d, cfg);
  CHECK(res.loss_curve.size() == 150);
  CHECK(res.loss_curve.back().first < res.loss_curve.front().first);
  for (const auto& s : d.test) {
    double c = corrected_latency(s.analytical_cycles, features(s), res.model);
    CHECK(c == doctest::Approx(s.measured_cycles).epsilon(0.05));
  }
}

TEST_CASE("checkpoint round-trips exactly") {
  ArchTemplate templ;
  auto samples = synthetic_samples(toy_net(), templ, 80, 8, 0.05, true);
  Dataset d = split_samples(samples, 3, 0.2);
  TrainConfig cfg;
  cfg.epochs = 5;
  TrainResult res = train(d, cfg);
  CorrectionModel back = CorrectionModel::deserialize(res.model.serialize());
  CHECK(back.params == res.model.params);
  CHECK(back.feat_mean == res.model.feat_mean);
  CHECK(back.feat_std == res.model.feat_std);
  CHECK_THROWS(CorrectionModel::deserialize("# dosa-correction-v1\nnope\n"));
}

TEST_CASE("spearman matches a brute-force ranking on small vectors") {
  // Hand-computed: perfect agreement, perfect reversal, ties.
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {40, 30, 20, 10}) == doctest::Approx(-1.0));
  // x = (1,2,2,4), y = (1,3,2,4): tied ranks average to 2.5.
  // Pearson over ranks (1,2.5,2.5,4) vs (1,3,2,4) = 0.9487...
  CHECK(spearman({1, 2, 2, 4}, {1, 3, 2, 4}) ==
        doctest::Approx(0.948683298).epsilon(1e-6));
  CHECK(spearman({5, 5, 5}, {1, 2, 3}) == 0.0);  // degenerate ranks
}

TEST_CASE("structured residuals: corrected model ranks better") {
  ArchTemplate templ;
  auto samples = synthetic_samples(toy_net(), templ, 260, 21, 0.05, true);
  Dataset d = split_samples(samples, 5, 0.25);
  TrainConfig cfg;
  cfg.epochs = 120;
  cfg.seed = 9;
  TrainResult res = train(d, cfg);
  std::vector<double> measured, analytical, corrected;
  for (const auto& s : d.test) {
    measured.push_back(s.measured_cycles);
    analytical.push_back(s.analytical_cycles);
    corrected.push_back(
        corrected_latency(s.analytical_cycles, features(s), res.model));
  }
  double r_analytical = spearman(analytical, measured);
  double r_corrected = spearman(corrected, measured);
  CHECK(r_corrected >= r_analytical + 0.02);
}
