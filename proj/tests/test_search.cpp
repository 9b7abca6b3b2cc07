#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dosa/model.hpp"
#include "dosa/search.hpp"

using namespace dosa;
using namespace dosa::search;

namespace {

Network two_layer_net() {
  Network net;
  LayerShape a;
  a.dims[DimR] = 3;
  a.dims[DimS] = 3;
  a.dims[DimP] = 4;
  a.dims[DimQ] = 4;
  a.dims[DimC] = 4;
  a.dims[DimK] = 8;
  LayerShape b;
  b.dims[DimP] = 4;
  b.dims[DimQ] = 4;
  b.dims[DimC] = 8;
  b.dims[DimK] = 8;
  net.add_layer(a);
  net.add_layer(b);
  return net;
}

SearchConfig quick_config(std::uint64_t seed) {
  SearchConfig cfg;
  cfg.n_start_points = 2;
  cfg.steps_per_start = 60;
  cfg.rounding_period = 30;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("start-point rejection keeps the first candidate") {
  double inf = std::numeric_limits<double>::infinity();
  CHECK(!reject_start_point(1e12, inf));
  CHECK(reject_start_point(11.0, 1.0));
  CHECK(!reject_start_point(9.9, 1.0));
  CHECK(!reject_start_point(10.0, 1.0));
}

TEST_CASE("heuristic start mappings are valid and fit the seed hardware") {
  Network net = two_layer_net();
  ArchTemplate templ;
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    ArchConfig seed_hw = random_hw(rng, templ);
    auto maps = heuristic_start_mappings(net, seed_hw, rng);
    REQUIRE(maps.size() == net.layers.size());
    for (std::size_t l = 0; l < maps.size(); ++l) {
      CHECK(validate(maps[l], net.layers[l].shape));
      CHECK(pe_requirement(maps[l].factors) <=
            static_cast<double>(seed_hw.num_pes()));
      CapacityReport cap =
          capacity_requirements(maps[l].factors, net.layers[l].shape);
      CHECK(cap.words[kLevelAcc][TenO] <= seed_hw.acc_words_final());
      CHECK(cap.words[kLevelSp][TenW] + cap.words[kLevelSp][TenI] <=
            seed_hw.sp_words_final());
    }
  }
}

TEST_CASE("spatial saturation picks the largest divisor under the side") {
  Network net;
  LayerShape l;
  l.dims[DimC] = 64;
  l.dims[DimK] = 64;
  net.add_layer(l);
  ArchTemplate templ;
  ArchConfig hw;
  hw.templ = templ;
  hw.pe_side = 16;
  hw.acc_bytes = 1 << 20;
  hw.sp_bytes = 1 << 20;
  Rng rng(1);
  auto maps = heuristic_start_mappings(net, hw, rng);
  CHECK(maps[0].factors.at(kSpatial, 1, DimC) == 16.0);
  CHECK(maps[0].factors.at(kSpatial, 2, DimK) == 16.0);
}

TEST_CASE("gradient descent trace: best-so-far non-increasing, all valid") {
  Network net = two_layer_net();
  SearchResult res = run_gd(net, quick_config(3));
  REQUIRE(!res.trace.empty());
  double prev_best = std::numeric_limits<double>::infinity();
  std::int64_t prev_idx = 0;
  for (const auto& e : res.trace) {
    CHECK(e.eval_index == prev_idx + 1);
    prev_idx = e.eval_index;
    CHECK(e.best_edp <= prev_best + 1e-12);
    prev_best = e.best_edp;
    REQUIRE(e.mappings.size() == net.layers.size());
    for (std::size_t l = 0; l < e.mappings.size(); ++l) {
      CHECK(validate(e.mappings[l], net.layers[l].shape));
      // The recorded hardware admits the recorded mappings.
      CHECK(pe_requirement(e.mappings[l].factors) <=
            static_cast<double>(e.arch.num_pes()));
      CapacityReport cap =
          capacity_requirements(e.mappings[l].factors, net.layers[l].shape);
      CHECK(cap.words[kLevelAcc][TenO] <= e.arch.acc_words_final());
      CHECK(cap.words[kLevelSp][TenW] + cap.words[kLevelSp][TenI] <=
            e.arch.sp_words_final());
    }
  }
  CHECK(res.best_edp == res.trace.back().best_edp);
  CHECK(std::isfinite(res.start_edp));
}

TEST_CASE("identical seeds give identical traces") {
  Network net = two_layer_net();
  SearchResult a = run_gd(net, quick_config(5));
  SearchResult b = run_gd(net, quick_config(5));
  CHECK(trace_to_csv(a.trace) == trace_to_csv(b.trace));
  SearchResult c = run_gd(net, quick_config(6));
  CHECK(trace_to_csv(a.trace) != trace_to_csv(c.trace));
}

TEST_CASE("iterative ordering never loses to fixed ordering, same seed") {
  Network net = two_layer_net();
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    SearchConfig fixed = quick_config(seed);
    fixed.strategy = Strategy::kNone;
    SearchConfig iter = quick_config(seed);
    iter.strategy = Strategy::kIterative;
    SearchResult a = run_gd(net, fixed);
    SearchResult b = run_gd(net, iter);
    CHECK(b.best_edp <= a.best_edp * (1.0 + 1e-12));
  }
}

TEST_CASE("budget accounting is exact") {
  Network net = two_layer_net();
  SearchConfig cfg = quick_config(7);
  cfg.eval_budget = 9;
  SearchResult res = run_gd(net, cfg);
  CHECK(res.evals_used == 9);
  CHECK(res.trace.size() == 9);

  SearchResult rnd = random_search(net, cfg.templ, 25, 7);
  CHECK(rnd.evals_used == 25);
  CHECK(rnd.trace.size() == 25);
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& e : rnd.trace) {
    CHECK(e.best_edp <= prev + 1e-12);
    prev = e.best_edp;
    for (std::size_t l = 0; l < e.mappings.size(); ++l)
      CHECK(validate(e.mappings[l], net.layers[l].shape));
  }
}

TEST_CASE("network-level loss couples layers through the latency sum") {
  // Gradient of layer 2's variables under the joint EDP objective
  // differs from the gradient when layer 2 is optimized alone, because
  // the network objective weighs its energy by the other layer's
  // latency contribution and vice versa.
  Network net = two_layer_net();
  Network solo;
  solo.add_layer(net.layers[1].shape);

  auto objective = [](const Network& n) {
    return [&n](ad::Tape&, const std::vector<ad::Var>& xs) -> ad::Var {
      std::vector<model::Factors<ad::Var>> factors;
      std::vector<LoopOrdering> ords(n.layers.size());
      for (std::size_t l = 0; l < n.layers.size(); ++l) {
        std::array<ad::Var, kNumFreeVars> x;
        for (int j = 0; j < kNumFreeVars; ++j)
          x[j] = xs[l * kNumFreeVars + j];
        factors.push_back(model::build_factors(x, n.layers[l].shape));
      }
      model::ModelOptions opt;
      return model::evaluate_network(factors, n, ords, opt).edp;
    };
  };

  std::vector<double> joint(2 * kNumFreeVars, 1.3);
  std::vector<double> alone(kNumFreeVars, 1.3);
  joint[0] = alone[0] = 1.7;
  auto gj = ad::grad(objective(net), joint);
  auto ga = ad::grad(objective(solo), alone);
  // Compare normalized directions of the shared coordinates.
  double dot = 0.0, nj = 0.0, na = 0.0;
  for (int j = 0; j < kNumFreeVars; ++j) {
    double a = gj.grad[kNumFreeVars + j], b = ga.grad[j];
    dot += a * b;
    nj += a * a;
    na += b * b;
  }
  double cosine = dot / std::sqrt(nj * na);
  CHECK(cosine < 1.0 - 1e-6);  // direction genuinely changes
}

TEST_CASE("fixed-hardware refinement keeps spatial factors and fits") {
  Network net = two_layer_net();
  ArchTemplate templ;
  ArchConfig arch;
  arch.templ = templ;
  arch.pe_side = 4;
  arch.acc_bytes = 1024;
  arch.sp_bytes = 1024;
  SearchConfig cfg = quick_config(11);
  cfg.steps_per_start = 120;
  cfg.rounding_period = 40;
  auto maps = refine_mappings_fixed_hw(net, arch, cfg);
  REQUIRE(maps.size() == net.layers.size());
  for (std::size_t l = 0; l < maps.size(); ++l) {
    CHECK(validate(maps[l], net.layers[l].shape));
    CHECK(pe_requirement(maps[l].factors) <=
          static_cast<double>(arch.num_pes()));
    CapacityReport cap =
        capacity_requirements(maps[l].factors, net.layers[l].shape);
    CHECK(cap.words[kLevelAcc][TenO] <= arch.acc_words_final());
    CHECK(cap.words[kLevelSp][TenW] + cap.words[kLevelSp][TenI] <=
          arch.sp_words_final());
  }
}

TEST_CASE("design bundle round-trips") {
  Network net = two_layer_net();
  SearchResult res = run_gd(net, quick_config(13));
  std::string text = serialize_design(res.best_arch, res.best_mappings);
  ArchTemplate templ;
  ArchConfig arch;
  std::vector<LayerMapping> maps;
  parse_design(text, templ, &arch, &maps);
  CHECK(arch.pe_side == res.best_arch.pe_side);
  CHECK(arch.acc_bytes == res.best_arch.acc_bytes);
  CHECK(arch.sp_bytes == res.best_arch.sp_bytes);
  REQUIRE(maps.size() == res.best_mappings.size());
  for (std::size_t l = 0; l < maps.size(); ++l) {
    CHECK(maps[l].factors.v == res.best_mappings[l].factors.v);
    CHECK(maps[l].ordering == res.best_mappings[l].ordering);
  }
  CHECK_THROWS(parse_design("# dosa-design-v1\nT0 1 1 1 1 1 1 1\n", templ,
                            &arch, &maps));
}

TEST_CASE("descent improves on the start point for a quick run") {
  Network net = two_layer_net();
  SearchConfig cfg = quick_config(19);
  cfg.n_start_points = 3;
  cfg.steps_per_start = 200;
  cfg.rounding_period = 50;
  SearchResult res = run_gd(net, cfg);
  CHECK(res.best_edp <= res.start_edp);
}
