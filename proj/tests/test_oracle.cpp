#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dosa/oracle.hpp"
#include "dosa/sampling.hpp"

using namespace dosa;

namespace {

LayerShape small_matmul() {
  LayerShape l;
  l.dims[DimP] = 2;
  l.dims[DimQ] = 2;
  l.dims[DimC] = 2;
  l.dims[DimK] = 2;
  return l;
}

}  // namespace

TEST_CASE("tile_words covers the window span, including halos") {
  LayerShape l;
  l.dims[DimR] = 3;
  l.dims[DimP] = 4;
  LayerMapping m;
  m.factors.at(kTemporal, 1, DimR) = 3;
  m.factors.at(kTemporal, 1, DimP) = 4;
  derive_dram_factors(&m.factors, l);
  // ih = 1*(4-1)+3 = 6 rows for stride 1
  CHECK(oracle::tile_words(m.factors, l, 1, TenI) == 6);
  l.pstride = 2;  // rows {p*2+r} = {0..8}
  CHECK(oracle::tile_words(m.factors, l, 1, TenI) == 9);
  l.pstride = 4;  // span 0..14 even though the window skips rows
  CHECK(oracle::tile_words(m.factors, l, 1, TenI) == 15);
}

TEST_CASE("writes depend on where irrelevant loops sit in the order") {
  // All four dims iterated at DRAM. With W-stationary DRAM loops the W
  // tile is filled once per (c,k); with O-stationary the inner C loop
  // re-touches it under every (p,q).
  LayerShape l = small_matmul();
  LayerMapping m;
  derive_dram_factors(&m.factors, l);
  BypassMatrix bp;
  m.ordering.level[3] = Ordering::WS;
  CHECK(oracle::simulate_traffic(m, l, bp).writes[kLevelSp][TenW] == 4.0);
  m.ordering.level[3] = Ordering::OS;
  CHECK(oracle::simulate_traffic(m, l, bp).writes[kLevelSp][TenW] == 16.0);
  m.ordering.level[3] = Ordering::IS;
  CHECK(oracle::simulate_traffic(m, l, bp).writes[kLevelSp][TenI] == 8.0);
}

TEST_CASE("DRAM writes equal the tensor sizes") {
  LayerShape l = small_matmul();
  Rng rng(7);
  BypassMatrix bp;
  for (int n = 0; n < 20; ++n) {
    LayerMapping m = random_mapping(rng, l);
    auto tr = oracle::simulate_traffic(m, l, bp);
    CHECK(tr.writes[kLevelDram][TenW] == 4.0);
    CHECK(tr.writes[kLevelDram][TenI] == 8.0);
    CHECK(tr.writes[kLevelDram][TenO] == 8.0);
  }
}

TEST_CASE("spatial factors feed parallel tiles without breaking runs") {
  LayerShape l = small_matmul();
  LayerMapping m;
  m.factors.at(kSpatial, 1, DimC) = 2;
  m.factors.at(kSpatial, 2, DimK) = 2;
  derive_dram_factors(&m.factors, l);
  BypassMatrix bp;
  auto tr = oracle::simulate_traffic(m, l, bp);
  // Whole W tensor is spatially resident: one fill of 4 words.
  CHECK(tr.writes[kLevelSp][TenW] == 4.0);
  // Innermost reads divide by the irrelevant spatial fan.
  CHECK(tr.reads[kLevelReg][TenW] == tr.macs);
  CHECK(tr.reads[kLevelAcc][TenO] == tr.macs / 2.0);  // C spatial broadcast
  CHECK(tr.reads[kLevelSp][TenI] == tr.macs / 2.0);   // K spatial broadcast
}

TEST_CASE("invalid mappings are rejected with diagnostics") {
  LayerShape l = small_matmul();
  LayerMapping m;
  derive_dram_factors(&m.factors, l);
  m.factors.at(kTemporal, 1, DimC) = 1.5;
  BypassMatrix bp;
  CHECK_THROWS_AS(oracle::simulate_traffic(m, l, bp), ValidationError);
}

TEST_CASE("oversized iteration spaces hit the cap") {
  LayerShape l;
  l.dims[DimC] = 4096;
  l.dims[DimK] = 4096;
  l.dims[DimP] = 4096;
  LayerMapping m;
  derive_dram_factors(&m.factors, l);
  BypassMatrix bp;
  CHECK_THROWS_AS(oracle::simulate_traffic(m, l, bp), std::runtime_error);
}
