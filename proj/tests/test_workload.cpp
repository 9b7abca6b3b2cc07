#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dosa/workload.hpp"

using namespace dosa;

static const char* kDoc =
    "# dosa-workload-v1\n"
    "network tiny\n"
    "layer R=3 S=3 P=8 Q=8 C=4 K=8 N=1 Pstride=1 Qstride=1\n"
    "layer R=1 S=1 P=4 Q=4 C=8 K=16 N=1 Pstride=1 Qstride=1 repeat=2\n"
    "layer R=3 S=3 P=8 Q=8 C=4 K=8 N=1 Pstride=1 Qstride=1\n";

TEST_CASE("parse merges duplicate layers into repeat counts") {
  Network net = parse_workload(kDoc);
  CHECK(net.name == "tiny");
  REQUIRE(net.layers.size() == 2);
  CHECK(net.layers[0].repeat == 2);  // two occurrences of the conv
  CHECK(net.layers[1].repeat == 2);  // explicit repeat=2
  CHECK(net.layers[0].shape.dims[DimR] == 3);
  CHECK(net.layers[1].shape.dims[DimK] == 16);
}

TEST_CASE("serialize/parse round-trip") {
  Network net = parse_workload(kDoc);
  Network again = parse_workload(serialize_workload(net));
  REQUIRE(again.layers.size() == net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    CHECK(again.layers[i].shape == net.layers[i].shape);
    CHECK(again.layers[i].repeat == net.layers[i].repeat);
  }
}

TEST_CASE("layer_macs multiplies all seven extents") {
  Network net = parse_workload(kDoc);
  CHECK(layer_macs(net.layers[0].shape) == 3 * 3 * 8 * 8 * 4 * 8);
  CHECK(layer_macs(net.layers[1].shape) == 4 * 4 * 8 * 16);
}

TEST_CASE("parse errors carry the line number and field name") {
  try {
    parse_workload("network x\nlayer R=3 S=3 P=8 Q=8 C=4 K=8 Pstride=1\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
    CHECK(std::string(e.what()).find("N") != std::string::npos);
  }
  try {
    parse_workload("layer R=a S=3 P=8 Q=8 C=4 K=8 N=1\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 1);
    CHECK(std::string(e.what()).find("R") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_workload("bogus record\n"), ParseError);
}

TEST_CASE("zero extents are rejected") {
  CHECK_THROWS_AS(
      parse_workload("layer R=3 S=3 P=0 Q=8 C=4 K=8 N=1\n"), ParseError);
}
