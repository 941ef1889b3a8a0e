#include <gtest/gtest.h>

#include <cstring>
#include <random>
#include <sstream>

#include "cafl/features.hpp"
#include "cafl/raster_io.hpp"
#include "cafl/synthetic.hpp"

using namespace cafl;

namespace {

RasterLayer parse(const std::string& text) {
  std::istringstream in(text);
  return read_ascii_grid(in);
}

std::string write(const RasterLayer& l) {
  std::ostringstream out;
  write_ascii_grid(l, out);
  return out.str();
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return {};
}

const char* kHeader2x2 =
    "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n";

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(ReadAsciiGrid, EchoesValuesRowMajor) {
  const auto l = parse(std::string(kHeader2x2) + "1 2\n3 4\n");
  EXPECT_EQ(l.header.ncols, 2u);
  EXPECT_EQ(l.header.nrows, 2u);
  EXPECT_EQ(l.values, (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(l.at(1, 0), 3.0);
}

TEST(ReadAsciiGrid, ShortBodyNamesLastDataLine) {
  const std::string msg = error_of(std::string(kHeader2x2) + "1 2\n3\n");
  EXPECT_NE(msg.find("value count mismatch"), std::string::npos) << msg;
  EXPECT_NE(msg.find("at line 8"), std::string::npos) << msg;
}

TEST(ReadAsciiGrid, ExtraValuesNameTheirLine) {
  const std::string msg = error_of(std::string(kHeader2x2) + "1 2\n3 4\n5\n");
  EXPECT_NE(msg.find("value count mismatch"), std::string::npos) << msg;
  EXPECT_NE(msg.find("at line 9"), std::string::npos) << msg;
}

TEST(ReadAsciiGrid, NonNumericValueNamesLine) {
  const std::string msg = error_of(std::string(kHeader2x2) + "1 2\n3 x\n");
  EXPECT_NE(msg.find("non-numeric value 'x'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("at line 8"), std::string::npos) << msg;
}

TEST(ReadAsciiGrid, HeaderErrors) {
  EXPECT_NE(error_of("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 0\n1 2\n3 4\n").find("cellsize must be > 0"),
            std::string::npos);
  EXPECT_NE(error_of("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nbogus 3\n1 2 3 4\n")
                .find("malformed header key 'bogus'"),
            std::string::npos);
  EXPECT_NE(error_of("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ndx 1\ndy 2\n1 2 3 4\n").find("rectangular"),
            std::string::npos);
  EXPECT_NE(error_of("ncols 2\nnrows 2\nxllcorner 0\n1 2 3 4\n").find("incomplete header"), std::string::npos);
}

TEST(ReadAsciiGrid, CaseInsensitiveKeysAndDefaults) {
  const auto l = parse("NCOLS 1\nNROWS 1\nXLLCENTER 10.5\nYLLCENTER 20.5\nCELLSIZE 1\n7\n");
  EXPECT_DOUBLE_EQ(l.header.xllcorner, 10.0);
  EXPECT_DOUBLE_EQ(l.header.yllcorner, 20.0);
  EXPECT_EQ(l.header.nodata_value, -9999.0);
  EXPECT_EQ(l.values, std::vector<double>{7});
}

TEST(ReadAsciiGrid, EqualDxDyActsAsCellsize) {
  const auto l = parse("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ndx 2.5\ndy 2.5\n1\n");
  EXPECT_EQ(l.header.cellsize, 2.5);
}

TEST(WriteAsciiGrid, SingleCell) {
  RasterLayer l{synthetic::header(1, 1), {0.0}};
  EXPECT_EQ(write(l), "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n0\n");
}

TEST(WriteAsciiGrid, NodataWrittenAsLiteralToken) {
  RasterLayer l{synthetic::header(1, 2), {-9999.0, 1.5}};
  const std::string s = write(l);
  EXPECT_NE(s.find("\n-9999 1.5\n"), std::string::npos) << s;
}

TEST(WriteAsciiGrid, RoundTripSyntheticDemBitForBit) {
  const auto t = synthetic::uneven(5, 5, 2.0);
  const RasterLayer in = t.elevation_layer();
  const auto out = parse(write(in));
  EXPECT_EQ(out.header, in.header);
  EXPECT_TRUE(bit_equal(out.values, in.values));
}

TEST(WriteAsciiGrid, RoundTripRandomGrids) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> val(-1e6, 1e6), exp_pick(-300, 300);
  for (int trial = 0; trial < 200; ++trial) {
    RasterLayer l;
    l.header = synthetic::header(10, 10, 0.5 + trial);
    l.header.xllcorner = val(rng);
    l.header.yllcorner = val(rng);
    l.values.resize(100);
    for (auto& v : l.values) {
      v = trial % 2 ? val(rng) : std::ldexp(val(rng), static_cast<int>(exp_pick(rng)) / 4);
      if (rng() % 10 == 0) v = l.header.nodata_value;
    }
    const auto back = parse(write(l));
    ASSERT_EQ(back.header, l.header);
    ASSERT_TRUE(bit_equal(back.values, l.values)) << "trial " << trial;
  }
}

TEST(MakeTerrain, RejectsMisalignedRoughness) {
  RasterLayer dem{synthetic::header(2, 2), {1, 2, 3, 4}};
  RasterLayer n{synthetic::header(2, 3), std::vector<double>(6, 0.03)};
  EXPECT_THROW(make_terrain(dem, n), Error);
}

TEST(MakeTerrain, RoughnessRangeAndNodata) {
  RasterLayer dem{synthetic::header(1, 2), {1, -9999}};
  RasterLayer ok{synthetic::header(1, 2), {0.03, -9999}};
  const auto t = make_terrain(dem, ok);
  EXPECT_TRUE(t.valid(0));
  EXPECT_FALSE(t.valid(1));
  RasterLayer bad{synthetic::header(1, 2), {1.5, 0.03}};
  EXPECT_THROW(make_terrain(dem, bad), Error);
  RasterLayer hole{synthetic::header(1, 2), {-9999, 0.03}};
  EXPECT_THROW(make_terrain(dem, hole), Error);
  EXPECT_THROW(make_terrain(dem, 0.0), Error);
}

TEST(GeoJson, EmptyCollection) {
  std::istringstream in(R"({"type":"FeatureCollection","features":[]})");
  EXPECT_TRUE(load_geojson_features(in).empty());
}

TEST(GeoJson, SquareBuildingRingClosed) {
  std::istringstream in(R"({"type":"FeatureCollection","features":[
    {"type":"Feature","id":"b1","properties":{"kind":"building"},
     "geometry":{"type":"Polygon","coordinates":[[[0,0],[10,0],[10,10],[0,10]]]}}]})");
  const auto fs = load_geojson_features(in);
  ASSERT_EQ(fs.size(), 1u);
  const auto& f = fs.features[0];
  EXPECT_EQ(f.id, "b1");
  EXPECT_EQ(f.kind, FeatureKind::building);
  ASSERT_EQ(f.rings.size(), 1u);
  EXPECT_EQ(f.rings[0].size(), 5u);
  EXPECT_EQ(f.rings[0].front(), f.rings[0].back());
}

TEST(GeoJson, PointFeatureRejectedById) {
  std::istringstream in(R"({"type":"FeatureCollection","features":[
    {"type":"Feature","id":"pole-7","properties":{},"geometry":{"type":"Point","coordinates":[1,2]}}]})");
  try {
    load_geojson_features(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("pole-7"), std::string::npos) << e.what();
  }
}

TEST(GeoJson, KindsAndMultiGeometries) {
  std::istringstream in(R"({"type":"FeatureCollection","features":[
    {"type":"Feature","properties":{"id":"r1"},
     "geometry":{"type":"LineString","coordinates":[[0,0],[5,5]]}},
    {"type":"Feature","properties":{"kind":"infrastructure","id":"m"},
     "geometry":{"type":"MultiPolygon","coordinates":[[[[0,0],[1,0],[1,1],[0,0]]],[[[2,2],[3,2],[3,3],[2,2]]]]}}]})");
  const auto fs = load_geojson_features(in);
  ASSERT_EQ(fs.size(), 3u);
  EXPECT_EQ(fs.features[0].kind, FeatureKind::road);
  EXPECT_EQ(fs.features[0].id, "r1");
  EXPECT_EQ(fs.features[1].kind, FeatureKind::infrastructure);
  EXPECT_NE(fs.features[1].id, fs.features[2].id);
}
