#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "nnmrom/csv.hpp"
#include "nnmrom/digest.hpp"
#include "nnmrom/errors.hpp"
#include "nnmrom/rng.hpp"
#include "nnmrom/series.hpp"

using namespace nnmrom;
namespace fs = std::filesystem;

namespace {

fs::path tmpdir() {
  const fs::path p = fs::temp_directory_path() / "nnmrom_series_test";
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("series basics and validation") {
  MultiChannelSeries s(0.01, 2, 3, {"x1", "x2"});
  s.at(0, 0) = 1.0;
  s.at(2, 1) = -2.0;
  CHECK(s.steps() == 3);
  CHECK(s.channel(1) == std::vector<double>{0.0, 0.0, -2.0});
  s.validate();

  MultiChannelSeries bad = s;
  bad.at(1, 0) = std::nan("");
  CHECK_THROWS_AS(bad.validate(), InvalidParams);

  MultiChannelSeries bad_dt = s;
  bad_dt.dt = 0.0;
  CHECK_THROWS_AS(bad_dt.validate(), InvalidParams);

  const MultiChannelSeries sl = s.slice(1, 3);
  CHECK(sl.steps() == 2);
  CHECK(sl.at(1, 1) == -2.0);
}

TEST_CASE("indexed labels parse 1-based indices") {
  MultiChannelSeries s(0.01, 2, 1, {"f1", "f20"});
  const auto dofs = parse_indexed_labels(s, 'f');
  CHECK(dofs == std::vector<std::size_t>{0, 19});
  MultiChannelSeries bad(0.01, 1, 1, {"q3"});
  CHECK_THROWS_AS(parse_indexed_labels(bad, 'f'), InvalidParams);
}

TEST_CASE("dataset csv round trip") {
  Rng rng(3);
  Dataset ds;
  ds.forcing = MultiChannelSeries(0.01, 2, 50, {"f1", "f4"});
  ds.response = MultiChannelSeries(0.01, 4, 50, make_labels('x', 4));
  for (double& v : ds.forcing.values) v = rng.gaussian();
  for (double& v : ds.response.values) v = rng.gaussian();

  const std::string path = (tmpdir() / "roundtrip.csv").string();
  write_dataset_csv(path, ds);
  const Dataset back = read_dataset_csv(path);

  CHECK(back.forcing.labels == ds.forcing.labels);
  CHECK(back.response.labels == ds.response.labels);
  CHECK(back.drive_dofs() == std::vector<std::size_t>{0, 3});
  CHECK(back.response.dt == doctest::Approx(0.01).epsilon(1e-12));
  // %.12e keeps ~13 significant digits.
  for (std::size_t i = 0; i < ds.response.values.size(); ++i)
    CHECK(back.response.values[i] ==
          doctest::Approx(ds.response.values[i]).epsilon(1e-11));

  // Writing the same data twice is byte-identical.
  const std::string path2 = (tmpdir() / "roundtrip2.csv").string();
  write_dataset_csv(path2, ds);
  CHECK(digest_file(path) == digest_file(path2));
}

TEST_CASE("series csv rejects malformed input") {
  const std::string path = (tmpdir() / "bad.csv").string();
  {
    std::ofstream f(path);
    f << "t,x1\n0.0,1.0\n0.01,abc\n";
  }
  CHECK_THROWS_AS(read_series_csv(path), CorruptFile);
  {
    std::ofstream f(path);
    f << "t,x1\n0.0,1.0\n0.5,2.0\n0.6,3.0\n";  // non-uniform time
  }
  CHECK_THROWS_AS(read_series_csv(path), CorruptFile);
}

TEST_CASE("fnv digest is stable") {
  const char* msg = "nnmrom";
  const std::uint64_t d1 = digest_bytes(msg, 6);
  const std::uint64_t d2 = digest_bytes(msg, 6);
  CHECK(d1 == d2);
  CHECK(digest_hex(d1).size() == 16);
  CHECK(digest_bytes("a", 1) != digest_bytes("b", 1));
}
