#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <string>

#include "hdmap/io.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace hdmap;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(HDMAP_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

nlohmann::json report(const fs::path& dir) { return nlohmann::json::parse(read_file(dir / "report.json")); }

}  // namespace

TEST_CASE("synth edge cases and determinism") {
  const auto dir = testing::scratch_dir("cli_synth");
  Run r = run("synth --n 0 --seed 1 --out " + q(dir / "zero"));
  CHECK(r.code == 0);
  CHECK(read_manifest(dir / "zero").scenes == 0);
  CHECK_FALSE(fs::exists(scene_dir(dir / "zero", 0)));

  REQUIRE(run("synth --n 1 --seed 9 --out " + q(dir / "a")).code == 0);
  REQUIRE(run("synth --n 1 --seed 9 --out " + q(dir / "b")).code == 0);
  for (const char* f : {"map.json", "labels.bvg", "points.bvp", "meta.json", "cam_front.bvg"}) {
    CHECK(read_file(scene_dir(dir / "a", 0) / f) == read_file(scene_dir(dir / "b", 0) / f));
  }

  CHECK(run("synth --n 1 --out " + q(dir / "c")).code == 2);
  CHECK(run("synth --n 1 --seed 1").code == 2);
}

TEST_CASE("eval of labels against themselves and against nothing") {
  const auto dir = testing::scratch_dir("cli_eval");
  REQUIRE(run("synth --n 2 --seed 3 --out " + q(dir / "data")).code == 0);

  REQUIRE(run("eval --pred " + q(dir / "data") + " --gt " + q(dir / "data") + " --out " + q(dir / "self")).code == 0);
  const auto self = report(dir / "self");
  CHECK(self["classes"]["divider"]["iou"].get<double>() == doctest::Approx(1.0));
  CHECK(self["classes"]["divider"]["cd"].get<double>() == doctest::Approx(0.0));
  CHECK(self["all"]["map"].get<double>() == doctest::Approx(1.0));

  // Empty predictions for every scene.
  const fs::path empty = dir / "empty";
  for (std::size_t i = 0; i < 2; ++i) {
    VectorMap vm = read_vector_map(scene_dir(dir / "data", i) / "map.json");
    vm.elements.clear();
    fs::create_directories(scene_dir(empty, i));
    write_vector_map(scene_dir(empty, i) / "map.json", vm);
  }
  REQUIRE(run("eval --pred " + q(empty) + " --gt " + q(dir / "data") + " --thresholds 0.5,1 --out " +
              q(dir / "none"))
              .code == 0);
  const auto none = report(dir / "none");
  CHECK(none["all"]["map"].get<double>() == 0.0);
  CHECK(none["classes"]["boundary"]["iou"].get<double>() == 0.0);
  CHECK(none["classes"]["boundary"]["cd_capped"].get<bool>());
  CHECK(none["thresholds"].size() == 2);
  CHECK(none["classes"]["divider"]["ap"].contains("0.5"));

  CHECK(run("eval --pred " + q(empty) + " --gt " + q(dir / "data") + " --thresholds 0.5,x").code == 2);
}

TEST_CASE("malformed inputs exit 3 with file and byte offset") {
  const auto dir = testing::scratch_dir("cli_bad");
  REQUIRE(run("synth --n 1 --seed 2 --out " + q(dir / "data")).code == 0);
  const fs::path scene = scene_dir(dir / "data", 0);
  const std::string labels = read_file(scene / "labels.bvg");
  write_file(scene / "labels.bvg", labels.substr(0, 100));
  Run r = run("vectorize --ideal --in " + q(scene) + " --out " + q(dir / "vec"));
  CHECK(r.code == 3);
  CHECK(r.output.find("labels.bvg") != std::string::npos);
  CHECK(r.output.find("byte 100") != std::string::npos);

  write_file(dir / "bad.json", "{\"bev\": {\"x_min\": -30,");
  r = run("eval --pred " + q(dir / "bad.json") + " --gt " + q(dir / "bad.json"));
  CHECK(r.code == 3);
  CHECK(r.output.find("bad.json: byte") != std::string::npos);
}

TEST_CASE("vectorize ideal grids recovers the map") {
  const auto dir = testing::scratch_dir("cli_vec");
  REQUIRE(run("synth --n 2 --seed 4 --out " + q(dir / "data")).code == 0);
  REQUIRE(run("vectorize --ideal --in " + q(dir / "data") + " --out " + q(dir / "vec")).code == 0);
  for (std::size_t i = 0; i < 2; ++i) {
    const VectorMap gt = read_vector_map(scene_dir(dir / "data", i) / "map.json");
    const VectorMap pred = read_vector_map(scene_dir(dir / "vec", i) / "map.json");
    CHECK(pred.elements.size() == gt.elements.size());
    CHECK(fs::exists(scene_dir(dir / "vec", i) / "map.svg"));
  }
  REQUIRE(run("eval --pred " + q(dir / "vec") + " --gt " + q(dir / "data") + " --out " + q(dir / "rep")).code == 0);
  CHECK(report(dir / "rep")["all"]["ap"]["1"].get<double>() == doctest::Approx(1.0));
}

TEST_CASE("ipm subcommand") {
  const auto dir = testing::scratch_dir("cli_ipm");
  REQUIRE(run("synth --n 1 --seed 6 --out " + q(dir / "data")).code == 0);
  REQUIRE(run("ipm --scene " + q(scene_dir(dir / "data", 0)) + " --out " + q(dir / "ipm")).code == 0);
  const Grid2D fused = read_bvg(dir / "ipm" / "ipm.bvg");
  CHECK(fused.height() == BevConfig{}.rows());
  CHECK(fused.width() == BevConfig{}.cols());
}
