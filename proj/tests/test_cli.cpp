#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "nnmrom/csv.hpp"
#include "nnmrom/digest.hpp"

using namespace nnmrom;
namespace fs = std::filesystem;

namespace {

const char* kCli = NNMROM_CLI_PATH;

fs::path tmpdir() {
  const fs::path p = fs::temp_directory_path() / "nnmrom_cli_test";
  fs::create_directories(p);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string(kCli) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string micro_config() {
  const fs::path p = tmpdir() / "micro.json";
  std::ofstream f(p);
  f << R"({
    "seed": 7,
    "system": {"n_dof": 4},
    "forcing": {"std": 2.0, "duration": 40.0, "cutoff_hz": 4.0, "drive_dofs": [0, 3]},
    "ae": {"latent": 2, "epochs": 25, "patience": 25, "lr": 0.003},
    "regressor": {"lag": 10, "hidden": 12, "horizon": 100, "epochs": 10,
                   "window": 60, "lanes": 8, "patience": 10, "lr": 0.003},
    "analysis": {"segment": 512}
  })";
  return p.string();
}

}  // namespace

TEST_CASE("cli: --help exits 0 on every subcommand") {
  CHECK(run("--help") == 0);
  for (const char* sub : {"simulate", "train-ae", "train-lstm", "fit", "predict",
                          "evaluate", "analyze", "full-run"}) {
    CAPTURE(sub);
    CHECK(run(std::string(sub) + " --help") == 0);
  }
}

TEST_CASE("cli: usage and config errors exit 2") {
  CHECK(run("no-such-command") == 2);
  CHECK(run("simulate --config /nonexistent.json") != 0);

  const fs::path bad = tmpdir() / "bad.json";
  std::ofstream(bad) << R"({"system": {"bogus_key": 1}})";
  CHECK(run("simulate --config " + bad.string()) == 2);

  // --latent-corr without --ae is a usage error.
  const std::string cfg = micro_config();
  const std::string out = (tmpdir() / "sim1").string();
  REQUIRE(run("simulate --config " + cfg + " --out " + out) == 0);
  CHECK(run("analyze --data " + out + "/dataset.csv --latent-corr") == 2);
}

TEST_CASE("cli: simulate emits the documented CSV shape deterministically") {
  const std::string out1 = (tmpdir() / "sim_a").string();
  const std::string out2 = (tmpdir() / "sim_b").string();
  REQUIRE(run("simulate --duration 1 --out " + out1) == 0);
  REQUIRE(run("simulate --duration 1 --out " + out2) == 0);

  std::ifstream f(out1 + "/dataset.csv");
  std::string header;
  std::getline(f, header);
  CHECK(header.substr(0, 10) == "t,f1,f20,x");
  std::size_t rows = 0;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 100);  // 1 s at 100 Hz

  const Dataset ds = read_dataset_csv(out1 + "/dataset.csv");
  CHECK(ds.forcing.channels == 2);
  CHECK(ds.response.channels == 20);

  // Byte-identical across runs with the same seed.
  CHECK(digest_file(out1 + "/dataset.csv") == digest_file(out2 + "/dataset.csv"));

  // A different seed changes the data.
  const std::string out3 = (tmpdir() / "sim_c").string();
  REQUIRE(run("simulate --duration 1 --seed 123 --out " + out3) == 0);
  CHECK(digest_file(out1 + "/dataset.csv") != digest_file(out3 + "/dataset.csv"));
}

TEST_CASE("cli: full micro pipeline, manifest, and failure marker") {
  const std::string cfg = micro_config();
  const std::string out = (tmpdir() / "run1").string();
  fs::remove_all(out);
  REQUIRE(run("full-run --config " + cfg + " --out " + out) == 0);
  CHECK(fs::exists(out + "/dataset.csv"));
  CHECK(fs::exists(out + "/rom.bin"));
  CHECK(fs::exists(out + "/report.json"));
  CHECK(fs::exists(out + "/manifest.json"));
  CHECK_FALSE(fs::exists(out + "/.partial"));

  // Determinism of the artifact across reruns.
  const std::string out2 = (tmpdir() / "run2").string();
  fs::remove_all(out2);
  REQUIRE(run("full-run --config " + cfg + " --out " + out2) == 0);
  CHECK(digest_file(out + "/rom.bin") == digest_file(out2 + "/rom.bin"));
  CHECK(digest_file(out + "/dataset.csv") == digest_file(out2 + "/dataset.csv"));

  // Prediction from the stored artifact.
  const std::string pred = (tmpdir() / "pred.csv").string();
  CHECK(run("predict --rom " + out + "/rom.bin --forcing " + out +
            "/dataset.csv --horizon 50 --start 3000 --out " + pred) == 0);
  CHECK(fs::exists(pred));

  // Evaluate against the same dataset.
  const std::string rep = (tmpdir() / "rep.json").string();
  CHECK(run("evaluate --rom " + out + "/rom.bin --data " + out +
            "/dataset.csv --report " + rep) == 0);
  CHECK(fs::exists(rep));

  // Analyze with the linear baseline and force export.
  const std::string an = (tmpdir() / "an").string();
  CHECK(run("analyze --data " + out + "/dataset.csv --config " + cfg +
            " --linear-baseline --force-dof 2 --segment 512 --out " + an) == 0);
  CHECK(fs::exists(an + "/coherence_dof1.csv"));
  CHECK(fs::exists(an + "/coherence_linear_dof1.csv"));
  CHECK(fs::exists(an + "/force_dof2.csv"));

  // A diverging configuration leaves the .partial marker and exits 3.
  const fs::path blowup_cfg = tmpdir() / "blowup.json";
  std::ofstream(blowup_cfg) << R"({
    "system": {"n_dof": 2, "k_lin": 1e8, "k_nl": 1e9},
    "forcing": {"std": 1e9, "duration": 30.0, "cutoff_hz": 4.0, "fs": 10.0,
                 "drive_dofs": [0, 1]},
    "ae": {"latent": 1, "epochs": 2},
    "regressor": {"lag": 5, "hidden": 4, "horizon": 10, "epochs": 2}
  })";
  const std::string out3 = (tmpdir() / "run3").string();
  fs::remove_all(out3);
  CHECK(run("full-run --config " + blowup_cfg.string() + " --out " + out3) == 3);
  CHECK(fs::exists(out3 + "/.partial"));
}

TEST_CASE("cli: NNMROM_SEED env var steers the run, flags win over it") {
  const std::string a = (tmpdir() / "env_a").string();
  const std::string b = (tmpdir() / "env_b").string();
  const std::string c = (tmpdir() / "env_c").string();
  const std::string base = std::string(kCli) + " simulate --duration 1 ";
  REQUIRE(std::system(("NNMROM_SEED=42 " + base + "--out " + a + " >/dev/null 2>&1").c_str()) == 0);
  REQUIRE(std::system(("NNMROM_SEED=43 " + base + "--out " + b + " >/dev/null 2>&1").c_str()) == 0);
  REQUIRE(std::system(("NNMROM_SEED=43 " + base + "--seed 42 --out " + c + " >/dev/null 2>&1").c_str()) == 0);
  CHECK(digest_file(a + "/dataset.csv") != digest_file(b + "/dataset.csv"));
  CHECK(digest_file(a + "/dataset.csv") == digest_file(c + "/dataset.csv"));
}
