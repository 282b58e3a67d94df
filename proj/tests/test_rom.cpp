#include <doctest.h>

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "nnmrom/chain.hpp"
#include "nnmrom/digest.hpp"
#include "nnmrom/errors.hpp"
#include "nnmrom/rom.hpp"

using namespace nnmrom;
using namespace nnmrom::rom;

namespace {

namespace fs = std::filesystem;

fs::path tmpdir() {
  const fs::path p = fs::temp_directory_path() / "nnmrom_rom_test";
  fs::create_directories(p);
  return p;
}

// Small linear 4-DOF chain dataset with forcing band-limited below the third
// mode, so two latent coordinates carry most of the response.
Dataset small_linear_dataset(std::uint64_t seed) {
  sim::ChainParams p;
  p.n_dof = 4;
  p.k_nl = 0.0;
  const sim::ChainSystem sys = sim::build_chain(p);

  sim::ForcingSpec spec;
  spec.drive_dofs = {0, 3};
  spec.noise_std = 2.0;
  spec.cutoff_hz = 4.0;
  spec.fs = 100.0;
  spec.duration = 120.0;
  spec.seed = seed;
  const MultiChannelSeries forcing = sim::generate_forcing(spec);

  Dataset ds;
  ds.forcing = forcing;
  ds.response = sim::simulate(sys, forcing, sim::State::zero(4)).displacement;
  return ds;
}

FitConfig small_fit_config() {
  FitConfig fc;
  fc.ae_split = 0.5;
  fc.arch = ae::AeArchitecture::standard(4, 2);
  fc.ae_train.epochs = 120;
  fc.ae_train.batch = 256;
  fc.ae_train.lr = 3e-3;
  fc.ae_train.patience = 120;
  fc.ae_train.seed = 11;
  fc.reg_cfg.lag = 20;
  fc.reg_cfg.hidden = 24;
  fc.reg_cfg.n_forcing = 2;
  fc.reg_cfg.n_latent = 2;
  fc.reg_cfg.train_fraction = 0.6;
  fc.reg_cfg.horizon = 200;
  fc.reg_train.epochs = 150;
  fc.reg_train.window = 100;
  fc.reg_train.lanes = 8;
  fc.reg_train.lr = 3e-3;
  fc.reg_train.patience = 150;
  fc.reg_train.seed = 12;
  fc.config_digest = "testcfg";
  fc.data_digest = "testdata";
  fc.seed = 99;
  return fc;
}

}  // namespace

TEST_CASE("fit_rom on an easy linear system reaches NMSE < 0.05 out of sample") {
  const Dataset ds = small_linear_dataset(61);
  const RomArtifact art = fit_rom(ds, small_fit_config());
  CHECK(art.autoencoder.arch.bottleneck == 2);
  CHECK(art.regressor.config.input_width() == 2 * 21 + 2 * 20);

  const EvaluationReport rep = evaluate(art, ds, 200);
  CHECK(rep.eval_start == 7200);  // max of the 0.5 and 0.6 splits
  CHECK_FALSE(rep.in_sample);
  CHECK(rep.complete);
  CHECK(rep.aggregate_nmse < 0.05);
}

TEST_CASE("rom_predict composes decode after the latent free run bit-exactly") {
  const Dataset ds = small_linear_dataset(62);
  const RomArtifact art = fit_rom(ds, small_fit_config());

  const std::size_t start = 7500, lag = art.regressor.config.lag;
  WarmupData warm{ds.forcing.slice(start - 2 * lag, start),
                  ds.response.slice(start - 2 * lag, start)};
  const MultiChannelSeries fut = ds.forcing.slice(start, start + 150);

  reg::FreeRunResult latent_run;
  const MultiChannelSeries pred = rom_predict(art, fut, warm, 150, &latent_run);

  // Manual chain through the module calls.
  reg::Warmup w;
  w.forcing = warm.forcing;
  w.latents = ae::encode(art.autoencoder, warm.displacement);
  const reg::FreeRunResult manual =
      reg::free_run_predict(art.regressor, fut, w, 150);
  const MultiChannelSeries manual_pred = ae::decode(art.autoencoder, manual.latents);
  CHECK(pred.values == manual_pred.values);
  CHECK(latent_run.latents.values == manual.latents.values);

  // Horizon zero produces an empty series.
  const MultiChannelSeries empty = rom_predict(art, fut, warm, 0);
  CHECK(empty.steps() == 0);
}

TEST_CASE("evaluate reports near-zero error when the model generates the truth") {
  const Dataset ds = small_linear_dataset(63);
  const RomArtifact art = fit_rom(ds, small_fit_config());

  // Paste the model's own prediction into the evaluation window: the metric
  // path must then report (numerically) zero error.
  const std::size_t n = ds.response.steps();
  const auto start = static_cast<std::size_t>(static_cast<double>(n) * 0.6);
  const std::size_t horizon = 150;
  const std::size_t lag = art.regressor.config.lag;
  WarmupData warm{ds.forcing.slice(start - 2 * lag, start),
                  ds.response.slice(start - 2 * lag, start)};
  const MultiChannelSeries pred = rom_predict(
      art, ds.forcing.slice(start, start + horizon), warm, horizon);

  Dataset planted = ds;
  for (std::size_t i = 0; i < horizon; ++i)
    for (std::size_t c = 0; c < pred.channels; ++c)
      planted.response.at(start + i, c) = pred.at(i, c);

  const EvaluationReport rep = evaluate(art, planted, horizon);
  CHECK(rep.eval_start == start);
  CHECK(rep.aggregate_nmse < 1e-3);
}

TEST_CASE("evaluate flags in-sample windows") {
  const Dataset ds = small_linear_dataset(64);
  const RomArtifact art = fit_rom(ds, small_fit_config());
  const EvaluationReport rep = evaluate(art, ds, 100, "", 2000);
  CHECK(rep.in_sample);
}

TEST_CASE("mismatched component widths are rejected") {
  const Dataset ds = small_linear_dataset(65);
  FitConfig fc = small_fit_config();
  fc.reg_cfg.n_latent = 3;  // bottleneck stays 2
  CHECK_THROWS_AS(fit_rom(ds, fc), ConfigInconsistent);
}

TEST_CASE("artifact container: round trip, damage, schema evolution") {
  const Dataset ds = small_linear_dataset(66);
  FitConfig fc = small_fit_config();
  fc.ae_train.epochs = 10;
  fc.reg_train.epochs = 5;
  const RomArtifact art = fit_rom(ds, fc);

  const std::string path = (tmpdir() / "rom.bin").string();
  save_artifact(path, art);
  const RomArtifact back = load_artifact(path);
  CHECK(back.provenance.config_digest == "testcfg");
  CHECK(back.provenance.seed == 99);

  const std::size_t start = 7300, lag = art.regressor.config.lag;
  WarmupData warm{ds.forcing.slice(start - 2 * lag, start),
                  ds.response.slice(start - 2 * lag, start)};
  const MultiChannelSeries fut = ds.forcing.slice(start, start + 100);
  const MultiChannelSeries p1 = rom_predict(art, fut, warm, 100);
  const MultiChannelSeries p2 = rom_predict(back, fut, warm, 100);
  CHECK(p1.values == p2.values);  // bit-identical after the round trip

  // Truncation is caught by the checksum.
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    const std::string cut = (tmpdir() / "rom_cut.bin").string();
    std::ofstream out(cut, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 17));
    out.close();
    CHECK_THROWS_AS(load_artifact(cut), CorruptFile);
  }

  // Flipping a payload byte without fixing the CRC is also caught.
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    bytes[bytes.size() / 2] ^= 0x40;
    const std::string bad = (tmpdir() / "rom_bad.bin").string();
    std::ofstream out(bad, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_AS(load_artifact(bad), CorruptFile);
  }

  // Schema evolution: a version-1 file loads under a loader that supports
  // up to version 2, with a provenance note; a version-2 file is rejected
  // by the version-1 loader.
  const RomArtifact evolved = load_artifact(path, 2);
  CHECK(evolved.provenance.note.find("schema version 1") != std::string::npos);
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    bytes[8] = 2;  // version field sits right after the magic
    // Recompute the trailing CRC over the patched body.
    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
              static_cast<uInt>(bytes.size() - 4)));
    std::memcpy(bytes.data() + bytes.size() - 4, &crc, 4);
    const std::string v2 = (tmpdir() / "rom_v2.bin").string();
    std::ofstream out(v2, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_AS(load_artifact(v2), VersionMismatch);
    const RomArtifact v2art = load_artifact(v2, 2);
    CHECK(v2art.provenance.note.empty());
  }
}

TEST_CASE("identical config and seeds reproduce identical artifacts") {
  const Dataset ds = small_linear_dataset(67);
  FitConfig fc = small_fit_config();
  fc.ae_train.epochs = 8;
  fc.reg_train.epochs = 4;
  const RomArtifact a = fit_rom(ds, fc);
  const RomArtifact b = fit_rom(ds, fc);

  const std::string pa = (tmpdir() / "rom_a.bin").string();
  const std::string pb = (tmpdir() / "rom_b.bin").string();
  save_artifact(pa, a);
  save_artifact(pb, b);
  CHECK(digest_file(pa) == digest_file(pb));
}
