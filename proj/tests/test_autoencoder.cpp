#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "nnmrom/autoencoder.hpp"
#include "nnmrom/errors.hpp"
#include "nnmrom/rng.hpp"
#include "nnmrom/signal.hpp"

using namespace nnmrom;
using namespace nnmrom::ae;

namespace {

// Random latent trajectories mapped through a fixed matrix: data confined to
// an exact r-dimensional linear subspace of d-dimensional space.
MultiChannelSeries subspace_data(std::size_t n, std::size_t d, std::size_t r,
                                 std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> map(d * r);
  for (double& v : map) v = rng.gaussian();
  MultiChannelSeries s(0.01, d, n, make_labels('x', d));
  std::vector<double> z(r);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : z) v = rng.gaussian();
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < r; ++k) acc += map[c * r + k] * z[k];
      s.at(i, c) = acc;
    }
  }
  return s;
}

}  // namespace

TEST_CASE("architecture validation") {
  const AeArchitecture a = AeArchitecture::standard(20, 10);
  a.validate(true);
  CHECK(a.encoder.size() == 3);
  CHECK(a.decoder.size() == 2);
  CHECK(a.encoder.back().out == 10);
  CHECK(a.decoder.back().out == 20);

  AeArchitecture broken = a;
  broken.decoder[0].out = 7;  // no longer mirrors the encoder
  CHECK_THROWS_AS(broken.validate(false), ConfigInconsistent);

  AeArchitecture wide = AeArchitecture::standard(10, 10);
  CHECK_THROWS_AS(wide.validate(true), ConfigInconsistent);
  wide.validate(false);  // relaxed mode admits capacity-sanity configs
}

TEST_CASE("ae recovers an exact linear subspace embedding") {
  const MultiChannelSeries data = subspace_data(6000, 8, 4, 21);
  AeTrainConfig cfg;
  cfg.epochs = 300;
  cfg.batch = 64;
  cfg.lr = 1e-2;
  cfg.patience = 300;
  cfg.seed = 3;
  const AutoencoderModel m =
      ae_train(data, AeArchitecture::standard(8, 4), 0.5, cfg);
  const ReconstructionReport rep = reconstruction_report(m, data);
  CHECK(rep.aggregate_nmse < 1e-3);
}

TEST_CASE("identity is attainable with a full-width linear bottleneck") {
  const MultiChannelSeries data = subspace_data(3000, 4, 4, 22);
  AeArchitecture arch;
  arch.input_dim = 4;
  arch.bottleneck = 4;
  arch.encoder = {{4, nn::Activation::Linear},
                  {4, nn::Activation::Linear},
                  {4, nn::Activation::Linear}};
  arch.decoder = {{4, nn::Activation::Linear}, {4, nn::Activation::Linear}};
  AeTrainConfig cfg;
  cfg.epochs = 2000;
  cfg.batch = 128;
  cfg.lr = 1e-2;
  cfg.patience = 2000;
  cfg.seed = 4;
  const AutoencoderModel m = ae_train(data, arch, 0.5, cfg);
  const ReconstructionReport rep = reconstruction_report(m, data);
  CHECK(rep.aggregate_nmse < 1e-6);
}

TEST_CASE("recorded train loss equals the reconstruction MSE on the train split") {
  const MultiChannelSeries data = subspace_data(2000, 6, 3, 23);
  AeTrainConfig cfg;
  cfg.epochs = 10;
  cfg.patience = 10;
  cfg.seed = 5;
  const AutoencoderModel m =
      ae_train(data, AeArchitecture::standard(6, 3), 0.5, cfg);

  const MultiChannelSeries train = data.slice(0, 1000);
  MultiChannelSeries rec = decode(m, encode(m, train));
  rec.labels = train.labels;
  const signal::MseResult e = signal::mse(rec, train);
  CHECK(e.aggregate ==
        doctest::Approx(m.history[m.best_epoch].train_mse_raw).epsilon(1e-10));

  // Early-stopping contract: snapshot test loss <= final epoch test loss.
  CHECK(m.history[m.best_epoch].test_mse_raw <=
        m.history.back().test_mse_raw + 1e-15);
}

TEST_CASE("encode/decode are deterministic, stateless, per-sample maps") {
  const MultiChannelSeries data = subspace_data(500, 6, 3, 24);
  AeTrainConfig cfg;
  cfg.epochs = 5;
  cfg.patience = 5;
  cfg.seed = 6;
  const AutoencoderModel m =
      ae_train(data, AeArchitecture::standard(6, 3), 0.5, cfg);

  const MultiChannelSeries z1 = encode(m, data);
  const MultiChannelSeries z2 = encode(m, data);
  CHECK(z1.values == z2.values);
  CHECK(z1.channels == 3);
  CHECK(z1.labels[0] == "y1");

  // Permuting samples in time permutes the codes identically (memoryless).
  std::vector<std::size_t> perm(data.steps());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(7);
  for (std::size_t i = perm.size() - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.raw() % (i + 1)]);
  MultiChannelSeries shuffled(data.dt, data.channels, data.steps(), data.labels);
  for (std::size_t i = 0; i < perm.size(); ++i)
    std::copy(data.row(perm[i]), data.row(perm[i]) + data.channels,
              shuffled.row(i));
  const MultiChannelSeries zs = encode(m, shuffled);
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(zs.at(i, c) == z1.at(perm[i], c));

  // Shuffling time leaves the (order-free) reconstruction NMSE unchanged.
  const ReconstructionReport r0 = reconstruction_report(m, data);
  const ReconstructionReport r1 = reconstruction_report(m, shuffled);
  CHECK(r0.aggregate_nmse == doctest::Approx(r1.aggregate_nmse).epsilon(1e-9));

  // Zero latent decodes to the fixed decoder bias image.
  MultiChannelSeries zero_latent(data.dt, 3, 2, make_labels('y', 3));
  const MultiChannelSeries img = decode(m, zero_latent);
  for (std::size_t c = 0; c < 6; ++c) CHECK(img.at(0, c) == img.at(1, c));
}

TEST_CASE("standardization round-trips through an identity network") {
  // Hand-built identity MLP: decode(encode(x)) is then exactly the
  // de-standardize(standardize(x)) composition.
  const MultiChannelSeries data = subspace_data(200, 3, 3, 25);
  AutoencoderModel m;
  m.arch.input_dim = 3;
  m.arch.bottleneck = 3;
  m.arch.encoder = {{3, nn::Activation::Linear}};
  m.arch.decoder = {{3, nn::Activation::Linear}};
  m.net = nn::Mlp(3, {{3, nn::Activation::Linear}, {3, nn::Activation::Linear}});
  for (std::size_t l = 0; l < 2; ++l) {
    nn::DenseLayer& layer = m.net.layer(l);
    for (std::size_t i = 0; i < 3; ++i) layer.W[i * 3 + i] = 1.0;
  }
  m.mean = {0.3, -1.0, 5.0};
  m.std = {2.0, 0.5, 7.0};

  const MultiChannelSeries rec = decode(m, encode(m, data));
  for (std::size_t i = 0; i < data.steps(); ++i)
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(rec.at(i, c) == doctest::Approx(data.at(i, c)).epsilon(1e-12));
}

TEST_CASE("zero-variance channels are rejected") {
  MultiChannelSeries flat(0.01, 2, 100, make_labels('x', 2));
  Rng rng(8);
  for (std::size_t i = 0; i < 100; ++i) {
    flat.at(i, 0) = 1.0;
    flat.at(i, 1) = rng.gaussian();
  }
  AeTrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(ae_train(flat, AeArchitecture::standard(2, 1), 0.5, cfg),
                  ZeroVariance);
}

TEST_CASE("model files round-trip bit-exactly") {
  const MultiChannelSeries data = subspace_data(400, 6, 3, 26);
  AeTrainConfig cfg;
  cfg.epochs = 3;
  cfg.patience = 3;
  cfg.seed = 9;
  const AutoencoderModel m =
      ae_train(data, AeArchitecture::standard(6, 3), 0.5, cfg);

  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "nnmrom_test.ae").string();
  save_model(path, m);
  const AutoencoderModel back = load_model(path);
  CHECK(back.mean == m.mean);
  CHECK(back.std == m.std);
  CHECK(back.best_epoch == m.best_epoch);
  const MultiChannelSeries za = encode(m, data);
  const MultiChannelSeries zb = encode(back, data);
  CHECK(za.values == zb.values);

  // In-memory blob form agrees with the file form.
  const AutoencoderModel mem = deserialize_model(serialize_model(m));
  CHECK(encode(mem, data).values == za.values);
}
