#include "nnmrom/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "nnmrom/errors.hpp"
#include "nnmrom/signal.hpp"

namespace nnmrom::ae {

using nlohmann::json;

AeArchitecture AeArchitecture::standard(std::size_t input_dim,
                                        std::size_t bottleneck) {
  AeArchitecture a;
  a.input_dim = input_dim;
  a.bottleneck = bottleneck;
  a.encoder = {{input_dim, nn::Activation::Linear},
               {input_dim, nn::Activation::Tanh},
               {bottleneck, nn::Activation::Linear}};
  a.decoder = {{input_dim, nn::Activation::Tanh},
               {input_dim, nn::Activation::Linear}};
  return a;
}

void AeArchitecture::validate(bool strict_reduction) const {
  if (input_dim == 0 || bottleneck == 0)
    throw InvalidParams("autoencoder: zero dimension");
  if (encoder.empty() || decoder.empty())
    throw InvalidParams("autoencoder: empty encoder or decoder stack");
  if (encoder.back().out != bottleneck)
    throw ConfigInconsistent("autoencoder: encoder must end at the bottleneck");
  if (decoder.back().out != input_dim)
    throw ConfigInconsistent("autoencoder: decoder must end at input_dim");
  // Mirror symmetry: decoder hidden widths retrace the encoder's in reverse.
  const std::size_t n_hidden = encoder.size() - 1;
  for (std::size_t i = 0; i + 1 < decoder.size(); ++i) {
    const std::size_t mirrored = n_hidden - 1 - i;
    if (mirrored < n_hidden && decoder[i].out != encoder[mirrored].out)
      throw ConfigInconsistent("autoencoder: decoder does not mirror encoder");
  }
  if (strict_reduction && bottleneck >= input_dim)
    throw ConfigInconsistent("autoencoder: bottleneck must be below input_dim");
}

void AutoencoderModel::encode_batch(const double* X, std::size_t B,
                                    double* Z) const {
  const std::size_t d = arch.input_dim;
  std::vector<double> std_in(B * d);
  for (std::size_t s = 0; s < B; ++s)
    for (std::size_t c = 0; c < d; ++c)
      std_in[s * d + c] = (X[s * d + c] - mean[c]) / std[c];
  net.forward(std_in.data(), B, Z, 0, encoder_layers());
}

void AutoencoderModel::decode_batch(const double* Z, std::size_t B,
                                    double* Y) const {
  const std::size_t d = arch.input_dim;
  net.forward(Z, B, Y, encoder_layers(), net.n_layers());
  for (std::size_t s = 0; s < B; ++s)
    for (std::size_t c = 0; c < d; ++c) Y[s * d + c] = Y[s * d + c] * std[c] + mean[c];
}

namespace {

// Per-channel standardized-space SSE of reconstruction over rows [from, to).
void eval_sse(const nn::Mlp& net, const std::vector<double>& Xstd,
              std::size_t d, std::size_t from, std::size_t to,
              std::vector<double>& sse) {
  sse.assign(d, 0.0);
  constexpr std::size_t kChunk = 1024;
  std::vector<double> out(kChunk * d);
  for (std::size_t base = from; base < to; base += kChunk) {
    const std::size_t B = std::min(kChunk, to - base);
    net.forward(Xstd.data() + base * d, B, out.data());
    for (std::size_t s = 0; s < B; ++s) {
      const double* xr = Xstd.data() + (base + s) * d;
      const double* yr = out.data() + s * d;
      for (std::size_t c = 0; c < d; ++c) {
        const double e = yr[c] - xr[c];
        sse[c] += e * e;
      }
    }
  }
}

}  // namespace

AutoencoderModel ae_train(const MultiChannelSeries& data,
                          const AeArchitecture& arch, double split,
                          const AeTrainConfig& cfg) {
  data.validate();
  arch.validate(false);
  if (data.channels != arch.input_dim)
    throw DimensionMismatch("ae_train: data channels != architecture input_dim");
  if (!(split > 0.0 && split < 1.0))
    throw InvalidParams("ae_train: split must lie in (0, 1)");

  const std::size_t n = data.steps();
  const std::size_t d = arch.input_dim;
  const std::size_t n_train = static_cast<std::size_t>(static_cast<double>(n) * split);
  if (n_train < 2 || n - n_train < 2)
    throw SeriesTooShort("ae_train: split leaves too few samples");

  AutoencoderModel m;
  m.arch = arch;

  // Standardization statistics from the training split only.
  m.mean.assign(d, 0.0);
  m.std.assign(d, 0.0);
  for (std::size_t i = 0; i < n_train; ++i) {
    const double* r = data.row(i);
    for (std::size_t c = 0; c < d; ++c) m.mean[c] += r[c];
  }
  for (std::size_t c = 0; c < d; ++c) m.mean[c] /= static_cast<double>(n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    const double* r = data.row(i);
    for (std::size_t c = 0; c < d; ++c) {
      const double e = r[c] - m.mean[c];
      m.std[c] += e * e;
    }
  }
  for (std::size_t c = 0; c < d; ++c) {
    m.std[c] = std::sqrt(m.std[c] / static_cast<double>(n_train));
    if (!(m.std[c] > 0.0)) throw ZeroVariance(c);
  }

  std::vector<double> Xstd(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = data.row(i);
    for (std::size_t c = 0; c < d; ++c)
      Xstd[i * d + c] = (r[c] - m.mean[c]) / m.std[c];
  }

  std::vector<nn::LayerSpec> specs = arch.encoder;
  specs.insert(specs.end(), arch.decoder.begin(), arch.decoder.end());
  m.net = nn::Mlp(d, specs);
  Rng rng(cfg.seed);
  m.net.init_glorot(rng);

  nn::Adam opt(m.net.n_params(), nn::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  nn::Mlp::Grads grads = m.net.make_grads();
  nn::Mlp::Cache cache;

  const std::size_t B = std::max<std::size_t>(1, std::min(cfg.batch, n_train));
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> xb(B * d), yb(B * d), dy(B * d);
  std::vector<double> best_params(m.net.n_params());
  std::vector<double> sse;

  double best_test = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.cosine_lr && cfg.epochs > 1) {
      const double phase = static_cast<double>(epoch) /
                           static_cast<double>(cfg.epochs - 1);
      opt.set_lr(cfg.lr * (0.02 + 0.98 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * phase))));
    }
    // Fisher-Yates shuffle driven by the same deterministic stream.
    for (std::size_t i = n_train - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.raw() % (i + 1));
      std::swap(order[i], order[j]);
    }

    for (std::size_t base = 0; base < n_train; base += B) {
      const std::size_t bs = std::min(B, n_train - base);
      for (std::size_t s = 0; s < bs; ++s) {
        const double* src = Xstd.data() + order[base + s] * d;
        std::copy(src, src + d, xb.data() + s * d);
      }
      m.net.forward_cached(xb.data(), bs, yb.data(), cache);
      const double scale = 2.0 / static_cast<double>(bs * d);
      for (std::size_t i = 0; i < bs * d; ++i) dy[i] = scale * (yb[i] - xb[i]);
      grads.zero();
      m.net.backward(cache, dy.data(), grads);

      opt.begin_step();
      std::size_t off = 0;
      for (std::size_t l = 0; l < m.net.n_layers(); ++l) {
        nn::DenseLayer& layer = m.net.layer(l);
        opt.update(layer.W.data(), grads.dW[l].data(), layer.W.size(), off);
        off += layer.W.size();
        opt.update(layer.b.data(), grads.db[l].data(), layer.b.size(), off);
        off += layer.b.size();
      }
    }

    EpochStats st;
    eval_sse(m.net, Xstd, d, 0, n_train, sse);
    for (std::size_t c = 0; c < d; ++c) {
      st.train_mse_std += sse[c] / static_cast<double>(n_train);
      st.train_mse_raw += sse[c] * m.std[c] * m.std[c] / static_cast<double>(n_train);
    }
    st.train_mse_std /= static_cast<double>(d);
    st.train_mse_raw /= static_cast<double>(d);
    eval_sse(m.net, Xstd, d, n_train, n, sse);
    const auto n_test = static_cast<double>(n - n_train);
    for (std::size_t c = 0; c < d; ++c) {
      st.test_mse_std += sse[c] / n_test;
      st.test_mse_raw += sse[c] * m.std[c] * m.std[c] / n_test;
    }
    st.test_mse_std /= static_cast<double>(d);
    st.test_mse_raw /= static_cast<double>(d);
    m.history.push_back(st);

    if (!std::isfinite(st.train_mse_std) || !std::isfinite(st.test_mse_std))
      throw NonFiniteLoss(epoch, "ae_train: loss became non-finite at epoch " +
                                     std::to_string(epoch));
    if (cfg.verbose) {
      std::printf("ae epoch %zu train %.3e test %.3e\n", epoch, st.train_mse_raw,
                  st.test_mse_raw);
    }

    if (st.test_mse_raw < best_test) {
      best_test = st.test_mse_raw;
      m.best_epoch = epoch;
      m.net.flatten_params(best_params.data());
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      break;
    }
  }

  m.net.set_flat_params(best_params.data());
  return m;
}

MultiChannelSeries encode(const AutoencoderModel& m, const MultiChannelSeries& s) {
  s.validate();
  if (s.channels != m.arch.input_dim)
    throw DimensionMismatch("encode: channel count != model input_dim");
  MultiChannelSeries z(s.dt, m.arch.bottleneck, s.steps(),
                       make_labels('y', m.arch.bottleneck));
  constexpr std::size_t kChunk = 2048;
  for (std::size_t base = 0; base < s.steps(); base += kChunk) {
    const std::size_t B = std::min(kChunk, s.steps() - base);
    m.encode_batch(s.row(base), B, z.row(base));
  }
  return z;
}

MultiChannelSeries decode(const AutoencoderModel& m, const MultiChannelSeries& z) {
  z.validate();
  if (z.channels != m.arch.bottleneck)
    throw DimensionMismatch("decode: channel count != model bottleneck");
  MultiChannelSeries y(z.dt, m.arch.input_dim, z.steps(),
                       make_labels('x', m.arch.input_dim));
  constexpr std::size_t kChunk = 2048;
  for (std::size_t base = 0; base < z.steps(); base += kChunk) {
    const std::size_t B = std::min(kChunk, z.steps() - base);
    m.decode_batch(z.row(base), B, y.row(base));
  }
  return y;
}

ReconstructionReport reconstruction_report(const AutoencoderModel& m,
                                           const MultiChannelSeries& data) {
  const MultiChannelSeries z = encode(m, data);
  MultiChannelSeries rec = decode(m, z);
  rec.labels = data.labels;  // align label sets for the metric helpers

  ReconstructionReport rep;
  const signal::MseResult e = signal::mse(rec, data);
  const signal::MseResult en = signal::nmse(rec, data);
  rep.per_channel_mse = e.per_channel;
  rep.aggregate_mse = e.aggregate;
  rep.per_channel_nmse = en.per_channel;
  rep.aggregate_nmse = en.aggregate;
  rep.latent_correlation = signal::correlation_matrix(z);
  return rep;
}

namespace {

const char* act_name(nn::Activation a) {
  return a == nn::Activation::Tanh ? "tanh" : "linear";
}

nn::Activation act_from(const std::string& s) {
  if (s == "tanh") return nn::Activation::Tanh;
  if (s == "linear") return nn::Activation::Linear;
  throw CorruptFile("unknown activation '" + s + "'");
}

json arch_to_json(const AeArchitecture& a) {
  json j;
  j["input_dim"] = a.input_dim;
  j["bottleneck"] = a.bottleneck;
  auto stack = [](const std::vector<nn::LayerSpec>& v) {
    json out = json::array();
    for (const auto& l : v) out.push_back({{"out", l.out}, {"act", act_name(l.act)}});
    return out;
  };
  j["encoder"] = stack(a.encoder);
  j["decoder"] = stack(a.decoder);
  return j;
}

AeArchitecture arch_from_json(const json& j) {
  AeArchitecture a;
  a.input_dim = j.at("input_dim").get<std::size_t>();
  a.bottleneck = j.at("bottleneck").get<std::size_t>();
  auto stack = [](const json& arr) {
    std::vector<nn::LayerSpec> out;
    for (const auto& l : arr)
      out.push_back({l.at("out").get<std::size_t>(),
                     act_from(l.at("act").get<std::string>())});
    return out;
  };
  a.encoder = stack(j.at("encoder"));
  a.decoder = stack(j.at("decoder"));
  return a;
}

}  // namespace

namespace {

std::string model_meta_json(const AutoencoderModel& m) {
  json j;
  j["type"] = "autoencoder";
  j["version"] = 1;
  j["architecture"] = arch_to_json(m.arch);
  j["mean"] = m.mean;
  j["std"] = m.std;
  j["best_epoch"] = m.best_epoch;
  json hist = json::array();
  for (const EpochStats& s : m.history)
    hist.push_back({{"train_mse_std", s.train_mse_std},
                    {"test_mse_std", s.test_mse_std},
                    {"train_mse_raw", s.train_mse_raw},
                    {"test_mse_raw", s.test_mse_raw}});
  j["history"] = hist;
  return j.dump();
}

std::vector<nn::NamedTensorView> model_tensors(const AutoencoderModel& m) {
  std::vector<nn::NamedTensorView> tensors;
  for (std::size_t l = 0; l < m.net.n_layers(); ++l) {
    const nn::DenseLayer& layer = m.net.layer(l);
    const std::string base = "layer" + std::to_string(l);
    tensors.push_back({base + ".W", {layer.out, layer.in}, layer.W.data()});
    tensors.push_back({base + ".b", {layer.out}, layer.b.data()});
  }
  return tensors;
}

AutoencoderModel model_from_blob(const nn::ParsedBlob& blob) {
  const json j = json::parse(blob.meta_json);
  if (j.at("type").get<std::string>() != "autoencoder")
    throw CorruptFile("blob is not an autoencoder model");
  AutoencoderModel m;
  m.arch = arch_from_json(j.at("architecture"));
  m.arch.validate(false);
  m.mean = j.at("mean").get<std::vector<double>>();
  m.std = j.at("std").get<std::vector<double>>();
  m.best_epoch = j.at("best_epoch").get<std::size_t>();
  for (const auto& h : j.at("history"))
    m.history.push_back({h.at("train_mse_std").get<double>(),
                         h.at("test_mse_std").get<double>(),
                         h.at("train_mse_raw").get<double>(),
                         h.at("test_mse_raw").get<double>()});

  std::vector<nn::LayerSpec> specs = m.arch.encoder;
  specs.insert(specs.end(), m.arch.decoder.begin(), m.arch.decoder.end());
  m.net = nn::Mlp(m.arch.input_dim, specs);
  for (std::size_t l = 0; l < m.net.n_layers(); ++l) {
    const std::string base = "layer" + std::to_string(l);
    const auto wi = blob.tensors.find(base + ".W");
    const auto bi = blob.tensors.find(base + ".b");
    if (wi == blob.tensors.end() || bi == blob.tensors.end())
      throw CorruptFile("autoencoder blob is missing tensor " + base);
    nn::DenseLayer& layer = m.net.layer(l);
    if (wi->second.data.size() != layer.W.size() ||
        bi->second.data.size() != layer.b.size())
      throw CorruptFile("autoencoder tensor shape mismatch at " + base);
    layer.W = wi->second.data;
    layer.b = bi->second.data;
  }
  return m;
}

}  // namespace

std::string serialize_model(const AutoencoderModel& m) {
  return nn::serialize_blob(model_meta_json(m), model_tensors(m));
}

AutoencoderModel deserialize_model(std::string_view bytes) {
  return model_from_blob(nn::parse_blob(bytes));
}

void save_model(const std::string& path, const AutoencoderModel& m) {
  nn::save_blob(path, model_meta_json(m), model_tensors(m));
}

AutoencoderModel load_model(const std::string& path) {
  return model_from_blob(nn::load_blob(path));
}

}  // namespace nnmrom::ae
