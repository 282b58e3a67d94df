#include "nnmrom/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <future>
#include <limits>
#include <thread>

#include <nlohmann/json.hpp>

#include "nnmrom/errors.hpp"
#include "nnmrom/kernels.hpp"

namespace nnmrom::reg {

using nlohmann::json;

void RegressorConfig::validate() const {
  if (lag < 1) throw InvalidParams("regressor: lag must be >= 1");
  if (hidden < 1) throw InvalidParams("regressor: hidden must be >= 1");
  if (horizon < 1) throw InvalidParams("regressor: horizon must be >= 1");
  if (n_forcing < 1 || n_latent < 1)
    throw InvalidParams("regressor: channel counts must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidParams("regressor: train_fraction must lie in (0, 1)");
}

ChannelNorm ChannelNorm::fit(const MultiChannelSeries& s, std::size_t rows) {
  const std::size_t n = rows == 0 ? s.steps() : std::min(rows, s.steps());
  if (n == 0) throw SeriesTooShort("ChannelNorm::fit: empty series");
  ChannelNorm norm;
  norm.mean.assign(s.channels, 0.0);
  norm.std.assign(s.channels, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = s.row(i);
    for (std::size_t c = 0; c < s.channels; ++c) norm.mean[c] += r[c];
  }
  for (std::size_t c = 0; c < s.channels; ++c) norm.mean[c] /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = s.row(i);
    for (std::size_t c = 0; c < s.channels; ++c) {
      const double d = r[c] - norm.mean[c];
      norm.std[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < s.channels; ++c) {
    norm.std[c] = std::sqrt(norm.std[c] / static_cast<double>(n));
    if (!(norm.std[c] > 0.0)) norm.std[c] = 1.0;  // constant channel passthrough
  }
  return norm;
}

FeatureDataset::FeatureDataset(const MultiChannelSeries& forcing,
                               const MultiChannelSeries& latents,
                               std::size_t lag, ChannelNorm forcing_norm,
                               ChannelNorm latent_norm)
    : lag_(lag), n_steps_(forcing.steps()), nf_(forcing.channels),
      nl_(latents.channels), fnorm_(std::move(forcing_norm)),
      lnorm_(std::move(latent_norm)) {
  if (latents.steps() != n_steps_)
    throw DimensionMismatch("features: forcing and latent lengths differ");
  if (n_steps_ <= lag_) throw SeriesTooShort("features: series not longer than lag");
  if (fnorm_.mean.size() != nf_ || lnorm_.mean.size() != nl_)
    throw DimensionMismatch("features: normalization width mismatch");

  fstd_.resize(n_steps_ * nf_);
  ystd_.resize(n_steps_ * nl_);
  for (std::size_t i = 0; i < n_steps_; ++i) {
    const double* fr = forcing.row(i);
    for (std::size_t c = 0; c < nf_; ++c)
      fstd_[i * nf_ + c] = fnorm_.apply(fr[c], c);
    const double* yr = latents.row(i);
    for (std::size_t c = 0; c < nl_; ++c)
      ystd_[i * nl_ + c] = lnorm_.apply(yr[c], c);
  }
}

void FeatureDataset::input_row_at(std::size_t t, double* out) const {
  if (t < lag_ || t >= n_steps_) throw IndexOutOfRange("features: step out of range");
  const std::size_t fcount = (lag_ + 1) * nf_;
  std::memcpy(out, fstd_.data() + (t - lag_) * nf_, fcount * sizeof(double));
  std::memcpy(out + fcount, ystd_.data() + (t - lag_) * nl_,
              lag_ * nl_ * sizeof(double));
}

void FeatureDataset::target_row_at(std::size_t t, double* out) const {
  if (t < lag_ || t >= n_steps_) throw IndexOutOfRange("features: step out of range");
  std::memcpy(out, ystd_.data() + t * nl_, nl_ * sizeof(double));
}

FeatureDataset build_features(const MultiChannelSeries& forcing,
                              const MultiChannelSeries& latents,
                              std::size_t lag, std::size_t norm_rows) {
  if (forcing.steps() <= lag || latents.steps() <= lag)
    throw SeriesTooShort("build_features: series not longer than lag");
  return FeatureDataset(forcing, latents, lag, ChannelNorm::fit(forcing, norm_rows),
                        ChannelNorm::fit(latents, norm_rows));
}

void LatentRegressor::validate() const {
  config.validate();
  cell.validate();
  readout.validate();
  if (cell.input != config.input_width())
    throw ConfigInconsistent("regressor: cell input width != lag feature width");
  if (cell.hidden != config.hidden || readout.in != config.hidden ||
      readout.out != config.n_latent || readout.act != nn::Activation::Linear)
    throw ConfigInconsistent("regressor: readout/cell dimensions inconsistent");
  if (forcing_norm.mean.size() != config.n_forcing ||
      latent_norm.mean.size() != config.n_latent)
    throw ConfigInconsistent("regressor: normalization width mismatch");
}

namespace {

struct GradBundle {
  nn::LstmGrads cell;
  std::vector<double> ro_dW, ro_db;

  void init(const nn::LstmCell& c, const nn::DenseLayer& r) {
    cell.dW.assign(c.W.size(), 0.0);
    cell.db.assign(c.b.size(), 0.0);
    ro_dW.assign(r.W.size(), 0.0);
    ro_db.assign(r.b.size(), 0.0);
  }
  void zero() {
    cell.zero();
    std::fill(ro_dW.begin(), ro_dW.end(), 0.0);
    std::fill(ro_db.begin(), ro_db.end(), 0.0);
  }
};

}  // namespace

LatentRegressor train_teacher_forced(const FeatureDataset& features,
                                     const RegressorConfig& cfg,
                                     const RegTrainConfig& tcfg) {
  cfg.validate();
  if (features.n_forcing() != cfg.n_forcing || features.n_latent() != cfg.n_latent ||
      features.lag() != cfg.lag)
    throw ConfigInconsistent("train: feature dataset does not match config");

  const std::size_t I = cfg.input_width();
  const std::size_t H = cfg.hidden;
  const std::size_t O = cfg.n_latent;

  LatentRegressor m;
  m.config = cfg;
  Rng rng(tcfg.seed);
  m.cell = nn::LstmCell::glorot(I, H, rng);
  m.readout = nn::DenseLayer::glorot(H, O, nn::Activation::Linear, rng);
  m.forcing_norm = features.forcing_norm();
  m.latent_norm = features.latent_norm();

  const std::size_t n_feat = features.size();
  std::size_t n_val = static_cast<std::size_t>(static_cast<double>(n_feat) *
                                               tcfg.val_fraction);
  if (tcfg.val_fraction > 0.0 && n_val == 0) n_val = 1;
  const std::size_t n_tr = n_feat - n_val;
  if (n_tr < 2) throw SeriesTooShort("train: too few training steps");

  // Lane layout: contiguous chunks of the training span advanced in lockstep.
  std::size_t B = std::max<std::size_t>(1, std::min(tcfg.lanes, n_tr / 2));
  const std::size_t chunk = n_tr / B;
  const std::size_t win = std::max<std::size_t>(1, std::min(tcfg.window, chunk));
  const std::size_t n_win = chunk / win;

  std::size_t threads = tcfg.threads;
  if (threads == 0) threads = std::min<unsigned>(2, std::thread::hardware_concurrency());
  const std::size_t n_groups = (threads >= 2 && B >= 2 && B % 2 == 0) ? 2 : 1;
  const std::size_t Bg = B / n_groups;

  std::vector<double> inputs_flat(win * B * I), targets_flat(win * B * O);
  std::vector<const double*> in_ptrs(win), tgt_ptrs(win);
  std::vector<double> h(B * H), c(B * H);
  std::vector<GradBundle> grads(n_groups);
  std::vector<nn::BpttScratch> scratch(n_groups);
  for (auto& g : grads) g.init(m.cell, m.readout);

  const std::size_t n_params =
      m.cell.W.size() + m.cell.b.size() + m.readout.W.size() + m.readout.b.size();
  nn::Adam opt(n_params, nn::AdamConfig{tcfg.lr, 0.9, 0.999, 1e-8});

  std::vector<double> best(n_params);
  auto snapshot = [&](std::vector<double>& dst) {
    double* p = dst.data();
    p = std::copy(m.cell.W.begin(), m.cell.W.end(), p);
    p = std::copy(m.cell.b.begin(), m.cell.b.end(), p);
    p = std::copy(m.readout.W.begin(), m.readout.W.end(), p);
    std::copy(m.readout.b.begin(), m.readout.b.end(), p);
  };
  auto restore = [&](const std::vector<double>& src) {
    const double* p = src.data();
    std::copy(p, p + m.cell.W.size(), m.cell.W.begin());
    p += m.cell.W.size();
    std::copy(p, p + m.cell.b.size(), m.cell.b.begin());
    p += m.cell.b.size();
    std::copy(p, p + m.readout.W.size(), m.readout.W.begin());
    p += m.readout.W.size();
    std::copy(p, p + m.readout.b.size(), m.readout.b.begin());
  };
  snapshot(best);

  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    if (tcfg.cosine_lr && tcfg.epochs > 1) {
      const double phase = static_cast<double>(epoch) /
                           static_cast<double>(tcfg.epochs - 1);
      opt.set_lr(tcfg.lr * (0.02 + 0.98 * 0.5 *
                            (1.0 + std::cos(3.14159265358979323846 * phase))));
    }
    std::fill(h.begin(), h.end(), 0.0);  // state reset per epoch
    std::fill(c.begin(), c.end(), 0.0);
    double train_loss = 0.0;

    for (std::size_t w = 0; w < n_win; ++w) {
      for (std::size_t t = 0; t < win; ++t) {
        double* in_row = inputs_flat.data() + t * B * I;
        double* tgt_row = targets_flat.data() + t * B * O;
        for (std::size_t l = 0; l < B; ++l) {
          const std::size_t idx = l * chunk + w * win + t;
          features.input_row(idx, in_row + l * I);
          features.target_row(idx, tgt_row + l * O);
        }
        in_ptrs[t] = in_row;
        tgt_ptrs[t] = tgt_row;
      }

      double loss = 0.0;
      if (n_groups == 1) {
        grads[0].zero();
        nn::BpttResult r = nn::lstm_bptt(
            m.cell, m.readout, in_ptrs, tgt_ptrs, B, h.data(), c.data(),
            grads[0].cell, grads[0].ro_dW, grads[0].ro_db, &scratch[0]);
        std::copy(r.h.begin(), r.h.end(), h.begin());
        std::copy(r.c.begin(), r.c.end(), c.begin());
        loss = r.loss;
      } else {
        // Lane groups share the panels; each group works on its row slice
        // with its own gradient buffers, merged in fixed order.
        std::vector<std::vector<const double*>> gin(n_groups), gtgt(n_groups);
        for (std::size_t g = 0; g < n_groups; ++g) {
          gin[g].resize(win);
          gtgt[g].resize(win);
          for (std::size_t t = 0; t < win; ++t) {
            gin[g][t] = in_ptrs[t] + g * Bg * I;
            gtgt[g][t] = tgt_ptrs[t] + g * Bg * O;
          }
        }
        auto run_group = [&](std::size_t g) {
          grads[g].zero();
          return nn::lstm_bptt(m.cell, m.readout, gin[g], gtgt[g], Bg,
                               h.data() + g * Bg * H, c.data() + g * Bg * H,
                               grads[g].cell, grads[g].ro_dW, grads[g].ro_db,
                               &scratch[g]);
        };
        std::future<nn::BpttResult> fut =
            std::async(std::launch::async, run_group, 1);
        nn::BpttResult r0 = run_group(0);
        nn::BpttResult r1 = fut.get();
        std::copy(r0.h.begin(), r0.h.end(), h.begin());
        std::copy(r0.c.begin(), r0.c.end(), c.begin());
        std::copy(r1.h.begin(), r1.h.end(), h.begin() + Bg * H);
        std::copy(r1.c.begin(), r1.c.end(), c.begin() + Bg * H);
        loss = 0.5 * (r0.loss + r1.loss);
        for (std::size_t i = 0; i < grads[0].cell.dW.size(); ++i)
          grads[0].cell.dW[i] = 0.5 * (grads[0].cell.dW[i] + grads[1].cell.dW[i]);
        for (std::size_t i = 0; i < grads[0].cell.db.size(); ++i)
          grads[0].cell.db[i] = 0.5 * (grads[0].cell.db[i] + grads[1].cell.db[i]);
        for (std::size_t i = 0; i < grads[0].ro_dW.size(); ++i)
          grads[0].ro_dW[i] = 0.5 * (grads[0].ro_dW[i] + grads[1].ro_dW[i]);
        for (std::size_t i = 0; i < grads[0].ro_db.size(); ++i)
          grads[0].ro_db[i] = 0.5 * (grads[0].ro_db[i] + grads[1].ro_db[i]);
      }
      train_loss += loss;

      opt.begin_step();
      std::size_t off = 0;
      opt.update(m.cell.W.data(), grads[0].cell.dW.data(), m.cell.W.size(), off);
      off += m.cell.W.size();
      opt.update(m.cell.b.data(), grads[0].cell.db.data(), m.cell.b.size(), off);
      off += m.cell.b.size();
      opt.update(m.readout.W.data(), grads[0].ro_dW.data(), m.readout.W.size(), off);
      off += m.readout.W.size();
      opt.update(m.readout.b.data(), grads[0].ro_db.data(), m.readout.b.size(), off);
    }
    train_loss /= static_cast<double>(n_win);

    const double val_loss =
        n_val > 0 ? teacher_forced_mse(m, features, n_tr, n_feat, tcfg.lanes)
                  : train_loss;
    m.history.emplace_back(train_loss, val_loss);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
      throw NonFiniteLoss(epoch, "train: loss became non-finite at epoch " +
                                     std::to_string(epoch));
    if (tcfg.verbose)
      std::printf("lstm epoch %zu train %.4e val %.4e\n", epoch, train_loss, val_loss);

    if (val_loss < best_val) {
      best_val = val_loss;
      m.best_epoch = epoch;
      snapshot(best);
      since_best = 0;
    } else if (++since_best > tcfg.patience) {
      break;
    }
  }

  restore(best);
  return m;
}

double teacher_forced_mse(const LatentRegressor& model,
                          const FeatureDataset& features, std::size_t from,
                          std::size_t to, std::size_t lanes,
                          std::size_t burn_in) {
  if (from >= to || to > features.size())
    throw IndexOutOfRange("teacher_forced_mse: bad range");
  const std::size_t span = to - from;
  const std::size_t B = std::max<std::size_t>(1, std::min(lanes, span));
  const std::size_t chunk = span / B;
  if (chunk == 0)
    return teacher_forced_mse(model, features, from, to, 1, burn_in);

  const std::size_t I = model.config.input_width();
  const std::size_t H = model.config.hidden;
  const std::size_t O = model.config.n_latent;
  const auto& K = kernels::active();

  std::vector<double> x(B * I), tgt(B * O), y(B * O);
  std::vector<double> h(B * H, 0.0), c(B * H, 0.0);
  double sse = 0.0;
  std::size_t count = 0;
  const auto pre = static_cast<std::ptrdiff_t>(burn_in);
  for (std::ptrdiff_t t = -pre; t < static_cast<std::ptrdiff_t>(chunk); ++t) {
    for (std::size_t l = 0; l < B; ++l) {
      const std::ptrdiff_t idx =
          static_cast<std::ptrdiff_t>(from + l * chunk) + t;
      const std::size_t safe =
          idx < 0 ? from + l * chunk : static_cast<std::size_t>(idx);
      features.input_row(safe, x.data() + l * I);
      features.target_row(safe, tgt.data() + l * O);
    }
    nn::lstm_step(model.cell, x.data(), B, h.data(), c.data());
    if (t < 0) continue;  // burn-in: advance the state without scoring
    K.gemm_xwt(h.data(), H, model.readout.W.data(), H, model.readout.b.data(),
               y.data(), O, B, O, H);
    for (std::size_t i = 0; i < B * O; ++i) {
      const double e = y[i] - tgt[i];
      sse += e * e;
    }
    count += B * O;
  }
  return sse / static_cast<double>(count);
}

FreeRunResult free_run_predict(const LatentRegressor& model,
                               const MultiChannelSeries& forcing_future,
                               const Warmup& warmup, std::size_t horizon) {
  model.validate();
  const std::size_t lag = model.config.lag;
  const std::size_t nf = model.config.n_forcing;
  const std::size_t nl = model.config.n_latent;
  const std::size_t I = model.config.input_width();
  const std::size_t H = model.config.hidden;

  const std::size_t L = warmup.forcing.steps();
  if (L < lag) throw SeriesTooShort("free_run: warmup shorter than lag");
  if (warmup.latents.steps() != L)
    throw DimensionMismatch("free_run: warmup forcing/latent lengths differ");
  if (warmup.forcing.channels != nf || warmup.latents.channels != nl ||
      forcing_future.channels != nf)
    throw DimensionMismatch("free_run: channel counts do not match model");
  if (forcing_future.steps() < horizon)
    throw SeriesTooShort("free_run: future forcing shorter than horizon");

  // Standardized forcing timeline [warmup | future] and growing latent
  // history seeded with the warmup latents.
  const std::size_t total = L + horizon;
  std::vector<double> fstd(total * nf);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t ch = 0; ch < nf; ++ch)
      fstd[i * nf + ch] = model.forcing_norm.apply(warmup.forcing.at(i, ch), ch);
  for (std::size_t i = 0; i < horizon; ++i)
    for (std::size_t ch = 0; ch < nf; ++ch)
      fstd[(L + i) * nf + ch] =
          model.forcing_norm.apply(forcing_future.at(i, ch), ch);

  std::vector<double> ystd;
  ystd.reserve(total * nl);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t ch = 0; ch < nl; ++ch)
      ystd.push_back(model.latent_norm.apply(warmup.latents.at(i, ch), ch));

  std::vector<double> x(I), y(nl), h(H, 0.0), c(H, 0.0);
  const auto& K = kernels::active();
  const std::size_t fcount = (lag + 1) * nf;
  auto pack = [&](std::size_t t) {
    std::memcpy(x.data(), fstd.data() + (t - lag) * nf, fcount * sizeof(double));
    std::memcpy(x.data() + fcount, ystd.data() + (t - lag) * nl,
                lag * nl * sizeof(double));
  };

  // Teacher-forced warm-up over the surplus history beyond the lag window.
  for (std::size_t t = lag; t < L; ++t) {
    pack(t);
    nn::lstm_step(model.cell, x.data(), 1, h.data(), c.data());
  }

  FreeRunResult res;
  res.latents = MultiChannelSeries(forcing_future.dt > 0.0 ? forcing_future.dt
                                                           : warmup.forcing.dt,
                                   nl, horizon, make_labels('y', nl));
  for (std::size_t k = 0; k < horizon; ++k) {
    pack(L + k);
    nn::lstm_step(model.cell, x.data(), 1, h.data(), c.data());
    K.gemm_xwt(h.data(), H, model.readout.W.data(), H, model.readout.b.data(),
               y.data(), nl, 1, nl, H);
    bool finite = true;
    for (std::size_t ch = 0; ch < nl; ++ch)
      if (!std::isfinite(y[ch])) finite = false;
    if (!finite) {
      res.complete = false;
      res.failed_step = k;
      res.latents = res.latents.slice(0, k);
      break;
    }
    ystd.insert(ystd.end(), y.begin(), y.end());
    for (std::size_t ch = 0; ch < nl; ++ch)
      res.latents.at(k, ch) = model.latent_norm.invert(y[ch], ch);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

json norm_to_json(const ChannelNorm& n) {
  return json{{"mean", n.mean}, {"std", n.std}};
}

ChannelNorm norm_from_json(const json& j) {
  ChannelNorm n;
  n.mean = j.at("mean").get<std::vector<double>>();
  n.std = j.at("std").get<std::vector<double>>();
  return n;
}

std::string regressor_meta_json(const LatentRegressor& m) {
  json j;
  j["type"] = "latent-regressor";
  j["version"] = 1;
  j["config"] = {{"lag", m.config.lag},
                 {"hidden", m.config.hidden},
                 {"n_forcing", m.config.n_forcing},
                 {"n_latent", m.config.n_latent},
                 {"train_fraction", m.config.train_fraction},
                 {"horizon", m.config.horizon}};
  j["forcing_norm"] = norm_to_json(m.forcing_norm);
  j["latent_norm"] = norm_to_json(m.latent_norm);
  j["best_epoch"] = m.best_epoch;
  json hist = json::array();
  for (const auto& [tr, va] : m.history) hist.push_back({{"train", tr}, {"val", va}});
  j["history"] = hist;
  return j.dump();
}

std::vector<nn::NamedTensorView> regressor_tensors(const LatentRegressor& m) {
  return {
      {"lstm.W", {4 * m.cell.hidden, m.cell.width()}, m.cell.W.data()},
      {"lstm.b", {4 * m.cell.hidden}, m.cell.b.data()},
      {"readout.W", {m.readout.out, m.readout.in}, m.readout.W.data()},
      {"readout.b", {m.readout.out}, m.readout.b.data()},
  };
}

LatentRegressor regressor_from_blob(const nn::ParsedBlob& blob) {
  const json j = json::parse(blob.meta_json);
  if (j.at("type").get<std::string>() != "latent-regressor")
    throw CorruptFile("blob is not a latent-regressor model");
  LatentRegressor m;
  const json& c = j.at("config");
  m.config.lag = c.at("lag").get<std::size_t>();
  m.config.hidden = c.at("hidden").get<std::size_t>();
  m.config.n_forcing = c.at("n_forcing").get<std::size_t>();
  m.config.n_latent = c.at("n_latent").get<std::size_t>();
  m.config.train_fraction = c.at("train_fraction").get<double>();
  m.config.horizon = c.at("horizon").get<std::size_t>();
  m.forcing_norm = norm_from_json(j.at("forcing_norm"));
  m.latent_norm = norm_from_json(j.at("latent_norm"));
  m.best_epoch = j.at("best_epoch").get<std::size_t>();
  for (const auto& h : j.at("history"))
    m.history.emplace_back(h.at("train").get<double>(), h.at("val").get<double>());

  m.cell.input = m.config.input_width();
  m.cell.hidden = m.config.hidden;
  m.readout.in = m.config.hidden;
  m.readout.out = m.config.n_latent;
  m.readout.act = nn::Activation::Linear;
  auto want = [&](const char* name) -> const nn::OwnedTensor& {
    const auto it = blob.tensors.find(name);
    if (it == blob.tensors.end())
      throw CorruptFile(std::string("regressor blob is missing tensor ") + name);
    return it->second;
  };
  m.cell.W = want("lstm.W").data;
  m.cell.b = want("lstm.b").data;
  m.readout.W = want("readout.W").data;
  m.readout.b = want("readout.b").data;
  m.validate();
  return m;
}

}  // namespace

std::string serialize_regressor(const LatentRegressor& m) {
  return nn::serialize_blob(regressor_meta_json(m), regressor_tensors(m));
}

LatentRegressor deserialize_regressor(std::string_view bytes) {
  return regressor_from_blob(nn::parse_blob(bytes));
}

void save_regressor(const std::string& path, const LatentRegressor& m) {
  nn::save_blob(path, regressor_meta_json(m), regressor_tensors(m));
}

LatentRegressor load_regressor(const std::string& path) {
  return regressor_from_blob(nn::load_blob(path));
}

}  // namespace nnmrom::reg
