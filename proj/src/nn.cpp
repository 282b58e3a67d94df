#include "nnmrom/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "nnmrom/errors.hpp"
#include "nnmrom/kernels.hpp"

namespace nnmrom::nn {

namespace {

void apply_activation(Activation act, double* x, std::size_t n) {
  if (act == Activation::Tanh) {
    for (std::size_t i = 0; i < n; ++i) x[i] = std::tanh(x[i]);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

DenseLayer DenseLayer::glorot(std::size_t in, std::size_t out, Activation act,
                              Rng& rng) {
  DenseLayer l;
  l.in = in;
  l.out = out;
  l.act = act;
  l.W.resize(in * out);
  l.b.assign(out, 0.0);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : l.W) w = rng.uniform(-limit, limit);
  return l;
}

void DenseLayer::validate() const {
  if (in == 0 || out == 0) throw InvalidParams("dense layer has zero dimension");
  if (W.size() != in * out || b.size() != out)
    throw DimensionMismatch("dense layer parameter sizes inconsistent");
  for (double w : W)
    if (!std::isfinite(w)) throw InvalidParams("dense layer weight not finite");
  for (double v : b)
    if (!std::isfinite(v)) throw InvalidParams("dense layer bias not finite");
}

void dense_forward(const DenseLayer& l, const double* X, std::size_t B,
                   double* Y, DenseCache* cache) {
  if (l.W.size() != l.in * l.out || l.b.size() != l.out)
    throw DimensionMismatch("dense_forward: layer parameters inconsistent");
  const auto& K = kernels::active();
  K.gemm_xwt(X, l.in, l.W.data(), l.in, l.b.data(), Y, l.out, B, l.out, l.in);
  apply_activation(l.act, Y, B * l.out);
  if (cache) {
    cache->batch = B;
    cache->X.assign(X, X + B * l.in);
    cache->A.assign(Y, Y + B * l.out);
  }
}

void dense_backward(const DenseLayer& l, const DenseCache& cache,
                    const double* dY, double* dW, double* db, double* dX) {
  if (cache.batch == 0 || cache.X.size() != cache.batch * l.in ||
      cache.A.size() != cache.batch * l.out)
    throw StaleCache("dense_backward: cache does not match layer/batch");
  const std::size_t B = cache.batch;
  const auto& K = kernels::active();

  // dZ = dY . act'(z); tanh'(z) = 1 - a^2 with a the cached activation.
  std::vector<double> dZ(dY, dY + B * l.out);
  if (l.act == Activation::Tanh) {
    for (std::size_t i = 0; i < dZ.size(); ++i) {
      const double a = cache.A[i];
      dZ[i] *= 1.0 - a * a;
    }
  }

  K.gemm_acc_gtx(dZ.data(), l.out, cache.X.data(), l.in, dW, l.in, B, l.out, l.in);
  for (std::size_t s = 0; s < B; ++s) {
    const double* row = dZ.data() + s * l.out;
    for (std::size_t o = 0; o < l.out; ++o) db[o] += row[o];
  }
  if (dX) {
    std::fill(dX, dX + B * l.in, 0.0);
    K.gemm_acc_gw(dZ.data(), l.out, l.W.data(), l.in, dX, l.in, B, l.out, l.in);
  }
}

// ---------------------------------------------------------------------------
// Mlp
// ---------------------------------------------------------------------------

Mlp::Mlp(std::size_t input_dim, const std::vector<LayerSpec>& specs)
    : input_dim_(input_dim) {
  if (input_dim == 0 || specs.empty()) throw InvalidParams("mlp: empty architecture");
  std::size_t w = input_dim;
  for (const LayerSpec& s : specs) {
    if (s.out == 0) throw InvalidParams("mlp: layer width must be positive");
    DenseLayer l;
    l.in = w;
    l.out = s.out;
    l.act = s.act;
    l.W.assign(l.in * l.out, 0.0);
    l.b.assign(l.out, 0.0);
    layers_.push_back(std::move(l));
    w = s.out;
  }
}

void Mlp::init_glorot(Rng& rng) {
  for (DenseLayer& l : layers_) l = DenseLayer::glorot(l.in, l.out, l.act, rng);
}

std::size_t Mlp::output_dim() const { return layers_.back().out; }

std::size_t Mlp::max_width() const {
  std::size_t w = input_dim_;
  for (const DenseLayer& l : layers_) w = std::max(w, l.out);
  return w;
}

std::size_t Mlp::n_params() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers_) n += l.n_params();
  return n;
}

void Mlp::forward(const double* X, std::size_t B, double* Y, std::size_t from,
                  std::size_t to) const {
  if (to == static_cast<std::size_t>(-1)) to = layers_.size();
  if (from >= to || to > layers_.size())
    throw IndexOutOfRange("mlp forward: bad layer range");
  const std::size_t w = max_width();
  std::vector<double> buf0(B * w), buf1(B * w);
  const double* cur = X;
  double* next = buf0.data();
  for (std::size_t i = from; i < to; ++i) {
    double* dst = (i + 1 == to) ? Y : next;
    dense_forward(layers_[i], cur, B, dst);
    cur = dst;
    next = (next == buf0.data()) ? buf1.data() : buf0.data();
  }
}

Mlp::Grads Mlp::make_grads() const {
  Grads g;
  g.dW.resize(layers_.size());
  g.db.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    g.dW[i].assign(layers_[i].W.size(), 0.0);
    g.db[i].assign(layers_[i].b.size(), 0.0);
  }
  return g;
}

void Mlp::Grads::zero() {
  for (auto& v : dW) std::fill(v.begin(), v.end(), 0.0);
  for (auto& v : db) std::fill(v.begin(), v.end(), 0.0);
}

void Mlp::forward_cached(const double* X, std::size_t B, double* Y,
                         Cache& cache) const {
  cache.batch = B;
  cache.layers.resize(layers_.size());
  const std::size_t w = max_width();
  std::vector<double> buf0(B * w), buf1(B * w);
  const double* cur = X;
  double* next = buf0.data();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    double* dst = (i + 1 == layers_.size()) ? Y : next;
    dense_forward(layers_[i], cur, B, dst, &cache.layers[i]);
    cur = dst;
    next = (next == buf0.data()) ? buf1.data() : buf0.data();
  }
}

void Mlp::backward(const Cache& cache, const double* dY, Grads& grads,
                   double* dX) const {
  if (cache.layers.size() != layers_.size() || cache.batch == 0)
    throw StaleCache("mlp backward: cache does not match network");
  const std::size_t B = cache.batch;
  const std::size_t w = max_width();
  std::vector<double> buf0(B * w), buf1(B * w);
  const double* cur = dY;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool last = i == 0;
    double* dst = last ? dX : ((cur == buf0.data()) ? buf1.data() : buf0.data());
    dense_backward(layers_[i], cache.layers[i], cur, grads.dW[i].data(),
                   grads.db[i].data(), (last && !dX) ? nullptr : dst);
    cur = dst;
  }
}

void Mlp::flatten_params(double* out) const {
  for (const DenseLayer& l : layers_) {
    out = std::copy(l.W.begin(), l.W.end(), out);
    out = std::copy(l.b.begin(), l.b.end(), out);
  }
}

void Mlp::set_flat_params(const double* in) {
  for (DenseLayer& l : layers_) {
    std::copy(in, in + l.W.size(), l.W.begin());
    in += l.W.size();
    std::copy(in, in + l.b.size(), l.b.begin());
    in += l.b.size();
  }
}

void Mlp::flatten(const Grads& g, double* out) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    out = std::copy(g.dW[i].begin(), g.dW[i].end(), out);
    out = std::copy(g.db[i].begin(), g.db[i].end(), out);
  }
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

LstmCell LstmCell::glorot(std::size_t input, std::size_t hidden, Rng& rng) {
  LstmCell c;
  c.input = input;
  c.hidden = hidden;
  const std::size_t width = input + hidden;
  c.W.resize(4 * hidden * width);
  c.b.assign(4 * hidden, 0.0);
  const double limit = std::sqrt(6.0 / static_cast<double>(width + hidden));
  for (double& w : c.W) w = rng.uniform(-limit, limit);
  for (std::size_t j = 0; j < hidden; ++j) c.b[hidden + j] = 1.0;  // forget gate
  return c;
}

void LstmCell::validate() const {
  if (input == 0 || hidden == 0) throw InvalidParams("lstm cell has zero dimension");
  if (W.size() != 4 * hidden * width() || b.size() != 4 * hidden)
    throw DimensionMismatch("lstm cell parameter sizes inconsistent");
}

void lstm_step(const LstmCell& cell, const double* x, std::size_t B, double* h,
               double* c, LstmStepCache* cache) {
  const std::size_t H = cell.hidden;
  const std::size_t I = cell.input;
  const std::size_t width = I + H;
  const auto& K = kernels::active();

  // Assemble [x; h_prev] rows.
  std::vector<double> xcat_local;
  std::vector<double>& xcat = cache ? cache->xcat : xcat_local;
  xcat.resize(B * width);
  for (std::size_t s = 0; s < B; ++s) {
    std::memcpy(xcat.data() + s * width, x + s * I, I * sizeof(double));
    std::memcpy(xcat.data() + s * width + I, h + s * H, H * sizeof(double));
  }

  std::vector<double> gates_local;
  std::vector<double>& gates = cache ? cache->gates : gates_local;
  gates.resize(B * 4 * H);
  K.gemm_xwt(xcat.data(), width, cell.W.data(), width, cell.b.data(),
             gates.data(), 4 * H, B, 4 * H, width);

  if (cache) {
    cache->batch = B;
    cache->c_prev.assign(c, c + B * H);
    cache->tanh_c.resize(B * H);
  }

  for (std::size_t s = 0; s < B; ++s) {
    double* g = gates.data() + s * 4 * H;
    double* hs = h + s * H;
    double* cs = c + s * H;
    for (std::size_t j = 0; j < H; ++j) {
      const double gi = sigmoid(g[j]);
      const double gf = sigmoid(g[H + j]);
      const double gg = std::tanh(g[2 * H + j]);
      const double go = sigmoid(g[3 * H + j]);
      g[j] = gi;
      g[H + j] = gf;
      g[2 * H + j] = gg;
      g[3 * H + j] = go;
      const double cn = gf * cs[j] + gi * gg;
      const double tc = std::tanh(cn);
      cs[j] = cn;
      hs[j] = go * tc;
      if (cache) cache->tanh_c[s * H + j] = tc;
    }
  }
}

void LstmGrads::zero() {
  std::fill(dW.begin(), dW.end(), 0.0);
  std::fill(db.begin(), db.end(), 0.0);
}

void lstm_step_backward(const LstmCell& cell, const LstmStepCache& cache,
                        double* dh, double* dc, LstmGrads& grads) {
  const std::size_t H = cell.hidden;
  const std::size_t I = cell.input;
  const std::size_t width = I + H;
  const std::size_t B = cache.batch;
  if (B == 0 || cache.xcat.size() != B * width || cache.gates.size() != B * 4 * H)
    throw StaleCache("lstm_step_backward: cache does not match cell/batch");
  if (grads.dW.size() != cell.W.size()) grads.dW.assign(cell.W.size(), 0.0);
  if (grads.db.size() != cell.b.size()) grads.db.assign(cell.b.size(), 0.0);
  const auto& K = kernels::active();

  std::vector<double> dz(B * 4 * H);
  for (std::size_t s = 0; s < B; ++s) {
    const double* g = cache.gates.data() + s * 4 * H;
    const double* cp = cache.c_prev.data() + s * H;
    const double* tc = cache.tanh_c.data() + s * H;
    double* dhs = dh + s * H;
    double* dcs = dc + s * H;
    double* dzs = dz.data() + s * 4 * H;
    for (std::size_t j = 0; j < H; ++j) {
      const double gi = g[j], gf = g[H + j], gg = g[2 * H + j], go = g[3 * H + j];
      const double d_o = dhs[j] * tc[j];
      const double dct = dcs[j] + dhs[j] * go * (1.0 - tc[j] * tc[j]);
      const double d_i = dct * gg;
      const double d_f = dct * cp[j];
      const double d_g = dct * gi;
      dcs[j] = dct * gf;  // becomes dc_prev
      dzs[j] = d_i * gi * (1.0 - gi);
      dzs[H + j] = d_f * gf * (1.0 - gf);
      dzs[2 * H + j] = d_g * (1.0 - gg * gg);
      dzs[3 * H + j] = d_o * go * (1.0 - go);
    }
  }

  K.gemm_acc_gtx(dz.data(), 4 * H, cache.xcat.data(), width, grads.dW.data(),
                 width, B, 4 * H, width);
  for (std::size_t s = 0; s < B; ++s) {
    const double* row = dz.data() + s * 4 * H;
    for (std::size_t j = 0; j < 4 * H; ++j) grads.db[j] += row[j];
  }

  // Only the h_prev slice of d(xcat) feeds the recurrence; gradients w.r.t.
  // the data inputs are discarded.
  std::fill(dh, dh + B * H, 0.0);
  K.gemm_acc_gw(dz.data(), 4 * H, cell.W.data() + I, width, dh, H, B, 4 * H, H);
}

// ---------------------------------------------------------------------------
// BPTT
// ---------------------------------------------------------------------------

BpttResult lstm_bptt(const LstmCell& cell, const DenseLayer& readout,
                     std::span<const double* const> inputs,
                     std::span<const double* const> targets, std::size_t B,
                     const double* h0, const double* c0, LstmGrads& cell_grads,
                     std::vector<double>& readout_dW,
                     std::vector<double>& readout_db, BpttScratch* scratch) {
  if (inputs.size() != targets.size())
    throw DimensionMismatch("lstm_bptt: input/target sequence lengths differ");
  if (inputs.empty()) throw SeriesTooShort("lstm_bptt: empty sequence");
  if (readout.act != Activation::Linear || readout.in != cell.hidden)
    throw DimensionMismatch("lstm_bptt: readout must be linear from hidden");

  const std::size_t T = inputs.size();
  const std::size_t H = cell.hidden;
  const std::size_t O = readout.out;
  const auto& K = kernels::active();

  if (cell_grads.dW.size() != cell.W.size()) cell_grads.dW.assign(cell.W.size(), 0.0);
  if (cell_grads.db.size() != cell.b.size()) cell_grads.db.assign(cell.b.size(), 0.0);
  if (readout_dW.size() != readout.W.size()) readout_dW.assign(readout.W.size(), 0.0);
  if (readout_db.size() != readout.b.size()) readout_db.assign(readout.b.size(), 0.0);

  BpttScratch local;
  BpttScratch& ws = scratch ? *scratch : local;
  ws.steps.resize(T);
  ws.h_hist.resize(T * B * H);
  ws.y_err.resize(T * B * O);
  ws.dh.assign(B * H, 0.0);
  ws.dc.assign(B * H, 0.0);

  BpttResult res;
  res.h.assign(h0, h0 + B * H);
  res.c.assign(c0, c0 + B * H);

  // Forward pass: cache every step, apply the readout, keep errors.
  std::vector<double> y(B * O);
  double sse = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    lstm_step(cell, inputs[t], B, res.h.data(), res.c.data(), &ws.steps[t]);
    std::memcpy(ws.h_hist.data() + t * B * H, res.h.data(),
                B * H * sizeof(double));
    K.gemm_xwt(res.h.data(), H, readout.W.data(), H, readout.b.data(), y.data(),
               O, B, O, H);
    const double* tgt = targets[t];
    double* err = ws.y_err.data() + t * B * O;
    for (std::size_t i = 0; i < B * O; ++i) {
      err[i] = y[i] - tgt[i];
      sse += err[i] * err[i];
    }
    if (!std::isfinite(sse))
      throw NonFiniteLoss(t, "lstm_bptt: loss became non-finite at step " +
                                 std::to_string(t));
  }
  const double denom = static_cast<double>(T * B * O);
  res.loss = sse / denom;

  // Backward pass. dL/dy = 2 err / denom.
  const double scale = 2.0 / denom;
  std::fill(ws.dh.begin(), ws.dh.end(), 0.0);
  std::fill(ws.dc.begin(), ws.dc.end(), 0.0);
  for (std::size_t t = T; t-- > 0;) {
    double* err = ws.y_err.data() + t * B * O;
    for (std::size_t i = 0; i < B * O; ++i) err[i] *= scale;
    const double* ht = ws.h_hist.data() + t * B * H;
    // Readout gradients; dh carries the recurrent gradient from step t+1 and
    // accumulates this step's readout contribution on top.
    K.gemm_acc_gtx(err, O, ht, H, readout_dW.data(), H, B, O, H);
    for (std::size_t s = 0; s < B; ++s) {
      const double* row = err + s * O;
      for (std::size_t o = 0; o < O; ++o) readout_db[o] += row[o];
    }
    K.gemm_acc_gw(err, O, readout.W.data(), H, ws.dh.data(), H, B, O, H);

    lstm_step_backward(cell, ws.steps[t], ws.dh.data(), ws.dc.data(), cell_grads);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(std::size_t n_params, AdamConfig cfg)
    : cfg_(cfg), m_(n_params, 0.0), v_(n_params, 0.0) {}

void Adam::update(double* p, const double* g, std::size_t n, std::size_t offset) {
  if (offset + n > m_.size()) throw DimensionMismatch("adam: segment out of range");
  if (t_ == 0) throw InvalidParams("adam: begin_step() not called");
  const double b1t = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double b2t = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  double* m = m_.data() + offset;
  double* v = v_.data() + offset;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
    const double mhat = m[i] / b1t;
    const double vhat = v[i] / b2t;
    p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<double()>& loss_fn,
                           double* params, std::size_t n,
                           const double* analytic, double h, double min_mag) {
  GradCheckReport rep;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double lp = loss_fn();
    params[i] = saved - h;
    const double lm = loss_fn();
    params[i] = saved;
    const double fd = (lp - lm) / (2.0 * h);
    const double a = analytic[i];
    if (std::max(std::abs(fd), std::abs(a)) < min_mag) {
      ++rep.n_below_resolution;
      continue;
    }
    const double rel = std::abs(fd - a) / (std::abs(fd) + std::abs(a));
    rep.max_rel = std::max(rep.max_rel, rel);
    acc += rel;
    ++rep.n_checked;
  }
  if (rep.n_checked) rep.mean_rel = acc / static_cast<double>(rep.n_checked);
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'N', 'N', 'M', 'T', 'N', 'S', 'R', '1'};
constexpr std::uint32_t kSchema = 1;

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

void put_u64(std::string& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

class Reader {
 public:
  explicit Reader(std::string_view s) : s_(s) {}
  void read(void* dst, std::size_t n) {
    if (pos_ + n > s_.size()) throw CorruptFile("parameter blob truncated");
    std::memcpy(dst, s_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    read(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    read(&v, 8);
    return v;
  }
  std::string str(std::size_t n) {
    if (pos_ + n > s_.size()) throw CorruptFile("parameter blob truncated");
    std::string v(s_.substr(pos_, n));
    pos_ += n;
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t NamedTensorView::size() const {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

std::string serialize_blob(const std::string& meta_json,
                           std::span<const NamedTensorView> tensors) {
  std::string out;
  out.append(kMagic, sizeof kMagic);
  put_u32(out, kSchema);
  put_u32(out, static_cast<std::uint32_t>(meta_json.size()));
  out.append(meta_json);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.append(t.name);
    put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (std::size_t d : t.dims) put_u64(out, d);
  }
  for (const auto& t : tensors) {
    out.append(reinterpret_cast<const char*>(t.data), t.size() * sizeof(double));
  }
  return out;
}

ParsedBlob parse_blob(std::string_view bytes) {
  Reader r(bytes);
  char magic[8];
  r.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw CorruptFile("parameter blob has wrong magic bytes");
  const std::uint32_t schema = r.u32();
  if (schema != kSchema)
    throw VersionMismatch("parameter blob schema " + std::to_string(schema) +
                          " not supported");
  ParsedBlob out;
  out.meta_json = r.str(r.u32());
  const std::uint32_t n_tensors = r.u32();
  std::vector<std::string> order;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = r.str(r.u32());
    const std::uint32_t ndim = r.u32();
    OwnedTensor t;
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      t.dims.push_back(static_cast<std::size_t>(r.u64()));
      total *= t.dims.back();
    }
    t.data.resize(total);
    out.tensors.emplace(name, std::move(t));
    order.push_back(name);
  }
  for (const std::string& name : order) {
    OwnedTensor& t = out.tensors[name];
    r.read(t.data.data(), t.data.size() * sizeof(double));
  }
  return out;
}

void save_blob(const std::string& path, const std::string& meta_json,
               std::span<const NamedTensorView> tensors) {
  const std::string bytes = serialize_blob(meta_json, tensors);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path + "'");

  // Human-readable sidecar: the metadata plus the shape table.
  nlohmann::json side = nlohmann::json::parse(meta_json);
  nlohmann::json shapes = nlohmann::json::object();
  for (const auto& t : tensors) shapes[t.name] = t.dims;
  side["tensors"] = shapes;
  std::ofstream meta(path + ".meta.json");
  if (!meta) throw IoError("cannot write '" + path + ".meta.json'");
  meta << side.dump(2) << "\n";
}

ParsedBlob load_blob(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return parse_blob(bytes);
}

}  // namespace nnmrom::nn
