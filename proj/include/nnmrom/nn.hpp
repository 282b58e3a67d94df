#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nnmrom/rng.hpp"

namespace nnmrom::nn {

enum class Activation { Linear, Tanh };

// Logistic sigmoid, split-form evaluation so large |x| cannot overflow.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

struct DenseLayer {
  std::size_t in = 0, out = 0;
  Activation act = Activation::Linear;
  std::vector<double> W;  // row-major [out x in]
  std::vector<double> b;  // [out]

  static DenseLayer glorot(std::size_t in, std::size_t out, Activation act,
                           Rng& rng);
  std::size_t n_params() const { return W.size() + b.size(); }
  void validate() const;
};

struct DenseCache {
  std::size_t batch = 0;
  std::vector<double> X;  // [B x in] inputs
  std::vector<double> A;  // [B x out] activations
};

// Y[B x out] = act(X W^T + b). The cache, when given, retains what the
// backward pass needs.
void dense_forward(const DenseLayer& l, const double* X, std::size_t B,
                   double* Y, DenseCache* cache = nullptr);

// Exact gradients of the cached forward map. dW [out x in] and db [out] are
// accumulated (caller zeroes); dX [B x in] is overwritten when non-null.
// Throws StaleCache when the cache does not match the layer.
void dense_backward(const DenseLayer& l, const DenseCache& cache,
                    const double* dY, double* dW, double* db,
                    double* dX = nullptr);

// ---------------------------------------------------------------------------
// Multi-layer perceptron
// ---------------------------------------------------------------------------

struct LayerSpec {
  std::size_t out = 0;
  Activation act = Activation::Linear;
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t input_dim, const std::vector<LayerSpec>& specs);

  void init_glorot(Rng& rng);

  std::size_t n_layers() const { return layers_.size(); }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const;
  std::size_t max_width() const;
  std::size_t n_params() const;

  DenseLayer& layer(std::size_t i) { return layers_[i]; }
  const DenseLayer& layer(std::size_t i) const { return layers_[i]; }

  // Forward a row-major [B x width(from)] batch through layers [from, to).
  // Y must hold [B x width(to)].
  void forward(const double* X, std::size_t B, double* Y, std::size_t from = 0,
               std::size_t to = static_cast<std::size_t>(-1)) const;

  struct Cache {
    std::size_t batch = 0;
    std::vector<DenseCache> layers;
  };
  struct Grads {
    std::vector<std::vector<double>> dW, db;
    void zero();
  };
  Grads make_grads() const;

  // Forward with caches; Y [B x output_dim].
  void forward_cached(const double* X, std::size_t B, double* Y, Cache& cache) const;
  // dY [B x output_dim]; grads accumulated; dX optional [B x input_dim].
  void backward(const Cache& cache, const double* dY, Grads& grads,
                double* dX = nullptr) const;

  void flatten_params(double* out) const;
  void set_flat_params(const double* in);
  void flatten(const Grads& g, double* out) const;

 private:
  std::size_t input_dim_ = 0;
  std::vector<DenseLayer> layers_;
};

// ---------------------------------------------------------------------------
// LSTM cell
// ---------------------------------------------------------------------------

// Canonical LSTM cell. Gate pre-activations are one stacked matrix applied to
// [x; h_prev]: rows [0,H) input gate i, [H,2H) forget gate f, [2H,3H) cell
// candidate g, [3H,4H) output gate o.
//   c' = sigmoid(z_f) . c + sigmoid(z_i) . tanh(z_g)
//   h' = sigmoid(z_o) . tanh(c')
struct LstmCell {
  std::size_t input = 0, hidden = 0;
  std::vector<double> W;  // [4H x (input+hidden)]
  std::vector<double> b;  // [4H]

  // Glorot-uniform weights; forget-gate bias +1 so early training does not
  // wash the cell state out.
  static LstmCell glorot(std::size_t input, std::size_t hidden, Rng& rng);
  std::size_t n_params() const { return W.size() + b.size(); }
  std::size_t width() const { return input + hidden; }
  void validate() const;
};

struct LstmStepCache {
  std::size_t batch = 0;
  std::vector<double> xcat;    // [B x (I+H)]
  std::vector<double> gates;   // [B x 4H] post-activation i,f,g,o
  std::vector<double> c_prev;  // [B x H]
  std::vector<double> tanh_c;  // [B x H]
};

// Advance B lanes one step. x is [B x input]; h and c are [B x hidden],
// updated in place.
void lstm_step(const LstmCell& cell, const double* x, std::size_t B, double* h,
               double* c, LstmStepCache* cache = nullptr);

struct LstmGrads {
  std::vector<double> dW, db;
  void zero();
};

// Backward through one cached step. On entry dh/dc hold gradients w.r.t. the
// step outputs; on exit they hold gradients w.r.t. the previous h/c. Weight
// gradients accumulate.
void lstm_step_backward(const LstmCell& cell, const LstmStepCache& cache,
                        double* dh, double* dc, LstmGrads& grads);

// ---------------------------------------------------------------------------
// Backpropagation through time
// ---------------------------------------------------------------------------

struct BpttScratch {
  std::vector<LstmStepCache> steps;
  std::vector<double> h_hist;  // [T x B x H]
  std::vector<double> y_err;   // [T x B x O] prediction minus target
  std::vector<double> dh, dc;  // [B x H]
};

struct BpttResult {
  double loss = 0.0;  // mean squared error over steps, lanes and outputs
  std::vector<double> h, c;  // final states [B x H]
};

// Teacher-forced window: runs T steps from (h0, c0), applies the linear
// readout at every step, and accumulates exact gradients for the window
// (truncation boundary: no gradient flows out of the window). inputs[t] and
// targets[t] are row-major panels [B x input] / [B x readout.out].
BpttResult lstm_bptt(const LstmCell& cell, const DenseLayer& readout,
                     std::span<const double* const> inputs,
                     std::span<const double* const> targets, std::size_t B,
                     const double* h0, const double* c0, LstmGrads& cell_grads,
                     std::vector<double>& readout_dW,
                     std::vector<double>& readout_db,
                     BpttScratch* scratch = nullptr);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction over a logically flat parameter vector.
// Call begin_step() once per optimizer step, then update() for each
// contiguous parameter segment with its offset into the flat layout.
class Adam {
 public:
  Adam() = default;
  explicit Adam(std::size_t n_params, AdamConfig cfg = {});

  void begin_step() { ++t_; }
  void update(double* p, const double* g, std::size_t n, std::size_t offset = 0);

  void set_lr(double lr) { cfg_.lr = lr; }
  std::size_t step() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel = 0.0;
  double mean_rel = 0.0;
  std::size_t n_checked = 0;
  std::size_t n_below_resolution = 0;
  bool pass(double tol) const { return n_checked > 0 && max_rel < tol; }
};

// Central finite differences against analytic gradients. loss_fn must
// recompute the scalar loss from the current contents of params. Relative
// errors are scored only where the gradient magnitude exceeds min_mag: a
// two-point central difference carries ~eps*|f|/h of absolute noise, so
// smaller entries cannot be certified to a relative tolerance and are
// tallied in n_below_resolution instead.
GradCheckReport grad_check(const std::function<double()>& loss_fn,
                           double* params, std::size_t n,
                           const double* analytic, double h = 1e-6,
                           double min_mag = 1e-5);

// ---------------------------------------------------------------------------
// Parameter serialization
// ---------------------------------------------------------------------------

struct NamedTensorView {
  std::string name;
  std::vector<std::size_t> dims;
  const double* data = nullptr;
  std::size_t size() const;
};

struct OwnedTensor {
  std::vector<std::size_t> dims;
  std::vector<double> data;
};

struct ParsedBlob {
  std::string meta_json;
  std::map<std::string, OwnedTensor> tensors;
};

// Versioned flat binary layout: magic, schema version, a JSON metadata
// string, a shape table, then row-major 64-bit payloads (little-endian).
// Round-trips bit-exactly.
std::string serialize_blob(const std::string& meta_json,
                           std::span<const NamedTensorView> tensors);
ParsedBlob parse_blob(std::string_view bytes);

// File save also writes a human-readable metadata sidecar at
// "<path>.meta.json".
void save_blob(const std::string& path, const std::string& meta_json,
               std::span<const NamedTensorView> tensors);
ParsedBlob load_blob(const std::string& path);

}  // namespace nnmrom::nn
