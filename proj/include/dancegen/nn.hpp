#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dancegen/common.hpp"
#include "dancegen/tensor.hpp"

namespace dancegen::nn {

// Layers keep a stack of per-step forward caches when run in kTrain mode.
// Backward calls pop the stack in reverse step order, which is what
// backpropagation through time needs: run forward over the whole window,
// then call backward once per step from the last step to the first.
// kFrozenStats reproduces training-mode numerics (batch statistics) without
// touching caches or running statistics; kInfer uses running statistics.
enum class ForwardMode { kTrain, kFrozenStats, kInfer };

/// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization.
void init_uniform(Tensor& t, std::size_t fan_in, std::mt19937_64& rng);

double elu_scalar(double x);

/// Fully connected layer: y = x W^T + b with x of shape [N, in].
class Linear {
 public:
  Linear(std::size_t in, std::size_t out);

  void init(std::mt19937_64& rng);
  Tensor forward(const Tensor& x, ForwardMode mode);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& dy);

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }
  void clear_cache() { cache_.clear(); }

 private:
  std::size_t in_, out_;
  Param weight_;  // [out, in]
  Param bias_;    // [out]
  std::vector<Tensor> cache_;
};

/// Elementwise exponential linear unit, alpha = 1.
class Elu {
 public:
  Tensor forward(const Tensor& x, ForwardMode mode);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& dy);
  void clear_cache() { cache_.clear(); }

 private:
  std::vector<Tensor> cache_;
};

/// Valid 2-d cross-correlation without padding or bias. Input [N, C, W, H]
/// or [C, W, H]; output width (W - kw) / stride + 1 and likewise for height.
class Conv2d {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kw,
         std::size_t kh, std::size_t stride = 1);

  void init(std::mt19937_64& rng);
  Tensor forward(const Tensor& x, ForwardMode mode);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& dy);

  Param& kernel() { return kernel_; }
  std::size_t out_channels() const { return out_channels_; }
  void clear_cache() { cache_.clear(); }

 private:
  Tensor run(const Tensor& x) const;
  std::size_t in_channels_, out_channels_, kw_, kh_, stride_;
  Param kernel_;  // [out, in, kw, kh]
  std::vector<Tensor> cache_;
};

/// Batch normalization over the channel axis: dim 1 for [N, C, ...] inputs,
/// the feature axis for [N, D] inputs. Training mode normalizes with batch
/// statistics (population variance, eps 1e-5) and updates running statistics
/// with momentum 0.9.
class BatchNorm {
 public:
  explicit BatchNorm(std::size_t channels, double eps = 1e-5, double momentum = 0.9);

  Tensor forward(const Tensor& x, ForwardMode mode);
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& dy);

  Param& gamma() { return gamma_; }
  Param& beta() { return beta_; }
  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }
  std::size_t channels() const { return channels_; }
  void clear_cache() { cache_.clear(); }

 private:
  struct Cache {
    Tensor x_hat;
    std::vector<double> inv_std;
    std::vector<std::size_t> shape;
  };
  Tensor batch_forward(const Tensor& x, bool update_running, bool keep_cache);

  std::size_t channels_;
  double eps_, momentum_;
  Param gamma_, beta_;
  Tensor running_mean_, running_var_;
  std::vector<Cache> cache_;
};

struct LstmState {
  Tensor h;  // [N, width]
  Tensor c;  // [N, width]
};

/// Single LSTM cell with gate order (input, forget, candidate, output).
/// step() advances the caller-owned state by one frame. In kTrain mode each
/// step pushes a cache; backward_step() pops them in reverse and threads the
/// recurrent gradient internally, returning the gradient w.r.t. that step's
/// input.
class Lstm {
 public:
  Lstm(std::size_t in, std::size_t width);

  void init(std::mt19937_64& rng);  // forget-gate bias starts at 1
  LstmState make_state(std::size_t batch) const;

  Tensor step(const Tensor& x, LstmState& state, ForwardMode mode);
  Tensor step_infer(const Tensor& x, LstmState& state) const;
  Tensor backward_step(const Tensor& dh_external);

  void begin_sequence();  // clears caches and recurrent gradient carries

  Param& weight_x() { return wx_; }
  Param& weight_h() { return wh_; }
  Param& bias() { return bias_; }
  std::size_t in_dim() const { return in_; }
  std::size_t width() const { return width_; }

 private:
  struct Cache {
    Tensor x, h_prev, c_prev;
    Tensor i, f, g, o, c_new, hc;
  };
  Tensor run(const Tensor& x, LstmState& state, Cache* cache) const;

  std::size_t in_, width_;
  Param wx_;    // [4*width, in]
  Param wh_;    // [4*width, width]
  Param bias_;  // [4*width]
  std::vector<Cache> cache_;
  Tensor dh_carry_, dc_carry_;
};

/// Central finite differences of `loss` w.r.t. `value`, compared against
/// `analytic`. Returns the max elementwise error |a - n| / max(|a|, |n|, 1e-4).
double grad_check(const std::function<double()>& loss, Tensor& value,
                  const Tensor& analytic, double eps = 1e-5);

}  // namespace dancegen::nn
