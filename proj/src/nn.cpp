#include "dancegen/nn.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace dancegen::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data(), rows, cols);
}

MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data(), rows, cols);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void init_uniform(Tensor& t, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
}

double elu_scalar(double x) { return x > 0.0 ? x : std::expm1(x); }

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::size_t in, std::size_t out)
    : in_(in), out_(out), weight_({out, in}), bias_({out}) {}

void Linear::init(std::mt19937_64& rng) {
  init_uniform(weight_.value, in_, rng);
  init_uniform(bias_.value, in_, rng);
}

Tensor Linear::infer(const Tensor& x) const {
  if (x.ndim() != 2 || x.dim(1) != in_)
    throw ShapeError("linear: input shape mismatch");
  const std::size_t n = x.dim(0);
  Tensor y({n, out_});
  as_matrix(y, n, out_).noalias() =
      as_matrix(x, n, in_) * as_matrix(weight_.value, out_, in_).transpose();
  auto ym = as_matrix(y, n, out_);
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_.value.data(), out_);
  return y;
}

Tensor Linear::forward(const Tensor& x, ForwardMode mode) {
  Tensor y = infer(x);
  if (mode == ForwardMode::kTrain) cache_.push_back(x);
  return y;
}

Tensor Linear::backward(const Tensor& dy) {
  if (cache_.empty()) throw StateError("linear: backward without cached forward");
  const Tensor x = std::move(cache_.back());
  cache_.pop_back();
  const std::size_t n = x.dim(0);
  if (dy.ndim() != 2 || dy.dim(0) != n || dy.dim(1) != out_)
    throw ShapeError("linear: upstream gradient shape mismatch");

  as_matrix(weight_.grad, out_, in_).noalias() +=
      as_matrix(dy, n, out_).transpose() * as_matrix(x, n, in_);
  Eigen::Map<Eigen::RowVectorXd>(bias_.grad.data(), out_) +=
      as_matrix(dy, n, out_).colwise().sum();

  Tensor dx({n, in_});
  as_matrix(dx, n, in_).noalias() =
      as_matrix(dy, n, out_) * as_matrix(weight_.value, out_, in_);
  return dx;
}

// ---------------------------------------------------------------------------
// Elu

Tensor Elu::infer(const Tensor& x) const {
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = elu_scalar(y[i]);
  return y;
}

Tensor Elu::forward(const Tensor& x, ForwardMode mode) {
  if (mode == ForwardMode::kTrain) cache_.push_back(x);
  return infer(x);
}

Tensor Elu::backward(const Tensor& dy) {
  if (cache_.empty()) throw StateError("elu: backward without cached forward");
  const Tensor x = std::move(cache_.back());
  cache_.pop_back();
  if (!dy.same_shape(x)) throw ShapeError("elu: upstream gradient shape mismatch");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    dx[i] *= x[i] > 0.0 ? 1.0 : std::exp(x[i]);
  return dx;
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kw,
               std::size_t kh, std::size_t stride)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kw_(kw),
      kh_(kh),
      stride_(stride),
      kernel_({out_channels, in_channels, kw, kh}) {
  if (stride_ == 0) throw InvalidInputError("conv2d: stride must be positive");
}

void Conv2d::init(std::mt19937_64& rng) {
  init_uniform(kernel_.value, in_channels_ * kw_ * kh_, rng);
}

Tensor Conv2d::run(const Tensor& x) const {
  const bool batched = x.ndim() == 4;
  if (!batched && x.ndim() != 3) throw ShapeError("conv2d: input must be 3-d or 4-d");
  const std::size_t n = batched ? x.dim(0) : 1;
  const std::size_t c_in = x.dim(batched ? 1 : 0);
  const std::size_t w = x.dim(batched ? 2 : 1);
  const std::size_t h = x.dim(batched ? 3 : 2);
  if (c_in != in_channels_) throw ShapeError("conv2d: channel count mismatch");
  if (w < kw_ || h < kh_) throw ShapeError("conv2d: kernel larger than input");
  const std::size_t wo = (w - kw_) / stride_ + 1;
  const std::size_t ho = (h - kh_) / stride_ + 1;

  Tensor y = batched ? Tensor({n, out_channels_, wo, ho})
                     : Tensor({out_channels_, wo, ho});
  const double* xp = x.data();
  const double* kp = kernel_.value.data();
  double* yp = y.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < out_channels_; ++o) {
      for (std::size_t i = 0; i < wo; ++i) {
        for (std::size_t j = 0; j < ho; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < in_channels_; ++c) {
            const double* xrow = xp + ((b * in_channels_ + c) * w + i * stride_) * h;
            const double* krow = kp + ((o * in_channels_ + c) * kw_) * kh_;
            for (std::size_t u = 0; u < kw_; ++u)
              for (std::size_t v = 0; v < kh_; ++v)
                acc += xrow[u * h + j * stride_ + v] * krow[u * kh_ + v];
          }
          yp[((b * out_channels_ + o) * wo + i) * ho + j] = acc;
        }
      }
    }
  }
  return y;
}

Tensor Conv2d::infer(const Tensor& x) const { return run(x); }

Tensor Conv2d::forward(const Tensor& x, ForwardMode mode) {
  Tensor y = run(x);
  if (mode == ForwardMode::kTrain) cache_.push_back(x);
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  if (cache_.empty()) throw StateError("conv2d: backward without cached forward");
  const Tensor x = std::move(cache_.back());
  cache_.pop_back();

  const bool batched = x.ndim() == 4;
  const std::size_t n = batched ? x.dim(0) : 1;
  const std::size_t w = x.dim(batched ? 2 : 1);
  const std::size_t h = x.dim(batched ? 3 : 2);
  const std::size_t wo = (w - kw_) / stride_ + 1;
  const std::size_t ho = (h - kh_) / stride_ + 1;
  if (dy.size() != n * out_channels_ * wo * ho)
    throw ShapeError("conv2d: upstream gradient shape mismatch");

  Tensor dx(x.shape());
  const double* xp = x.data();
  const double* kp = kernel_.value.data();
  const double* dyp = dy.data();
  double* dxp = dx.data();
  double* dkp = kernel_.grad.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < out_channels_; ++o) {
      for (std::size_t i = 0; i < wo; ++i) {
        for (std::size_t j = 0; j < ho; ++j) {
          const double g = dyp[((b * out_channels_ + o) * wo + i) * ho + j];
          if (g == 0.0) continue;
          for (std::size_t c = 0; c < in_channels_; ++c) {
            const std::size_t xbase = ((b * in_channels_ + c) * w + i * stride_) * h;
            const std::size_t kbase = ((o * in_channels_ + c) * kw_) * kh_;
            for (std::size_t u = 0; u < kw_; ++u) {
              for (std::size_t v = 0; v < kh_; ++v) {
                const std::size_t xi = xbase + u * h + j * stride_ + v;
                dkp[kbase + u * kh_ + v] += g * xp[xi];
                dxp[xi] += g * kp[kbase + u * kh_ + v];
              }
            }
          }
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm

BatchNorm::BatchNorm(std::size_t channels, double eps, double momentum)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      gamma_({channels}),
      beta_({channels}),
      running_mean_({channels}),
      running_var_({channels}) {
  gamma_.value.fill(1.0);
  running_var_.fill(1.0);
}

Tensor BatchNorm::batch_forward(const Tensor& x, bool update_running, bool keep_cache) {
  if (x.ndim() < 2 || x.dim(1) != channels_)
    throw ShapeError("batch_norm: channel axis mismatch");
  if (x.dim(0) < 2)
    throw InvalidInputError("batch_norm: training needs batch size >= 2");

  const std::size_t n = x.dim(0);
  std::size_t spatial = 1;
  for (std::size_t d = 2; d < x.ndim(); ++d) spatial *= x.dim(d);
  const double m = static_cast<double>(n * spatial);

  std::vector<double> mean(channels_, 0.0), var(channels_, 0.0);
  const double* xp = x.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < channels_; ++c) {
      const double* row = xp + (b * channels_ + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) mean[c] += row[s];
    }
  for (std::size_t c = 0; c < channels_; ++c) mean[c] /= m;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < channels_; ++c) {
      const double* row = xp + (b * channels_ + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        const double d = row[s] - mean[c];
        var[c] += d * d;
      }
    }
  for (std::size_t c = 0; c < channels_; ++c) var[c] /= m;

  Cache cache;
  cache.x_hat = Tensor(x.shape());
  cache.inv_std.resize(channels_);
  cache.shape = x.shape();
  for (std::size_t c = 0; c < channels_; ++c)
    cache.inv_std[c] = 1.0 / std::sqrt(var[c] + eps_);

  Tensor y(x.shape());
  double* yp = y.data();
  double* xhp = cache.x_hat.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < channels_; ++c) {
      const double* row = xp + (b * channels_ + c) * spatial;
      double* yrow = yp + (b * channels_ + c) * spatial;
      double* hrow = xhp + (b * channels_ + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        hrow[s] = (row[s] - mean[c]) * cache.inv_std[c];
        yrow[s] = gamma_.value[c] * hrow[s] + beta_.value[c];
      }
    }

  if (update_running) {
    for (std::size_t c = 0; c < channels_; ++c) {
      running_mean_[c] = momentum_ * running_mean_[c] + (1.0 - momentum_) * mean[c];
      running_var_[c] = momentum_ * running_var_[c] + (1.0 - momentum_) * var[c];
    }
  }
  if (keep_cache) cache_.push_back(std::move(cache));
  return y;
}

Tensor BatchNorm::infer(const Tensor& x) const {
  if (x.ndim() < 2 || x.dim(1) != channels_)
    throw ShapeError("batch_norm: channel axis mismatch");
  const std::size_t n = x.dim(0);
  std::size_t spatial = 1;
  for (std::size_t d = 2; d < x.ndim(); ++d) spatial *= x.dim(d);

  Tensor y(x.shape());
  const double* xp = x.data();
  double* yp = y.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < channels_; ++c) {
      const double scale = gamma_.value[c] / std::sqrt(running_var_[c] + eps_);
      const double shift = beta_.value[c] - scale * running_mean_[c];
      const double* row = xp + (b * channels_ + c) * spatial;
      double* yrow = yp + (b * channels_ + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) yrow[s] = scale * row[s] + shift;
    }
  return y;
}

Tensor BatchNorm::forward(const Tensor& x, ForwardMode mode) {
  switch (mode) {
    case ForwardMode::kTrain: return batch_forward(x, true, true);
    case ForwardMode::kFrozenStats: return batch_forward(x, false, false);
    case ForwardMode::kInfer: return infer(x);
  }
  throw StateError("batch_norm: unknown mode");
}

Tensor BatchNorm::backward(const Tensor& dy) {
  if (cache_.empty()) throw StateError("batch_norm: backward without cached forward");
  Cache cache = std::move(cache_.back());
  cache_.pop_back();
  if (dy.shape() != cache.shape)
    throw ShapeError("batch_norm: upstream gradient shape mismatch");

  const std::size_t n = cache.shape[0];
  std::size_t spatial = 1;
  for (std::size_t d = 2; d < cache.shape.size(); ++d) spatial *= cache.shape[d];
  const double m = static_cast<double>(n * spatial);

  std::vector<double> sum_dy(channels_, 0.0), sum_dy_xhat(channels_, 0.0);
  const double* dyp = dy.data();
  const double* xhp = cache.x_hat.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < channels_; ++c) {
      const double* grow = dyp + (b * channels_ + c) * spatial;
      const double* hrow = xhp + (b * channels_ + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        sum_dy[c] += grow[s];
        sum_dy_xhat[c] += grow[s] * hrow[s];
      }
    }
  for (std::size_t c = 0; c < channels_; ++c) {
    gamma_.grad[c] += sum_dy_xhat[c];
    beta_.grad[c] += sum_dy[c];
  }

  Tensor dx(cache.shape);
  double* dxp = dx.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < channels_; ++c) {
      const double k = gamma_.value[c] * cache.inv_std[c];
      const double* grow = dyp + (b * channels_ + c) * spatial;
      const double* hrow = xhp + (b * channels_ + c) * spatial;
      double* drow = dxp + (b * channels_ + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s)
        drow[s] = k * (grow[s] - sum_dy[c] / m - hrow[s] * sum_dy_xhat[c] / m);
    }
  return dx;
}

// ---------------------------------------------------------------------------
// Lstm

Lstm::Lstm(std::size_t in, std::size_t width)
    : in_(in),
      width_(width),
      wx_({4 * width, in}),
      wh_({4 * width, width}),
      bias_({4 * width}) {}

void Lstm::init(std::mt19937_64& rng) {
  init_uniform(wx_.value, in_, rng);
  init_uniform(wh_.value, width_, rng);
  bias_.value.fill(0.0);
  for (std::size_t i = width_; i < 2 * width_; ++i) bias_.value[i] = 1.0;
}

LstmState Lstm::make_state(std::size_t batch) const {
  return {Tensor({batch, width_}), Tensor({batch, width_})};
}

Tensor Lstm::run(const Tensor& x, LstmState& state, Cache* cache) const {
  if (x.ndim() != 2 || x.dim(1) != in_) throw ShapeError("lstm: input shape mismatch");
  const std::size_t n = x.dim(0);
  if (state.h.ndim() != 2 || state.h.dim(0) != n || state.h.dim(1) != width_)
    throw ShapeError("lstm: state shape mismatch");

  Tensor z({n, 4 * width_});
  as_matrix(z, n, 4 * width_).noalias() =
      as_matrix(x, n, in_) * as_matrix(wx_.value, 4 * width_, in_).transpose();
  as_matrix(z, n, 4 * width_).noalias() +=
      as_matrix(state.h, n, width_) * as_matrix(wh_.value, 4 * width_, width_).transpose();
  auto zm = as_matrix(z, n, 4 * width_);
  zm.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_.value.data(), 4 * width_);

  Tensor gi({n, width_}), gf({n, width_}), gg({n, width_}), go({n, width_});
  Tensor c_new({n, width_}), hc({n, width_}), h_new({n, width_});
  for (std::size_t b = 0; b < n; ++b) {
    const double* zr = z.data() + b * 4 * width_;
    for (std::size_t u = 0; u < width_; ++u) {
      const double iv = sigmoid(zr[u]);
      const double fv = sigmoid(zr[width_ + u]);
      const double gv = std::tanh(zr[2 * width_ + u]);
      const double ov = sigmoid(zr[3 * width_ + u]);
      const double cv = fv * state.c.at(b, u) + iv * gv;
      const double hcv = std::tanh(cv);
      gi.at(b, u) = iv;
      gf.at(b, u) = fv;
      gg.at(b, u) = gv;
      go.at(b, u) = ov;
      c_new.at(b, u) = cv;
      hc.at(b, u) = hcv;
      h_new.at(b, u) = ov * hcv;
    }
  }

  if (cache) {
    cache->x = x;
    cache->h_prev = state.h;
    cache->c_prev = state.c;
    cache->i = gi;
    cache->f = gf;
    cache->g = gg;
    cache->o = go;
    cache->c_new = c_new;
    cache->hc = hc;
  }
  state.c = std::move(c_new);
  state.h = h_new;
  return h_new;
}

Tensor Lstm::step_infer(const Tensor& x, LstmState& state) const {
  return run(x, state, nullptr);
}

Tensor Lstm::step(const Tensor& x, LstmState& state, ForwardMode mode) {
  if (mode == ForwardMode::kTrain) {
    cache_.emplace_back();
    return run(x, state, &cache_.back());
  }
  return run(x, state, nullptr);
}

Tensor Lstm::backward_step(const Tensor& dh_external) {
  if (cache_.empty()) throw StateError("lstm: backward without cached forward");
  Cache cache = std::move(cache_.back());
  cache_.pop_back();

  const std::size_t n = cache.x.dim(0);
  if (dh_external.ndim() != 2 || dh_external.dim(0) != n ||
      dh_external.dim(1) != width_)
    throw ShapeError("lstm: upstream gradient shape mismatch");

  if (dh_carry_.empty()) dh_carry_ = Tensor({n, width_});
  if (dc_carry_.empty()) dc_carry_ = Tensor({n, width_});

  Tensor dz({n, 4 * width_});
  for (std::size_t b = 0; b < n; ++b) {
    double* dzr = dz.data() + b * 4 * width_;
    for (std::size_t u = 0; u < width_; ++u) {
      const double dh = dh_external.at(b, u) + dh_carry_.at(b, u);
      const double iv = cache.i.at(b, u);
      const double fv = cache.f.at(b, u);
      const double gv = cache.g.at(b, u);
      const double ov = cache.o.at(b, u);
      const double hcv = cache.hc.at(b, u);

      const double d_o = dh * hcv;
      const double dc = dc_carry_.at(b, u) + dh * ov * (1.0 - hcv * hcv);
      const double d_i = dc * gv;
      const double d_g = dc * iv;
      const double d_f = dc * cache.c_prev.at(b, u);
      dc_carry_.at(b, u) = dc * fv;

      dzr[u] = d_i * iv * (1.0 - iv);
      dzr[width_ + u] = d_f * fv * (1.0 - fv);
      dzr[2 * width_ + u] = d_g * (1.0 - gv * gv);
      dzr[3 * width_ + u] = d_o * ov * (1.0 - ov);
    }
  }

  as_matrix(wx_.grad, 4 * width_, in_).noalias() +=
      as_matrix(dz, n, 4 * width_).transpose() * as_matrix(cache.x, n, in_);
  as_matrix(wh_.grad, 4 * width_, width_).noalias() +=
      as_matrix(dz, n, 4 * width_).transpose() * as_matrix(cache.h_prev, n, width_);
  Eigen::Map<Eigen::RowVectorXd>(bias_.grad.data(), 4 * width_) +=
      as_matrix(dz, n, 4 * width_).colwise().sum();

  as_matrix(dh_carry_, n, width_).noalias() =
      as_matrix(dz, n, 4 * width_) * as_matrix(wh_.value, 4 * width_, width_);

  Tensor dx({n, in_});
  as_matrix(dx, n, in_).noalias() =
      as_matrix(dz, n, 4 * width_) * as_matrix(wx_.value, 4 * width_, in_);
  return dx;
}

void Lstm::begin_sequence() {
  cache_.clear();
  dh_carry_ = Tensor();
  dc_carry_ = Tensor();
}

// ---------------------------------------------------------------------------

double grad_check(const std::function<double()>& loss, Tensor& value,
                  const Tensor& analytic, double eps) {
  if (!value.same_shape(analytic) && value.size() != analytic.size())
    throw ShapeError("grad_check: analytic gradient shape mismatch");
  double max_err = 0.0;
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double saved = value[i];
    value[i] = saved + eps;
    const double lp = loss();
    value[i] = saved - eps;
    const double lm = loss();
    value[i] = saved;
    const double numeric = (lp - lm) / (2.0 * eps);
    const double a = analytic[i];
    const double err =
        std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4});
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace dancegen::nn
