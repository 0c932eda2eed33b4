#include "dancegen/gradcheck.hpp"

#include <random>

#include "dancegen/model.hpp"
#include "dancegen/nn.hpp"

namespace dancegen::gradcheck {

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                     double scale = 1.0, double keep_away_from_zero = 0.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (std::size_t i = 0; i < t.size(); ++i) {
    double v = dist(rng);
    // Nudge values off activation kinks so finite differences stay smooth.
    if (keep_away_from_zero > 0.0 && std::abs(v) < keep_away_from_zero)
      v = v < 0.0 ? v - keep_away_from_zero : v + keep_away_from_zero;
    t[i] = v;
  }
  return t;
}

double weighted_sum(const Tensor& y, const Tensor& weights) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * weights[i];
  return acc;
}

CheckResult check_linear(std::mt19937_64& rng) {
  nn::Linear layer(7, 5);
  layer.init(rng);
  Tensor x = random_tensor({3, 7}, rng);
  const Tensor r = random_tensor({3, 5}, rng);

  auto loss = [&] { return weighted_sum(layer.infer(x), r); };
  layer.forward(x, nn::ForwardMode::kTrain);
  const Tensor dx = layer.backward(r);

  double err = nn::grad_check(loss, layer.weight().value, layer.weight().grad);
  err = std::max(err, nn::grad_check(loss, layer.bias().value, layer.bias().grad));
  err = std::max(err, nn::grad_check(loss, x, dx));
  return {"linear", err, 1e-6, err <= 1e-6};
}

CheckResult check_elu(std::mt19937_64& rng) {
  nn::Elu layer;
  Tensor x = random_tensor({4, 6}, rng, 1.0, 0.05);
  const Tensor r = random_tensor({4, 6}, rng);

  auto loss = [&] { return weighted_sum(layer.infer(x), r); };
  layer.forward(x, nn::ForwardMode::kTrain);
  const Tensor dx = layer.backward(r);

  const double err = nn::grad_check(loss, x, dx);
  return {"elu", err, 1e-6, err <= 1e-6};
}

CheckResult check_conv(std::mt19937_64& rng, std::size_t stride, const char* name) {
  nn::Conv2d layer(2, 3, 2, 2, stride);
  layer.init(rng);
  Tensor x = random_tensor({2, 2, 5, 4}, rng);
  const std::size_t wo = (5 - 2) / stride + 1;
  const std::size_t ho = (4 - 2) / stride + 1;
  const Tensor r = random_tensor({2, 3, wo, ho}, rng);

  auto loss = [&] { return weighted_sum(layer.infer(x), r); };
  layer.forward(x, nn::ForwardMode::kTrain);
  const Tensor dx = layer.backward(r);

  double err = nn::grad_check(loss, layer.kernel().value, layer.kernel().grad);
  err = std::max(err, nn::grad_check(loss, x, dx));
  return {name, err, 1e-5, err <= 1e-5};
}

CheckResult check_batch_norm_2d(std::mt19937_64& rng) {
  nn::BatchNorm layer(3);
  Tensor x = random_tensor({4, 3}, rng, 2.0);
  const Tensor r = random_tensor({4, 3}, rng);

  auto loss = [&] {
    return weighted_sum(layer.forward(x, nn::ForwardMode::kFrozenStats), r);
  };
  layer.forward(x, nn::ForwardMode::kTrain);
  const Tensor dx = layer.backward(r);

  double err = nn::grad_check(loss, layer.gamma().value, layer.gamma().grad);
  err = std::max(err, nn::grad_check(loss, layer.beta().value, layer.beta().grad));
  err = std::max(err, nn::grad_check(loss, x, dx));
  return {"batch_norm", err, 1e-4, err <= 1e-4};
}

CheckResult check_batch_norm_4d(std::mt19937_64& rng) {
  nn::BatchNorm layer(2);
  Tensor x = random_tensor({3, 2, 3, 2}, rng, 2.0);
  const Tensor r = random_tensor({3, 2, 3, 2}, rng);

  auto loss = [&] {
    return weighted_sum(layer.forward(x, nn::ForwardMode::kFrozenStats), r);
  };
  layer.forward(x, nn::ForwardMode::kTrain);
  const Tensor dx = layer.backward(r);

  double err = nn::grad_check(loss, layer.gamma().value, layer.gamma().grad);
  err = std::max(err, nn::grad_check(loss, layer.beta().value, layer.beta().grad));
  err = std::max(err, nn::grad_check(loss, x, dx));
  return {"batch_norm_conv", err, 1e-4, err <= 1e-4};
}

CheckResult check_lstm(std::mt19937_64& rng) {
  const std::size_t steps = 3;
  nn::Lstm layer(4, 5);
  layer.init(rng);
  std::vector<Tensor> xs, rs;
  for (std::size_t t = 0; t < steps; ++t) {
    xs.push_back(random_tensor({2, 4}, rng));
    rs.push_back(random_tensor({2, 5}, rng));
  }

  auto loss = [&] {
    nn::LstmState state = layer.make_state(2);
    double acc = 0.0;
    for (std::size_t t = 0; t < steps; ++t)
      acc += weighted_sum(layer.step_infer(xs[t], state), rs[t]);
    return acc;
  };

  layer.begin_sequence();
  nn::LstmState state = layer.make_state(2);
  for (std::size_t t = 0; t < steps; ++t)
    layer.step(xs[t], state, nn::ForwardMode::kTrain);
  std::vector<Tensor> dxs(steps);
  for (std::size_t t = steps; t-- > 0;) dxs[t] = layer.backward_step(rs[t]);

  double err = nn::grad_check(loss, layer.weight_x().value, layer.weight_x().grad);
  err = std::max(err, nn::grad_check(loss, layer.weight_h().value, layer.weight_h().grad));
  err = std::max(err, nn::grad_check(loss, layer.bias().value, layer.bias().grad));
  for (std::size_t t = 0; t < steps; ++t)
    err = std::max(err, nn::grad_check(loss, xs[t], dxs[t]));
  return {"lstm", err, 1e-4, err <= 1e-4};
}

CheckResult check_bptt(std::mt19937_64& rng, bool use_contrastive, const char* name) {
  model::ModelConfig cfg;
  cfg.input_bins = 6;
  cfg.input_frames = 3;
  cfg.convs = {{2, 2, 2}, {3, 2, 2}};
  cfg.encoder_lstm_layers = 2;
  cfg.decoder_lstm_layers = 2;
  cfg.lstm_width = 8;
  cfg.encoder_out = 5;
  cfg.motion_dim = 4;

  model::Seq2SeqModel net(cfg);
  net.init_params(rng());

  const std::size_t steps = 3, batch = 2;
  model::WindowBatch window;
  window.initial_motion = random_tensor({batch, cfg.motion_dim}, rng, 0.5);
  for (std::size_t t = 0; t < steps; ++t) {
    window.features.push_back(
        random_tensor({batch, 1, cfg.input_bins, cfg.input_frames}, rng, 0.9));
    window.targets.push_back(random_tensor({batch, cfg.motion_dim}, rng, 0.5));
  }
  window.labels = {{1, 0}, {0, 1}};

  net.zero_grads();
  model::train_window(net, window, use_contrastive);

  auto loss = [&] { return model::eval_window(net, window, use_contrastive).combined; };

  double err = 0.0;
  for (auto& [pname, param] : net.trainable_params())
    err = std::max(err, nn::grad_check(loss, param->value, param->grad));
  return {name, err, 1e-4, err <= 1e-4};
}

}  // namespace

std::vector<CheckResult> run_gradient_checks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CheckResult> results;
  results.push_back(check_linear(rng));
  results.push_back(check_elu(rng));
  results.push_back(check_conv(rng, 1, "conv2d"));
  results.push_back(check_conv(rng, 2, "conv2d_stride2"));
  results.push_back(check_batch_norm_2d(rng));
  results.push_back(check_batch_norm_4d(rng));
  results.push_back(check_lstm(rng));
  results.push_back(check_bptt(rng, true, "bptt_combined"));
  results.push_back(check_bptt(rng, false, "bptt_mse_only"));
  return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
  for (const CheckResult& r : results)
    if (!r.pass) return false;
  return true;
}

}  // namespace dancegen::gradcheck
