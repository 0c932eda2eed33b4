#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dancegen/gradcheck.hpp"
#include "dancegen/nn.hpp"

using namespace dancegen;
using nn::ForwardMode;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                     double scale = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

}  // namespace

TEST_CASE("elu values") {
  CHECK(nn::elu_scalar(0.0) == 0.0);
  CHECK(nn::elu_scalar(1.0) == 1.0);
  CHECK(nn::elu_scalar(-1.0) == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-12));
  CHECK(nn::elu_scalar(-1.0) == doctest::Approx(-0.6321205588285577).epsilon(1e-12));
  CHECK(nn::elu_scalar(-80.0) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("conv2d forward basics") {
  SUBCASE("1x1 identity kernel reproduces the input") {
    nn::Conv2d conv(1, 1, 1, 1);
    conv.kernel().value[0] = 1.0;
    std::mt19937_64 rng(1);
    const Tensor x = random_tensor({1, 3, 3}, rng);
    const Tensor y = conv.infer(x);
    REQUIRE(y.shape() == x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
  }
  SUBCASE("all-ones 2x2 kernel counts the window") {
    nn::Conv2d conv(1, 1, 2, 2);
    conv.kernel().value.fill(1.0);
    const Tensor y = conv.infer(Tensor::full({1, 3, 3}, 1.0));
    REQUIRE(y.shape() == std::vector<std::size_t>{1, 2, 2});
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 4.0);
  }
  SUBCASE("kernel larger than input") {
    nn::Conv2d conv(1, 1, 4, 4);
    CHECK_THROWS_AS(conv.infer(Tensor({1, 3, 3})), ShapeError);
  }
  SUBCASE("batched and single inputs agree") {
    std::mt19937_64 rng(2);
    nn::Conv2d conv(2, 3, 2, 2);
    conv.init(rng);
    const Tensor x = random_tensor({2, 4, 5}, rng);
    const Tensor batched({1, 2, 4, 5}, x.values());
    const Tensor y_single = conv.infer(x);
    const Tensor y_batched = conv.infer(batched);
    REQUIRE(y_single.size() == y_batched.size());
    for (std::size_t i = 0; i < y_single.size(); ++i)
      CHECK(y_single[i] == y_batched[i]);
  }
}

TEST_CASE("conv2d matches the quadruple-loop oracle") {
  std::mt19937_64 rng(3);
  nn::Conv2d conv(3, 4, 2, 3);
  conv.init(rng);
  const Tensor x = random_tensor({2, 3, 5, 6}, rng);
  const Tensor y = conv.infer(x);
  REQUIRE(y.shape() == std::vector<std::size_t>{2, 4, 4, 4});

  const Tensor& k = conv.kernel().value;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 4; ++o)
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t u = 0; u < 2; ++u)
              for (std::size_t v = 0; v < 3; ++v)
                acc += x.at(n, c, i + u, j + v) * k.at(o, c, u, v);
          CHECK(y.at(n, o, i, j) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("batch_norm training statistics") {
  std::mt19937_64 rng(4);
  nn::BatchNorm bn(5);
  const Tensor x = random_tensor({16, 5}, rng, 3.0);
  const Tensor y = bn.forward(x, ForwardMode::kTrain);

  for (std::size_t c = 0; c < 5; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t n = 0; n < 16; ++n) mean += y.at(n, c);
    mean /= 16.0;
    for (std::size_t n = 0; n < 16; ++n)
      var += (y.at(n, c) - mean) * (y.at(n, c) - mean);
    var /= 16.0;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-6).scale(1.0));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("batch_norm matches the literal formula oracle") {
  std::mt19937_64 rng(5);
  nn::BatchNorm bn(3);
  std::uniform_real_distribution<double> dist(0.5, 1.5);
  for (std::size_t i = 0; i < 3; ++i) {
    bn.gamma().value[i] = dist(rng);
    bn.beta().value[i] = dist(rng) - 1.0;
  }
  const Tensor x = random_tensor({8, 3}, rng, 2.0);
  const Tensor y = bn.forward(x, ForwardMode::kFrozenStats);

  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t n = 0; n < 8; ++n) mean += x.at(n, c);
    mean /= 8.0;
    for (std::size_t n = 0; n < 8; ++n) var += (x.at(n, c) - mean) * (x.at(n, c) - mean);
    var /= 8.0;
    for (std::size_t n = 0; n < 8; ++n) {
      const double expect = bn.gamma().value[c] * (x.at(n, c) - mean) /
                                std::sqrt(var + 1e-5) +
                            bn.beta().value[c];
      CHECK(y.at(n, c) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("batch_norm modes and validation") {
  std::mt19937_64 rng(6);
  nn::BatchNorm bn(4);

  SUBCASE("already standardized batch passes through with unit gamma") {
    Tensor x({8, 4});
    for (std::size_t n = 0; n < 8; ++n)
      for (std::size_t c = 0; c < 4; ++c) x.at(n, c) = (n < 4 ? -1.0 : 1.0);
    const Tensor y = bn.forward(x, ForwardMode::kFrozenStats);
    for (std::size_t i = 0; i < y.size(); ++i)
      CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-3));
  }
  SUBCASE("batch of one in training mode is rejected") {
    CHECK_THROWS_AS(bn.forward(Tensor({1, 4}), ForwardMode::kTrain), InvalidInputError);
  }
  SUBCASE("inference uses running statistics") {
    const Tensor x = random_tensor({8, 4}, rng, 2.0);
    for (int rep = 0; rep < 200; ++rep) bn.forward(x, ForwardMode::kTrain);
    bn.clear_cache();
    const Tensor y_infer = bn.infer(x);
    const Tensor y_train = bn.forward(x, ForwardMode::kFrozenStats);
    for (std::size_t i = 0; i < y_infer.size(); ++i)
      CHECK(y_infer[i] == doctest::Approx(y_train[i]).epsilon(1e-2));
  }
}

TEST_CASE("lstm step gate logic") {
  SUBCASE("zero weights and state give zero output") {
    nn::Lstm lstm(3, 4);
    nn::LstmState state = lstm.make_state(2);
    const Tensor h = lstm.step_infer(Tensor::full({2, 3}, 0.7), state);
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == 0.0);
  }
  SUBCASE("saturated forget gate preserves the cell") {
    nn::Lstm lstm(3, 4);
    // Forget gate hard on, input gate hard off.
    for (std::size_t u = 0; u < 4; ++u) {
      lstm.bias().value[u] = -100.0;      // input gate
      lstm.bias().value[4 + u] = 100.0;   // forget gate
    }
    nn::LstmState state = lstm.make_state(1);
    state.c.fill(0.37);
    lstm.step_infer(Tensor({1, 3}), state);
    for (std::size_t i = 0; i < state.c.size(); ++i)
      CHECK(state.c[i] == doctest::Approx(0.37).epsilon(1e-12));
  }
}

TEST_CASE("lstm step matches a scalar per-gate oracle") {
  std::mt19937_64 rng(7);
  nn::Lstm lstm(3, 4);
  lstm.init(rng);
  const Tensor x = random_tensor({2, 3}, rng);
  nn::LstmState state = lstm.make_state(2);
  state.h = random_tensor({2, 4}, rng, 0.5);
  state.c = random_tensor({2, 4}, rng, 0.5);
  const Tensor h_prev = state.h;
  const Tensor c_prev = state.c;

  const Tensor h = lstm.step_infer(x, state);

  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const Tensor& wx = lstm.weight_x().value;
  const Tensor& wh = lstm.weight_h().value;
  const Tensor& b = lstm.bias().value;
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t u = 0; u < 4; ++u) {
      auto gate_pre = [&](std::size_t gate) {
        double acc = b[gate * 4 + u];
        for (std::size_t k = 0; k < 3; ++k)
          acc += wx.at(gate * 4 + u, k) * x.at(n, k);
        for (std::size_t k = 0; k < 4; ++k)
          acc += wh.at(gate * 4 + u, k) * h_prev.at(n, k);
        return acc;
      };
      const double i_g = sigmoid(gate_pre(0));
      const double f_g = sigmoid(gate_pre(1));
      const double g_g = std::tanh(gate_pre(2));
      const double o_g = sigmoid(gate_pre(3));
      const double c_new = f_g * c_prev.at(n, u) + i_g * g_g;
      CHECK(state.c.at(n, u) == doctest::Approx(c_new).epsilon(1e-12));
      CHECK(h.at(n, u) ==
            doctest::Approx(o_g * std::tanh(c_new)).epsilon(1e-12));
    }
  }
}

TEST_CASE("lstm state threading equals a single longer run") {
  std::mt19937_64 rng(8);
  nn::Lstm lstm(3, 5);
  lstm.init(rng);
  const Tensor x0 = random_tensor({2, 3}, rng);
  const Tensor x1 = random_tensor({2, 3}, rng);

  nn::LstmState run_once = lstm.make_state(2);
  lstm.step_infer(x0, run_once);
  const Tensor h1_once = lstm.step_infer(x1, run_once);

  nn::LstmState first = lstm.make_state(2);
  lstm.step_infer(x0, first);
  nn::LstmState saved{first.h, first.c};  // save and resume
  const Tensor h1_resumed = lstm.step_infer(x1, saved);

  for (std::size_t i = 0; i < h1_once.size(); ++i)
    CHECK(h1_once[i] == h1_resumed[i]);
}

TEST_CASE("forward passes are bitwise deterministic") {
  std::mt19937_64 rng(9);
  nn::Lstm lstm(4, 6);
  lstm.init(rng);
  const Tensor x = random_tensor({3, 4}, rng);
  nn::LstmState a = lstm.make_state(3);
  nn::LstmState b = lstm.make_state(3);
  const Tensor ha = lstm.step_infer(x, a);
  const Tensor hb = lstm.step_infer(x, b);
  CHECK(ha.values() == hb.values());
}

TEST_CASE("backward without forward is detected") {
  nn::Linear linear(3, 2);
  CHECK_THROWS_AS(linear.backward(Tensor({1, 2})), StateError);
  nn::Lstm lstm(3, 2);
  CHECK_THROWS_AS(lstm.backward_step(Tensor({1, 2})), StateError);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  std::mt19937_64 rng(10);
  nn::Linear linear(4, 3);
  linear.init(rng);
  linear.forward(random_tensor({2, 4}, rng), ForwardMode::kTrain);
  linear.backward(Tensor({2, 3}));
  for (std::size_t i = 0; i < linear.weight().grad.size(); ++i)
    CHECK(linear.weight().grad[i] == 0.0);
  for (std::size_t i = 0; i < linear.bias().grad.size(); ++i)
    CHECK(linear.bias().grad[i] == 0.0);
}

TEST_CASE("identity linear layer passes the upstream gradient through") {
  nn::Linear linear(3, 3);
  for (std::size_t i = 0; i < 3; ++i) linear.weight().value.at(i, i) = 1.0;
  std::mt19937_64 rng(11);
  const Tensor x = random_tensor({2, 3}, rng);
  const Tensor dy = random_tensor({2, 3}, rng);
  linear.forward(x, ForwardMode::kTrain);
  const Tensor dx = linear.backward(dy);
  for (std::size_t i = 0; i < dx.size(); ++i) CHECK(dx[i] == dy[i]);
}

TEST_CASE("gradient checks pass for every layer and the 3-step graph") {
  const auto results = gradcheck::run_gradient_checks(7);
  REQUIRE(results.size() >= 8);
  for (const auto& r : results) {
    INFO(r.name, " error ", r.max_rel_error, " tolerance ", r.tolerance);
    CHECK(r.pass);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("grad_check flags a corrupted gradient (negative control)") {
  std::mt19937_64 rng(12);
  nn::Linear linear(4, 3);
  linear.init(rng);
  Tensor x = random_tensor({2, 4}, rng);
  const Tensor r = random_tensor({2, 3}, rng);

  auto loss = [&] {
    const Tensor y = linear.infer(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * r[i];
    return acc;
  };
  linear.forward(x, ForwardMode::kTrain);
  linear.backward(r);

  Tensor corrupted = linear.weight().grad;
  corrupted[0] += 0.5;
  CHECK(nn::grad_check(loss, linear.weight().value, corrupted) > 1e-2);
}
