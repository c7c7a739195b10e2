#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cdiff/adam.h"
#include "cdiff/error.h"
#include "cdiff/return_predictor.h"
#include "cdiff/rng.h"
#include "test_util.h"

namespace cdiff {
namespace {

using testing::max_relative_error;
using testing::numeric_gradient;

constexpr std::size_t kWindow = 6;
constexpr std::size_t kEmbed = 4;

ReturnPredictor random_predictor(Rng& rng) {
  return ReturnPredictor(Mlp({kWindow + kEmbed, 8, 8, 1}, Activation::kLinear, rng), kWindow,
                         kEmbed);
}

TEST(Predict, ZeroWeightsGiveZero) {
  const ReturnPredictor pred(Mlp::zeros({kWindow + kEmbed, 5, 1}, Activation::kLinear),
                             kWindow, kEmbed);
  Rng rng(1);
  EXPECT_EQ(pred.predict(testing::random_vector(rng, kWindow), 3), 0.0);
  for (double g : pred.input_gradient(testing::random_vector(rng, kWindow), 3)) {
    EXPECT_EQ(g, 0.0);
  }
}

TEST(Predict, DeterministicAcrossCalls) {
  Rng rng(2);
  const auto pred = random_predictor(rng);
  const auto x = testing::random_vector(rng, kWindow);
  const double a = pred.predict(x, 7);
  const double b = pred.predict(x, 7);
  EXPECT_EQ(a, b);
  EXPECT_THROW(pred.predict(std::vector<double>(kWindow + 1), 7), DimensionError);
}

TEST(InputGradient, LinearPredictorReturnsWeights) {
  Mlp net = Mlp::zeros({kWindow + kEmbed, 1}, Activation::kLinear);
  const std::vector<double> w{0.5, -1.0, 2.0, 0.0, 3.0, -0.25};
  std::copy(w.begin(), w.end(), net.weight(0).begin());
  net.weight(0)[kWindow] = 9.0;  // embedding weight, excluded from the gradient
  const ReturnPredictor pred(net, kWindow, kEmbed);
  Rng rng(3);
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(pred.input_gradient(testing::random_vector(rng, kWindow), 1 + k), w);
  }
}

TEST(InputGradient, MatchesFiniteDifferences) {
  Rng rng(4);
  const auto pred = random_predictor(rng);
  const auto x = testing::random_vector(rng, kWindow);
  auto f = [&](std::span<const double> v) { return pred.predict(v, 5); };
  EXPECT_LT(max_relative_error(pred.input_gradient(x, 5), numeric_gradient(f, x)), 1e-5);
}

TEST(LossV, ValueExamples) {
  Mlp net = Mlp::zeros({kWindow + kEmbed, 1}, Activation::kLinear);
  net.bias(0)[0] = 0.5;
  const ReturnPredictor pred(net, kWindow, kEmbed);
  const std::vector<double> x(kWindow, 0.1);
  EXPECT_EQ(loss_v(pred, x, 2, 0.5).loss, 0.0);
  EXPECT_DOUBLE_EQ(loss_v(pred, x, 2, 1.0).loss, 0.25);
}

TEST(LossV, ParamGradientMatchesFiniteDifferences) {
  Rng rng(5);
  const auto pred = random_predictor(rng);
  const auto x = testing::random_vector(rng, kWindow);
  const double target = 0.8;
  const auto out = loss_v(pred, x, 3, target);
  EXPECT_GE(out.loss, 0.0);
  const std::vector<double> theta(pred.net().params().begin(), pred.net().params().end());
  auto f = [&](std::span<const double> p) {
    ReturnPredictor probe = pred;
    std::copy(p.begin(), p.end(), probe.net().params().begin());
    return loss_v(probe, x, 3, target).loss;
  };
  EXPECT_LT(max_relative_error(out.param_grads, numeric_gradient(f, theta)), 1e-5);
}

TEST(Training, LearnsWindowMeanTarget) {
  Rng rng(6);
  ReturnPredictor pred(Mlp({kWindow + kEmbed, 32, 32, 1}, Activation::kLinear, rng), kWindow,
                       kEmbed);
  AdamState opt(AdamConfig{2e-3}, pred.net().param_count());
  auto draw = [&](Rng& r) {
    std::vector<double> x(kWindow);
    for (auto& v : x) v = 2.0 * r.uniform() - 1.0;
    return x;
  };
  auto mean_of = [](const std::vector<double>& x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  };
  const std::size_t batch = 32;
  std::vector<double> grads(pred.net().param_count());
  for (int step = 0; step < 3000; ++step) {
    std::fill(grads.begin(), grads.end(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto x = draw(rng);
      const auto out = loss_v(pred, x, 1 + rng.index(10), mean_of(x));
      for (std::size_t k = 0; k < grads.size(); ++k) grads[k] += out.param_grads[k] / batch;
    }
    adam_step(opt, pred.net().params(), grads);
  }
  Rng held_out(99);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const auto x = draw(held_out);
    worst = std::max(worst, std::abs(pred.predict(x, 1 + held_out.index(10)) - mean_of(x)));
  }
  EXPECT_LT(worst, 0.05);
}

}  // namespace
}  // namespace cdiff
