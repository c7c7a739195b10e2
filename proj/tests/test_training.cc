#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "cdiff/envgen.h"
#include "cdiff/error.h"
#include "cdiff/training.h"
#include "test_util.h"

namespace cdiff {
namespace {

using testing::max_relative_error;
using testing::numeric_gradient;

ModelConfig tiny_model() {
  ModelConfig mc;
  mc.horizon = 4;
  mc.embed_dim = 8;
  mc.denoiser_hidden = {16, 16};
  mc.predictor_hidden = {16};
  mc.latent_dim = 4;
  mc.diffusion_steps = 5;
  return mc;
}

ContrastiveConfig tiny_contrast() {
  ContrastiveConfig cc;
  cc.kappa = 3;
  cc.latent_dim = 4;
  cc.slope = 10.0;
  return cc;
}

const OfflineDataset& small_dataset() {
  static const OfflineDataset ds =
      generate_mixture(PointMazeDesk(), MixSpec{BehaviorKind::kRandom, 0.3, 10}, 5);
  return ds;
}

struct Fixture {
  ModelBundle models;
  ContrastiveIndex index;
  WindowSet windows;
};

Fixture make_fixture(std::uint64_t seed) {
  Rng rng(seed);
  const auto& ds = small_dataset();
  ModelConfig mc = tiny_model();
  Fixture f{ModelBundle::init(mc, ds.norm(), rng), ContrastiveIndex::build(ds, tiny_contrast(), rng),
            make_window_set(ds, mc.horizon)};
  return f;
}

TEST(LossD, PerfectAndZeroDenoiser) {
  const auto s = DiffusionSchedule::cosine(5);
  const std::vector<double> window{0.6, 0.8, 0.0, 0.0};  // unit norm
  Mlp perfect = Mlp::zeros({4 + 8, 4}, Activation::kLinear);
  std::copy(window.begin(), window.end(), perfect.bias(0).begin());
  Rng rng(1);
  const auto noise = rng.normal_vector(4);
  EXPECT_EQ(loss_d(perfect, window, 3, noise, s, 8), 0.0);
  const Mlp zero = Mlp::zeros({4 + 8, 4}, Activation::kLinear);
  EXPECT_NEAR(loss_d(zero, window, 3, noise, s, 8), 1.0, 1e-15);
}

// Objective of evaluate_losses as a function of one block's parameters, with
// the draws replayed from a fixed generator state.
double objective(const ModelBundle& m, const Batch& batch, const ContrastiveIndex* index,
                 LossWeights w, const Rng& rng) {
  Rng r = rng;
  const auto e = evaluate_losses(m, batch, index, w, r);
  return w.d * e.loss_d + w.v * e.loss_v + w.c * e.loss_c;
}

TEST(EvaluateLosses, BlockGradientsMatchFiniteDifferences) {
  auto f = make_fixture(2);
  Rng draw(3);
  const Batch batch = draw_batch(f.windows, 3, draw);
  const Rng rng(4);
  for (const LossWeights w : {LossWeights{1, 0, 0}, LossWeights{0, 1, 0}, LossWeights{0, 0, 1},
                              LossWeights{1.0, 0.5, 0.3}}) {
    Rng r = rng;
    const auto eval = evaluate_losses(f.models, batch, &f.index, w, r);
    auto check = [&](auto&& get_params, const std::vector<double>& analytic, const char* name) {
      ModelBundle probe = f.models;
      const std::vector<double> theta(get_params(probe).begin(), get_params(probe).end());
      auto fn = [&](std::span<const double> p) {
        std::copy(p.begin(), p.end(), get_params(probe).begin());
        return objective(probe, batch, &f.index, w, rng);
      };
      const auto numeric = numeric_gradient(fn, theta);
      EXPECT_LT(max_relative_error(analytic, numeric), 1e-5)
          << name << " weights " << w.d << "," << w.v << "," << w.c;
    };
    check([](ModelBundle& m) { return m.denoiser.params(); }, eval.grads.denoiser, "denoiser");
    check([](ModelBundle& m) { return m.predictor.net().params(); }, eval.grads.predictor,
          "predictor");
    check([](ModelBundle& m) { return m.projector.net().params(); }, eval.grads.projector,
          "projector");
  }
}

TEST(GradientSeparation, CrossGradientsAreExactlyZero) {
  for (std::uint64_t seed : {5u, 6u, 7u}) {
    auto f = make_fixture(seed);
    Rng draw(seed);
    const Batch batch = draw_batch(f.windows, 4, draw);
    const auto report = gradient_separation_check(f.models, batch, &f.index, Rng(seed + 100));
    EXPECT_EQ(report.value_grad_on_denoiser, 0.0);
    EXPECT_EQ(report.value_grad_on_projector, 0.0);
    EXPECT_EQ(report.generation_grad_on_predictor, 0.0);
    EXPECT_EQ(report.diffusion_grad_on_projector, 0.0);
    EXPECT_TRUE(report.separated());
  }
}

TEST(GradientSeparation, DiffusionLossLeavesProjectorAlone) {
  auto f = make_fixture(8);
  Rng draw(8);
  const Batch batch = draw_batch(f.windows, 4, draw);
  Rng r(9);
  const auto eval = evaluate_losses(f.models, batch, &f.index, LossWeights{1, 0, 0}, r);
  for (double g : eval.grads.projector) EXPECT_EQ(g, 0.0);
  for (double g : eval.grads.predictor) EXPECT_EQ(g, 0.0);
}

TEST(TrainStep, ZeroWeightsLeaveParameters) {
  auto f = make_fixture(10);
  const ModelBundle before = f.models;
  auto opt = OptimizerState::init(f.models, 1e-3);
  TrainConfig cfg;
  cfg.lambda_d = cfg.lambda_v = cfg.lambda_c = 0.0;
  Rng rng(11);
  const Batch batch = draw_batch(f.windows, 4, rng);
  train_step(f.models, opt, batch, cfg, &f.index, rng, 1);
  auto same = [](std::span<const double> a, std::span<const double> b) {
    return std::equal(a.begin(), a.end(), b.begin(), b.end());
  };
  EXPECT_TRUE(same(f.models.denoiser.params(), before.denoiser.params()));
  EXPECT_TRUE(same(f.models.predictor.net().params(), before.predictor.net().params()));
  EXPECT_TRUE(same(f.models.projector.net().params(), before.projector.net().params()));
}

TEST(TrainStep, ZeroValueWeightFreezesPredictor) {
  auto f = make_fixture(12);
  const ModelBundle before = f.models;
  auto opt = OptimizerState::init(f.models, 1e-3);
  TrainConfig cfg;
  cfg.lambda_v = 0.0;
  Rng rng(13);
  for (std::uint64_t s = 1; s <= 3; ++s) {
    train_step(f.models, opt, draw_batch(f.windows, 4, rng), cfg, &f.index, rng, s);
  }
  const auto a = f.models.predictor.net().params();
  const auto b = before.predictor.net().params();
  EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  const auto d = f.models.denoiser.params();
  EXPECT_FALSE(std::equal(d.begin(), d.end(), before.denoiser.params().begin()));
}

TEST(TrainStep, TotalIsWeightedSum) {
  auto f = make_fixture(14);
  auto opt = OptimizerState::init(f.models, 1e-3);
  TrainConfig cfg;
  cfg.lambda_d = 0.7;
  cfg.lambda_v = 1.3;
  cfg.lambda_c = 0.25;
  Rng rng(15);
  const auto r = train_step(f.models, opt, draw_batch(f.windows, 4, rng), cfg, &f.index, rng, 1);
  EXPECT_EQ(r.loss_total, 0.7 * r.loss_d + 1.3 * r.loss_v + 0.25 * r.loss_c);
  EXPECT_NE(r.loss_c, 0.0);
}

TEST(TrainStep, NoContrastSkipsTerm) {
  auto f = make_fixture(16);
  auto opt = OptimizerState::init(f.models, 1e-3);
  const ModelBundle before = f.models;
  TrainConfig cfg;
  cfg.ablation = Ablation::kNoContrast;
  Rng rng(17);
  const auto r = train_step(f.models, opt, draw_batch(f.windows, 4, rng), cfg, &f.index, rng, 1);
  EXPECT_EQ(r.loss_c, 0.0);
  const auto p = f.models.projector.net().params();
  EXPECT_TRUE(std::equal(p.begin(), p.end(), before.projector.net().params().begin()));
}

TEST(TrainStep, NonFiniteLossAbortsWithDiagnostics) {
  auto f = make_fixture(18);
  auto opt = OptimizerState::init(f.models, 1e-3);
  f.models.denoiser.params()[0] = std::numeric_limits<double>::quiet_NaN();
  Rng rng(19);
  try {
    train_step(f.models, opt, draw_batch(f.windows, 4, rng), TrainConfig{}, &f.index, rng, 42);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step 42"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("batch window ids"), std::string::npos);
  }
}

TEST(Windows, PositivesOnlyFilter) {
  const auto set = make_window_set(small_dataset(), 4);
  const auto high = filter_high_return(set, 0.7);
  EXPECT_GT(high.count(), 0u);
  EXPECT_LT(high.count(), set.count());
  for (double t : high.targets) EXPECT_GE(t, 0.7);
  std::size_t expected = 0;
  for (double t : set.targets) expected += t >= 0.7;
  EXPECT_EQ(high.count(), expected);
  EXPECT_EQ(high.windows.size(), high.count() * set.window_size);
}

TEST(Train, DeterministicLossSequence) {
  TrainConfig cfg;
  cfg.steps = 100;
  cfg.batch_size = 4;
  cfg.seed = 3;
  const auto a = train(small_dataset(), tiny_model(), tiny_contrast(), cfg, std::nullopt);
  const auto b = train(small_dataset(), tiny_model(), tiny_contrast(), cfg, std::nullopt);
  ASSERT_EQ(a.log.size(), 100u);
  for (std::size_t k = 0; k < 100; ++k) {
    EXPECT_EQ(format_metrics_row(a.log[k]), format_metrics_row(b.log[k]));
    EXPECT_EQ(a.log[k].loss_total, b.log[k].loss_total);
  }
}

TEST(Train, SingleStepWritesOneRow) {
  testing::TempDir dir("train1");
  TrainConfig cfg;
  cfg.steps = 1;
  cfg.batch_size = 4;
  const TrainOutputs out{dir / "ckpt.bin", dir / "metrics.csv"};
  const auto r = train(small_dataset(), tiny_model(), tiny_contrast(), cfg, out);
  EXPECT_EQ(r.log.size(), 1u);
  EXPECT_EQ(r.state.step, 1u);
  EXPECT_EQ(r.state.opt.denoiser.step, 1u);
  const std::string text = testing::read_file(dir / "metrics.csv");
  EXPECT_EQ(text, std::string(kMetricsHeader) + "\n" + format_metrics_row(r.log[0]) + "\n");
  EXPECT_TRUE(std::filesystem::exists(dir / "ckpt.bin"));
}

TEST(Train, ResumeSplicesBitIdentically) {
  testing::TempDir dir("resume");
  TrainConfig cfg;
  cfg.steps = 12;
  cfg.batch_size = 4;
  cfg.seed = 9;
  const auto full = train(small_dataset(), tiny_model(), tiny_contrast(), cfg, std::nullopt);

  TrainConfig first = cfg;
  first.steps = 5;
  const TrainOutputs out{dir / "ckpt.bin", dir / "metrics.csv"};
  const auto head = train(small_dataset(), tiny_model(), tiny_contrast(), first, out);
  const auto loaded = TrainState::load(dir / "ckpt.bin");
  EXPECT_EQ(loaded.step, 5u);
  const auto tail = resume(small_dataset(), loaded, tiny_contrast(), cfg, out);
  ASSERT_EQ(head.log.size() + tail.log.size(), full.log.size());
  std::ostringstream expected;
  expected << kMetricsHeader << '\n';
  for (std::size_t k = 0; k < full.log.size(); ++k) {
    const auto& got = k < 5 ? head.log[k] : tail.log[k - 5];
    EXPECT_EQ(format_metrics_row(got), format_metrics_row(full.log[k])) << "step " << k + 1;
    expected << format_metrics_row(full.log[k]) << '\n';
  }
  EXPECT_EQ(testing::read_file(dir / "metrics.csv"), expected.str());
  const auto a = tail.state.models.denoiser.params();
  const auto b = full.state.models.denoiser.params();
  EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
}

TEST(Train, PositivesOnlyAndNoContrastAblations) {
  TrainConfig cfg;
  cfg.steps = 5;
  cfg.batch_size = 4;
  cfg.ablation = Ablation::kNoContrast;
  const auto nc = train(small_dataset(), tiny_model(), tiny_contrast(), cfg, std::nullopt);
  for (const auto& r : nc.log) EXPECT_EQ(r.loss_c, 0.0);
  cfg.ablation = Ablation::kPositivesOnly;
  const auto po = train(small_dataset(), tiny_model(), tiny_contrast(), cfg, std::nullopt);
  for (const auto& r : po.log) EXPECT_NE(r.loss_c, 0.0);
  ContrastiveConfig strict = tiny_contrast();
  strict.xi = 2.0;
  EXPECT_THROW(train(small_dataset(), tiny_model(), strict, cfg, std::nullopt), ConfigError);
}

TEST(Train, RejectsMismatchedDims) {
  ModelConfig mc = tiny_model();
  mc.state_dim = 3;
  TrainConfig cfg;
  cfg.steps = 1;
  EXPECT_THROW(train(small_dataset(), mc, tiny_contrast(), cfg, std::nullopt), ConfigError);
  cfg.steps = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(parse_ablation("half"), ConfigError);
  EXPECT_EQ(parse_ablation("positives-only"), Ablation::kPositivesOnly);
}

TEST(Train, DiffusionLossHalvesOnToyDataset) {
  const OfflineDataset ds = generate_dataset(PointMazeDesk(), BehaviorKind::kMedium, 200, 21);
  ModelConfig mc;
  TrainConfig cfg;
  cfg.steps = 2000;
  cfg.ablation = Ablation::kNoContrast;
  const auto r = train(ds, mc, ContrastiveConfig{}, cfg, std::nullopt);
  auto window_mean = [&](std::size_t from) {
    double s = 0.0;
    for (std::size_t k = from; k < from + 100; ++k) s += r.log[k].loss_d;
    return s / 100.0;
  };
  const double early = window_mean(0), late = window_mean(cfg.steps - 100);
  EXPECT_LE(late, 0.5 * early) << "early " << early << " late " << late;
}

}  // namespace
}  // namespace cdiff
