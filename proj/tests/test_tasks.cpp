#include <gtest/gtest.h>

#include "support.hpp"

using namespace shazam;
using namespace shazam::tasks;
namespace tk = shazam::testkit;

TEST(Preprocess, LogNormalize) {
  const auto out = log_normalize_expression({{0.0, std::exp(1.0) - 1.0}, {std::exp(2.0) - 1.0, 0.0}});
  EXPECT_EQ(out[0][0], 0.0);
  EXPECT_NEAR(out[0][1], 1.0, 1e-15);
  EXPECT_NEAR(out[1][0], 2.0, 1e-15);
  EXPECT_THROW(log_normalize_expression({{-1.0}}), Error);
}

TEST(Preprocess, FilterCohortSlidesThenGenes) {
  Cohort c;
  c.genes = {"A", "B", "C", "D"};
  // s1: A, B, C all zero (3 of 4 genes) -> dropped.
  c.slides.push_back({"s1", {{0, 0, 0, 1}, {0, 0, 0, 2}}});
  // s2, s3 kept; C and D are each all-zero in one of two slides (at the half) -> dropped.
  c.slides.push_back({"s2", {{1, 1, 2, 0}}});
  c.slides.push_back({"s3", {{1, 0, 0, 3}, {0, 2, 0, 0}}});
  const auto f = filter_cohort(c, {"A", "B", "C", "D"});
  EXPECT_EQ(f.kept_slides, (std::vector<std::string>{"s2", "s3"}));
  EXPECT_EQ(f.kept_genes, (std::vector<std::string>{"A", "B"}));
}

TEST(Preprocess, FilterCohortEmpty) {
  Cohort c;
  c.genes = {"A", "B"};
  c.slides.push_back({"s1", {{0, 0}}});
  try {
    filter_cohort(c, {"A", "B"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyCohort);
  }
}

TEST(Preprocess, SurvivalBinsQuartiles) {
  const std::vector<double> t = {1, 2, 3, 4, 5, 6, 7, 8};
  const auto b = survival_bins(t, std::vector<int>(8, 1), 4);
  ASSERT_EQ(b.cuts.size(), 3u);
  EXPECT_NEAR(b.cuts[0], 2.75, 1e-15);
  EXPECT_NEAR(b.cuts[1], 4.5, 1e-15);
  EXPECT_NEAR(b.cuts[2], 6.25, 1e-15);
  EXPECT_EQ(b.bin, (std::vector<std::size_t>{0, 0, 1, 1, 2, 2, 3, 3}));
  EXPECT_FALSE(b.degenerate);
  EXPECT_TRUE(survival_bins({5, 5, 5, 5}, {1, 1, 1, 1}, 4).degenerate);
}

TEST(Losses, SurvivalNllHandValues) {
  const std::vector<double> zero(4, 0.0);
  EXPECT_NEAR(nll_survival_loss(zero, 3, true), 4 * std::log(2.0), 1e-14);
  EXPECT_NEAR(nll_survival_loss(zero, 1, false), 2 * std::log(2.0), 1e-14);
  EXPECT_NEAR(nll_survival_loss(zero, 0, true), std::log(2.0), 1e-14);
  EXPECT_THROW(nll_survival_loss(zero, 4, true), Error);
}

TEST(Losses, SurvivalLikelihoodsTelescope) {
  // Event probabilities over every bin plus survival past the last bin sum to one.
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd(0.0, 1.5);
  for (int r = 0; r < 50; ++r) {
    std::vector<double> l(5);
    for (double& x : l) x = nd(gen);
    double total = std::exp(-nll_survival_loss(l, 4, false));
    for (std::size_t k = 0; k < 5; ++k) total += std::exp(-nll_survival_loss(l, k, true));
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(survival_curve(l).back(), std::exp(-nll_survival_loss(l, 4, false)), 1e-12);
  }
}

TEST(Losses, SurvivalClampBoundsLoss) {
  const std::vector<double> l = {60.0, 0.0};
  EXPECT_NEAR(nll_survival_loss(l, 1, false), -std::log(kProbClamp) + std::log(2.0), 1e-9);
}

TEST(Losses, SurvivalGraphGradient) {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> nd;
  for (bool event : {true, false})
    for (std::size_t bin = 0; bin < 3; ++bin) {
      Parameter p("l", Matrix(1, 3));
      for (Eigen::Index k = 0; k < 3; ++k) p.value(0, k) = nd(gen);
      ad::Tape tape;
      tape.backward(nll_survival_loss(tape.param(p), bin, event));
      for (Eigen::Index k = 0; k < 3; ++k) {
        std::vector<double> up = to_vector(p.value), down = up;
        up[static_cast<std::size_t>(k)] += 1e-6;
        down[static_cast<std::size_t>(k)] -= 1e-6;
        const double numeric = (nll_survival_loss(up, bin, event) - nll_survival_loss(down, bin, event)) / 2e-6;
        EXPECT_NEAR(p.grad(0, k), numeric, 1e-8);
      }
    }
}

TEST(Losses, CrossEntropyAndRidge) {
  EXPECT_NEAR(cross_entropy(std::vector<double>{0, 0, 0, 0}, 2), std::log(4.0), 1e-15);
  const Matrix w = (Matrix(1, 2) << 2, 0).finished();
  const Matrix* ws[] = {&w};
  EXPECT_NEAR(ridge_loss(std::vector<double>{1, 2}, std::vector<double>{0, 0}, ws, 1e-4), 2.5 + 4e-4, 1e-15);
}

TEST(Optim, CosineSchedule) {
  EXPECT_EQ(cosine_lr(1e-3, 0.0, 0, 100), 1e-3);
  EXPECT_NEAR(cosine_lr(1e-3, 0.0, 50, 100), 5e-4, 1e-15);
  EXPECT_NEAR(cosine_lr(1e-3, 1e-5, 100, 100), 1e-5, 1e-18);
  for (std::size_t s = 1; s <= 100; ++s) EXPECT_LE(cosine_lr(1e-3, 0.0, s, 100), cosine_lr(1e-3, 0.0, s - 1, 100));
}

TEST(Optim, AdamWScalarTrace) {
  Parameter p("x", Matrix::Constant(1, 1, 1.0));
  Adam opt({&p}, AdamConfig{0.9, 0.999, 1e-8, 0.01, true});
  double x = 1.0, m = 0.0, v = 0.0;
  const double lr = 0.1;
  for (int t = 1; t <= 25; ++t) {
    const double g = 2.0 * x - 0.3;  // gradient of x^2 - 0.3x
    p.grad(0, 0) = g;
    opt.step(lr);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    x = x * (1.0 - lr * 0.01) - lr * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p.value(0, 0), x, 1e-12);
  }
}

TEST(Optim, DecayWithoutGradientIsPureShrink) {
  Parameter p("x", Matrix::Constant(2, 2, 3.0));
  Adam opt({&p}, AdamConfig{0.9, 0.999, 1e-8, 0.1, true});
  opt.zero_grad();
  opt.step(0.5);
  EXPECT_EQ(p.value(1, 1), 3.0 * (1.0 - 0.05));
}

TEST(Optim, CoupledL2EntersMoments) {
  Parameter a("a", Matrix::Constant(1, 1, 3.0)), b("b", Matrix::Constant(1, 1, 3.0));
  Adam coupled({&a}, AdamConfig{0.9, 0.999, 1e-8, 0.1, false});
  Adam decoupled({&b}, AdamConfig{0.9, 0.999, 1e-8, 0.1, true});
  a.zero_grad();
  b.zero_grad();
  coupled.step(0.5);
  decoupled.step(0.5);
  // First coupled step is sign-like: 3 - 0.5 * g / |g|.
  EXPECT_NEAR(a.value(0, 0), 2.5, 1e-7);
  EXPECT_NE(a.value(0, 0), b.value(0, 0));
}

TEST(Optim, PlateauHalves) {
  ReduceOnPlateau r(1.0, 0.5, 2);
  EXPECT_EQ(r.step(1.0), 1.0);
  EXPECT_EQ(r.step(1.0), 1.0);
  EXPECT_EQ(r.step(1.0), 1.0);
  EXPECT_EQ(r.step(1.0), 0.5);
  EXPECT_EQ(r.step(0.1), 0.5);
}

TEST(Presets, KnownAndUnknown) {
  EXPECT_EQ(preset("tile").epochs, 50u);
  EXPECT_EQ(preset("tile").batch, 128u);
  EXPECT_EQ(preset("survival").batch, 16u);
  EXPECT_NEAR(preset("survival").lr, 2e-4, 1e-18);
  EXPECT_EQ(preset("st").schedule, Schedule::Plateau);
  EXPECT_FALSE(preset("tile-baseline").decoupled);
  EXPECT_THROW(preset("bogus"), Error);
}

namespace {

struct Fixture {
  FeatureSet fs;
  std::vector<std::size_t> train;
};

Fixture fixture(TaskKind task, std::size_t samples = 120) {
  SynthConfig c = tk::small_synth(task, {10, 14, 12}, samples);
  if (task == TaskKind::Survival) {
    c.samples = 40;
    c.planted = "uniform";
  }
  Fixture f{synth_teacher_set(c, 21), {}};
  f.train = patient_split(f.fs, 4, 1)[0].train;
  return f;
}

std::vector<Matrix> snapshot(ShazamModel& m) {
  std::vector<Matrix> out;
  for (Parameter* p : m.parameters()) out.push_back(p->value);
  return out;
}

}  // namespace

TEST(Train, LossDecreases) {
  Fixture f = fixture(TaskKind::Classification, 200);
  cli::RunSettings r = tk::small_run(TaskKind::Classification, 8, 1, 12, 3);
  ShazamModel m = cli::build_model(f.fs, r);
  const auto res = train(m, f.fs, f.train, r.train);
  ASSERT_EQ(res.epochs.size(), 12u);
  EXPECT_LT(res.epochs.back().total, 0.8 * res.epochs.front().total);
  EXPECT_EQ(res.steps.size(), 12u * ((f.train.size() + 31) / 32));
}

TEST(Train, ZeroLambdaMatchesNoDistillation) {
  Fixture f = fixture(TaskKind::Expression);
  cli::RunSettings r = tk::small_run(TaskKind::Expression, 8, 1, 3, 4);
  r.train.schedule = Schedule::Cosine;
  r.model.distill_cfg.lambda_distill = 0.0;
  ShazamModel a = cli::build_model(f.fs, r);
  train(a, f.fs, f.train, r.train);
  r.model.distill = false;
  ShazamModel b = cli::build_model(f.fs, r);
  train(b, f.fs, f.train, r.train);
  r.model.distill = true;
  r.model.distill_cfg.lambda_distill = 0.01;
  ShazamModel c = cli::build_model(f.fs, r);
  train(c, f.fs, f.train, r.train);
  const auto sa = snapshot(a), sb = snapshot(b), sc = snapshot(c);
  double diff_ab = 0, diff_ac = 0;
  for (std::size_t k = 0; k < sa.size(); ++k) {
    diff_ab = std::max(diff_ab, (sa[k] - sb[k]).cwiseAbs().maxCoeff());
    diff_ac = std::max(diff_ac, (sa[k] - sc[k]).cwiseAbs().maxCoeff());
  }
  EXPECT_EQ(diff_ab, 0.0);
  EXPECT_GT(diff_ac, 0.0);
}

TEST(Train, DeterministicForSeed) {
  for (TaskKind k : {TaskKind::Classification, TaskKind::Survival}) {
    Fixture f = fixture(k);
    cli::RunSettings r = tk::small_run(k, 8, 1, 2, 5);
    ShazamModel a = cli::build_model(f.fs, r), b = cli::build_model(f.fs, r);
    const auto ra = train(a, f.fs, f.train, r.train);
    const auto rb = train(b, f.fs, f.train, r.train);
    EXPECT_EQ(snapshot(a), snapshot(b));
    EXPECT_EQ(ra.epochs.back().total, rb.epochs.back().total);
    r.train.seed = 6;
    ShazamModel c = cli::build_model(f.fs, r);
    train(c, f.fs, f.train, r.train);
    EXPECT_NE(snapshot(a), snapshot(c));
  }
}

TEST(Train, EarlyStoppingRestoresBest) {
  Fixture f = fixture(TaskKind::Classification, 200);
  cli::RunSettings r = tk::small_run(TaskKind::Classification, 8, 1, 40, 8);
  r.train.lr = 3e-2;
  r.train.patience = 2;
  r.train.val_fraction = 0.3;
  ShazamModel m = cli::build_model(f.fs, r);
  const auto res = train(m, f.fs, f.train, r.train);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : res.epochs)
    if (e.split == "val") best = std::min(best, e.total);
  auto units = make_units(f.fs, f.train, false);
  auto [tr, va] = validation_split(units, 0.3, r.train.seed);
  EXPECT_NEAR(mean_loss(m, f.fs, va).total, best, 1e-12);
}

TEST(Train, RejectsWrongTeacherOrder) {
  Fixture f = fixture(TaskKind::Classification);
  cli::RunSettings r = tk::small_run(TaskKind::Classification, 8, 1, 1, 1);
  ShazamModel m = cli::build_model(f.fs, r);
  const FeatureSet swapped = cli::select_teachers(f.fs, {1, 0, 2});
  EXPECT_THROW(train(m, swapped, f.train, r.train), Error);
}

TEST(Checkpoint, RoundTripAfterQuantize) {
  testkit::TempDir dir("ckpt");
  for (TaskKind k : {TaskKind::Classification, TaskKind::Expression, TaskKind::Survival}) {
    Fixture f = fixture(k);
    cli::RunSettings r = tk::small_run(k, 8, 1, 1, 7);
    ShazamModel m = cli::build_model(f.fs, r);
    train(m, f.fs, f.train, r.train);
    quantize_to_float(m);
    save_checkpoint(m, dir / "model.manifest");
    ShazamModel back = load_checkpoint(dir / "model.manifest");
    EXPECT_EQ(snapshot(m), snapshot(back));
    EXPECT_EQ(m.survival_cuts, back.survival_cuts);
    const auto pa = predict(m, f.fs, f.train), pb = predict(back, f.fs, f.train);
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].output, pb[i].output);
  }
}

TEST(Checkpoint, TruncatedBlobIsInconsistent) {
  testkit::TempDir dir("ckpt_trunc");
  Fixture f = fixture(TaskKind::Classification);
  ShazamModel m = cli::build_model(f.fs, tk::small_run(TaskKind::Classification, 8, 1, 1, 7));
  save_checkpoint(m, dir / "m.manifest");
  const auto blob = shazam::detail::read_file(checkpoint_blob_path(dir / "m.manifest"));
  shazam::detail::write_file(checkpoint_blob_path(dir / "m.manifest"), blob.substr(0, blob.size() - 4));
  try {
    load_checkpoint(dir / "m.manifest");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InconsistentContainer);
  }
}

TEST(Objective, HarnessMatchesLibraryForward) {
  for (TaskKind k : {TaskKind::Classification, TaskKind::Expression, TaskKind::Survival}) {
    Fixture f = fixture(k);
    ShazamModel m = tk::gradient_model(k, f.fs, 8, 1);
    for (const Unit& u : make_units(f.fs, {f.train.begin(), f.train.begin() + 5}, m.config.bags)) {
      ad::Tape tape;
      const double harness = tk::objective(tape, m, f.fs, u, std::nullopt).value;
      const auto lib = unit_step(m, f.fs, u, 1.0, nullptr, false);
      EXPECT_NEAR(harness, lib.total, 1e-12);
    }
  }
}

TEST(Objective, GradientsMatchFiniteDifferences) {
  for (TaskKind k : {TaskKind::Classification, TaskKind::Expression, TaskKind::Survival}) {
    Fixture f = fixture(k);
    ShazamModel m = tk::gradient_model(k, f.fs, 8, 1);
    const Unit u = make_units(f.fs, {f.train[0], f.train[1], f.train[2]}, m.config.bags).front();
    const auto g = tk::check_gradients(m, f.fs, u);
    EXPECT_GT(g.checked, 500u);
    EXPECT_LT(g.worst_rel, 1e-4) << to_string(k) << " worst at " << g.worst_param << " analytic " << g.worst_analytic
                                  << " numeric " << g.worst_numeric;
  }
}
