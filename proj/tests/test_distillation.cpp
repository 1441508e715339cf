#include <gtest/gtest.h>

#include "support.hpp"

using namespace shazam;
using namespace shazam::distill;

namespace {

using Vec = std::vector<double>;

double oracle_pair(const Vec& z, const Vec& t, double delta) {
  double nz = 0, nt = 0, dot = 0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    nz += z[k] * z[k];
    nt += t[k] * t[k];
    dot += z[k] * t[k];
  }
  nz = std::sqrt(nz);
  nt = std::sqrt(nt);
  double h = 0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double e = std::abs(z[k] / nz - t[k] / nt);
    h += e <= delta ? 0.5 * e * e : delta * (e - 0.5 * delta);
  }
  return (1.0 - dot / (nz * nt)) + h / static_cast<double>(z.size());
}

Vec random_vec(std::mt19937_64& gen, std::size_t d) {
  std::normal_distribution<double> nd;
  Vec v(d);
  for (double& x : v) x = nd(gen);
  return v;
}

}  // namespace

TEST(Cosine, KnownAngles) {
  EXPECT_NEAR(cosine_distance(Vec{1, 2, 3}, Vec{2, 4, 6}), 0.0, 1e-15);
  EXPECT_NEAR(cosine_distance(Vec{1, 0}, Vec{0, 5}), 1.0, 1e-15);
  EXPECT_NEAR(cosine_distance(Vec{1, -1}, Vec{-3, 3}), 2.0, 1e-15);
}

TEST(Cosine, ZeroNormIsDegenerate) {
  try {
    cosine_distance(Vec{0, 0}, Vec{1, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateVector);
  }
}

TEST(Huber, QuadraticAndLinearPieces) {
  for (double delta : {0.5, 1.0, 2.0}) {
    EXPECT_NEAR(huber_elementwise(Vec{delta}, Vec{0}, delta), 0.5 * delta * delta, 1e-15);
    EXPECT_NEAR(huber_elementwise(Vec{0}, Vec{2 * delta}, delta), 1.5 * delta * delta, 1e-15);
  }
  EXPECT_NEAR(huber_elementwise(Vec{0.5, 3.0}, Vec{0, 0}, 1.0), (0.125 + 2.5) / 2, 1e-15);
  EXPECT_THROW(huber_elementwise(Vec{1}, Vec{1}, 0.0), Error);
}

TEST(DistillPair, HandComputed) {
  const DistillConfig cfg;
  // Orthogonal unit vectors: cosine 1, differences (1, -1, 0, 0) average 0.25.
  EXPECT_NEAR(distill_pair(Vec{1, 0, 0, 0}, Vec{0, 1, 0, 0}, cfg), 1.25, 1e-15);
  // Opposite: cosine 2, a single difference of 2 is 1.5 under delta = 1, averaged over 4.
  EXPECT_NEAR(distill_pair(Vec{1, 0, 0, 0}, Vec{-1, 0, 0, 0}, cfg), 2.375, 1e-15);
  EXPECT_NEAR(distill_pair(Vec{3, 4}, Vec{6, 8}, cfg), 0.0, 1e-15);
}

TEST(DistillPair, ScaleInvariant) {
  std::mt19937_64 gen(1);
  const DistillConfig cfg;
  for (int r = 0; r < 50; ++r) {
    Vec z = random_vec(gen, 7), t = random_vec(gen, 7);
    const double base = distill_pair(z, t, cfg);
    for (double& x : z) x *= 13.0;
    for (double& x : t) x *= 0.01;
    EXPECT_NEAR(distill_pair(z, t, cfg), base, 1e-12);
  }
}

TEST(DistillTotal, AveragesOverActiveTerms) {
  const DistillConfig cfg;
  std::array<std::optional<Vec>, 3> z;
  std::array<std::vector<Vec>, 3> t;
  z[0] = Vec{1, 0, 0, 0};
  t[0] = {Vec{2, 0, 0, 0}, Vec{0, 1, 0, 0}};
  z[2] = Vec{0, 0, 1, 0};
  t[2] = {Vec{0, 0, 5, 0}, Vec{0, 0, 1, 0}};
  t[1] = {Vec{1, 1, 1, 1}};  // inactive scale, ignored
  std::map<TermKey, double> terms;
  EXPECT_NEAR(distill_total(z, t, cfg, &terms), 1.25 / 4, 1e-15);
  EXPECT_EQ(terms.size(), 4u);
  EXPECT_NEAR((terms[{Scale::Low, 1}]), 1.25, 1e-15);
}

TEST(DistillTotal, MatchesLoopOracle) {
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<int> ui(1, 5);
  for (int r = 0; r < 100; ++r) {
    DistillConfig cfg;
    cfg.delta = 0.2 + 0.1 * ui(gen);
    const std::size_t n = static_cast<std::size_t>(ui(gen));
    const std::size_t d = static_cast<std::size_t>(ui(gen)) + 1;
    std::array<std::optional<Vec>, 3> z;
    std::array<std::vector<Vec>, 3> t;
    double sum = 0;
    std::size_t count = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      if (s > 0 && ui(gen) <= 2) continue;
      z[s] = random_vec(gen, d);
      for (std::size_t i = 0; i < n; ++i) {
        t[s].push_back(random_vec(gen, d));
        sum += oracle_pair(*z[s], t[s].back(), cfg.delta);
        ++count;
      }
    }
    EXPECT_NEAR(distill_total(z, t, cfg), sum / static_cast<double>(count), 1e-12);
  }
}

TEST(TotalLoss, WeightsDistillation) {
  DistillConfig cfg;
  EXPECT_NEAR(total_loss(1.0, 2.0, cfg).total, 1.02, 1e-15);
  cfg.lambda_distill = 0.0;
  EXPECT_EQ(total_loss(0.05, 7.0, cfg).total, 0.05);
  EXPECT_THROW(total_loss(std::nan(""), 1.0, cfg), Error);
}

TEST(DistillGraph, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(3);
  for (double delta : {0.05, 0.3, 1.0}) {
    DistillConfig cfg;
    cfg.delta = delta;
    for (int r = 0; r < 20; ++r) {
      Parameter z("z", row_matrix(std::span<const double>(random_vec(gen, 6))));
      const Matrix target = row_matrix(std::span<const double>(random_vec(gen, 6)));
      ad::Tape tape;
      ad::Var out = distill_pair(tape.param(z), tape.constant(target), cfg);
      tape.backward(out);
      for (Eigen::Index k = 0; k < 6; ++k) {
        const double h = 1e-6;
        auto f = [&](double dx) {
          Vec zz(z.value.data(), z.value.data() + 6);
          zz[static_cast<std::size_t>(k)] += dx;
          return distill_pair(zz, Vec(target.data(), target.data() + 6), cfg);
        };
        const double numeric = (f(h) - f(-h)) / (2 * h);
        EXPECT_NEAR(z.grad(0, k), numeric, 1e-6 * std::max(1.0, std::abs(numeric)));
      }
    }
  }
}

TEST(DistillGraph, HuberKinkUsesClippedSlope) {
  // Normalized difference of exactly delta on one coordinate: one-sided slopes agree at the kink.
  DistillConfig cfg;
  cfg.delta = 1.0;
  const Vec z = {1, 0}, t = {0, 1};
  const double base = distill_pair(z, t, cfg);
  Parameter p("z", row_matrix(std::span<const double>(z)));
  ad::Tape tape;
  ad::Var out = distill_pair(tape.param(p), tape.constant(row_matrix(std::span<const double>(t))), cfg);
  tape.backward(out);
  EXPECT_NEAR(out.scalar(), base, 1e-15);
  const double h = 1e-7;
  const double right = (distill_pair(Vec{1, h}, t, cfg) - base) / h;
  const double left = (base - distill_pair(Vec{1, -h}, t, cfg)) / h;
  EXPECT_NEAR(p.grad(0, 1), right, 1e-5);
  EXPECT_NEAR(p.grad(0, 1), left, 1e-5);
}

TEST(DistillGraph, TargetReceivesNoGradient) {
  Parameter z("z", Matrix::Constant(1, 4, 0.5));
  Parameter t("t", (Matrix(1, 4) << 1, -2, 0.5, 3).finished());
  ad::Tape tape;
  ad::Var out = distill_pair(tape.param(z), tape.param(t), DistillConfig{});
  tape.backward(out);
  EXPECT_GT(z.grad.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(t.grad.cwiseAbs().maxCoeff(), 0.0);
}
