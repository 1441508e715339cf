#include <gtest/gtest.h>

#include "support.hpp"

using namespace shazam;
using namespace shazam::metrics;
namespace tk = shazam::testkit;

TEST(Pcc, HandValue) {
  EXPECT_NEAR(pcc(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}), 0.8, 1e-15);
  EXPECT_NEAR(pcc(std::vector<double>{1, 2, 3}, std::vector<double>{-2, -4, -6}), -1.0, 1e-15);
}

TEST(Pcc, Undefined) {
  try {
    pcc(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UndefinedCorrelation);
  }
  EXPECT_THROW(pcc(std::vector<double>{1}, std::vector<double>{1}), Error);
}

TEST(Pcc, MeanGeneSkipsConstantGenes) {
  const std::vector<std::vector<double>> pred = {{1, 5, 1}, {2, 5, 3}, {3, 5, 2}, {4, 5, 4}};
  const std::vector<std::vector<double>> target = {{1, 1, 1}, {2, 2, 2}, {3, 3, 3}, {4, 4, 4}};
  EXPECT_NEAR(mean_gene_pcc(pred, target), (1.0 + 0.8) / 2, 1e-15);
}

TEST(CIndex, HandValue) {
  // Comparable pairs: (0,1), (0,2), (1,2); risks 3 > 2, 3 > 1, 2 == 2 -> (1 + 1 + 0.5) / 3.
  EXPECT_NEAR(concordance_index(std::vector<double>{1, 2, 3}, std::vector<int>{1, 1, 0}, std::vector<double>{3, 2, 2}),
              2.5 / 3, 1e-15);
  try {
    concordance_index(std::vector<double>{1, 2}, std::vector<int>{0, 0}, std::vector<double>{1, 2});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UndefinedCIndex);
  }
}

TEST(CIndex, MatchesBruteForce) {
  std::mt19937_64 gen(99);
  std::uniform_int_distribution<int> small(0, 6), size(2, 50);
  int checked = 0;
  while (checked < 1000) {
    const auto n = static_cast<std::size_t>(size(gen));
    std::vector<double> t(n), r(n);
    std::vector<int> e(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = small(gen);  // coarse values force ties
      r[i] = small(gen);
      e[i] = small(gen) > 2;
    }
    bool comparable = false;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) comparable = comparable || (e[i] && t[i] < t[j]);
    if (!comparable) continue;
    ASSERT_NEAR(concordance_index(t, e, r), tk::brute_cindex(t, e, r), 1e-12);
    ++checked;
  }
}

TEST(Classification, HandValues) {
  const std::vector<std::size_t> truth = {0, 0, 1, 1, 2, 2}, pred = {0, 1, 1, 1, 2, 0};
  const auto m = classification_metrics(truth, pred, 3);
  EXPECT_NEAR(m.balanced_accuracy, 2.0 / 3, 1e-15);
  EXPECT_NEAR(m.accuracy, 4.0 / 6, 1e-15);
  EXPECT_NEAR(m.weighted_f1, (0.5 + 0.8 + 2.0 / 3) / 3, 1e-15);
}

TEST(Classification, AbsentClassExcludedFromBalancedAccuracy) {
  const std::vector<std::size_t> truth = {0, 0, 0}, pred = {0, 1, 2};
  const auto m = classification_metrics(truth, pred, 3, false);
  EXPECT_NEAR(m.balanced_accuracy, 1.0 / 3, 1e-15);
  EXPECT_NEAR(m.weighted_f1, 0.5, 1e-15);  // class 0: precision 1, recall 1/3
}

TEST(Bootstrap, ConstantStatisticHasZeroWidth) {
  const auto r = bootstrap_ci(10, [](const std::vector<std::size_t>&) { return 0.42; }, 200, 0.95, 1, "c");
  EXPECT_EQ(r.point, 0.42);
  EXPECT_EQ(r.ci_low, 0.42);
  EXPECT_EQ(r.ci_high, 0.42);
  EXPECT_EQ(r.replicates, 200u);
}

TEST(Bootstrap, SeededAndShrinking) {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> nd;
  auto run = [&](std::size_t n, std::uint64_t seed) {
    std::vector<double> x(n);
    std::mt19937_64 g(n);
    for (double& v : x) v = nd(g);
    return bootstrap_ci(
        n,
        [&](const std::vector<std::size_t>& idx) {
          double s = 0;
          for (std::size_t i : idx) s += x[i];
          return s / static_cast<double>(idx.size());
        },
        500, 0.95, seed, "mean");
  };
  const auto a = run(50, 7), b = run(50, 7), c = run(50, 8);
  EXPECT_EQ(a.ci_low, b.ci_low);
  EXPECT_EQ(a.ci_high, b.ci_high);
  EXPECT_NE(a.ci_low, c.ci_low);
  EXPECT_LE(a.ci_low, a.point);
  EXPECT_GE(a.ci_high, a.point);
  const auto big = run(5000, 7);
  EXPECT_LT(big.ci_high - big.ci_low, 0.5 * (a.ci_high - a.ci_low));
  // Standard error of a mean of unit normals is 1/sqrt(n); the 95% width is about 3.92 of them.
  EXPECT_NEAR(big.ci_high - big.ci_low, 3.92 / std::sqrt(5000.0), 0.015);
}

TEST(Bootstrap, RedrawsUndefinedReplicates) {
  // The statistic is undefined whenever unit 0 is missing from the resample.
  const auto r = bootstrap_ci(
      3,
      [](const std::vector<std::size_t>& idx) {
        require(std::find(idx.begin(), idx.end(), 0u) != idx.end(), ErrorKind::UndefinedCorrelation, "no unit 0");
        return 1.0;
      },
      100, 0.9, 3, "s");
  EXPECT_EQ(r.replicates, 100u);
}

TEST(Wilcoxon, MatchesEnumerationOracle) {
  std::mt19937_64 gen(12);
  std::uniform_int_distribution<int> mag(1, 6), sign(0, 2), size(5, 12);
  for (int rep = 0; rep < 300; ++rep) {
    const auto n = static_cast<std::size_t>(size(gen));
    std::vector<double> x(n), y(n, 0.0), d(n);
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = (sign(gen) == 0 ? -1.0 : 1.0) * mag(gen);
      x[i] = d[i];
    }
    const auto r = wilcoxon_signed_rank(x, y, Alternative::Greater);
    EXPECT_TRUE(r.exact);
    EXPECT_NEAR(r.p_value, tk::enumerate_wilcoxon_greater(d), 1e-12);
    std::vector<double> neg(n);
    for (std::size_t i = 0; i < n; ++i) neg[i] = -d[i];
    EXPECT_NEAR(wilcoxon_signed_rank(x, y, Alternative::Less).p_value, tk::enumerate_wilcoxon_greater(neg), 1e-12);
  }
}

TEST(Wilcoxon, ConstantShift) {
  for (std::size_t n = 5; n <= 20; ++n) {
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = 0.1 * static_cast<double>(i);
      x[i] = y[i] + 0.5;
    }
    const auto r = wilcoxon_signed_rank(x, y);
    EXPECT_EQ(r.w_minus, 0.0);
    EXPECT_NEAR(r.p_value, std::ldexp(1.0, -static_cast<int>(n)), 1e-15);
  }
}

TEST(Wilcoxon, NormalApproximationReference) {
  // d_i = +-(i + 1), negative when i % 3 == 0; reference p from a standard statistics package.
  std::vector<double> x(30), y(30, 0.0);
  for (int i = 0; i < 30; ++i) x[static_cast<std::size_t>(i)] = (i % 3 == 0 ? -1.0 : 1.0) * (i + 1);
  const auto r = wilcoxon_signed_rank(x, y);
  EXPECT_FALSE(r.exact);
  EXPECT_EQ(r.w_plus, 320.0);
  EXPECT_NEAR(r.p_value, 0.03677154667265901, 1e-9);
}

TEST(Wilcoxon, Errors) {
  const std::vector<double> a = {1, 2, 3, 4, 5};
  try {
    wilcoxon_signed_rank(a, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UndefinedTest);
  }
  EXPECT_THROW(wilcoxon_signed_rank(std::vector<double>{1, 2}, std::vector<double>{0, 0}), Error);
}

TEST(KaplanMeier, HandValues) {
  const auto km = kaplan_meier(std::vector<double>{1, 2, 3}, std::vector<int>{1, 1, 1});
  ASSERT_EQ(km.size(), 3u);
  EXPECT_NEAR(km[0].survival, 2.0 / 3, 1e-15);
  EXPECT_NEAR(km[1].survival, 1.0 / 3, 1e-15);
  EXPECT_EQ(km[2].survival, 0.0);
  // Censoring at 2 removes one from the risk set without a step.
  const auto c = kaplan_meier(std::vector<double>{1, 2, 3, 4}, std::vector<int>{1, 0, 1, 1});
  ASSERT_EQ(c.size(), 3u);
  EXPECT_NEAR(c[0].survival, 0.75, 1e-15);
  EXPECT_EQ(c[1].at_risk, 2u);
  EXPECT_NEAR(c[1].survival, 0.375, 1e-15);
}

TEST(KaplanMeier, MonotoneNonIncreasing) {
  std::mt19937_64 gen(31);
  std::uniform_int_distribution<int> t(1, 20), e(0, 1), size(1, 60);
  for (int rep = 0; rep < 500; ++rep) {
    const auto n = static_cast<std::size_t>(size(gen));
    std::vector<double> times(n);
    std::vector<int> events(n);
    for (std::size_t i = 0; i < n; ++i) {
      times[i] = t(gen);
      events[i] = e(gen);
    }
    double prev = 1.0, prev_t = -1.0;
    for (const auto& p : kaplan_meier(times, events)) {
      EXPECT_LE(p.survival, prev);
      EXPECT_GE(p.survival, 0.0);
      EXPECT_GT(p.time, prev_t);
      prev = p.survival;
      prev_t = p.time;
    }
  }
}

TEST(LogRank, IdenticalGroupsGiveNoEvidence) {
  const std::vector<double> t = {1, 1, 2, 2, 3, 3, 4, 4};
  const std::vector<int> e = {1, 1, 1, 1, 0, 0, 1, 1}, high = {0, 1, 0, 1, 0, 1, 0, 1};
  const auto r = log_rank(t, e, high);
  EXPECT_NEAR(r.chi2, 0.0, 1e-15);
  EXPECT_NEAR(r.p_value, 1.0, 1e-12);
}

TEST(LogRank, SeparatedGroups) {
  std::vector<double> t;
  std::vector<int> e, high;
  for (int i = 1; i <= 20; ++i) {
    t.push_back(i);
    e.push_back(1);
    high.push_back(i <= 10 ? 1 : 0);
  }
  const auto r = log_rank(t, e, high);
  EXPECT_EQ(r.observed_high, 10.0);
  EXPECT_LT(r.expected_high, 10.0);
  EXPECT_LT(r.p_value, 1e-4);
  try {
    log_rank(t, e, std::vector<int>(20, 1));
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::DegenerateSplit);
  }
}

TEST(LogRank, MedianSplitTiesGoLow) {
  EXPECT_EQ(median_split(std::vector<double>{1, 2, 2, 3}), (std::vector<int>{0, 0, 0, 1}));
  const auto km = km_logrank(std::vector<double>{4, 3, 2, 1}, std::vector<double>{1, 2, 3, 4}, std::vector<int>{1, 1, 1, 1});
  EXPECT_EQ(km.group, (std::vector<int>{1, 1, 0, 0}));
  EXPECT_EQ(km.high.size(), 2u);
}

TEST(Ranking, TiesShareMeanRank) {
  const std::vector<double> v = {0.5, 0.9, 0.5, 0.1};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{2.5, 4.0, 2.5, 1.0}));
  const std::vector<BenchmarkTable> t = {{"a/x", "pcc", {{"A", 0.9}, {"B", 0.9}, {"C", 0.1}}},
                                         {"a/y", "pcc", {{"A", 0.5}, {"B", 0.2}, {"C", 0.7}}}};
  const auto r = rank_aggregate(t);
  EXPECT_EQ(r.per_task[0].rank.at("A"), 1.5);
  EXPECT_EQ(r.per_task[0].rank.at("C"), 3.0);
  EXPECT_EQ(r.models[0].mean_rank, 1.75);
  EXPECT_EQ(r.models[0].firsts, 0u);
  EXPECT_EQ(r.models[2].firsts, 1u);
}

TEST(Ranking, InvariantUnderMonotoneTransform) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<BenchmarkTable> a, b;
    for (int k = 0; k < 5; ++k) {
      BenchmarkTable ta{"f/" + std::to_string(k), "pcc", {}}, tb = ta;
      for (const char* m : {"A", "B", "C", "D"}) {
        const double v = std::round(u(gen) * 4) / 4;
        ta.rows.emplace_back(m, v);
        tb.rows.emplace_back(m, std::exp(3 * v) - 7);
      }
      a.push_back(ta);
      b.push_back(tb);
    }
    const auto ra = rank_aggregate(a), rb = rank_aggregate(b);
    for (std::size_t m = 0; m < 4; ++m) {
      EXPECT_EQ(ra.models[m].mean_rank, rb.models[m].mean_rank);
      EXPECT_EQ(ra.models[m].firsts, rb.models[m].firsts);
    }
  }
}

TEST(Ranking, FixtureParsing) {
  const auto rows = parse_fixture_csv("# note\ntask_id,model,metric,value,ci_low,ci_high\nst/a,M,pcc,0.5,,\ntile/b,N,accuracy,0.9,0.8,1.0\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_FALSE(rows[0].ci_low.has_value());
  EXPECT_EQ(*rows[1].ci_high, 1.0);
  EXPECT_EQ(task_family(rows[1].task_id), "tile");
  EXPECT_THROW(parse_fixture_csv("task,model\n"), Error);
  EXPECT_THROW(parse_fixture_csv("task_id,model,metric,value,ci_low,ci_high\nst/a,M,pcc,abc,,\n"), Error);
  const auto tables = build_tables(parse_fixture_csv(
      "task_id,model,metric,value,ci_low,ci_high\nt/1,M,accuracy,0.9,,\nt/1,M,weighted_f1,0.7,,\nt/1,N,weighted_f1,0.8,,\n"));
  EXPECT_EQ(tables[0].primary_metric, "weighted_f1");
  EXPECT_EQ(tables[0].rows.size(), 2u);
}

TEST(Ranking, ShippedBenchmarksLoad) {
  const auto rows = load_fixture_dir(tk::source_dir() / "data/fixtures/benchmarks");
  const auto r = rank_aggregate(build_tables(rows));
  const auto best = std::min_element(r.models.begin(), r.models.end(),
                                     [](const ModelRank& a, const ModelRank& b) { return a.mean_rank < b.mean_rank; });
  EXPECT_EQ(best->model, "Shazam");
  EXPECT_EQ(best->tasks, r.per_task.size());
}
