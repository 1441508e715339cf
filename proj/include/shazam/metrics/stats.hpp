#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "shazam/core/error.hpp"
#include "shazam/core/log.hpp"
#include "shazam/core/random.hpp"

namespace shazam::metrics {

struct MetricReport {
  std::string metric;
  double point = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
};

inline double percentile_sorted(const std::vector<double>& sorted, double q) {
  require(!sorted.empty(), ErrorKind::InvalidArgument, "percentile of empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline constexpr std::size_t kMaxRedraws = 10;

inline bool undefined_statistic(const Error& e) {
  return e.kind() == ErrorKind::UndefinedCorrelation || e.kind() == ErrorKind::UndefinedCIndex ||
         e.kind() == ErrorKind::UndefinedTest;
}

/// Percentile bootstrap over n units. Replicate r draws from its own stream
/// derive_seed(seed, r), so results do not depend on evaluation order. A resample
/// on which the statistic is undefined is redrawn from the same stream, at most
/// kMaxRedraws times. The interval is widened to contain the point estimate.
inline MetricReport bootstrap_ci(std::size_t n, const std::function<double(const std::vector<std::size_t>&)>& statistic,
                                 std::size_t replicates = 1000, double level = 0.95, std::uint64_t seed = 0,
                                 std::string metric = "statistic") {
  require(n >= 2, ErrorKind::InvalidArgument, "bootstrap needs at least two units");
  require(level > 0.0 && level < 1.0, ErrorKind::InvalidArgument, "level must be in (0, 1)");
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  MetricReport rep;
  rep.metric = std::move(metric);
  rep.n = n;
  rep.seed = seed;
  rep.point = statistic(all);
  rep.ci_low = rep.ci_high = rep.point;
  if (replicates == 0) return rep;
  std::vector<double> values;
  values.reserve(replicates);
  std::vector<std::size_t> idx(n);
  for (std::size_t r = 0; r < replicates; ++r) {
    Rng rng = make_rng(derive_seed(seed, r));
    for (std::size_t attempt = 0;; ++attempt) {
      for (std::size_t i = 0; i < n; ++i) idx[i] = uniform_index(rng, n);
      try {
        values.push_back(statistic(idx));
        break;
      } catch (const Error& e) {
        if (!undefined_statistic(e)) throw;
        require(attempt < kMaxRedraws, e.kind(),
                "bootstrap replicate " + std::to_string(r) + " undefined after " + std::to_string(kMaxRedraws) + " redraws");
      }
    }
  }
  rep.replicates = values.size();
  std::sort(values.begin(), values.end());
  const double alpha = 1.0 - level;
  rep.ci_low = std::min(rep.point, percentile_sorted(values, alpha / 2));
  rep.ci_high = std::max(rep.point, percentile_sorted(values, 1 - alpha / 2));
  return rep;
}

/// Mean ranks (1-based) with ties sharing the average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

enum class Alternative { Greater, Less, TwoSided };

struct WilcoxonResult {
  double w_plus = 0.0;
  double w_minus = 0.0;
  std::size_t n = 0;
  double p_value = 1.0;
  bool exact = false;
};

/// Paired signed-rank test on d = x - y. Zero differences are dropped. Exact null
/// distribution for n <= 25 (over doubled ranks, so tied half-ranks stay integral),
/// normal approximation with tie and continuity correction above that.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y,
                                           Alternative alt = Alternative::Greater) {
  require(x.size() == y.size(), ErrorKind::InvalidArgument, "wilcoxon length mismatch");
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(std::isfinite(x[i]) && std::isfinite(y[i]), ErrorKind::InvalidArgument, "non-finite wilcoxon input");
    if (x[i] != y[i]) d.push_back(x[i] - y[i]);
  }
  WilcoxonResult r;
  r.n = d.size();
  require(r.n > 0, ErrorKind::UndefinedTest, "all paired differences are zero");
  require(r.n >= 5, ErrorKind::InvalidArgument, "signed-rank test needs at least 5 non-zero differences");
  std::vector<double> mag(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) mag[i] = std::abs(d[i]);
  const std::vector<double> ranks = average_ranks(mag);
  for (std::size_t i = 0; i < d.size(); ++i) (d[i] > 0 ? r.w_plus : r.w_minus) += ranks[i];

  double p_greater = 1.0, p_less = 1.0;
  if (r.n <= 25) {
    r.exact = true;
    std::vector<std::size_t> doubled(r.n);
    std::size_t total = 0;
    for (std::size_t i = 0; i < r.n; ++i) {
      doubled[i] = static_cast<std::size_t>(std::lround(2 * ranks[i]));
      total += doubled[i];
    }
    std::vector<double> count(total + 1, 0.0);
    count[0] = 1.0;
    for (std::size_t rk : doubled)
      for (std::size_t s = total + 1; s-- > rk;) count[s] += count[s - rk];
    const double all = std::ldexp(1.0, static_cast<int>(r.n));
    const auto w = static_cast<std::size_t>(std::lround(2 * r.w_plus));
    double ge = 0.0, le = 0.0;
    for (std::size_t s = 0; s <= total; ++s) {
      if (s >= w) ge += count[s];
      if (s <= w) le += count[s];
    }
    p_greater = ge / all;
    p_less = le / all;
  } else {
    const auto n = static_cast<double>(r.n);
    double tie = 0.0;
    std::vector<double> sorted = mag;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const auto t = static_cast<double>(j - i + 1);
      tie += t * t * t - t;
      i = j + 1;
    }
    const double mean = n * (n + 1) / 4;
    const double sd = std::sqrt(n * (n + 1) * (2 * n + 1) / 24 - tie / 48);
    require(sd > 0.0, ErrorKind::UndefinedTest, "zero variance in the signed-rank statistic");
    p_greater = 0.5 * std::erfc(((r.w_plus - mean - 0.5) / sd) / std::sqrt(2.0));
    p_less = 0.5 * std::erfc((-(r.w_plus - mean + 0.5) / sd) / std::sqrt(2.0));
  }
  switch (alt) {
    case Alternative::Greater: r.p_value = p_greater; break;
    case Alternative::Less: r.p_value = p_less; break;
    case Alternative::TwoSided: r.p_value = std::min(1.0, 2 * std::min(p_greater, p_less)); break;
  }
  return r;
}

struct KmPoint {
  double time = 0.0;
  double survival = 1.0;
  std::size_t at_risk = 0;
  std::size_t events = 0;
};

/// Kaplan-Meier steps at each distinct event time.
inline std::vector<KmPoint> kaplan_meier(std::span<const double> times, std::span<const int> events) {
  require(times.size() == events.size() && !times.empty(), ErrorKind::InvalidArgument, "kaplan_meier shape mismatch");
  std::vector<std::size_t> order(times.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  std::vector<KmPoint> out;
  double s = 1.0;
  std::size_t at_risk = times.size();
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i, ev = 0;
    while (j < order.size() && times[order[j]] == times[order[i]]) ev += events[order[j++]] ? 1 : 0;
    if (ev > 0) {
      s *= 1.0 - static_cast<double>(ev) / static_cast<double>(at_risk);
      out.push_back({times[order[i]], s, at_risk, ev});
    }
    at_risk -= j - i;
    i = j;
  }
  return out;
}

struct LogRankResult {
  double chi2 = 0.0;
  double p_value = 1.0;
  double observed_high = 0.0;
  double expected_high = 0.0;
};

/// Two-group log-rank test; `high[i]` marks membership in the second group.
inline LogRankResult log_rank(std::span<const double> times, std::span<const int> events, std::span<const int> high) {
  require(times.size() == events.size() && times.size() == high.size(), ErrorKind::InvalidArgument, "log_rank shape mismatch");
  std::size_t n_high = 0;
  for (int h : high) n_high += h ? 1 : 0;
  require(n_high > 0 && n_high < high.size(), ErrorKind::DegenerateSplit, "one log-rank group is empty");
  std::vector<std::size_t> order(times.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  double n = static_cast<double>(times.size()), n1 = static_cast<double>(n_high);
  LogRankResult r;
  double var = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double d = 0.0, d1 = 0.0, leave = 0.0, leave1 = 0.0;
    while (j < order.size() && times[order[j]] == times[order[i]]) {
      const std::size_t k = order[j++];
      leave += 1;
      if (high[k]) leave1 += 1;
      if (events[k]) {
        d += 1;
        if (high[k]) d1 += 1;
      }
    }
    if (d > 0) {
      r.observed_high += d1;
      r.expected_high += d * n1 / n;
      if (n > 1) var += d * (n1 / n) * (1 - n1 / n) * (n - d) / (n - 1);
    }
    n -= leave;
    n1 -= leave1;
    i = j;
  }
  require(var > 0.0, ErrorKind::UndefinedTest, "log-rank variance is zero");
  r.chi2 = (r.observed_high - r.expected_high) * (r.observed_high - r.expected_high) / var;
  r.p_value = std::erfc(std::sqrt(r.chi2 / 2));
  return r;
}

/// High-risk group = risk strictly above the median; ties at the median go low.
inline std::vector<int> median_split(std::span<const double> risk) {
  require(!risk.empty(), ErrorKind::InvalidArgument, "median_split of no risks");
  std::vector<double> sorted(risk.begin(), risk.end());
  std::sort(sorted.begin(), sorted.end());
  const double median = percentile_sorted(sorted, 0.5);
  std::vector<int> high;
  for (double r : risk) high.push_back(r > median ? 1 : 0);
  return high;
}

struct KmLogRank {
  std::vector<KmPoint> low;
  std::vector<KmPoint> high;
  std::vector<int> group;
  LogRankResult test;
};

/// Median-cutoff stratification of a risk score, one KM curve per group, two-sided log-rank test.
inline KmLogRank km_logrank(std::span<const double> risk, std::span<const double> times, std::span<const int> events) {
  require(risk.size() == times.size() && risk.size() == events.size(), ErrorKind::InvalidArgument, "km_logrank shape mismatch");
  require(risk.size() >= 4, ErrorKind::InvalidArgument, "km_logrank needs at least 4 samples");
  KmLogRank out;
  out.group = median_split(risk);
  out.test = log_rank(times, events, out.group);
  std::vector<double> t[2];
  std::vector<int> e[2];
  for (std::size_t i = 0; i < risk.size(); ++i) {
    t[out.group[i]].push_back(times[i]);
    e[out.group[i]].push_back(events[i]);
  }
  out.low = kaplan_meier(t[0], e[0]);
  out.high = kaplan_meier(t[1], e[1]);
  return out;
}

}  // namespace shazam::metrics
