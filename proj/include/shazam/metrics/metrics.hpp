#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "shazam/core/error.hpp"
#include "shazam/core/log.hpp"

namespace shazam::metrics {

inline double pcc(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorKind::InvalidArgument, "pcc length mismatch");
  require(x.size() >= 2, ErrorKind::UndefinedCorrelation, "pcc needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0 && syy > 0.0, ErrorKind::UndefinedCorrelation, "pcc of a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Mean over genes of the per-gene PCC across samples; rows are samples. Constant genes are skipped.
inline double mean_gene_pcc(const std::vector<std::vector<double>>& pred, const std::vector<std::vector<double>>& target) {
  require(pred.size() == target.size() && !pred.empty(), ErrorKind::InvalidArgument, "mean_gene_pcc shape mismatch");
  const std::size_t genes = pred.front().size();
  double sum = 0.0;
  std::size_t used = 0;
  std::vector<double> a(pred.size()), b(pred.size());
  for (std::size_t g = 0; g < genes; ++g) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
      a[i] = pred[i].at(g);
      b[i] = target[i].at(g);
    }
    try {
      sum += pcc(a, b);
      ++used;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::UndefinedCorrelation) throw;
    }
  }
  require(used > 0, ErrorKind::UndefinedCorrelation, "no gene has a defined correlation");
  if (used < genes) log::debug(genes - used, " genes skipped with undefined correlation");
  return sum / static_cast<double>(used);
}

/// Harrell's C. A pair (i, j) is comparable when t_i < t_j and i had the event;
/// concordant when risk_i > risk_j, and tied risks count one half.
inline double concordance_index(std::span<const double> times, std::span<const int> events, std::span<const double> risk) {
  require(times.size() == events.size() && times.size() == risk.size(), ErrorKind::InvalidArgument,
          "concordance_index length mismatch");
  require(times.size() >= 2, ErrorKind::UndefinedCIndex, "c-index needs at least two samples");
  double num = 0.0;
  std::uint64_t comparable = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!events[i]) continue;
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (!(times[i] < times[j])) continue;
      ++comparable;
      if (risk[i] > risk[j]) {
        num += 1.0;
      } else if (risk[i] == risk[j]) {
        num += 0.5;
      }
    }
  }
  require(comparable > 0, ErrorKind::UndefinedCIndex, "no comparable pairs");
  return num / static_cast<double>(comparable);
}

struct ClassificationMetrics {
  double balanced_accuracy = 0.0;
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
};

inline ClassificationMetrics classification_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> pred,
                                                    std::size_t num_classes, bool warn = true) {
  require(truth.size() == pred.size() && !truth.empty(), ErrorKind::InvalidArgument, "classification_metrics shape mismatch");
  std::vector<double> tp(num_classes, 0), support(num_classes, 0), predicted(num_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] < num_classes && pred[i] < num_classes, ErrorKind::InvalidArgument, "class index out of range");
    support[truth[i]] += 1;
    predicted[pred[i]] += 1;
    if (truth[i] == pred[i]) tp[truth[i]] += 1;
  }
  ClassificationMetrics m;
  double correct = 0.0, recall_sum = 0.0, f1_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    correct += tp[c];
    if (support[c] == 0) {
      if (warn) log::warn("class ", c, " is absent from the truth labels; excluded from balanced accuracy");
      continue;
    }
    ++present;
    const double recall = tp[c] / support[c];
    const double precision = predicted[c] > 0 ? tp[c] / predicted[c] : 0.0;
    recall_sum += recall;
    const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    f1_sum += f1 * support[c];
  }
  const auto n = static_cast<double>(truth.size());
  m.accuracy = correct / n;
  m.balanced_accuracy = recall_sum / static_cast<double>(present);
  m.weighted_f1 = f1_sum / n;
  return m;
}

}  // namespace shazam::metrics
