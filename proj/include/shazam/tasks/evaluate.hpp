#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "shazam/core/error.hpp"
#include "shazam/metrics/metrics.hpp"
#include "shazam/metrics/stats.hpp"
#include "shazam/tasks/losses.hpp"
#include "shazam/tasks/train.hpp"

namespace shazam::tasks {

inline std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Survival risk per prediction, higher = earlier expected event.
inline std::vector<double> risks(const std::vector<Prediction>& preds) {
  std::vector<double> r;
  for (const Prediction& p : preds) r.push_back(survival_risk(p.output));
  return r;
}

struct SurvivalData {
  std::vector<double> times;
  std::vector<int> events;
};

inline SurvivalData survival_data(const std::vector<Prediction>& preds) {
  SurvivalData d;
  for (const Prediction& p : preds) {
    const auto& l = std::get<SurvivalLabel>(p.label);
    d.times.push_back(l.time);
    d.events.push_back(l.event);
  }
  return d;
}

/// Task metrics over a subset of predictions given by index.
inline std::vector<std::pair<std::string, double>> task_metrics(TaskKind kind, const std::vector<Prediction>& preds,
                                                                const std::vector<std::size_t>& idx,
                                                                std::size_t num_classes, bool warn = true) {
  require(!idx.empty(), ErrorKind::InvalidArgument, "no predictions to evaluate");
  switch (kind) {
    case TaskKind::Classification: {
      std::vector<std::size_t> truth, pred;
      for (std::size_t i : idx) {
        truth.push_back(std::get<ClassLabel>(preds[i].label).index);
        pred.push_back(argmax(preds[i].output));
      }
      const auto m = metrics::classification_metrics(truth, pred, num_classes, warn);
      return {{"balanced_accuracy", m.balanced_accuracy}, {"weighted_f1", m.weighted_f1}, {"accuracy", m.accuracy}};
    }
    case TaskKind::Expression: {
      std::vector<std::vector<double>> p, t;
      for (std::size_t i : idx) {
        p.push_back(preds[i].output);
        const auto& v = std::get<ExpressionLabel>(preds[i].label).values;
        t.emplace_back(v.begin(), v.end());
      }
      return {{"pcc", metrics::mean_gene_pcc(p, t)}};
    }
    case TaskKind::Survival: {
      std::vector<double> times, risk;
      std::vector<int> events;
      for (std::size_t i : idx) {
        const auto& l = std::get<SurvivalLabel>(preds[i].label);
        times.push_back(l.time);
        events.push_back(l.event);
        risk.push_back(survival_risk(preds[i].output));
      }
      return {{"c_index", metrics::concordance_index(times, events, risk)}};
    }
  }
  return {};
}

/// Point estimates with percentile bootstrap CIs over prediction units.
inline std::vector<metrics::MetricReport> evaluate(TaskKind kind, const std::vector<Prediction>& preds, std::size_t num_classes,
                                                   std::uint64_t seed, std::size_t replicates = 1000) {
  std::vector<std::size_t> all(preds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::vector<metrics::MetricReport> out;
  const auto names = task_metrics(kind, preds, all, num_classes);
  for (std::size_t m = 0; m < names.size(); ++m) {
    auto stat = [&](const std::vector<std::size_t>& idx) { return task_metrics(kind, preds, idx, num_classes, false)[m].second; };
    out.push_back(metrics::bootstrap_ci(preds.size(), stat, replicates, 0.95, derive_seed(seed, names[m].first), names[m].first));
  }
  return out;
}

}  // namespace shazam::tasks
