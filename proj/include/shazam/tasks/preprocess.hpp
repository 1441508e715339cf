#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "shazam/core/error.hpp"
#include "shazam/core/log.hpp"
#include "shazam/feature_store/types.hpp"

namespace shazam::tasks {

/// Entrywise log(1 + x) over a spots x genes matrix of one cohort.
inline std::vector<std::vector<double>> log_normalize_expression(const std::vector<std::vector<double>>& matrix) {
  std::vector<std::vector<double>> out = matrix;
  for (auto& row : out) {
    for (double& x : row) {
      require(std::isfinite(x) && x >= 0.0, ErrorKind::InvalidArgument, "expression values must be finite and >= 0");
      x = std::log1p(x);
    }
  }
  return out;
}

/// Applies log1p to every expression label of an expression FeatureSet, in place.
inline void log_normalize_labels(FeatureSet& fs) {
  for (SampleRecord& s : fs.samples) {
    auto* e = std::get_if<ExpressionLabel>(&s.label);
    require(e != nullptr, ErrorKind::InvalidArgument, "log normalization needs expression labels");
    for (float& x : e->values) {
      require(std::isfinite(x) && x >= 0.0f, ErrorKind::InvalidArgument, "expression values must be finite and >= 0");
      x = static_cast<float>(std::log1p(static_cast<double>(x)));
    }
  }
}

struct CohortSlide {
  std::string id;
  /// spots x genes, columns in Cohort::genes order.
  std::vector<std::vector<double>> spots;
};

struct Cohort {
  std::vector<std::string> genes;
  std::vector<CohortSlide> slides;
};

struct CohortFilter {
  std::vector<std::string> kept_slides;
  std::vector<std::string> kept_genes;
};

/// Slides first: drop a slide when at least half of the selected genes are zero
/// in every spot of it. Then genes: drop a gene that is all-zero in at least half
/// of the remaining slides. One pass each.
inline CohortFilter filter_cohort(const Cohort& cohort, const std::vector<std::string>& gene_list) {
  require(!gene_list.empty(), ErrorKind::InvalidArgument, "gene list is empty");
  std::map<std::string, std::size_t> column;
  for (std::size_t j = 0; j < cohort.genes.size(); ++j) column[cohort.genes[j]] = j;
  for (const std::string& g : gene_list)
    if (!column.count(g)) log::warn("gene ", g, " is not measured in the cohort; treated as all-zero");

  auto all_zero = [&](const CohortSlide& slide, const std::string& gene) {
    auto it = column.find(gene);
    if (it == column.end()) return true;
    for (const auto& spot : slide.spots)
      if (spot.at(it->second) != 0.0) return false;
    return true;
  };

  std::vector<const CohortSlide*> kept;
  for (const CohortSlide& slide : cohort.slides) {
    std::size_t zero = 0;
    for (const std::string& g : gene_list) zero += all_zero(slide, g) ? 1 : 0;
    if (2 * zero < gene_list.size()) kept.push_back(&slide);
  }
  require(!kept.empty(), ErrorKind::EmptyCohort, "every slide was filtered out");

  CohortFilter out;
  for (const CohortSlide* s : kept) out.kept_slides.push_back(s->id);
  for (const std::string& g : gene_list) {
    std::size_t zero = 0;
    for (const CohortSlide* s : kept) zero += all_zero(*s, g) ? 1 : 0;
    if (2 * zero < kept.size()) out.kept_genes.push_back(g);
  }
  return out;
}

struct SurvivalBins {
  /// num_bins - 1 interior cut points; bin b holds times in (cut[b-1], cut[b]].
  std::vector<double> cuts;
  std::vector<std::size_t> bin;
  bool degenerate = false;
};

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  require(!sorted.empty(), ErrorKind::InvalidArgument, "quantile of empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline std::size_t assign_bin(const std::vector<double>& cuts, double t) {
  std::size_t b = 0;
  while (b < cuts.size() && t > cuts[b]) ++b;
  return b;
}

/// Equal-population time bins with cut points at quantiles of the uncensored times.
inline SurvivalBins survival_bins(const std::vector<double>& times, const std::vector<int>& events,
                                  std::size_t num_bins = 4) {
  require(times.size() == events.size(), ErrorKind::InvalidArgument, "times and events differ in length");
  require(num_bins >= 1, ErrorKind::InvalidArgument, "num_bins must be >= 1");
  require(times.size() >= num_bins, ErrorKind::InvalidArgument, "fewer samples than bins");
  std::vector<double> basis;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (events[i]) basis.push_back(times[i]);
  if (basis.size() < num_bins) {
    log::warn("only ", basis.size(), " uncensored times; bin edges computed on all times");
    basis = times;
  }
  std::sort(basis.begin(), basis.end());
  SurvivalBins out;
  for (std::size_t b = 1; b < num_bins; ++b)
    out.cuts.push_back(quantile_sorted(basis, static_cast<double>(b) / static_cast<double>(num_bins)));
  for (std::size_t b = 1; b < out.cuts.size(); ++b)
    if (!(out.cuts[b] > out.cuts[b - 1])) out.degenerate = true;
  if (!out.cuts.empty() && !(out.cuts.front() > basis.front())) out.degenerate = true;
  if (out.degenerate) log::warn("survival bin edges are degenerate (tied times)");
  for (double t : times) out.bin.push_back(assign_bin(out.cuts, t));
  return out;
}

}  // namespace shazam::tasks
