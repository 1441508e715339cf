#pragma once

// Multi-level online distillation: per (scale, teacher) cosine distance plus
// element-wise Huber penalty on l2-normalized vectors, averaged over all
// active scales and teachers, and the combined objective.

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shazam/core/autodiff.hpp"
#include "shazam/core/error.hpp"
#include "shazam/feature_store/types.hpp"

namespace shazam::distill {

enum class TargetMode { ProjectedStopGrad };

struct DistillConfig {
  double delta = 1.0;
  double lambda_distill = 0.01;
  TargetMode target_mode = TargetMode::ProjectedStopGrad;
};

inline void validate(const DistillConfig& c) {
  require(c.delta > 0.0, ErrorKind::InvalidArgument, "Huber delta must be > 0");
  require(c.lambda_distill >= 0.0, ErrorKind::InvalidArgument, "lambda_distill must be >= 0");
}

namespace detail {

inline double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double huber_rho(double e, double delta) {
  const double a = std::abs(e);
  return a <= delta ? 0.5 * e * e : delta * (a - 0.5 * delta);
}

inline double huber_slope(double e, double delta) {
  return std::abs(e) <= delta ? e : (e > 0 ? delta : -delta);
}

inline std::vector<double> normalized(std::span<const double> v) {
  const double n = norm(v);
  require(n > 0.0, ErrorKind::DegenerateVector, "zero-norm vector");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

}  // namespace detail

inline double cosine_distance(std::span<const double> z, std::span<const double> t) {
  require(z.size() == t.size(), ErrorKind::InvalidArgument, "cosine_distance length mismatch");
  const double nz = detail::norm(z), nt = detail::norm(t);
  require(nz > 0.0 && nt > 0.0, ErrorKind::DegenerateVector, "cosine distance of a zero-norm vector");
  double dot = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) dot += z[k] * t[k];
  const double d = 1.0 - dot / (nz * nt);
  return std::min(2.0, std::max(0.0, d));
}

inline double huber_elementwise(std::span<const double> z, std::span<const double> t, double delta) {
  require(z.size() == t.size(), ErrorKind::InvalidArgument, "huber length mismatch");
  require(delta > 0.0, ErrorKind::InvalidArgument, "Huber delta must be > 0");
  require(!z.empty(), ErrorKind::InvalidArgument, "huber of empty vectors");
  double s = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) s += detail::huber_rho(z[k] - t[k], delta);
  return s / static_cast<double>(z.size());
}

inline double distill_pair(std::span<const double> z, std::span<const double> t, const DistillConfig& cfg) {
  require(z.size() == t.size(), ErrorKind::InvalidArgument, "distill_pair length mismatch");
  const auto zh = detail::normalized(z);
  const auto th = detail::normalized(t);
  return cosine_distance(zh, th) + huber_elementwise(zh, th, cfg.delta);
}

/// Graph version of distill_pair. Gradient flows into `z` only; the target is a constant.
inline ad::Var distill_pair(const ad::Var& z, const ad::Var& target, const DistillConfig& cfg) {
  require(z.rows() == 1 && target.rows() == 1 && z.cols() == target.cols(), ErrorKind::InvalidArgument,
          "distill_pair expects two 1 x d rows");
  const Matrix& zv = z.value();
  const Matrix& tv = target.value();
  const double nz = zv.norm(), nt = tv.norm();
  require(nz > 0.0 && nt > 0.0, ErrorKind::DegenerateVector, "distillation on a zero-norm vector");
  const RowVectorD zh = zv.row(0) / nz;
  const RowVectorD th = tv.row(0) / nt;
  const double value = distill_pair(std::span<const double>(zv.data(), static_cast<std::size_t>(zv.size())),
                                    std::span<const double>(tv.data(), static_cast<std::size_t>(tv.size())), cfg);
  ad::Tape* t = z.tape();
  const std::size_t iz = z.id();
  const double delta = cfg.delta;
  Matrix out(1, 1);
  out(0, 0) = value;
  return t->make(std::move(out), z.needs_grad(), [t, iz, zh, th, nz, delta](const Matrix& g) {
    const auto d = static_cast<double>(zh.size());
    RowVectorD dzh = -th;
    for (Eigen::Index k = 0; k < zh.size(); ++k) dzh(k) += detail::huber_slope(zh(k) - th(k), delta) / d;
    // Project out the radial component: d(z/|z|)/dz = (I - zh zh^T) / |z|.
    RowVectorD dz = (dzh - zh * zh.dot(dzh)) / nz;
    t->accumulate(iz, g(0, 0) * dz);
  });
}

struct TermKey {
  Scale scale;
  std::size_t teacher;
  auto operator<=>(const TermKey&) const = default;
};

struct LossBreakdown {
  double task_loss = 0.0;
  std::map<TermKey, double> distill_terms;
  double distill_total = 0.0;
  double total = 0.0;
};

/// Mean of distill_pair over every (scale, teacher). `student[s]` is z_s, `targets[s][i]` is t_s^(i).
/// Scales absent from `student` are skipped, which restricts the average to active scales.
inline double distill_total(const std::array<std::optional<std::vector<double>>, 3>& student,
                            const std::array<std::vector<std::vector<double>>, 3>& targets,
                            const DistillConfig& cfg, std::map<TermKey, double>* terms = nullptr) {
  double sum = 0.0;
  std::size_t count = 0;
  for (Scale s : kAllScales) {
    const auto& z = student[index_of(s)];
    if (!z) continue;
    const auto& ts = targets[index_of(s)];
    require(!ts.empty(), ErrorKind::InvalidArgument, "missing targets for scale " + std::string(to_string(s)));
    for (std::size_t i = 0; i < ts.size(); ++i) {
      require(!ts[i].empty(), ErrorKind::InvalidArgument, "missing target for teacher " + std::to_string(i));
      const double v = distill_pair(*z, ts[i], cfg);
      if (terms) (*terms)[{s, i}] = v;
      sum += v;
      ++count;
    }
  }
  require(count > 0, ErrorKind::InvalidArgument, "distill_total over no terms");
  return sum / static_cast<double>(count);
}

struct GraphDistill {
  ad::Var total;
  std::map<TermKey, double> terms;
};

/// Graph version over the per-scale student embeddings and their stop-gradient targets.
inline GraphDistill distill_total(const std::array<std::optional<ad::Var>, 3>& z,
                                  const std::array<std::vector<ad::Var>, 3>& targets, const DistillConfig& cfg) {
  std::vector<ad::Var> terms;
  GraphDistill out;
  for (Scale s : kAllScales) {
    if (!z[index_of(s)]) continue;
    const auto& ts = targets[index_of(s)];
    require(!ts.empty(), ErrorKind::InvalidArgument, "missing targets for scale " + std::string(to_string(s)));
    for (std::size_t i = 0; i < ts.size(); ++i) {
      ad::Var term = distill_pair(*z[index_of(s)], ts[i], cfg);
      out.terms[{s, i}] = term.scalar();
      terms.push_back(term);
    }
  }
  require(!terms.empty(), ErrorKind::InvalidArgument, "distill_total over no terms");
  out.total = ad::mean_of(terms);
  return out;
}

inline LossBreakdown total_loss(double task_loss, double distill_total_value, const DistillConfig& cfg) {
  require(std::isfinite(task_loss) && std::isfinite(distill_total_value), ErrorKind::NumericError,
          "non-finite loss component");
  LossBreakdown b;
  b.task_loss = task_loss;
  b.distill_total = distill_total_value;
  b.total = task_loss + cfg.lambda_distill * distill_total_value;
  return b;
}

}  // namespace shazam::distill
