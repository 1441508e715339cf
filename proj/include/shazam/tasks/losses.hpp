#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "shazam/core/autodiff.hpp"
#include "shazam/core/error.hpp"
#include "shazam/core/log.hpp"

namespace shazam::tasks {

inline constexpr double kProbClamp = 1e-7;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace detail {

/// -log(p) with p clamped to [kProbClamp, 1]; sets `clamped` when the clamp is hit.
inline double neg_log_clamped(double p, bool& clamped) {
  if (p < kProbClamp) {
    clamped = true;
    p = kProbClamp;
  }
  return -std::log(p);
}

struct SurvivalTerms {
  double value = 0.0;
  std::vector<double> grad;  // d value / d logit
  bool clamped = false;
};

inline SurvivalTerms survival_nll_terms(std::span<const double> logits, std::size_t bin, bool event) {
  require(bin < logits.size(), ErrorKind::InvalidArgument, "survival bin out of range");
  SurvivalTerms out;
  out.grad.assign(logits.size(), 0.0);
  for (double l : logits) require(std::isfinite(l), ErrorKind::NumericError, "non-finite survival logit");
  const std::size_t last_survived = event ? bin : bin + 1;  // bins b < last_survived contribute log(1 - h_b)
  for (std::size_t b = 0; b < last_survived; ++b) {
    const double h = sigmoid(logits[b]);
    bool c = false;
    out.value += neg_log_clamped(1.0 - h, c);
    out.grad[b] = c ? 0.0 : h;
    out.clamped = out.clamped || c;
  }
  if (event) {
    const double h = sigmoid(logits[bin]);
    bool c = false;
    out.value += neg_log_clamped(h, c);
    out.grad[bin] = c ? 0.0 : -(1.0 - h);
    out.clamped = out.clamped || c;
  }
  if (!std::isfinite(out.value)) fail(ErrorKind::NumericError, "non-finite survival loss");
  return out;
}

}  // namespace detail

/// Discrete-time hazard NLL; hazards are sigmoid(logits).
/// Event in bin k: -log h_k - sum_{b<k} log(1-h_b). Censored in bin k: -sum_{b<=k} log(1-h_b).
inline double nll_survival_loss(std::span<const double> logits, std::size_t bin, bool event) {
  auto t = detail::survival_nll_terms(logits, bin, event);
  if (t.clamped) log::warn("survival NLL probability clamp triggered");
  return t.value;
}

inline ad::Var nll_survival_loss(const ad::Var& logits, std::size_t bin, bool event) {
  require(logits.rows() == 1, ErrorKind::InvalidArgument, "survival logits must be a row");
  const Matrix& v = logits.value();
  auto terms = detail::survival_nll_terms(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())), bin, event);
  if (terms.clamped) log::warn("survival NLL probability clamp triggered");
  ad::Tape* t = logits.tape();
  const std::size_t id = logits.id();
  Matrix grad = row_matrix(std::span<const double>(terms.grad));
  return t->make(Matrix::Constant(1, 1, terms.value), logits.needs_grad(),
                 [t, id, grad](const Matrix& g) { t->accumulate(id, g(0, 0) * grad); });
}

/// Survival after each bin, S_b = prod_{j<=b} (1 - h_j).
inline std::vector<double> survival_curve(std::span<const double> logits) {
  std::vector<double> s;
  double acc = 1.0;
  for (double l : logits) {
    acc *= 1.0 - sigmoid(l);
    s.push_back(acc);
  }
  return s;
}

/// Risk score for ranking: negative sum of the survival curve.
inline double survival_risk(std::span<const double> logits) {
  double r = 0.0;
  for (double s : survival_curve(logits)) r -= s;
  return r;
}

inline double cross_entropy(std::span<const double> logits, std::size_t target) {
  require(target < logits.size(), ErrorKind::InvalidArgument, "class index out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return std::log(z) + mx - logits[target];
}

inline ad::Var cross_entropy(const ad::Var& logits, std::size_t target) {
  require(logits.rows() == 1, ErrorKind::InvalidArgument, "logits must be a row");
  require(target < static_cast<std::size_t>(logits.cols()), ErrorKind::InvalidArgument, "class index out of range");
  const Matrix& v = logits.value();
  const double value = cross_entropy(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())), target);
  require(std::isfinite(value), ErrorKind::NumericError, "non-finite cross entropy");
  Matrix grad = ad::softmax_rows_value(v);
  grad(0, static_cast<Eigen::Index>(target)) -= 1.0;
  ad::Tape* t = logits.tape();
  const std::size_t id = logits.id();
  return t->make(Matrix::Constant(1, 1, value), logits.needs_grad(),
                 [t, id, grad](const Matrix& g) { t->accumulate(id, g(0, 0) * grad); });
}

/// Mean squared error over genes plus l2 * sum of squared head weights.
inline double ridge_loss(std::span<const double> pred, std::span<const double> target,
                         std::span<const Matrix* const> weights, double l2) {
  require(pred.size() == target.size(), ErrorKind::InvalidArgument, "ridge_loss length mismatch");
  require(!pred.empty(), ErrorKind::InvalidArgument, "ridge_loss over no genes");
  double mse = 0.0;
  for (std::size_t g = 0; g < pred.size(); ++g) mse += (pred[g] - target[g]) * (pred[g] - target[g]);
  mse /= static_cast<double>(pred.size());
  double reg = 0.0;
  for (const Matrix* w : weights) reg += w->squaredNorm();
  return mse + l2 * reg;
}

inline ad::Var mse(const ad::Var& pred, const Matrix& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), ErrorKind::InvalidArgument,
          "mse shape mismatch");
  const Matrix diff = pred.value() - target;
  const double n = static_cast<double>(diff.size());
  ad::Tape* t = pred.tape();
  const std::size_t id = pred.id();
  return t->make(Matrix::Constant(1, 1, diff.squaredNorm() / n), pred.needs_grad(),
                 [t, id, diff, n](const Matrix& g) { t->accumulate(id, (2.0 * g(0, 0) / n) * diff); });
}

}  // namespace shazam::tasks
