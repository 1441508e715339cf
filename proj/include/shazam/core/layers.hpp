#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "shazam/core/autodiff.hpp"
#include "shazam/core/random.hpp"

namespace shazam {

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) drawn from a stream keyed by (seed, name).
inline Parameter fan_in_uniform(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                                Eigen::Index fan_in, std::uint64_t seed) {
  Rng rng = make_rng(derive_seed(seed, name));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -bound, bound);
  return Parameter(name, std::move(m));
}

struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, std::uint64_t seed)
      : weight(fan_in_uniform(name + ".weight", in, out, in, seed)),
        bias(fan_in_uniform(name + ".bias", 1, out, in, seed)) {}

  Eigen::Index in_dim() const { return weight.value.rows(); }
  Eigen::Index out_dim() const { return weight.value.cols(); }

  ad::Var operator()(ad::Tape& tape, const ad::Var& x) {
    return ad::affine(x, tape.param(weight), tape.param(bias));
  }

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

struct LayerNormParams {
  Parameter gamma;
  Parameter beta;

  LayerNormParams() = default;
  LayerNormParams(const std::string& name, Eigen::Index dim)
      : gamma(name + ".gamma", Matrix::Ones(1, dim)), beta(name + ".beta", Matrix::Zero(1, dim)) {}

  ad::Var operator()(ad::Tape& tape, const ad::Var& x) {
    return ad::layer_norm_rows(x, tape.param(gamma), tape.param(beta));
  }

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace shazam
