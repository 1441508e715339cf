#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shazam/core/autodiff.hpp"
#include "shazam/core/layers.hpp"
#include "shazam/core/random.hpp"
#include "shazam/feature_store/types.hpp"

namespace shazam::tasks {

struct HeadConfig {
  std::vector<std::size_t> hidden;
  bool layer_norm = false;
  double dropout = 0.0;
  std::size_t out = 1;
};

/// Tile: two hidden layers with LayerNorm and GELU. Expression: GELU + dropout. Survival: one GELU layer.
inline HeadConfig default_head(TaskKind kind, std::size_t out, std::size_t hidden = 128) {
  HeadConfig h;
  h.out = out;
  switch (kind) {
    case TaskKind::Classification:
      h.hidden = {hidden, hidden};
      h.layer_norm = true;
      break;
    case TaskKind::Expression:
      h.hidden = {hidden};
      h.dropout = 0.1;
      break;
    case TaskKind::Survival:
      h.hidden = {hidden};
      break;
  }
  return h;
}

struct TaskHead {
  HeadConfig config;
  std::vector<Linear> layers;  // hidden layers then the output layer
  std::vector<LayerNormParams> norms;

  TaskHead() = default;
  TaskHead(HeadConfig c, std::size_t in, std::uint64_t seed) : config(std::move(c)) {
    std::size_t width = in;
    for (std::size_t k = 0; k < config.hidden.size(); ++k) {
      const std::string name = "head.fc" + std::to_string(k);
      layers.emplace_back(name, static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(config.hidden[k]), seed);
      if (config.layer_norm) norms.emplace_back(name + ".ln", static_cast<Eigen::Index>(config.hidden[k]));
      width = config.hidden[k];
    }
    layers.emplace_back("head.out", static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(config.out), seed);
  }

  /// `dropout_rng` null means evaluation mode.
  ad::Var operator()(ad::Tape& tape, ad::Var x, Rng* dropout_rng = nullptr) {
    for (std::size_t k = 0; k + 1 < layers.size(); ++k) {
      x = layers[k](tape, x);
      if (config.layer_norm) x = norms[k](tape, x);
      x = ad::gelu(x);
      if (dropout_rng && config.dropout > 0.0) {
        const double keep = 1.0 - config.dropout;
        Matrix mask(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < mask.size(); ++i)
          mask.data()[i] = uniform(*dropout_rng, 0.0, 1.0) < keep ? 1.0 / keep : 0.0;
        x = ad::hadamard(x, tape.constant(std::move(mask)));
      }
    }
    return layers.back()(tape, x);
  }

  std::vector<const Matrix*> weights() const {
    std::vector<const Matrix*> w;
    for (const Linear& l : layers) w.push_back(&l.weight.value);
    return w;
  }

  void collect(std::vector<Parameter*>& o) {
    for (std::size_t k = 0; k < layers.size(); ++k) {
      layers[k].collect(o);
      if (k < norms.size()) norms[k].collect(o);
    }
  }
};

}  // namespace shazam::tasks
