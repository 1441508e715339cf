#pragma once

// Synthetic stand-in for a panel of frozen encoders.
//
// Each sample has a hidden latent vector u split into three equal blocks, one
// per scale. Teacher i exposes, at scale s, a fixed random projection of
// strength_i * (u_s + scale_mix * u_other) plus isotropic noise. Labels are a
// function of the full latent, so a teacher with strength 0 carries no signal
// and any single scale sees only part of it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "shazam/core/error.hpp"
#include "shazam/core/random.hpp"
#include "shazam/feature_store/depths.hpp"
#include "shazam/feature_store/types.hpp"

namespace shazam {

struct SynthConfig {
  TaskKind task = TaskKind::Classification;
  std::vector<TeacherSpec> teachers;
  /// Tile tasks: number of samples. Survival: number of slides.
  std::size_t samples = 0;
  std::size_t tiles_min = 4;
  std::size_t tiles_max = 8;
  std::uint32_t num_classes = 4;
  std::uint32_t num_genes = 8;
  std::size_t patients = 0;  // 0: one patient per five samples
  std::size_t unassigned = 0;
  std::size_t latent_dim = 12;
  /// "teacher-0-only", "uniform", or "strengths:a,b,c,..."
  std::string planted = "teacher-0-only";
  bool nonlinear = false;
  double noise = 1.0;
  double scale_mix = 0.25;
  double tile_jitter = 0.5;
  double signal = 1.5;
  double censor_rate = 0.3;
};

inline std::vector<double> planted_strengths(const std::string& mode, std::size_t n_teachers) {
  std::vector<double> s(n_teachers, 0.0);
  if (mode == "teacher-0-only") {
    if (n_teachers > 0) s[0] = 1.0;
  } else if (mode == "uniform") {
    std::fill(s.begin(), s.end(), 1.0);
  } else if (mode.rfind("strengths:", 0) == 0) {
    std::stringstream ss(mode.substr(10));
    std::string tok;
    std::size_t i = 0;
    while (std::getline(ss, tok, ',')) {
      require(i < n_teachers, ErrorKind::InvalidArgument, "more strengths than teachers");
      s[i++] = std::stod(tok);
    }
    require(i == n_teachers, ErrorKind::InvalidArgument, "strengths must list one value per teacher");
  } else {
    fail(ErrorKind::InvalidArgument, "unknown planted mode '" + mode + "'");
  }
  return s;
}

namespace detail {

inline std::vector<double> normal_vector(Rng& rng, std::size_t n, double sd = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = sd * standard_normal(rng);
  return v;
}

struct Projection {
  std::size_t rows = 0, cols = 0;
  std::vector<double> w;  // rows x cols

  std::vector<float> apply(const std::vector<double>& u, double gain, double noise, Rng& rng) const {
    std::vector<float> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * u[c];
      out[r] = static_cast<float>(gain * acc + noise * standard_normal(rng));
    }
    return out;
  }
};

inline std::string pad_id(const char* prefix, std::size_t i, std::size_t width = 4) {
  std::string num = std::to_string(i);
  if (num.size() < width) num.insert(0, width - num.size(), '0');
  return prefix + num;
}

}  // namespace detail

/// Deterministic synthetic FeatureSet; same (config, seed) gives a bit-identical result.
inline FeatureSet synth_teacher_set(const SynthConfig& cfg, std::uint64_t seed) {
  require(!cfg.teachers.empty(), ErrorKind::InvalidArgument, "synthetic set needs at least one teacher");
  require(cfg.samples > 0, ErrorKind::InvalidArgument, "synthetic set needs at least one sample");
  require(cfg.latent_dim >= 3 && cfg.latent_dim % 3 == 0, ErrorKind::InvalidArgument,
          "latent_dim must be a positive multiple of 3");
  require(cfg.tiles_min >= 1 && cfg.tiles_max >= cfg.tiles_min, ErrorKind::InvalidArgument,
          "invalid tiles per slide range");
  require(cfg.task != TaskKind::Classification || cfg.num_classes >= 2, ErrorKind::InvalidArgument,
          "classification needs >= 2 classes");
  require(cfg.task != TaskKind::Expression || cfg.num_genes >= 1, ErrorKind::InvalidArgument,
          "expression needs >= 1 gene");
  validate_teachers(cfg.teachers);

  const std::size_t n_teachers = cfg.teachers.size();
  const std::size_t k = cfg.latent_dim;
  const std::size_t block = k / 3;
  const std::vector<double> strengths = planted_strengths(cfg.planted, n_teachers);

  // Fixed encoder projections, one per (teacher, scale).
  std::vector<std::array<detail::Projection, 3>> proj(n_teachers);
  for (std::size_t i = 0; i < n_teachers; ++i) {
    for (Scale s : kAllScales) {
      Rng rng = make_rng(derive_seed(seed, "proj/" + cfg.teachers[i].name + "/" + std::string(to_string(s))));
      auto& p = proj[i][index_of(s)];
      p.rows = cfg.teachers[i].native_dim;
      p.cols = k;
      p.w = detail::normal_vector(rng, p.rows * k, 1.0 / std::sqrt(static_cast<double>(block)));
    }
  }

  // Label model.
  Rng label_rng = make_rng(derive_seed(seed, "labels"));
  const std::size_t outputs = cfg.task == TaskKind::Classification ? cfg.num_classes
                              : cfg.task == TaskKind::Expression   ? cfg.num_genes
                                                                   : 1;
  std::vector<std::vector<double>> label_w(outputs);
  for (auto& w : label_w) w = detail::normal_vector(label_rng, k, 1.0 / std::sqrt(static_cast<double>(k)));

  auto scale_view = [&](const std::vector<double>& u, Scale s) {
    std::vector<double> v(k, 0.0);
    const std::size_t own = index_of(s);
    for (std::size_t b = 0; b < 3; ++b) {
      const double g = b == own ? 1.0 : cfg.scale_mix;
      for (std::size_t j = 0; j < block; ++j) v[b * block + j] = g * u[b * block + j];
    }
    return v;
  };

  auto respond = [&](const std::vector<double>& u) {
    std::vector<double> z(outputs, 0.0);
    for (std::size_t o = 0; o < outputs; ++o) {
      for (std::size_t j = 0; j < k; ++j) {
        const double x = cfg.nonlinear ? std::tanh(1.5 * u[j]) * 1.5 : u[j];
        z[o] += label_w[o][j] * x;
      }
    }
    return z;
  };

  FeatureSet fs;
  fs.teachers = cfg.teachers;
  fs.manifest.task = cfg.task;
  fs.manifest.seed = seed;
  fs.manifest.planted_mode = cfg.planted;
  fs.manifest.planted_strengths = strengths;
  fs.manifest.provenance = "synthetic";
  if (cfg.task == TaskKind::Classification) fs.manifest.num_classes = cfg.num_classes;
  if (cfg.task == TaskKind::Expression) {
    for (std::size_t g = 0; g < cfg.num_genes; ++g) fs.manifest.gene_names.push_back(detail::pad_id("G", g, 3));
  }
  fs.manifest.extra["latent_dim"] = std::to_string(cfg.latent_dim);
  fs.manifest.extra["nonlinear"] = cfg.nonlinear ? "1" : "0";
  for (const TeacherSpec& t : cfg.teachers) {
    const ExtractionDepths d = extraction_depths(t.depth);
    fs.manifest.extra["teacher." + t.name + ".blocks"] =
        std::to_string(d.low) + "," + std::to_string(d.mid) + "," + std::to_string(d.high);
  }

  // Patient assignment per unit (sample or slide).
  const std::size_t units = cfg.samples;
  const std::size_t n_patients = cfg.patients > 0 ? cfg.patients : std::max<std::size_t>(1, units / 5);
  std::vector<std::string> unit_patient(units);
  {
    Rng rng = make_rng(derive_seed(seed, "patients"));
    std::vector<std::size_t> order(units);
    for (std::size_t i = 0; i < units; ++i) order[i] = i;
    shuffle(order, rng);
    const std::size_t n_unassigned = std::min(cfg.unassigned, units);
    for (std::size_t r = 0; r < units; ++r) {
      const std::size_t u = order[r];
      unit_patient[u] = r < n_unassigned ? std::string(kUnassigned)
                                         : detail::pad_id("P", (r - n_unassigned) % n_patients, 3);
    }
  }

  Rng data_rng = make_rng(derive_seed(seed, "data"));
  for (std::size_t unit = 0; unit < units; ++unit) {
    const std::vector<double> u = detail::normal_vector(data_rng, k);
    const std::vector<double> response = respond(u);

    TaskLabel label;
    switch (cfg.task) {
      case TaskKind::Classification: {
        const auto it = std::max_element(response.begin(), response.end());
        label = ClassLabel{static_cast<std::uint32_t>(it - response.begin())};
        break;
      }
      case TaskKind::Expression: {
        ExpressionLabel e;
        for (double z : response) {
          const double mean = std::exp(0.5 + cfg.signal * z);
          e.values.push_back(static_cast<float>(std::max(0.0, mean * (1.0 + 0.1 * standard_normal(data_rng)))));
        }
        label = e;
        break;
      }
      case TaskKind::Survival: {
        const double rate = 0.1 * std::exp(cfg.signal * response[0]);
        const double t_event = -std::log(std::max(1e-12, uniform(data_rng, 0.0, 1.0))) / rate;
        const double t_cens =
            cfg.censor_rate > 0.0 ? -std::log(std::max(1e-12, uniform(data_rng, 0.0, 1.0))) / (0.1 * cfg.censor_rate)
                                  : INFINITY;
        const double t = std::max(1e-3, std::min(t_event, t_cens));
        label = SurvivalLabel{static_cast<float>(t), static_cast<std::uint8_t>(t_event <= t_cens ? 1 : 0)};
        break;
      }
    }

    const bool bag = cfg.task == TaskKind::Survival;
    const std::size_t n_tiles =
        bag ? cfg.tiles_min + uniform_index(data_rng, cfg.tiles_max - cfg.tiles_min + 1) : 1;
    const std::string slide_id = detail::pad_id("S", unit);
    for (std::size_t tile = 0; tile < n_tiles; ++tile) {
      std::vector<double> ut = u;
      if (bag)
        for (double& x : ut) x += cfg.tile_jitter * standard_normal(data_rng);
      SampleRecord rec;
      rec.id = bag ? slide_id + "_T" + std::to_string(tile) : detail::pad_id("X", unit);
      rec.label = label;
      rec.features.resize(n_teachers);
      for (std::size_t i = 0; i < n_teachers; ++i) {
        for (Scale s : kAllScales) {
          rec.features[i].at(s) = proj[i][index_of(s)].apply(scale_view(ut, s), strengths[i], cfg.noise, data_rng);
        }
      }
      if (unit_patient[unit] != kUnassigned) fs.manifest.patient_of[rec.id] = unit_patient[unit];
      if (bag) fs.manifest.slide_of[rec.id] = slide_id;
      fs.samples.push_back(std::move(rec));
    }
  }
  return fs;
}

}  // namespace shazam
