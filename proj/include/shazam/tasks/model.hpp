#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "shazam/core/autodiff.hpp"
#include "shazam/core/error.hpp"
#include "shazam/distill/distillation.hpp"
#include "shazam/feature_store/types.hpp"
#include "shazam/fusion/fusion.hpp"
#include "shazam/mil/abmil.hpp"
#include "shazam/tasks/heads.hpp"
#include "shazam/tasks/losses.hpp"
#include "shazam/tasks/preprocess.hpp"

namespace shazam::tasks {

struct ModelConfig {
  TaskKind task = TaskKind::Classification;
  fusion::FusionConfig fusion;
  HeadConfig head;
  /// Slide-level bags pooled by ABMIL; otherwise one sample per prediction.
  bool bags = false;
  std::size_t abmil_hidden = 128;
  ScaleSet scales = ScaleSet::all();
  bool use_moe = true;
  bool distill = true;
  distill::DistillConfig distill_cfg;
  double ridge_l2 = 1e-4;
  std::size_t survival_bins = 4;
  /// Index of a single teacher whose HIGH features feed the head directly.
  std::optional<std::size_t> baseline_teacher;
};

struct ShazamModel {
  ModelConfig config;
  fusion::FusionState fusion;
  std::optional<mil::AbmilHeads> abmil;
  std::optional<mil::AbmilHead> baseline_abmil;
  TaskHead head;
  std::vector<double> survival_cuts;

  ShazamModel() = default;
  explicit ShazamModel(ModelConfig c) : config(std::move(c)) {
    const auto& f = config.fusion;
    fusion::validate(f);
    distill::validate(config.distill_cfg);
    require(!config.scales.empty(), ErrorKind::InvalidArgument, "no active scales");
    std::size_t in = 0;
    if (config.baseline_teacher) {
      require(*config.baseline_teacher < f.num_teachers(), ErrorKind::InvalidArgument, "baseline teacher out of range");
      const auto native = static_cast<Eigen::Index>(f.native_dims[*config.baseline_teacher]);
      in = static_cast<std::size_t>(native);
      if (config.bags)
        baseline_abmil = mil::AbmilHead("abmil.baseline", native, static_cast<Eigen::Index>(config.abmil_hidden), f.seed);
    } else {
      fusion = fusion::FusionState(f);
      if (config.bags)
        abmil = mil::AbmilHeads(static_cast<Eigen::Index>(f.dim), static_cast<Eigen::Index>(config.abmil_hidden), f.seed);
      in = config.scales.size() * f.dim;
    }
    head = TaskHead(config.head, in, f.seed);
  }

  bool is_baseline() const { return config.baseline_teacher.has_value(); }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> p;
    if (!is_baseline()) fusion.collect(p);
    if (abmil) abmil->collect(p);
    if (baseline_abmil) baseline_abmil->collect(p);
    head.collect(p);
    return p;
  }
};

/// One prediction unit: a single tile, or a slide bag of tiles.
struct Unit {
  std::string id;
  std::string patient;
  std::vector<std::size_t> tiles;
  TaskLabel label;
};

inline std::vector<Unit> make_units(const FeatureSet& fs, const std::vector<std::size_t>& samples, bool bags) {
  std::vector<Unit> out;
  if (!bags) {
    for (std::size_t i : samples) {
      const SampleRecord& s = fs.samples.at(i);
      out.push_back({s.id, fs.manifest.patient(s.id), {i}, s.label});
    }
    return out;
  }
  std::vector<bool> wanted(fs.samples.size(), false);
  for (std::size_t i : samples) wanted.at(i) = true;
  for (const SlideBag& b : make_bags(fs)) {
    Unit u{b.slide_id, b.patient_id, {}, b.label};
    for (std::size_t t : b.tiles)
      if (wanted[t]) u.tiles.push_back(t);
    if (!u.tiles.empty()) out.push_back(std::move(u));
  }
  return out;
}

struct ForwardResult {
  ad::Var output;
  std::optional<ad::Var> distill;
  std::map<distill::TermKey, double> distill_terms;
  std::array<std::vector<double>, 3> gates;
  /// [scale][teacher] attention over the bag tiles, bag mode only.
  std::array<std::vector<std::vector<double>>, 3> attention;
};

inline Matrix teacher_matrix(const FeatureSet& fs, const std::vector<std::size_t>& tiles, std::size_t teacher, Scale s) {
  const auto dim = static_cast<Eigen::Index>(fs.teachers.at(teacher).native_dim);
  Matrix m(static_cast<Eigen::Index>(tiles.size()), dim);
  for (std::size_t r = 0; r < tiles.size(); ++r) {
    const auto& v = fs.samples.at(tiles[r]).features.at(teacher).at(s);
    require(static_cast<Eigen::Index>(v.size()) == dim, ErrorKind::InconsistentContainer, "feature width mismatch");
    for (Eigen::Index c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(r), c) = v[static_cast<std::size_t>(c)];
  }
  require(m.allFinite(), ErrorKind::NumericError, "non-finite teacher features");
  return m;
}

inline void check_teachers(const ShazamModel& model, const FeatureSet& fs) {
  const auto& names = model.config.fusion.teacher_names;
  require(fs.teachers.size() == names.size(), ErrorKind::InvalidArgument, "teacher count differs from the model");
  for (std::size_t i = 0; i < names.size(); ++i) {
    require(fs.teachers[i].name == names[i], ErrorKind::InvalidArgument,
            "teacher order differs from the model: expected " + names[i] + ", got " + fs.teachers[i].name);
    require(fs.teachers[i].native_dim == model.config.fusion.native_dims[i], ErrorKind::InvalidArgument,
            "native dim differs for teacher " + names[i]);
  }
}

/// `dropout_rng` null means evaluation mode.
inline ForwardResult forward(ad::Tape& tape, ShazamModel& model, const FeatureSet& fs, const Unit& unit,
                             Rng* dropout_rng = nullptr) {
  const ModelConfig& c = model.config;
  require(!unit.tiles.empty(), ErrorKind::InvalidArgument, "empty unit " + unit.id);
  require(c.bags || unit.tiles.size() == 1, ErrorKind::InvalidArgument, "tile model given a bag");
  ForwardResult out;
  if (model.is_baseline()) {
    const std::size_t j = *c.baseline_teacher;
    ad::Var x = tape.constant(teacher_matrix(fs, unit.tiles, j, Scale::High));
    if (c.bags) {
      mil::Pooled p = mil::abmil_pool(tape, *model.baseline_abmil, x);
      out.attention[index_of(Scale::High)] = {to_vector(p.weights.value())};
      x = p.slide;
    }
    out.output = model.head(tape, x, dropout_rng);
    return out;
  }

  const std::size_t n = model.fusion.num_teachers();
  std::array<std::vector<ad::Var>, 3> aligned;
  for (Scale s : c.scales.list()) {
    for (std::size_t i = 0; i < n; ++i) {
      ad::Var x = tape.constant(teacher_matrix(fs, unit.tiles, i, s));
      ad::Var p = model.fusion.projections.at(i, s)(tape, x);
      if (c.bags) {
        mil::Pooled pooled = mil::abmil_pool(tape, model.abmil->at(s), p);
        out.attention[index_of(s)].push_back(to_vector(pooled.weights.value()));
        p = pooled.slide;
      }
      aligned[index_of(s)].push_back(p);
    }
  }
  fusion::FusionOutput fo = fusion::fuse_scales(tape, model.fusion, aligned, c.scales, c.use_moe);
  for (Scale s : c.scales.list()) out.gates[index_of(s)] = to_vector(fo.scales[index_of(s)]->gate.value());
  out.output = model.head(tape, fo.task_input, dropout_rng);
  if (c.distill) {
    std::array<std::optional<ad::Var>, 3> z;
    std::array<std::vector<ad::Var>, 3> targets;
    for (Scale s : c.scales.list()) {
      z[index_of(s)] = fo.scales[index_of(s)]->z;
      targets[index_of(s)] = fo.scales[index_of(s)]->targets;
    }
    distill::GraphDistill gd = distill::distill_total(z, targets, c.distill_cfg);
    out.distill = gd.total;
    out.distill_terms = std::move(gd.terms);
  }
  return out;
}

inline std::size_t output_width(TaskKind kind, const FeatureSet& fs, std::size_t survival_bins) {
  switch (kind) {
    case TaskKind::Classification:
      return fs.manifest.num_classes;
    case TaskKind::Expression:
      return fs.manifest.gene_names.size();
    case TaskKind::Survival:
      return survival_bins;
  }
  return 1;
}

/// Task loss for one unit. Expression adds the ridge penalty on head weights.
inline ad::Var task_loss(ad::Tape& tape, ShazamModel& model, const ad::Var& output, const TaskLabel& label) {
  return std::visit(
      [&](const auto& l) -> ad::Var {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, ClassLabel>) {
          return cross_entropy(output, l.index);
        } else if constexpr (std::is_same_v<L, ExpressionLabel>) {
          ad::Var loss = mse(output, row_matrix(std::span<const float>(l.values)));
          if (model.config.ridge_l2 > 0.0) {
            std::vector<ad::Var> w;
            for (Linear& layer : model.head.layers) w.push_back(ad::sum_squares(tape.param(layer.weight)));
            loss = ad::add(loss, ad::scale(ad::mean_of(w), model.config.ridge_l2 * static_cast<double>(w.size())));
          }
          return loss;
        } else {
          require(!model.survival_cuts.empty() || model.config.survival_bins == 1, ErrorKind::InvalidArgument,
                  "survival bins are not fitted");
          return nll_survival_loss(output, assign_bin(model.survival_cuts, l.time), l.event != 0);
        }
      },
      label);
}

}  // namespace shazam::tasks
