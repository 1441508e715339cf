#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "shazam/cli/ablate.hpp"
#include "shazam/cli/commands.hpp"

namespace shazam::testkit {

namespace fs_ = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs_::temp_directory_path() / ("shazam_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs_::remove_all(path_);
    fs_::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs_::remove_all(path_, ec);
  }
  const fs_::path& path() const { return path_; }
  fs_::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs_::path path_;
};

inline fs_::path source_dir() { return fs_::path(SHAZAM_SOURCE_DIR); }

inline std::vector<TeacherSpec> teachers(std::vector<std::uint32_t> dims, std::uint32_t depth = 12) {
  std::vector<TeacherSpec> t;
  for (std::size_t i = 0; i < dims.size(); ++i) t.push_back({"t" + std::to_string(i), dims[i], depth, {}});
  return t;
}

inline SynthConfig small_synth(TaskKind task, std::vector<std::uint32_t> dims, std::size_t samples) {
  SynthConfig c;
  c.task = task;
  c.teachers = teachers(std::move(dims));
  c.samples = samples;
  c.tiles_min = 3;
  c.tiles_max = 5;
  return c;
}

/// Settings for a desk-size model: the given preset's optimizer with a small architecture.
inline cli::RunSettings small_run(TaskKind task, std::size_t dim, std::size_t layers, std::size_t epochs, std::uint64_t seed) {
  cli::RunSettings r = cli::run_settings(cli::Config(), task, tasks::default_preset(task), seed);
  r.model.fusion.dim = dim;
  r.model.fusion.heads = 2;
  r.model.fusion.layers = layers;
  r.model.abmil_hidden = 8;
  r.head_hidden = 16;
  r.train.epochs = epochs;
  r.train.batch = 32;
  r.train.lr = 3e-3;
  return r;
}

/// Frozen distillation targets per scale, keyed by teacher.
using Targets = std::array<std::vector<Matrix>, 3>;

struct Objective {
  double value = 0.0;
  Targets targets;
};

/// Rebuilds the training objective task + lambda * distill from the fusion pieces. With `frozen`
/// given, the distillation targets are those constants rather than the current projections.
inline Objective objective(ad::Tape& tape, tasks::ShazamModel& model, const FeatureSet& fs, const tasks::Unit& unit,
                           const std::optional<Targets>& frozen, ad::Var* out = nullptr) {
  const auto& c = model.config;
  const std::size_t n = model.fusion.num_teachers();
  std::array<std::vector<ad::Var>, 3> aligned;
  for (Scale s : c.scales.list())
    for (std::size_t i = 0; i < n; ++i) {
      ad::Var p = model.fusion.projections.at(i, s)(tape, tape.constant(tasks::teacher_matrix(fs, unit.tiles, i, s)));
      if (c.bags) p = mil::abmil_pool(tape, model.abmil->at(s), p).slide;
      aligned[index_of(s)].push_back(p);
    }
  fusion::FusionOutput fo = fusion::fuse_scales(tape, model.fusion, aligned, c.scales, c.use_moe);
  Objective o;
  std::array<std::optional<ad::Var>, 3> z;
  std::array<std::vector<ad::Var>, 3> targets;
  for (Scale s : c.scales.list()) {
    const auto k = index_of(s);
    z[k] = fo.scales[k]->z;
    for (std::size_t i = 0; i < n; ++i) {
      targets[k].push_back(frozen ? tape.constant((*frozen)[k][i]) : fo.scales[k]->targets[i]);
      o.targets[k].push_back(targets[k].back().value());
    }
  }
  ad::Var task = tasks::task_loss(tape, model, model.head(tape, fo.task_input, nullptr), unit.label);
  ad::Var total = ad::add(task, ad::scale(distill::distill_total(z, targets, c.distill_cfg).total, c.distill_cfg.lambda_distill));
  o.value = total.scalar();
  if (out) *out = total;
  return o;
}

struct GradCheck {
  std::size_t checked = 0;
  double worst_rel = 0.0;
  std::string worst_param;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares tape gradients with central differences for every entry of every parameter.
/// Relative error is |a - n| / max(|a|, |n|, floor); below the floor this is an absolute bound of tol * floor.
inline GradCheck check_gradients(tasks::ShazamModel& model, const FeatureSet& fs, const tasks::Unit& unit, double h = 1e-5,
                                 double floor = 1e-5) {
  Targets frozen;
  {
    ad::Tape tape;
    ad::Var total;
    frozen = objective(tape, model, fs, unit, std::nullopt, &total).targets;
    for (Parameter* p : model.parameters()) p->zero_grad();
    tape.backward(total);
  }
  GradCheck g;
  for (Parameter* p : model.parameters()) {
    const Matrix analytic = p->grad;
    for (Eigen::Index k = 0; k < p->value.size(); ++k) {
      double& x = p->value.data()[k];
      const double x0 = x;
      x = x0 + h;
      ad::Tape t1;
      const double up = objective(t1, model, fs, unit, frozen).value;
      x = x0 - h;
      ad::Tape t2;
      const double down = objective(t2, model, fs, unit, frozen).value;
      x = x0;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic.data()[k];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (rel > g.worst_rel) {
        g.worst_rel = rel;
        g.worst_param = p->name + "[" + std::to_string(k) + "]";
        g.worst_analytic = a;
        g.worst_numeric = numeric;
      }
      ++g.checked;
    }
  }
  return g;
}

inline tasks::ShazamModel gradient_model(TaskKind task, const FeatureSet& fs, std::size_t dim = 16, std::size_t layers = 2) {
  cli::RunSettings r = small_run(task, dim, layers, 1, 11);
  r.model.fusion.heads = 4;
  tasks::ShazamModel m = cli::build_model(fs, r);
  if (task == TaskKind::Survival) {
    m.survival_cuts = {1.0, 2.0, 3.0};
  }
  return m;
}

/// O(n^2) Harrell's C written independently of the library.
inline double brute_cindex(const std::vector<double>& t, const std::vector<int>& e, const std::vector<double>& r) {
  double conc = 0, comp = 0;
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (i == j) continue;
      if (e[i] == 1 && t[i] < t[j]) {
        comp += 1;
        conc += r[i] > r[j] ? 1.0 : r[i] == r[j] ? 0.5 : 0.0;
      }
    }
  return conc / comp;
}

/// One-sided (greater) signed-rank p by enumerating all 2^n sign patterns over average ranks.
inline double enumerate_wilcoxon_greater(const std::vector<double>& d) {
  std::vector<double> mag;
  for (double x : d) mag.push_back(std::abs(x));
  std::vector<double> rank(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    double less = 0, equal = 0;
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (mag[j] < mag[i]) less += 1;
      if (mag[j] == mag[i]) equal += 1;
    }
    rank[i] = less + (equal + 1) / 2.0;
  }
  double observed = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0) observed += rank[i];
  const std::size_t n = d.size();
  std::size_t at_least = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    double w = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) w += rank[i];
    if (w >= observed - 1e-9) ++at_least;
  }
  return static_cast<double>(at_least) / static_cast<double>(std::size_t{1} << n);
}

}  // namespace shazam::testkit
