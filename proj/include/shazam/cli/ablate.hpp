#pragma once

#include <atomic>
#include <exception>
#include <filesystem>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "shazam/cli/commands.hpp"

namespace shazam::cli {

enum class AblationKind { TeacherRemoval, ScaleCombo, MoeSwitch };

inline AblationKind parse_ablation_kind(const std::string& s) {
  if (s == "teacher_removal" || s == "teacher-removal") return AblationKind::TeacherRemoval;
  if (s == "scale_combo" || s == "scale-combo") return AblationKind::ScaleCombo;
  if (s == "moe_switch" || s == "moe-switch") return AblationKind::MoeSwitch;
  fail(ErrorKind::InvalidArgument, "unknown ablation kind '" + s + "' (teacher_removal, scale_combo, moe_switch)");
}

inline std::string to_string(AblationKind k) {
  switch (k) {
    case AblationKind::TeacherRemoval: return "teacher_removal";
    case AblationKind::ScaleCombo: return "scale_combo";
    case AblationKind::MoeSwitch: return "moe_switch";
  }
  return "";
}

struct AblationConfig {
  std::string name;
  std::vector<std::size_t> teachers;  // indices into the full teacher list
  ScaleSet scales = ScaleSet::all();
  bool use_moe = true;
};

struct AblationPlan {
  AblationKind kind = AblationKind::TeacherRemoval;
  std::vector<AblationConfig> schedule;
  std::vector<double> standalone;  // teacher_removal only
};

/// Mean-over-tiles features of one teacher at one scale, one row per unit.
inline Eigen::MatrixXd unit_features(const FeatureSet& fs, const std::vector<tasks::Unit>& units, std::size_t teacher, Scale s) {
  const auto dim = static_cast<Eigen::Index>(fs.samples.front().features.at(teacher).at(s).size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(units.size()), dim + 1);
  for (std::size_t u = 0; u < units.size(); ++u) {
    const Matrix m = tasks::teacher_matrix(fs, units[u].tiles, teacher, s);
    x.row(static_cast<Eigen::Index>(u)).head(dim) = m.colwise().mean();
    x(static_cast<Eigen::Index>(u), dim) = 1.0;
  }
  return x;
}

/// Standalone score of a teacher: closed-form ridge on its high-level features, scored with the
/// task's primary metric on the held-out fold.
inline double ridge_probe_score(const FeatureSet& fs, std::size_t teacher, const std::vector<std::size_t>& train,
                                const std::vector<std::size_t>& test, bool bags, double lambda = 1.0) {
  const TaskKind kind = fs.manifest.task;
  const auto tr = tasks::make_units(fs, train, bags);
  const auto te = tasks::make_units(fs, test, bags);
  auto targets = [&](const std::vector<tasks::Unit>& units) {
    const Eigen::Index w = kind == TaskKind::Classification ? fs.manifest.num_classes
                           : kind == TaskKind::Expression   ? static_cast<Eigen::Index>(fs.manifest.gene_names.size())
                                                            : 1;
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(units.size()), w);
    for (std::size_t u = 0; u < units.size(); ++u) {
      const auto r = static_cast<Eigen::Index>(u);
      if (const auto* c = std::get_if<ClassLabel>(&units[u].label)) y(r, c->index) = 1.0;
      if (const auto* e = std::get_if<ExpressionLabel>(&units[u].label))
        for (Eigen::Index g = 0; g < w; ++g) y(r, g) = e->values[static_cast<std::size_t>(g)];
      if (const auto* s = std::get_if<SurvivalLabel>(&units[u].label)) y(r, 0) = -std::log(std::max(1e-6f, s->time));
    }
    return y;
  };
  const Eigen::MatrixXd x = unit_features(fs, tr, teacher, Scale::High);
  Eigen::MatrixXd reg = lambda * Eigen::MatrixXd::Identity(x.cols(), x.cols());
  reg(x.cols() - 1, x.cols() - 1) = 0.0;
  const Eigen::MatrixXd beta = (x.transpose() * x + reg).ldlt().solve(x.transpose() * targets(tr));
  const Eigen::MatrixXd pred = unit_features(fs, te, teacher, Scale::High) * beta;
  std::vector<tasks::Prediction> preds;
  for (std::size_t u = 0; u < te.size(); ++u) {
    tasks::Prediction p;
    p.id = te[u].id;
    p.label = te[u].label;
    const auto row = pred.row(static_cast<Eigen::Index>(u));
    if (kind == TaskKind::Survival) {
      // A single hazard logit whose survival-curve risk is monotone in the predicted -log time.
      p.output = {row(0)};
    } else {
      p.output.resize(static_cast<std::size_t>(row.size()));
      for (Eigen::Index k = 0; k < row.size(); ++k) p.output[static_cast<std::size_t>(k)] = row(k);
    }
    preds.push_back(std::move(p));
  }
  std::vector<std::size_t> all(preds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return tasks::task_metrics(kind, preds, all, fs.manifest.num_classes, false).front().second;
}

/// Builds the configuration schedule. Teacher removal: all teachers, each single removal, then
/// cumulative removals in descending standalone-score order until one teacher remains.
inline AblationPlan make_plan(AblationKind kind, const std::vector<TeacherSpec>& teachers, const std::vector<double>& standalone) {
  AblationPlan plan{kind, {}, standalone};
  std::vector<std::size_t> all(teachers.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  switch (kind) {
    case AblationKind::TeacherRemoval: {
      require(teachers.size() >= 2, ErrorKind::InvalidArgument, "teacher removal needs at least 2 teachers");
      require(standalone.size() == teachers.size(), ErrorKind::InvalidArgument, "one standalone score per teacher required");
      plan.schedule.push_back({"all", all, ScaleSet::all(), true});
      auto without = [&](const std::vector<std::size_t>& removed) {
        AblationConfig c{"w/o ", {}, ScaleSet::all(), true};
        for (std::size_t k = 0; k < removed.size(); ++k) c.name += (k ? "+" : "") + teachers[removed[k]].name;
        for (std::size_t i : all)
          if (std::find(removed.begin(), removed.end(), i) == removed.end()) c.teachers.push_back(i);
        return c;
      };
      for (std::size_t i : all) plan.schedule.push_back(without({i}));
      std::vector<std::size_t> order = all;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return standalone[a] > standalone[b]; });
      for (std::size_t k = 2; k < teachers.size(); ++k)
        plan.schedule.push_back(without(std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k))));
      break;
    }
    case AblationKind::ScaleCombo: {
      const char* subsets[] = {"low", "mid", "high", "low,mid", "low,high", "mid,high", "low,mid,high"};
      for (const char* s : subsets) {
        std::string name = s;
        std::replace(name.begin(), name.end(), ',', '+');
        plan.schedule.push_back({name, all, ScaleSet::parse(s), true});
      }
      break;
    }
    case AblationKind::MoeSwitch:
      plan.schedule.push_back({"moe_on", all, ScaleSet::all(), true});
      plan.schedule.push_back({"moe_off", all, ScaleSet::all(), false});
      break;
  }
  return plan;
}

struct AblateOptions {
  fs_::path data;
  std::string kind;
  fs_::path out_dir;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::size_t repeats = 1;
  std::size_t max_folds = 0;  // 0 = every fold
  std::optional<fs_::path> config;
};

struct AblationRun {
  std::size_t config = 0;
  std::size_t repeat = 0;
  std::size_t fold = 0;
  std::vector<std::pair<std::string, double>> metrics;
};

struct AblationSummaryRow {
  std::string config;
  std::string metric;
  metrics::MetricReport report;  // mean over runs with a bootstrap CI over runs
};

struct AblationOutcome {
  AblationPlan plan;
  std::string splits_hash;
  std::vector<AblationRun> runs;
  std::vector<AblationSummaryRow> summary;

  /// Mean of `metric` over all runs of the named configuration.
  double mean(const std::string& config, const std::string& metric) const {
    for (const auto& r : summary)
      if (r.config == config && r.metric == metric) return r.report.point;
    fail(ErrorKind::InvalidArgument, "no summary for " + config + " / " + metric);
  }
};

inline std::string slug(const std::string& s) {
  std::string o;
  for (char c : s) o += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return o;
}

/// Runs every (configuration, repeat, fold) with identical splits and per-repeat seeds.
inline AblationOutcome run_ablation(const FeatureSet& data, AblationKind kind, const RunSettings& base, std::size_t repeats,
                                    std::size_t max_folds, std::size_t jobs) {
  require(repeats >= 1, ErrorKind::InvalidArgument, "repeats must be >= 1");
  FeatureSet fs = data;
  prepare_labels(fs, base);
  const auto folds = patient_split(fs, base.folds, base.split_seed);
  const std::size_t n_folds = max_folds == 0 ? folds.size() : std::min(max_folds, folds.size());
  AblationOutcome out;
  out.splits_hash = splits_hash(fs, folds);

  std::vector<double> standalone(fs.teachers.size(), 0.0);
  if (kind == AblationKind::TeacherRemoval)
    for (std::size_t i = 0; i < fs.teachers.size(); ++i)
      standalone[i] = fs.teachers[i].standalone_score
                          ? *fs.teachers[i].standalone_score
                          : ridge_probe_score(fs, i, folds[0].train, folds[0].test, base.model.task == TaskKind::Survival);
  out.plan = make_plan(kind, fs.teachers, standalone);

  std::vector<FeatureSet> views;
  for (const auto& c : out.plan.schedule) views.push_back(select_teachers(fs, c.teachers));

  for (std::size_t c = 0; c < out.plan.schedule.size(); ++c)
    for (std::size_t r = 0; r < repeats; ++r)
      for (std::size_t f = 0; f < n_folds; ++f) out.runs.push_back({c, r, f, {}});

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (std::size_t j; (j = next++) < out.runs.size();) {
      try {
        AblationRun& run = out.runs[j];
        const AblationConfig& cfg = out.plan.schedule[run.config];
        RunSettings r = base;
        const std::uint64_t seed = derive_seed(base.train.seed, "repeat" + std::to_string(run.repeat));
        r.train.seed = seed;
        r.model.fusion.seed = seed;
        r.model.scales = cfg.scales;
        r.model.use_moe = cfg.use_moe;
        r.log_normalize = false;  // labels already prepared above
        const FeatureSet& view = views[run.config];
        tasks::ShazamModel model = build_model(view, r);
        tasks::train(model, view, folds[run.fold].train, r.train);
        const auto preds = tasks::predict(model, view, folds[run.fold].test);
        std::vector<std::size_t> all(preds.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        run.metrics = tasks::task_metrics(r.model.task, preds, all, view.manifest.num_classes, false);
        log::info("ablation ", cfg.name, " repeat ", run.repeat, " fold ", run.fold, ": ", run.metrics.front().first, "=",
                  run.metrics.front().second);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        next = out.runs.size();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::max<std::size_t>(1, jobs); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  for (std::size_t c = 0; c < out.plan.schedule.size(); ++c) {
    std::vector<const AblationRun*> mine;
    for (const auto& run : out.runs)
      if (run.config == c) mine.push_back(&run);
    for (std::size_t m = 0; m < mine.front()->metrics.size(); ++m) {
      const std::string metric = mine.front()->metrics[m].first;
      auto stat = [&](const std::vector<std::size_t>& idx) {
        double s = 0.0;
        for (std::size_t i : idx) s += mine[i]->metrics[m].second;
        return s / static_cast<double>(idx.size());
      };
      const std::uint64_t s = derive_seed(base.train.seed, out.plan.schedule[c].name + "/" + metric);
      metrics::MetricReport rep;
      if (mine.size() >= 2) {
        rep = metrics::bootstrap_ci(mine.size(), stat, 1000, 0.95, s, metric);
      } else {
        const double v = mine.front()->metrics[m].second;
        rep = {metric, v, v, v, 1, 0, s};
      }
      out.summary.push_back({out.plan.schedule[c].name, metric, rep});
    }
  }
  return out;
}

inline AblationOutcome cmd_ablate(const AblateOptions& o) {
  const AblationKind kind = parse_ablation_kind(o.kind);
  const fs_::path data = resolve_data_path(o.data);
  const FeatureSet fs = read_feature_set(data);
  Config c = o.config ? Config::load(*o.config) : Config();
  const std::string preset_name = c.get("preset").value_or(tasks::default_preset(fs.manifest.task));
  RunSettings base = run_settings(c, fs.manifest.task, preset_name, o.seed);
  warn_unused(c);
  tasks::validate(base.train);
  AblationOutcome out = run_ablation(fs, kind, base, o.repeats, o.max_folds, o.jobs);

  fs_::create_directories(o.out_dir);
  const auto& names = fs.teachers;
  for (std::size_t c_idx = 0; c_idx < out.plan.schedule.size(); ++c_idx) {
    const AblationConfig& cfg = out.plan.schedule[c_idx];
    std::ostringstream csv;
    csv.precision(10);
    csv << "kind,config,repeat,fold,metric,value,splits_hash\n";
    for (const auto& run : out.runs)
      if (run.config == c_idx)
        for (const auto& [m, v] : run.metrics)
          csv << to_string(kind) << ',' << cfg.name << ',' << run.repeat << ',' << run.fold << ',' << m << ',' << v << ','
              << out.splits_hash << '\n';
    write_text(o.out_dir / (std::to_string(c_idx) + "_" + slug(cfg.name) + ".csv"), csv.str());
  }
  std::ostringstream sum;
  sum.precision(10);
  sum << "kind,config,teachers,scales,moe,metric,value,ci_low,ci_high,runs,splits_hash\n";
  for (const auto& row : out.summary) {
    const auto& cfg = *std::find_if(out.plan.schedule.begin(), out.plan.schedule.end(),
                                    [&](const AblationConfig& a) { return a.name == row.config; });
    std::string teachers;
    for (std::size_t i : cfg.teachers) teachers += (teachers.empty() ? "" : "+") + names[i].name;
    std::string scales = cfg.scales.to_string();
    std::replace(scales.begin(), scales.end(), ',', '+');
    sum << to_string(kind) << ',' << row.config << ',' << teachers << ',' << scales << ',' << (cfg.use_moe ? "on" : "off")
        << ',' << row.metric << ',' << row.report.point << ',' << row.report.ci_low << ',' << row.report.ci_high << ','
        << row.report.n << ',' << out.splits_hash << '\n';
  }
  write_text(o.out_dir / "summary.csv", sum.str());
  if (kind == AblationKind::TeacherRemoval) {
    std::ostringstream s;
    s.precision(10);
    s << "teacher,standalone_score\n";
    for (std::size_t i = 0; i < names.size(); ++i) s << names[i].name << ',' << out.plan.standalone[i] << '\n';
    write_text(o.out_dir / "standalone.csv", s.str());
  }
  return out;
}

}  // namespace shazam::cli
