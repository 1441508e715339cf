#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "shazam/cli/config.hpp"
#include "shazam/cli/pipeline.hpp"
#include "shazam/cli/svg.hpp"
#include "shazam/feature_store/import.hpp"
#include "shazam/metrics/ranking.hpp"
#include "shazam/tasks/checkpoint.hpp"

namespace shazam::cli {

namespace fs_ = std::filesystem;

inline void write_text(const fs_::path& path, const std::string& text) {
  if (path.has_parent_path()) fs_::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorKind::Io, "short write to " + path.string());
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

inline void warn_unused(const Config& c) {
  for (const std::string& k : c.unused()) log::warn("unused config key: ", k);
}

// ---------------------------------------------------------------- synth

struct SynthOptions {
  fs_::path config;
  fs_::path out;
  std::uint64_t seed = 0;
};

/// Synthesizes a teacher set, or imports one when the config names features_csv and labels_csv.
inline FeatureSet cmd_synth(const SynthOptions& o) {
  Config c = Config::load(o.config);
  FeatureSet fs;
  if (c.has("features_csv")) {
    ImportSpec spec;
    spec.task = parse_task_kind(c.required("task"));
    spec.teachers = parse_teachers(c.required("teachers"));
    spec.num_classes = static_cast<std::uint32_t>(c.count("num_classes", 0));
    if (auto g = c.get("genes")) spec.gene_names = detail::split(*g, ',');
    const fs_::path base = o.config.parent_path();
    auto rel = [&](const std::string& p) { return fs_::path(p).is_absolute() ? fs_::path(p) : base / p; };
    fs = import_feature_csv(spec, rel(c.required("features_csv")), rel(c.required("labels_csv")));
    fs.manifest.seed = o.seed;
  } else {
    fs = synth_teacher_set(synth_config(c), o.seed);
  }
  warn_unused(c);
  if (o.out.has_parent_path()) fs_::create_directories(o.out.parent_path());
  write_feature_set(fs, o.out);
  log::info("wrote ", fs.samples.size(), " samples x ", fs.teachers.size(), " teachers to ", o.out.string());
  return fs;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  fs_::path data;
  std::string task;
  std::string preset;
  fs_::path out;
  std::uint64_t seed = 0;
  std::optional<fs_::path> config;
  std::optional<double> lambda_distill;
  bool no_moe = false;
  std::optional<std::string> scales;
  std::optional<std::size_t> fold;
  std::optional<std::size_t> folds;
  std::optional<std::string> baseline;
};

inline std::size_t teacher_index(const FeatureSet& fs, const std::string& name) {
  for (std::size_t i = 0; i < fs.teachers.size(); ++i)
    if (fs.teachers[i].name == name) return i;
  fail(ErrorKind::InvalidArgument, "unknown teacher '" + name + "'");
}

/// Settings for a train run: preset, then config file, then flags.
inline RunSettings train_settings(const TrainOptions& o, const FeatureSet& fs) {
  const TaskKind task = parse_task_kind(o.task);
  require(task == fs.manifest.task, ErrorKind::InvalidArgument,
          "data task is " + std::string(to_string(fs.manifest.task)) + " but --task is " + o.task);
  Config c = o.config ? Config::load(*o.config) : Config();
  const std::string preset_name = o.preset.empty() ? c.get("preset").value_or(tasks::default_preset(task)) : o.preset;
  RunSettings r = run_settings(c, task, preset_name, o.seed);
  warn_unused(c);
  if (o.lambda_distill) r.model.distill_cfg.lambda_distill = *o.lambda_distill;
  if (o.no_moe) r.model.use_moe = false;
  if (o.scales) r.model.scales = ScaleSet::parse(*o.scales);
  if (o.folds) r.folds = *o.folds;
  if (o.fold) r.fold = *o.fold;
  if (o.baseline) r.model.baseline_teacher = teacher_index(fs, *o.baseline);
  tasks::validate(r.train);
  return r;
}

inline std::string run_file(const fs_::path& data, const RunSettings& r, const std::string& splits) {
  std::ostringstream m;
  m << "data=" << fs_::absolute(data).lexically_normal().string() << '\n';
  m << "task=" << to_string(r.model.task) << "\npreset=" << r.train.preset << '\n';
  m << "seed=" << r.train.seed << "\nsplit_seed=" << r.split_seed << '\n';
  m << "folds=" << r.folds << "\nfold=" << r.fold << "\nlog_normalize=" << (r.log_normalize ? "true" : "false") << '\n';
  m << "epochs=" << r.train.epochs << "\nbatch=" << r.train.batch << "\nlr=" << fmt(r.train.lr) << '\n';
  m << "weight_decay=" << fmt(r.train.weight_decay) << "\nschedule=" << tasks::to_string(r.train.schedule) << '\n';
  m << "splits_hash=" << splits << '\n';
  return m.str();
}

inline std::string gates_csv(const std::vector<tasks::Prediction>& preds, const std::vector<std::string>& teachers) {
  std::ostringstream o;
  o << "id,scale,teacher,gate\n";
  o.precision(10);
  for (const auto& p : preds)
    for (Scale s : kAllScales) {
      const auto& g = p.gates[index_of(s)];
      for (std::size_t i = 0; i < g.size(); ++i) o << p.id << ',' << to_string(s) << ',' << teachers[i] << ',' << g[i] << '\n';
    }
  return o.str();
}

struct TrainOutcome {
  RunSettings settings;
  tasks::ShazamModel model;
  tasks::TrainResult train;
  std::vector<tasks::Prediction> test;
  std::string splits_hash;
};

/// Trains one fold and writes checkpoint.manifest(.bin), train_log.csv, step_log.csv, gates.csv and run.cfg.
inline TrainOutcome cmd_train(const TrainOptions& o) {
  const fs_::path data = resolve_data_path(o.data);
  FeatureSet fs = read_feature_set(data);
  TrainOutcome out;
  out.settings = train_settings(o, fs);
  const RunSettings& r = out.settings;
  prepare_labels(fs, r);
  const auto folds = patient_split(fs, r.folds, r.split_seed);
  require(r.fold < folds.size(), ErrorKind::InvalidArgument, "fold " + std::to_string(r.fold) + " out of range");
  out.splits_hash = splits_hash(fs, folds);
  out.model = build_model(fs, r);
  log::info("training ", to_string(r.model.task), " preset ", r.train.preset, " for ", r.train.epochs, " epochs, batch ",
            r.train.batch, ", fold ", r.fold, "/", folds.size());
  out.train = tasks::train(out.model, fs, folds[r.fold].train, r.train);
  tasks::quantize_to_float(out.model);
  out.test = tasks::predict(out.model, fs, folds[r.fold].test);

  fs_::create_directories(o.out);
  tasks::save_checkpoint(out.model, o.out / "checkpoint.manifest");
  tasks::write_train_log(o.out / "train_log.csv", out.train.epochs);
  tasks::write_step_log(o.out / "step_log.csv", out.train.steps, out.model.config.fusion.teacher_names);
  write_text(o.out / "gates.csv", gates_csv(out.test, out.model.config.fusion.teacher_names));
  write_text(o.out / "run.cfg", run_file(data, r, out.splits_hash));
  return out;
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  fs_::path run;
  std::optional<fs_::path> data;
  std::optional<fs_::path> out;
  std::uint64_t seed = 0;
  std::size_t replicates = 1000;
  std::string task_name;
  std::string model_name;
};

inline std::string task_family_of(TaskKind k) {
  switch (k) {
    case TaskKind::Classification: return "tile";
    case TaskKind::Expression: return "st";
    case TaskKind::Survival: return "survival";
  }
  return "tile";
}

inline std::string predictions_csv(TaskKind kind, const FeatureSet& fs, const std::vector<tasks::Prediction>& preds) {
  std::ostringstream o;
  o.precision(10);
  o << "id,patient";
  const std::size_t width = preds.empty() ? 0 : preds.front().output.size();
  switch (kind) {
    case TaskKind::Classification:
      o << ",label,predicted";
      for (std::size_t k = 0; k < width; ++k) o << ",logit_" << k;
      break;
    case TaskKind::Expression:
      for (const auto& g : fs.manifest.gene_names) o << ",true_" << g;
      for (const auto& g : fs.manifest.gene_names) o << ",pred_" << g;
      break;
    case TaskKind::Survival:
      o << ",time,event,risk";
      for (std::size_t k = 0; k < width; ++k) o << ",hazard_logit_" << k;
      break;
  }
  o << '\n';
  for (const auto& p : preds) {
    o << p.id << ',' << p.patient;
    if (kind == TaskKind::Classification) {
      o << ',' << std::get<ClassLabel>(p.label).index << ',' << tasks::argmax(p.output);
    } else if (kind == TaskKind::Expression) {
      for (float v : std::get<ExpressionLabel>(p.label).values) o << ',' << v;
    } else {
      const auto& l = std::get<SurvivalLabel>(p.label);
      o << ',' << l.time << ',' << int(l.event) << ',' << tasks::survival_risk(p.output);
    }
    for (double v : p.output) o << ',' << v;
    o << '\n';
  }
  return o.str();
}

inline std::string attention_csv(const std::vector<tasks::Prediction>& preds, const tasks::ShazamModel& model,
                                 const FeatureSet& fs) {
  std::ostringstream o;
  o.precision(10);
  o << "id,scale,teacher,tile,weight\n";
  const auto& names = model.config.fusion.teacher_names;
  for (const auto& p : preds)
    for (Scale s : kAllScales) {
      const auto& per_teacher = p.attention[index_of(s)];
      for (std::size_t i = 0; i < per_teacher.size(); ++i) {
        const std::string teacher = model.is_baseline() ? names[*model.config.baseline_teacher] : names[i];
        for (std::size_t t = 0; t < per_teacher[i].size(); ++t)
          o << p.id << ',' << to_string(s) << ',' << teacher << ',' << fs.samples[p.tiles[t]].id << ',' << per_teacher[i][t]
            << '\n';
      }
    }
  return o.str();
}

inline std::string km_csv(const metrics::KmLogRank& km) {
  std::ostringstream o;
  o.precision(10);
  o << "group,time,survival,at_risk,events\n";
  for (const auto& p : km.low) o << "low," << p.time << ',' << p.survival << ',' << p.at_risk << ',' << p.events << '\n';
  for (const auto& p : km.high) o << "high," << p.time << ',' << p.survival << ',' << p.at_risk << ',' << p.events << '\n';
  o << "# logrank chi2=" << km.test.chi2 << " p=" << km.test.p_value << '\n';
  return o.str();
}

inline std::string km_svg(const std::string& title, const std::vector<svg::StepSeries>& series, const std::string& note) {
  return svg::step_chart(title, series, "time", "survival probability", note);
}

/// Reads km.csv as written by km_csv.
inline std::pair<std::vector<svg::StepSeries>, std::string> read_km_csv(const fs_::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot read " + path.string());
  std::vector<svg::StepSeries> series{{"low risk", {}}, {"high risk", {}}};
  std::string line, note;
  std::getline(in, line);
  require(line == "group,time,survival,at_risk,events", ErrorKind::InvalidArgument, path.string() + ": bad km header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      note = line.substr(line.find("logrank") == std::string::npos ? 1 : line.find("logrank"));
      continue;
    }
    const auto f = detail::split(line, ',');
    require(f.size() == 5 && (f[0] == "low" || f[0] == "high"), ErrorKind::InvalidArgument, path.string() + ": bad km row");
    series[f[0] == "high"].points.emplace_back(std::stod(f[1]), std::stod(f[2]));
  }
  return {series, note};
}

struct EvalOutcome {
  std::vector<metrics::MetricReport> metrics;
  std::vector<tasks::Prediction> predictions;
  std::optional<metrics::KmLogRank> km;
};

/// Re-creates the held-out fold of a train run and writes metrics, predictions and fixture-format results.
inline EvalOutcome cmd_eval(const EvalOptions& o) {
  Config run = Config::load(o.run / "run.cfg");
  const fs_::path data = o.data ? resolve_data_path(*o.data) : fs_::path(run.required("data"));
  const fs_::path out_dir = o.out.value_or(o.run);
  tasks::ShazamModel model = tasks::load_checkpoint(o.run / "checkpoint.manifest");
  FeatureSet fs = read_feature_set(data);
  require(fs.manifest.task == model.config.task, ErrorKind::InvalidArgument, "data task does not match the checkpoint");
  if (model.config.task == TaskKind::Expression && run.flag("log_normalize", true)) tasks::log_normalize_labels(fs);
  const auto folds = patient_split(fs, run.count("folds", 5), detail::parse_u64(run.required("split_seed"), "split_seed"));
  const std::size_t fold = run.count("fold", 0);
  require(fold < folds.size(), ErrorKind::InvalidArgument, "fold out of range");
  const std::string hash = splits_hash(fs, folds);
  if (auto recorded = run.get("splits_hash"))
    require(*recorded == hash, ErrorKind::InvalidArgument, "fold splits differ from the training run");

  EvalOutcome out;
  const TaskKind kind = model.config.task;
  out.predictions = tasks::predict(model, fs, folds[fold].test);
  out.metrics = tasks::evaluate(kind, out.predictions, fs.manifest.num_classes, o.seed, o.replicates);

  std::ostringstream m;
  m.precision(10);
  m << "metric,point,ci_low,ci_high,n,replicates,seed,splits_hash\n";
  for (const auto& r : out.metrics)
    m << r.metric << ',' << r.point << ',' << r.ci_low << ',' << r.ci_high << ',' << r.n << ',' << r.replicates << ','
      << r.seed << ',' << hash << '\n';
  write_text(out_dir / "metrics.csv", m.str());
  write_text(out_dir / "predictions.csv", predictions_csv(kind, fs, out.predictions));

  const std::string task_id =
      task_family_of(kind) + "/" + (o.task_name.empty() ? fs_::absolute(o.run).lexically_normal().filename().string() : o.task_name);
  const std::string model_name = !o.model_name.empty()     ? o.model_name
                                 : model.is_baseline() ? model.config.fusion.teacher_names[*model.config.baseline_teacher]
                                                       : std::string("Shazam");
  std::ostringstream res;
  res.precision(10);
  res << "task_id,model,metric,value,ci_low,ci_high\n";
  for (const auto& r : out.metrics)
    res << task_id << ',' << model_name << ',' << r.metric << ',' << r.point << ',' << r.ci_low << ',' << r.ci_high << '\n';
  write_text(out_dir / "results.csv", res.str());

  if (model.config.bags) write_text(out_dir / "attention.csv", attention_csv(out.predictions, model, fs));
  if (kind == TaskKind::Survival) {
    const auto sd = tasks::survival_data(out.predictions);
    const auto risk = tasks::risks(out.predictions);
    out.km = metrics::km_logrank(risk, sd.times, sd.events);
    write_text(out_dir / "km.csv", km_csv(*out.km));
    const auto [series, note] = read_km_csv(out_dir / "km.csv");
    write_text(out_dir / "km.svg", km_svg("Kaplan-Meier by predicted risk", series, note));
  }
  return out;
}

// ---------------------------------------------------------------- report

struct ReportOptions {
  fs_::path input;
  fs_::path out;
  std::string reference = "Shazam";
};

struct WilcoxonRow {
  std::string family;
  std::string comparison;  // "metric" or "rank"
  std::string other;
  std::size_t tasks = 0;
  std::optional<metrics::WilcoxonResult> result;
  std::string note;
};

struct ReportOutcome {
  std::vector<metrics::BenchmarkTable> tables;
  metrics::RankAggregate ranks;
  std::vector<WilcoxonRow> wilcoxon;
};

/// Benchmark rows from a fixture dir, a root holding benchmarks/, or a tree of run dirs with results.csv.
inline std::vector<metrics::FixtureRow> load_results(const fs_::path& input) {
  require(fs_::is_directory(input), ErrorKind::InvalidArgument, "not a directory: " + input.string());
  if (fs_::is_directory(input / "benchmarks")) return metrics::load_fixture_dir(input / "benchmarks");
  bool direct = false;
  for (const auto& e : fs_::directory_iterator(input)) direct |= e.is_regular_file() && e.path().extension() == ".csv";
  if (direct) return metrics::load_fixture_dir(input);
  std::vector<fs_::path> files;
  for (const auto& e : fs_::recursive_directory_iterator(input))
    if (e.is_regular_file() && e.path().filename() == "results.csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  require(!files.empty(), ErrorKind::InvalidArgument, "no result tables under " + input.string());
  std::vector<metrics::FixtureRow> rows;
  for (const auto& p : files) {
    auto part = metrics::parse_fixture_csv(detail::read_file(p), p.string());
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return rows;
}

/// Per family: reference vs every other model on primary-metric values, and reference vs the
/// next-best model (by mean rank within the family) on per-task ranks. Both one-sided.
inline std::vector<WilcoxonRow> family_wilcoxon(const std::vector<metrics::BenchmarkTable>& tables,
                                                const metrics::RankAggregate& ranks, const std::string& reference) {
  std::vector<std::string> families;
  for (const auto& t : tables) {
    const std::string f = metrics::task_family(t.task_id);
    if (std::find(families.begin(), families.end(), f) == families.end()) families.push_back(f);
  }
  std::vector<std::string> models;
  for (const auto& mr : ranks.models) models.push_back(mr.model);
  std::vector<WilcoxonRow> out;
  if (std::find(models.begin(), models.end(), reference) == models.end()) return out;
  auto value = [](const metrics::BenchmarkTable& t, const std::string& m) {
    for (const auto& [name, v] : t.rows)
      if (name == m) return v;
    fail(ErrorKind::InvalidArgument, "missing model " + m);
  };
  auto run = [](WilcoxonRow row, std::span<const double> x, std::span<const double> y, metrics::Alternative alt) {
    try {
      row.result = metrics::wilcoxon_signed_rank(x, y, alt);
    } catch (const Error& e) {
      row.note = e.what();
    }
    return row;
  };
  for (const std::string& fam : families) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < tables.size(); ++k)
      if (metrics::task_family(tables[k].task_id) == fam) idx.push_back(k);
    for (const std::string& other : models) {
      if (other == reference) continue;
      std::vector<double> x, y;
      for (std::size_t k : idx) {
        x.push_back(value(tables[k], reference));
        y.push_back(value(tables[k], other));
      }
      out.push_back(run({fam, "metric", other, idx.size(), {}, {}}, x, y, metrics::Alternative::Greater));
    }
    std::string next;
    double best = std::numeric_limits<double>::infinity();
    for (const std::string& m : models) {
      if (m == reference) continue;
      double s = 0.0;
      for (std::size_t k : idx) s += ranks.per_task[k].rank.at(m);
      if (s < best) best = s, next = m;
    }
    std::vector<double> x, y;
    for (std::size_t k : idx) {
      x.push_back(ranks.per_task[k].rank.at(reference));
      y.push_back(ranks.per_task[k].rank.at(next));
    }
    out.push_back(run({fam, "rank", next, idx.size(), {}, {}}, x, y, metrics::Alternative::Less));
  }
  return out;
}

/// Writes ranks.csv, task_ranks.csv, wilcoxon.csv, ranks.svg and an SVG per km.csv found under the input.
inline ReportOutcome cmd_report(const ReportOptions& o) {
  ReportOutcome out;
  out.tables = metrics::build_tables(load_results(o.input));
  out.ranks = metrics::rank_aggregate(out.tables);
  out.wilcoxon = family_wilcoxon(out.tables, out.ranks, o.reference);

  std::ostringstream r;
  r.precision(10);
  r << "model,mean_rank,firsts,tasks\n";
  for (const auto& m : out.ranks.models) r << m.model << ',' << m.mean_rank << ',' << m.firsts << ',' << m.tasks << '\n';
  write_text(o.out / "ranks.csv", r.str());

  std::ostringstream t;
  t.precision(10);
  t << "task_id,metric,model,value,rank\n";
  for (std::size_t k = 0; k < out.tables.size(); ++k)
    for (const auto& [model, v] : out.tables[k].rows)
      t << out.tables[k].task_id << ',' << out.tables[k].primary_metric << ',' << model << ',' << v << ','
        << out.ranks.per_task[k].rank.at(model) << '\n';
  write_text(o.out / "task_ranks.csv", t.str());

  std::ostringstream w;
  w.precision(10);
  w << "family,comparison,reference,other,tasks,n,w_plus,w_minus,p_value,exact,alternative,note\n";
  for (const auto& row : out.wilcoxon) {
    w << row.family << ',' << row.comparison << ',' << o.reference << ',' << row.other << ',' << row.tasks << ',';
    if (row.result)
      w << row.result->n << ',' << row.result->w_plus << ',' << row.result->w_minus << ',' << row.result->p_value << ','
        << (row.result->exact ? "true" : "false");
    else
      w << ",,,,";
    w << ',' << (row.comparison == "rank" ? "less" : "greater") << ',' << row.note << '\n';
  }
  write_text(o.out / "wilcoxon.csv", w.str());

  std::vector<std::pair<std::string, double>> bars;
  for (const auto& m : out.ranks.models) bars.emplace_back(m.model, m.mean_rank);
  write_text(o.out / "ranks.svg", svg::bar_chart("Mean rank over " + std::to_string(out.tables.size()) + " tasks", bars,
                                                 "mean rank (lower is better)"));

  std::vector<fs_::path> kms;
  for (const auto& e : fs_::recursive_directory_iterator(o.input))
    if (e.is_regular_file() && e.path().filename() == "km.csv") kms.push_back(e.path());
  std::sort(kms.begin(), kms.end());
  for (const auto& p : kms) {
    const auto [series, note] = read_km_csv(p);
    const std::string name = p.parent_path().filename().string();
    write_text(o.out / ("km_" + name + ".svg"), km_svg("Kaplan-Meier: " + name, series, note));
  }
  return out;
}

}  // namespace shazam::cli
