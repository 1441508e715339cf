#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "shazam/core/error.hpp"
#include "shazam/feature_store/container.hpp"
#include "shazam/feature_store/synth.hpp"
#include "shazam/tasks/train.hpp"

namespace shazam::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

inline int exit_code(ErrorKind kind) {
  return kind == ErrorKind::NumericError || kind == ErrorKind::DegenerateVector ? kExitNumeric : kExitUsage;
}

/// UTF-8 key=value lines; '#' starts a comment line. Tracks which keys were read.
class Config {
 public:
  Config() = default;
  Config(std::map<std::string, std::string> kv, std::string source) : kv_(std::move(kv)), source_(std::move(source)) {}

  static Config load(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), ErrorKind::InvalidArgument, "config file not found: " + path.string());
    std::map<std::string, std::string> kv;
    for (const auto& [k, v] : detail::parse_key_values(detail::read_file(path))) kv[trim(k)] = trim(v);
    return Config(std::move(kv), path.string());
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  const std::string& required(const std::string& key) const {
    auto it = kv_.find(key);
    require(it != kv_.end(), ErrorKind::InvalidArgument, "missing config key: " + key + where());
    used_.insert(key);
    return it->second;
  }

  std::optional<std::string> get(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return std::nullopt;
    used_.insert(key);
    return it->second;
  }

  double number(const std::string& key, double fallback) const {
    auto v = get(key);
    return v ? parse_double(key, *v) : fallback;
  }

  std::size_t count(const std::string& key, std::size_t fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    const double d = parse_double(key, *v);
    require(d >= 0 && d == static_cast<double>(static_cast<std::size_t>(d)), ErrorKind::InvalidArgument,
            "config key " + key + " must be a non-negative integer" + where());
    return static_cast<std::size_t>(d);
  }

  bool flag(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    fail(ErrorKind::InvalidArgument, "config key " + key + " must be a boolean" + where());
  }

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  /// Keys present in the file but never read.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : kv_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    return s.substr(a, s.find_last_not_of(" \t") - a + 1);
  }

  std::string where() const { return source_.empty() ? "" : " (" + source_ + ")"; }

  double parse_double(const std::string& key, const std::string& v) const {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    fail(ErrorKind::InvalidArgument, "config key " + key + " is not a number: '" + v + "'" + where());
  }

  std::map<std::string, std::string> kv_;
  std::string source_;
  mutable std::set<std::string> used_;
};

/// "name:dim:depth,name:dim:depth,..."
inline std::vector<TeacherSpec> parse_teachers(const std::string& text) {
  std::vector<TeacherSpec> out;
  for (const std::string& item : detail::split(text, ',')) {
    const auto f = detail::split(item, ':');
    require(f.size() == 3, ErrorKind::InvalidArgument, "teacher entry must be name:dim:depth, got '" + item + "'");
    TeacherSpec t;
    t.name = f[0];
    t.native_dim = static_cast<std::uint32_t>(detail::parse_u64(f[1], "teachers"));
    t.depth = static_cast<std::uint32_t>(detail::parse_u64(f[2], "teachers"));
    out.push_back(t);
  }
  validate_teachers(out);
  return out;
}

inline SynthConfig synth_config(const Config& c) {
  SynthConfig s;
  s.task = parse_task_kind(c.required("task"));
  s.teachers = parse_teachers(c.required("teachers"));
  c.required("samples");
  s.samples = c.count("samples", 0);
  s.tiles_min = c.count("tiles_min", s.tiles_min);
  s.tiles_max = c.count("tiles_max", s.tiles_max);
  s.num_classes = static_cast<std::uint32_t>(c.count("num_classes", s.num_classes));
  s.num_genes = static_cast<std::uint32_t>(c.count("num_genes", s.num_genes));
  s.patients = c.count("patients", s.patients);
  s.unassigned = c.count("unassigned", s.unassigned);
  s.latent_dim = c.count("latent_dim", s.latent_dim);
  if (auto v = c.get("planted")) s.planted = *v;
  s.nonlinear = c.flag("nonlinear", s.nonlinear);
  s.noise = c.number("noise", s.noise);
  s.scale_mix = c.number("scale_mix", s.scale_mix);
  s.tile_jitter = c.number("tile_jitter", s.tile_jitter);
  s.signal = c.number("signal", s.signal);
  s.censor_rate = c.number("censor_rate", s.censor_rate);
  return s;
}

/// Everything a training run needs besides the data: model, optimizer and fold settings.
struct RunSettings {
  tasks::ModelConfig model;
  tasks::TrainConfig train;
  std::size_t folds = 5;
  std::size_t fold = 0;
  std::uint64_t split_seed = 0;
  bool log_normalize = true;
  std::size_t head_hidden = 128;
};

/// Applies preset and config overrides; command-line flags are applied by the caller afterwards.
inline RunSettings run_settings(const Config& c, TaskKind task, const std::string& preset_name, std::uint64_t seed) {
  RunSettings r;
  r.train = tasks::preset(preset_name);
  r.train.seed = seed;
  r.split_seed = seed;
  auto& t = r.train;
  t.lr = c.number("lr", t.lr);
  t.lr_min = c.number("lr_min", t.lr_min);
  t.weight_decay = c.number("weight_decay", t.weight_decay);
  t.epochs = c.count("epochs", t.epochs);
  t.batch = c.count("batch", t.batch);
  if (auto v = c.get("schedule")) t.schedule = tasks::parse_schedule(*v);
  t.patience = c.count("patience", t.patience);
  t.val_fraction = c.number("val_fraction", t.val_fraction);
  t.plateau_factor = c.number("plateau_factor", t.plateau_factor);
  t.plateau_patience = c.count("plateau_patience", t.plateau_patience);

  auto& m = r.model;
  m.task = task;
  m.fusion.dim = c.count("dim", m.fusion.dim);
  m.fusion.heads = c.count("heads", m.fusion.heads);
  m.fusion.layers = c.count("layers", m.fusion.layers);
  m.fusion.gate_hidden_per_teacher = c.count("gate_hidden_per_teacher", m.fusion.gate_hidden_per_teacher);
  m.fusion.seed = seed;
  m.abmil_hidden = c.count("abmil_hidden", m.abmil_hidden);
  if (auto v = c.get("scales")) m.scales = ScaleSet::parse(*v);
  m.use_moe = c.flag("use_moe", m.use_moe);
  m.distill = c.flag("distill", m.distill);
  m.distill_cfg.lambda_distill = c.number("lambda_distill", m.distill_cfg.lambda_distill);
  m.distill_cfg.delta = c.number("delta", m.distill_cfg.delta);
  m.ridge_l2 = c.number("ridge_l2", m.ridge_l2);
  m.survival_bins = c.count("survival_bins", m.survival_bins);
  r.head_hidden = c.count("head_hidden", r.head_hidden);
  r.folds = c.count("folds", r.folds);
  r.fold = c.count("fold", r.fold);
  r.log_normalize = c.flag("log_normalize", r.log_normalize);
  if (auto v = c.get("split_seed")) r.split_seed = detail::parse_u64(*v, "split_seed");
  return r;
}

/// Resolves a data path against SHAZAM_DATA_DIR when it does not exist as given.
inline std::filesystem::path resolve_data_path(const std::filesystem::path& p) {
  if (p.is_absolute() || std::filesystem::exists(p)) return p;
  if (const char* root = std::getenv("SHAZAM_DATA_DIR"); root && *root) return std::filesystem::path(root) / p;
  return p;
}

}  // namespace shazam::cli
