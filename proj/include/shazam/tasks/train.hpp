#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "shazam/core/autodiff.hpp"
#include "shazam/core/error.hpp"
#include "shazam/core/log.hpp"
#include "shazam/core/random.hpp"
#include "shazam/feature_store/container.hpp"
#include "shazam/tasks/model.hpp"
#include "shazam/tasks/optim.hpp"

namespace shazam::tasks {

enum class Schedule { Cosine, Plateau, Constant };

inline Schedule parse_schedule(const std::string& s) {
  if (s == "cosine") return Schedule::Cosine;
  if (s == "plateau") return Schedule::Plateau;
  if (s == "constant") return Schedule::Constant;
  fail(ErrorKind::InvalidArgument, "unknown schedule '" + s + "'");
}

inline std::string to_string(Schedule s) {
  switch (s) {
    case Schedule::Cosine: return "cosine";
    case Schedule::Plateau: return "plateau";
    case Schedule::Constant: return "constant";
  }
  return "?";
}

struct TrainConfig {
  std::string preset = "tile";
  double lr = 1e-3;
  double lr_min = 0.0;
  double weight_decay = 1e-4;
  bool decoupled = true;
  std::size_t epochs = 50;
  std::size_t batch = 128;
  Schedule schedule = Schedule::Cosine;
  double plateau_factor = 0.5;
  std::size_t plateau_patience = 5;
  /// Early-stopping patience in epochs; 0 disables it.
  std::size_t patience = 0;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

inline TrainConfig preset(const std::string& name) {
  TrainConfig c;
  c.preset = name;
  if (name == "tile") {
    c.lr = 1e-3;
    c.weight_decay = 1e-4;
    c.epochs = 50;
    c.batch = 128;
  } else if (name == "tile-baseline") {
    c.lr = 1e-3;
    c.weight_decay = 0.0;
    c.decoupled = false;
    c.epochs = 100;
    c.batch = 64;
    c.patience = 30;
    c.schedule = Schedule::Constant;
  } else if (name == "st") {
    c.lr = 1e-3;
    c.weight_decay = 1e-4;
    c.epochs = 30;
    c.batch = 128;
    c.schedule = Schedule::Plateau;
  } else if (name == "survival") {
    c.lr = 2e-4;
    c.weight_decay = 1e-3;
    c.epochs = 30;
    c.batch = 16;
  } else {
    fail(ErrorKind::InvalidArgument, "unknown preset '" + name + "'");
  }
  return c;
}

inline std::string default_preset(TaskKind kind) {
  switch (kind) {
    case TaskKind::Classification: return "tile";
    case TaskKind::Expression: return "st";
    case TaskKind::Survival: return "survival";
  }
  return "tile";
}

inline void validate(const TrainConfig& c) {
  require(c.lr > 0.0 && std::isfinite(c.lr), ErrorKind::InvalidArgument, "lr must be > 0");
  require(c.weight_decay >= 0.0, ErrorKind::InvalidArgument, "weight_decay must be >= 0");
  require(c.epochs >= 1, ErrorKind::InvalidArgument, "epochs must be >= 1");
  require(c.batch >= 1, ErrorKind::InvalidArgument, "batch must be >= 1");
  require(c.val_fraction >= 0.0 && c.val_fraction < 1.0, ErrorKind::InvalidArgument, "val_fraction must be in [0, 1)");
}

struct EpochLog {
  std::size_t epoch = 0;
  std::string split;
  double task_loss = 0.0;
  double distill_total = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  distill::LossBreakdown loss;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::vector<StepLog> steps;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  std::string teacher_hash;
};

/// FNV-1a over every teacher feature value; training must leave it unchanged.
inline std::string teacher_feature_hash(const FeatureSet& fs) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t k = 0; k < n; ++k) {
      h ^= b[k];
      h *= 1099511628211ull;
    }
  };
  for (const SampleRecord& s : fs.samples)
    for (const MultiScaleFeature& f : s.features)
      for (const auto& v : f.vectors) mix(v.data(), v.size() * sizeof(float));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Quartile cut points from the uncensored survival times of the training units.
inline void fit_survival_bins(ShazamModel& model, const std::vector<Unit>& units) {
  std::vector<double> times;
  std::vector<int> events;
  for (const Unit& u : units) {
    const auto* l = std::get_if<SurvivalLabel>(&u.label);
    require(l != nullptr, ErrorKind::InvalidArgument, "survival model given a non-survival label");
    times.push_back(l->time);
    events.push_back(l->event);
  }
  model.survival_cuts = survival_bins(times, events, model.config.survival_bins).cuts;
}

/// Forward + backward for one unit with the loss scaled by `weight`; returns the unscaled breakdown.
inline distill::LossBreakdown unit_step(ShazamModel& model, const FeatureSet& fs, const Unit& unit, double weight,
                                        Rng* dropout_rng, bool backprop) {
  ad::Tape tape;
  ForwardResult fr = forward(tape, model, fs, unit, dropout_rng);
  ad::Var task = task_loss(tape, model, fr.output, unit.label);
  ad::Var total = task;
  double distill_value = 0.0;
  if (fr.distill) {
    distill_value = fr.distill->scalar();
    total = ad::add(task, ad::scale(*fr.distill, model.config.distill_cfg.lambda_distill));
  }
  distill::LossBreakdown b = distill::total_loss(task.scalar(), distill_value, model.config.distill_cfg);
  b.distill_terms = std::move(fr.distill_terms);
  if (!fr.distill) b.total = b.task_loss;
  require(std::isfinite(b.total), ErrorKind::NumericError, "non-finite loss on " + unit.id);
  if (backprop) tape.backward(ad::scale(total, weight));
  return b;
}

inline void accumulate_breakdown(distill::LossBreakdown& acc, const distill::LossBreakdown& b, double w) {
  acc.task_loss += w * b.task_loss;
  acc.distill_total += w * b.distill_total;
  acc.total += w * b.total;
  for (const auto& [k, v] : b.distill_terms) acc.distill_terms[k] += w * v;
}

inline distill::LossBreakdown mean_loss(ShazamModel& model, const FeatureSet& fs, const std::vector<Unit>& units) {
  distill::LossBreakdown acc;
  for (const Unit& u : units)
    accumulate_breakdown(acc, unit_step(model, fs, u, 1.0, nullptr, false), 1.0 / static_cast<double>(units.size()));
  return acc;
}

/// Holds out whole patients for validation.
inline std::pair<std::vector<Unit>, std::vector<Unit>> validation_split(const std::vector<Unit>& units, double fraction,
                                                                        std::uint64_t seed) {
  std::vector<std::string> patients;
  for (const Unit& u : units)
    if (std::find(patients.begin(), patients.end(), u.patient) == patients.end()) patients.push_back(u.patient);
  if (patients.size() < 2 || fraction <= 0.0) return {units, {}};
  Rng rng = make_rng(derive_seed(seed, "validation"));
  shuffle(patients, rng);
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(patients.size()))));
  std::set<std::string> val(patients.begin(), patients.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<Unit> tr, va;
  for (const Unit& u : units) (val.count(u.patient) ? va : tr).push_back(u);
  return {tr, va};
}

inline TrainResult train(ShazamModel& model, const FeatureSet& fs, const std::vector<std::size_t>& train_samples,
                         const TrainConfig& cfg) {
  validate(cfg);
  check_teachers(model, fs);
  TrainResult result;
  result.teacher_hash = teacher_feature_hash(fs);
  std::vector<Unit> units = make_units(fs, train_samples, model.config.bags);
  require(!units.empty(), ErrorKind::InvalidArgument, "no training units");
  for (const Unit& u : units)
    require(kind_of(u.label) == model.config.task, ErrorKind::InvalidArgument, "label kind differs from the model task");
  if (model.config.task == TaskKind::Survival) fit_survival_bins(model, units);

  const bool need_val = cfg.patience > 0 || cfg.schedule == Schedule::Plateau;
  std::vector<Unit> val;
  if (need_val) {
    auto [tr, va] = validation_split(units, cfg.val_fraction, cfg.seed);
    units = std::move(tr);
    val = std::move(va);
    if (val.empty()) log::warn("too few patients for a validation split; validation disabled");
  }

  std::vector<Parameter*> params = model.parameters();
  Adam opt(params, AdamConfig{0.9, 0.999, 1e-8, cfg.weight_decay, cfg.decoupled});
  const std::size_t steps_per_epoch = (units.size() + cfg.batch - 1) / cfg.batch;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  ReduceOnPlateau plateau(cfg.lr, cfg.plateau_factor, cfg.plateau_patience);
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best_values;
  std::size_t since_best = 0;
  std::size_t step = 0;
  Rng dropout_rng = make_rng(derive_seed(cfg.seed, "dropout"));

  std::vector<std::size_t> order(units.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    Rng rng = make_rng(derive_seed(derive_seed(cfg.seed, "epoch"), epoch));
    shuffle(order, rng);
    distill::LossBreakdown epoch_acc;
    double epoch_lr = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      const double lr = cfg.schedule == Schedule::Cosine     ? cosine_lr(cfg.lr, cfg.lr_min, step, total_steps)
                        : cfg.schedule == Schedule::Plateau ? plateau.lr()
                                                             : cfg.lr;
      opt.zero_grad();
      distill::LossBreakdown batch_acc;
      const double w = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        distill::LossBreakdown b;
        try {
          b = unit_step(model, fs, units[order[k]], w, &dropout_rng, true);
        } catch (const Error& e) {
          if (e.kind() == ErrorKind::NumericError)
            fail(ErrorKind::NumericError, "training aborted at step " + std::to_string(step) + ": " + e.what());
          throw;
        }
        accumulate_breakdown(batch_acc, b, w);
      }
      try {
        opt.step(lr);
      } catch (const Error& e) {
        fail(ErrorKind::NumericError, "training aborted at step " + std::to_string(step) + ": " + e.what());
      }
      for (Parameter* p : params)
        require(p->value.allFinite(), ErrorKind::NumericError,
                "training aborted at step " + std::to_string(step) + ": non-finite " + p->name);
      result.steps.push_back({step, epoch, lr, batch_acc});
      accumulate_breakdown(epoch_acc, batch_acc, static_cast<double>(end - start) / static_cast<double>(order.size()));
      epoch_lr = lr;
      ++step;
    }
    result.epochs.push_back({epoch, "train", epoch_acc.task_loss, epoch_acc.distill_total, epoch_acc.total, epoch_lr});
    log::debug("epoch ", epoch, " train total ", epoch_acc.total);

    if (!val.empty()) {
      distill::LossBreakdown v = mean_loss(model, fs, val);
      result.epochs.push_back({epoch, "val", v.task_loss, v.distill_total, v.total, epoch_lr});
      if (cfg.schedule == Schedule::Plateau) plateau.step(v.total);
      if (v.total < best_val) {
        best_val = v.total;
        result.best_epoch = epoch;
        since_best = 0;
        if (cfg.patience > 0) {
          best_values.clear();
          for (Parameter* p : params) best_values.push_back(p->value);
        }
      } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
        result.stopped_early = true;
        break;
      }
    } else {
      result.best_epoch = epoch;
    }
  }
  if (!best_values.empty())
    for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = best_values[k];
  require(teacher_feature_hash(fs) == result.teacher_hash, ErrorKind::NumericError, "teacher features changed during training");
  return result;
}

struct Prediction {
  std::string id;
  std::string patient;
  TaskLabel label;
  std::vector<double> output;
  std::array<std::vector<double>, 3> gates;
  std::array<std::vector<std::vector<double>>, 3> attention;
  std::vector<std::size_t> tiles;
};

inline std::vector<Prediction> predict(ShazamModel& model, const FeatureSet& fs, const std::vector<std::size_t>& samples) {
  check_teachers(model, fs);
  std::vector<Prediction> out;
  for (const Unit& u : make_units(fs, samples, model.config.bags)) {
    ad::Tape tape;
    ForwardResult fr = forward(tape, model, fs, u, nullptr);
    out.push_back({u.id, u.patient, u.label, to_vector(fr.output.value()), fr.gates, fr.attention, u.tiles});
  }
  return out;
}

inline void write_train_log(const std::filesystem::path& path, const std::vector<EpochLog>& rows) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out.precision(10);
  out << "epoch,split,task_loss,distill_total,total,lr\n";
  for (const EpochLog& r : rows)
    out << r.epoch << ',' << r.split << ',' << r.task_loss << ',' << r.distill_total << ',' << r.total << ',' << r.lr << '\n';
}

/// One row per optimizer step with all 3N distillation term columns; inactive scales are left empty.
inline void write_step_log(const std::filesystem::path& path, const std::vector<StepLog>& rows,
                           const std::vector<std::string>& teachers) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out.precision(10);
  out << "step,task_loss,distill_total,total";
  for (Scale s : kAllScales)
    for (const std::string& t : teachers) out << ",distill_" << to_string(s) << '_' << t;
  out << ",epoch,lr\n";
  for (const StepLog& r : rows) {
    out << r.step << ',' << r.loss.task_loss << ',' << r.loss.distill_total << ',' << r.loss.total;
    for (Scale s : kAllScales)
      for (std::size_t i = 0; i < teachers.size(); ++i) {
        out << ',';
        auto it = r.loss.distill_terms.find({s, i});
        if (it != r.loss.distill_terms.end()) out << it->second;
      }
    out << ',' << r.epoch << ',' << r.lr << '\n';
  }
}

}  // namespace shazam::tasks
