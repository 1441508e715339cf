#pragma once

#include <string>
#include <vector>

#include "shazam/cli/config.hpp"
#include "shazam/feature_store/split.hpp"
#include "shazam/tasks/evaluate.hpp"
#include "shazam/tasks/preprocess.hpp"
#include "shazam/tasks/train.hpp"

namespace shazam::cli {

inline void prepare_labels(FeatureSet& fs, const RunSettings& r) {
  if (r.model.task == TaskKind::Expression && r.log_normalize) tasks::log_normalize_labels(fs);
}

/// Copy of `fs` restricted to the given teachers, in the given order.
inline FeatureSet select_teachers(const FeatureSet& fs, const std::vector<std::size_t>& keep) {
  require(!keep.empty(), ErrorKind::InvalidArgument, "no teachers selected");
  FeatureSet out;
  out.manifest = fs.manifest;
  for (std::size_t i : keep) out.teachers.push_back(fs.teachers.at(i));
  out.samples.reserve(fs.samples.size());
  for (const SampleRecord& s : fs.samples) {
    SampleRecord r{s.id, s.label, {}};
    for (std::size_t i : keep) r.features.push_back(s.features.at(i));
    out.samples.push_back(std::move(r));
  }
  return out;
}

inline tasks::ShazamModel build_model(const FeatureSet& fs, const RunSettings& r) {
  require(fs.manifest.task == r.model.task, ErrorKind::InvalidArgument,
          "data task is " + std::string(to_string(fs.manifest.task)) + " but the run asks for " +
              std::string(to_string(r.model.task)));
  tasks::ModelConfig m = r.model;
  m.fusion.teacher_names.clear();
  m.fusion.native_dims.clear();
  for (const TeacherSpec& t : fs.teachers) {
    m.fusion.teacher_names.push_back(t.name);
    m.fusion.native_dims.push_back(t.native_dim);
  }
  m.bags = m.task == TaskKind::Survival;
  m.head = tasks::default_head(m.task, tasks::output_width(m.task, fs, m.survival_bins), r.head_hidden);
  return tasks::ShazamModel(m);
}

struct FoldRun {
  tasks::ShazamModel model;
  tasks::TrainResult train;
  std::vector<tasks::Prediction> test;
  std::string splits_hash;
};

/// Trains on one fold's training portion and predicts its held-out portion.
inline FoldRun run_fold(const FeatureSet& fs, const RunSettings& r, std::size_t fold) {
  const auto folds = patient_split(fs, r.folds, r.split_seed);
  require(fold < folds.size(), ErrorKind::InvalidArgument,
          "fold " + std::to_string(fold) + " out of range for " + std::to_string(folds.size()) + " folds");
  FoldRun out{build_model(fs, r), {}, {}, splits_hash(fs, folds)};
  out.train = tasks::train(out.model, fs, folds[fold].train, r.train);
  out.test = tasks::predict(out.model, fs, folds[fold].test);
  return out;
}

}  // namespace shazam::cli
