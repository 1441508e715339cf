#pragma once

// Import of externally extracted features from plain CSV.
//
// features.csv: sample_id,teacher,scale,v0,...,v{d-1}   (one row per teacher x scale)
// labels.csv:   sample_id,patient_id,slide_id,<label fields>
//   classification: class_index
//   expression:     one value per gene
//   survival:       time,event
//
// Whether a row holds a class token or pooled patch tokens of the hooked block
// is up to the caller; the importer only checks shapes.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "shazam/core/error.hpp"
#include "shazam/feature_store/container.hpp"
#include "shazam/feature_store/types.hpp"

namespace shazam {

namespace detail {

inline std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    rows.push_back(split(line, ','));
  }
  return rows;
}

}  // namespace detail

struct ImportSpec {
  TaskKind task = TaskKind::Classification;
  std::vector<TeacherSpec> teachers;
  std::uint32_t num_classes = 0;
  std::vector<std::string> gene_names;
};

inline FeatureSet import_feature_csv(const ImportSpec& spec, const std::filesystem::path& features_csv,
                                     const std::filesystem::path& labels_csv) {
  validate_teachers(spec.teachers);
  std::map<std::string, std::size_t> teacher_index;
  for (std::size_t i = 0; i < spec.teachers.size(); ++i) teacher_index[spec.teachers[i].name] = i;

  FeatureSet fs;
  fs.teachers = spec.teachers;
  fs.manifest.task = spec.task;
  fs.manifest.num_classes = spec.num_classes;
  fs.manifest.gene_names = spec.gene_names;
  fs.manifest.provenance = "imported:" + features_csv.filename().string();

  std::map<std::string, std::size_t> sample_index;
  for (const auto& row : detail::read_csv_rows(labels_csv)) {
    if (row.empty() || row[0] == "sample_id") continue;
    require(row.size() >= 4, ErrorKind::InvalidArgument, "labels row too short for sample " + row[0]);
    SampleRecord rec;
    rec.id = row[0];
    switch (spec.task) {
      case TaskKind::Classification: {
        const long c = std::stol(row[3]);
        require(c >= 0 && (spec.num_classes == 0 || c < static_cast<long>(spec.num_classes)),
                ErrorKind::InvalidArgument, "class index out of range for sample " + rec.id);
        rec.label = ClassLabel{static_cast<std::uint32_t>(c)};
        break;
      }
      case TaskKind::Expression: {
        ExpressionLabel e;
        for (std::size_t j = 3; j < row.size(); ++j) e.values.push_back(std::stof(row[j]));
        rec.label = e;
        break;
      }
      case TaskKind::Survival: {
        require(row.size() >= 5, ErrorKind::InvalidArgument, "survival label needs time,event");
        const float t = std::stof(row[3]);
        require(t > 0.0f, ErrorKind::InvalidArgument, "survival time must be positive");
        rec.label = SurvivalLabel{t, static_cast<std::uint8_t>(std::stoi(row[4]) != 0)};
        break;
      }
    }
    rec.features.resize(spec.teachers.size());
    if (!row[1].empty() && row[1] != kUnassigned) fs.manifest.patient_of[rec.id] = row[1];
    if (!row[2].empty()) fs.manifest.slide_of[rec.id] = row[2];
    require(sample_index.emplace(rec.id, fs.samples.size()).second, ErrorKind::InvalidArgument,
            "duplicate sample " + rec.id);
    fs.samples.push_back(std::move(rec));
  }

  for (const auto& row : detail::read_csv_rows(features_csv)) {
    if (row.empty() || row[0] == "sample_id") continue;
    require(row.size() >= 4, ErrorKind::InvalidArgument, "feature row too short");
    auto s = sample_index.find(row[0]);
    require(s != sample_index.end(), ErrorKind::InvalidArgument, "features for unknown sample " + row[0]);
    auto t = teacher_index.find(row[1]);
    require(t != teacher_index.end(), ErrorKind::InvalidArgument, "unknown teacher " + row[1]);
    std::vector<float> v;
    for (std::size_t j = 3; j < row.size(); ++j) v.push_back(std::stof(row[j]));
    fs.samples[s->second].features[t->second].at(parse_scale(row[2])) = std::move(v);
  }
  validate(fs);
  return fs;
}

}  // namespace shazam
