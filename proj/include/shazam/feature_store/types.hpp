#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "shazam/core/error.hpp"

namespace shazam {

enum class Scale : std::uint8_t { Low = 0, Mid = 1, High = 2 };

inline constexpr std::array<Scale, 3> kAllScales{Scale::Low, Scale::Mid, Scale::High};

constexpr std::size_t index_of(Scale s) { return static_cast<std::size_t>(s); }

inline std::string_view to_string(Scale s) {
  switch (s) {
    case Scale::Low: return "low";
    case Scale::Mid: return "mid";
    case Scale::High: return "high";
  }
  return "?";
}

inline Scale parse_scale(std::string_view s) {
  if (s == "low") return Scale::Low;
  if (s == "mid") return Scale::Mid;
  if (s == "high") return Scale::High;
  fail(ErrorKind::InvalidArgument, "unknown scale '" + std::string(s) + "'");
}

/// Set of active scales, kept in LOW < MID < HIGH order.
class ScaleSet {
 public:
  ScaleSet() = default;
  static ScaleSet all() { return ScaleSet({Scale::Low, Scale::Mid, Scale::High}); }
  explicit ScaleSet(std::initializer_list<Scale> scales) {
    for (Scale s : scales) mask_[index_of(s)] = true;
  }

  bool contains(Scale s) const { return mask_[index_of(s)]; }
  void insert(Scale s) { mask_[index_of(s)] = true; }
  bool empty() const { return size() == 0; }
  std::size_t size() const { return static_cast<std::size_t>(mask_[0] + mask_[1] + mask_[2]); }

  std::vector<Scale> list() const {
    std::vector<Scale> out;
    for (Scale s : kAllScales)
      if (contains(s)) out.push_back(s);
    return out;
  }

  std::string to_string() const {
    std::string out;
    for (Scale s : list()) {
      if (!out.empty()) out += ',';
      out += shazam::to_string(s);
    }
    return out;
  }

  static ScaleSet parse(std::string_view csv) {
    ScaleSet set;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
      const std::size_t next = csv.find(',', pos);
      const std::string_view tok = csv.substr(pos, next == std::string_view::npos ? csv.npos : next - pos);
      if (!tok.empty()) set.insert(parse_scale(tok));
      if (next == std::string_view::npos) break;
      pos = next + 1;
    }
    require(!set.empty(), ErrorKind::InvalidArgument, "empty scale set");
    return set;
  }

  bool operator==(const ScaleSet&) const = default;

 private:
  std::array<bool, 3> mask_{false, false, false};
};

struct TeacherSpec {
  std::string name;
  std::uint32_t native_dim = 0;
  std::uint32_t depth = 0;
  std::optional<double> standalone_score;

  bool operator==(const TeacherSpec&) const = default;
};

inline void validate(const TeacherSpec& t) {
  require(!t.name.empty(), ErrorKind::InvalidArgument, "teacher name is empty");
  require(t.native_dim >= 1, ErrorKind::InvalidArgument, "teacher " + t.name + ": native_dim must be >= 1");
  require(t.depth >= 1, ErrorKind::InvalidArgument, "teacher " + t.name + ": depth must be >= 1");
}

inline void validate_teachers(const std::vector<TeacherSpec>& teachers) {
  std::set<std::string> names;
  for (const TeacherSpec& t : teachers) {
    validate(t);
    require(names.insert(t.name).second, ErrorKind::InvalidArgument, "duplicate teacher name " + t.name);
  }
}

/// One teacher's features at the three hooked depths.
struct MultiScaleFeature {
  std::array<std::vector<float>, 3> vectors;

  const std::vector<float>& at(Scale s) const { return vectors[index_of(s)]; }
  std::vector<float>& at(Scale s) { return vectors[index_of(s)]; }

  bool operator==(const MultiScaleFeature&) const = default;
};

struct ClassLabel {
  std::uint32_t index = 0;
  bool operator==(const ClassLabel&) const = default;
};

struct ExpressionLabel {
  std::vector<float> values;
  bool operator==(const ExpressionLabel&) const = default;
};

struct SurvivalLabel {
  float time = 0.0f;
  std::uint8_t event = 0;
  bool operator==(const SurvivalLabel&) const = default;
};

using TaskLabel = std::variant<ClassLabel, ExpressionLabel, SurvivalLabel>;

enum class TaskKind : std::uint8_t { Classification = 0, Expression = 1, Survival = 2 };

inline std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::Classification: return "classification";
    case TaskKind::Expression: return "expression";
    case TaskKind::Survival: return "survival";
  }
  return "?";
}

inline TaskKind parse_task_kind(std::string_view s) {
  if (s == "classification" || s == "tile") return TaskKind::Classification;
  if (s == "expression" || s == "st") return TaskKind::Expression;
  if (s == "survival") return TaskKind::Survival;
  fail(ErrorKind::InvalidArgument, "unknown task kind '" + std::string(s) + "'");
}

inline TaskKind kind_of(const TaskLabel& label) { return static_cast<TaskKind>(label.index()); }

inline constexpr std::string_view kUnassigned = "unassigned";

struct SampleRecord {
  std::string id;
  TaskLabel label;
  /// One entry per teacher, in FeatureSet::teachers order.
  std::vector<MultiScaleFeature> features;

  bool operator==(const SampleRecord&) const = default;
};

struct Manifest {
  TaskKind task = TaskKind::Classification;
  std::uint64_t seed = 0;
  std::uint32_t num_classes = 0;
  std::vector<std::string> gene_names;
  /// sample_id -> patient_id; missing entries read as "unassigned".
  std::map<std::string, std::string> patient_of;
  /// sample_id -> slide_id for bag tasks; empty for tile tasks.
  std::map<std::string, std::string> slide_of;
  std::string planted_mode;
  std::vector<double> planted_strengths;
  std::string provenance;
  /// Free-form metadata preserved on round trip.
  std::map<std::string, std::string> extra;

  bool operator==(const Manifest&) const = default;

  const std::string& patient(const std::string& sample_id) const {
    static const std::string unassigned(kUnassigned);
    auto it = patient_of.find(sample_id);
    return it == patient_of.end() ? unassigned : it->second;
  }
};

struct FeatureSet {
  std::vector<TeacherSpec> teachers;
  std::vector<SampleRecord> samples;
  Manifest manifest;

  std::size_t num_teachers() const { return teachers.size(); }
  bool operator==(const FeatureSet&) const = default;
};

inline void validate(const FeatureSet& fs) {
  validate_teachers(fs.teachers);
  for (const SampleRecord& s : fs.samples) {
    require(s.features.size() == fs.teachers.size(), ErrorKind::InvalidArgument,
            "sample " + s.id + " does not carry one feature group per teacher");
    for (std::size_t i = 0; i < fs.teachers.size(); ++i) {
      for (Scale sc : kAllScales) {
        const auto& v = s.features[i].at(sc);
        require(v.size() == fs.teachers[i].native_dim, ErrorKind::InvalidArgument,
                "sample " + s.id + " teacher " + fs.teachers[i].name + " scale " +
                    std::string(to_string(sc)) + ": length mismatch");
        for (float x : v)
          require(std::isfinite(x), ErrorKind::InvalidArgument, "sample " + s.id + ": non-finite feature");
      }
    }
    require(kind_of(s.label) == fs.manifest.task, ErrorKind::InvalidArgument,
            "sample " + s.id + " label kind does not match the task");
  }
}

/// A bag of tiles belonging to one slide. Tiles index into FeatureSet::samples.
struct SlideBag {
  std::string slide_id;
  std::string patient_id;
  std::vector<std::size_t> tiles;
  TaskLabel label;
};

/// Groups samples into bags by the manifest slide map. Tile tasks (no slide map)
/// yield one singleton bag per sample.
inline std::vector<SlideBag> make_bags(const FeatureSet& fs) {
  std::vector<SlideBag> bags;
  std::map<std::string, std::size_t> by_slide;
  for (std::size_t i = 0; i < fs.samples.size(); ++i) {
    const SampleRecord& s = fs.samples[i];
    auto it = fs.manifest.slide_of.find(s.id);
    const std::string slide = it == fs.manifest.slide_of.end() ? s.id : it->second;
    auto [pos, inserted] = by_slide.emplace(slide, bags.size());
    if (inserted) bags.push_back(SlideBag{slide, fs.manifest.patient(s.id), {}, s.label});
    SlideBag& bag = bags[pos->second];
    require(bag.patient_id == fs.manifest.patient(s.id), ErrorKind::InvalidArgument,
            "slide " + slide + " spans several patients");
    bag.tiles.push_back(i);
  }
  return bags;
}

}  // namespace shazam
