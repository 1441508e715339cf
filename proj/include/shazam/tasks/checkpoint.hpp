#pragma once

// Checkpoint = text manifest (architecture, task, parameter table) plus a
// float32 blob holding every parameter in table order.

#include <cstring>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "shazam/core/error.hpp"
#include "shazam/feature_store/container.hpp"
#include "shazam/tasks/model.hpp"

namespace shazam::tasks {

inline constexpr char kCheckpointMagic[4] = {'S', 'H', 'Z', 'C'};
inline constexpr int kCheckpointVersion = 1;

namespace detail {

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream o;
  o.precision(17);
  for (std::size_t k = 0; k < v.size(); ++k) o << (k ? "," : "") << v[k];
  return o.str();
}

inline std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  for (const std::string& t : shazam::detail::split(s, ','))
    if (!t.empty()) out.push_back(static_cast<std::size_t>(shazam::detail::parse_u64(t, "checkpoint")));
  return out;
}

inline std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const std::string& t : shazam::detail::split(s, ','))
    if (!t.empty()) {
      try {
        out.push_back(std::stod(t));
      } catch (const std::exception&) {
        fail(ErrorKind::CorruptContainer, "bad number '" + t + "' in checkpoint");
      }
    }
  return out;
}

inline const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  require(it != kv.end(), ErrorKind::CorruptContainer, "checkpoint manifest lacks " + key);
  return it->second;
}

}  // namespace detail

inline std::filesystem::path checkpoint_blob_path(const std::filesystem::path& manifest) {
  return manifest.string() + ".bin";
}

inline void save_checkpoint(ShazamModel& model, const std::filesystem::path& path) {
  const ModelConfig& c = model.config;
  std::ostringstream m;
  m << "format=shazam-checkpoint\nversion=" << kCheckpointVersion << '\n';
  m << "task=" << to_string(c.task) << '\n';
  m << "teachers=" << detail::join(c.fusion.teacher_names) << '\n';
  m << "native_dims=" << detail::join(c.fusion.native_dims) << '\n';
  m << "dim=" << c.fusion.dim << "\nheads=" << c.fusion.heads << "\nlayers=" << c.fusion.layers << '\n';
  m << "gate_hidden_per_teacher=" << c.fusion.gate_hidden_per_teacher << "\nseed=" << c.fusion.seed << '\n';
  m << "head_hidden=" << detail::join(c.head.hidden) << "\nhead_layer_norm=" << c.head.layer_norm << '\n';
  m << "head_dropout=" << shazam::detail::format_double(c.head.dropout) << "\nhead_out=" << c.head.out << '\n';
  m << "bags=" << c.bags << "\nabmil_hidden=" << c.abmil_hidden << "\nscales=" << c.scales.to_string() << '\n';
  m << "use_moe=" << c.use_moe << "\ndistill=" << c.distill << '\n';
  m << "delta=" << shazam::detail::format_double(c.distill_cfg.delta)
    << "\nlambda_distill=" << shazam::detail::format_double(c.distill_cfg.lambda_distill) << '\n';
  m << "ridge_l2=" << shazam::detail::format_double(c.ridge_l2) << "\nsurvival_bins=" << c.survival_bins << '\n';
  m << "survival_cuts=" << detail::join(model.survival_cuts) << '\n';
  m << "baseline_teacher=" << (c.baseline_teacher ? std::to_string(*c.baseline_teacher) : std::string("none")) << '\n';

  std::string blob(kCheckpointMagic, 4);
  std::vector<Parameter*> params = model.parameters();
  m << "n_params=" << params.size() << '\n';
  std::size_t offset = 0;
  for (Parameter* p : params) {
    m << "param." << p->name << '=' << p->value.rows() << ',' << p->value.cols() << ',' << offset << '\n';
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const auto f = static_cast<float>(p->value.data()[i]);
      char b[4];
      std::memcpy(b, &f, 4);
      blob.append(b, 4);
    }
    offset += static_cast<std::size_t>(p->value.size());
  }
  m << "n_values=" << offset << '\n';
  shazam::detail::write_file(path, m.str());
  shazam::detail::write_file(checkpoint_blob_path(path), blob);
}

inline ShazamModel load_checkpoint(const std::filesystem::path& path) {
  const auto kv = shazam::detail::parse_key_values(shazam::detail::read_file(path));
  using detail::need;
  require(need(kv, "format") == "shazam-checkpoint", ErrorKind::UnsupportedFormat, "not a checkpoint manifest");
  require(need(kv, "version") == std::to_string(kCheckpointVersion), ErrorKind::UnsupportedFormat,
          "unsupported checkpoint version " + need(kv, "version"));
  auto u = [&](const std::string& k) { return static_cast<std::size_t>(shazam::detail::parse_u64(need(kv, k), k)); };
  auto d = [&](const std::string& k) {
    auto v = detail::parse_doubles(need(kv, k));
    require(v.size() == 1, ErrorKind::CorruptContainer, "bad value for " + k);
    return v[0];
  };
  ModelConfig c;
  c.task = parse_task_kind(need(kv, "task"));
  c.fusion.teacher_names = shazam::detail::split(need(kv, "teachers"), ',');
  for (std::size_t v : detail::parse_sizes(need(kv, "native_dims"))) c.fusion.native_dims.push_back(static_cast<std::uint32_t>(v));
  c.fusion.dim = u("dim");
  c.fusion.heads = u("heads");
  c.fusion.layers = u("layers");
  c.fusion.gate_hidden_per_teacher = u("gate_hidden_per_teacher");
  c.fusion.seed = shazam::detail::parse_u64(need(kv, "seed"), "seed");
  c.head.hidden = detail::parse_sizes(need(kv, "head_hidden"));
  c.head.layer_norm = u("head_layer_norm") != 0;
  c.head.dropout = d("head_dropout");
  c.head.out = u("head_out");
  c.bags = u("bags") != 0;
  c.abmil_hidden = u("abmil_hidden");
  c.scales = ScaleSet::parse(need(kv, "scales"));
  c.use_moe = u("use_moe") != 0;
  c.distill = u("distill") != 0;
  c.distill_cfg.delta = d("delta");
  c.distill_cfg.lambda_distill = d("lambda_distill");
  c.ridge_l2 = d("ridge_l2");
  c.survival_bins = u("survival_bins");
  if (need(kv, "baseline_teacher") != "none") c.baseline_teacher = u("baseline_teacher");

  ShazamModel model(c);
  model.survival_cuts = detail::parse_doubles(need(kv, "survival_cuts"));
  const std::string blob = shazam::detail::read_file(checkpoint_blob_path(path));
  require(blob.size() >= 4 && std::memcmp(blob.data(), kCheckpointMagic, 4) == 0, ErrorKind::CorruptContainer,
          "bad checkpoint blob magic");
  const std::size_t n_values = u("n_values");
  require(blob.size() == 4 + 4 * n_values, ErrorKind::InconsistentContainer, "checkpoint blob size does not match manifest");
  std::vector<Parameter*> params = model.parameters();
  require(u("n_params") == params.size(), ErrorKind::InconsistentContainer, "checkpoint parameter count mismatch");
  for (Parameter* p : params) {
    const auto shape = detail::parse_sizes(need(kv, "param." + p->name));
    require(shape.size() == 3, ErrorKind::CorruptContainer, "bad parameter entry " + p->name);
    require(shape[0] == static_cast<std::size_t>(p->value.rows()) && shape[1] == static_cast<std::size_t>(p->value.cols()),
            ErrorKind::InconsistentContainer, "shape mismatch for " + p->name);
    require(shape[2] + static_cast<std::size_t>(p->value.size()) <= n_values, ErrorKind::InconsistentContainer,
            "parameter " + p->name + " overruns the blob");
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      float f;
      std::memcpy(&f, blob.data() + 4 + 4 * (shape[2] + static_cast<std::size_t>(i)), 4);
      p->value.data()[i] = f;
    }
    p->zero_grad();
  }
  return model;
}

/// Rounds every parameter to float32 so the in-memory model equals what a checkpoint stores.
inline void quantize_to_float(ShazamModel& model) {
  for (Parameter* p : model.parameters())
    for (Eigen::Index i = 0; i < p->value.size(); ++i)
      p->value.data()[i] = static_cast<double>(static_cast<float>(p->value.data()[i]));
}

}  // namespace shazam::tasks
