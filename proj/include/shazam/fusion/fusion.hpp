#pragma once

// Feature alignment, gated mixture-of-experts fusion and the self-attention
// student.
//
// Per scale s, each teacher's feature is projected into a shared width d.
// A per-scale gating MLP maps the concatenation of the N projected vectors to
// a softmax weight per teacher; row i of the fused N x d matrix is g_i times
// projected feature i. A residual multi-head self-attention stack over the
// teacher axis (no positional encoding) and a terminal layer norm produce
// f_final, whose mean over teachers is the scale embedding z_s.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shazam/core/autodiff.hpp"
#include "shazam/core/error.hpp"
#include "shazam/core/layers.hpp"
#include "shazam/feature_store/types.hpp"

namespace shazam::fusion {

struct FusionConfig {
  std::vector<std::string> teacher_names;
  std::vector<std::uint32_t> native_dims;
  std::size_t dim = 256;
  std::size_t heads = 4;
  std::size_t layers = 4;
  /// Gate hidden width is gate_hidden_per_teacher * N.
  std::size_t gate_hidden_per_teacher = 4;
  std::uint64_t seed = 0;

  std::size_t num_teachers() const { return teacher_names.size(); }
};

inline void validate(const FusionConfig& c) {
  require(!c.teacher_names.empty(), ErrorKind::InvalidArgument, "fusion needs at least one teacher");
  require(c.teacher_names.size() == c.native_dims.size(), ErrorKind::InvalidArgument,
          "teacher names and native dims disagree");
  require(c.dim >= 1 && c.heads >= 1, ErrorKind::InvalidArgument, "dim and heads must be positive");
  require(c.dim % c.heads == 0, ErrorKind::InvalidArgument,
          "dim " + std::to_string(c.dim) + " is not divisible by " + std::to_string(c.heads) + " heads");
  require(c.layers >= 1, ErrorKind::InvalidArgument, "attention stack needs at least one layer");
}

/// One affine map per (teacher, scale) into the shared width.
struct ProjectionBank {
  std::vector<std::array<Linear, 3>> maps;

  ProjectionBank() = default;
  explicit ProjectionBank(const FusionConfig& c) {
    for (std::size_t i = 0; i < c.num_teachers(); ++i) {
      std::array<Linear, 3> per_scale;
      for (Scale s : kAllScales)
        per_scale[index_of(s)] = Linear("proj." + c.teacher_names[i] + "." + std::string(to_string(s)),
                                        c.native_dims[i], static_cast<Eigen::Index>(c.dim), c.seed);
      maps.push_back(std::move(per_scale));
    }
  }

  Linear& at(std::size_t teacher, Scale s) { return maps[teacher][index_of(s)]; }

  void collect(std::vector<Parameter*>& out) {
    for (auto& per_scale : maps)
      for (Linear& l : per_scale) l.collect(out);
  }
};

struct GatingNetwork {
  Linear hidden;
  Linear out;

  GatingNetwork() = default;
  GatingNetwork(const std::string& name, const FusionConfig& c) {
    const auto n = static_cast<Eigen::Index>(c.num_teachers());
    hidden = Linear(name + ".hidden", n * static_cast<Eigen::Index>(c.dim),
                    n * static_cast<Eigen::Index>(c.gate_hidden_per_teacher), c.seed);
    out = Linear(name + ".out", n * static_cast<Eigen::Index>(c.gate_hidden_per_teacher), n, c.seed);
  }

  /// Pre-softmax scores.
  ad::Var logits(ad::Tape& tape, const ad::Var& f_concat) { return out(tape, ad::gelu(hidden(tape, f_concat))); }

  void collect(std::vector<Parameter*>& o) {
    hidden.collect(o);
    out.collect(o);
  }
};

struct AttentionLayer {
  Linear query, key, value, output;

  AttentionLayer() = default;
  AttentionLayer(const std::string& name, Eigen::Index dim, std::uint64_t seed)
      : query(name + ".q", dim, dim, seed),
        key(name + ".k", dim, dim, seed),
        value(name + ".v", dim, dim, seed),
        output(name + ".o", dim, dim, seed) {}

  void collect(std::vector<Parameter*>& o) {
    query.collect(o);
    key.collect(o);
    value.collect(o);
    output.collect(o);
  }
};

struct StudentStack {
  std::size_t heads = 4;
  std::vector<AttentionLayer> layers;
  LayerNormParams norm;

  StudentStack() = default;
  explicit StudentStack(const FusionConfig& c) : heads(c.heads), norm("student.norm", static_cast<Eigen::Index>(c.dim)) {
    for (std::size_t l = 0; l < c.layers; ++l)
      layers.emplace_back("student.attn" + std::to_string(l), static_cast<Eigen::Index>(c.dim), c.seed);
  }

  void collect(std::vector<Parameter*>& o) {
    for (AttentionLayer& l : layers) l.collect(o);
    norm.collect(o);
  }
};

/// All trainable fusion parameters.
struct FusionState {
  FusionConfig config;
  ProjectionBank projections;
  std::array<GatingNetwork, 3> gates;
  StudentStack stack;

  FusionState() = default;
  explicit FusionState(FusionConfig c) : config(std::move(c)) {
    validate(config);
    projections = ProjectionBank(config);
    for (Scale s : kAllScales) gates[index_of(s)] = GatingNetwork("gate." + std::string(to_string(s)), config);
    stack = StudentStack(config);
  }

  std::size_t num_teachers() const { return config.num_teachers(); }
  std::size_t dim() const { return config.dim; }

  void collect(std::vector<Parameter*>& o) {
    projections.collect(o);
    for (GatingNetwork& g : gates) g.collect(o);
    stack.collect(o);
  }
};

// ---------------------------------------------------------------------------
// Graph-level operations.

inline void check_finite(const ad::Var& v, const std::string& where) {
  require(v.value().allFinite(), ErrorKind::NumericError, "non-finite values in " + where);
}

struct ProjectedScale {
  std::vector<ad::Var> projected;  // N rows, each 1 x d
  ad::Var concat;                  // 1 x N*d
};

inline ProjectedScale project_and_concat(ad::Tape& tape, FusionState& state, std::span<const std::string> order,
                                         std::span<const ad::Var> features, Scale scale) {
  const std::size_t n = state.num_teachers();
  require(order.size() == n && features.size() == n, ErrorKind::InvalidArgument,
          "expected one feature per teacher");
  for (std::size_t i = 0; i < n; ++i)
    require(order[i] == state.config.teacher_names[i], ErrorKind::InvalidArgument,
            "teacher order mismatch at position " + std::to_string(i) + ": got " + order[i] + ", expected " +
                state.config.teacher_names[i]);
  ProjectedScale out;
  for (std::size_t i = 0; i < n; ++i) out.projected.push_back(state.projections.at(i, scale)(tape, features[i]));
  out.concat = ad::concat_cols(out.projected);
  return out;
}

/// Softmax gate over teachers, 1 x N.
inline ad::Var gate(ad::Tape& tape, GatingNetwork& net, const ad::Var& f_concat) {
  check_finite(f_concat, "gate input");
  return ad::softmax_rows(net.logits(tape, f_concat));
}

/// Rows g_i * f_i stacked into N x d.
inline ad::Var fuse(const ad::Var& g, const std::vector<ad::Var>& projected) {
  require(g.rows() == 1 && static_cast<std::size_t>(g.cols()) == projected.size(), ErrorKind::InvalidArgument,
          "gate length does not match the number of projected features");
  return ad::scale_rows(ad::concat_rows(projected), g);
}

inline ad::Var attention_layer(ad::Tape& tape, AttentionLayer& layer, std::size_t heads, const ad::Var& x) {
  const Eigen::Index d = x.cols();
  const Eigen::Index hd = d / static_cast<Eigen::Index>(heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  ad::Var q = layer.query(tape, x);
  ad::Var k = layer.key(tape, x);
  ad::Var v = layer.value(tape, x);
  std::vector<ad::Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Eigen::Index off = static_cast<Eigen::Index>(h) * hd;
    ad::Var qh = ad::slice_cols(q, off, hd);
    ad::Var kh = ad::slice_cols(k, off, hd);
    ad::Var vh = ad::slice_cols(v, off, hd);
    ad::Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
    outs.push_back(ad::matmul(ad::softmax_rows(scores), vh));
  }
  ad::Var merged = heads == 1 ? outs.front() : ad::concat_cols(outs);
  return ad::add(x, layer.output(tape, merged));
}

inline ad::Var attend_and_normalize(ad::Tape& tape, StudentStack& stack, const ad::Var& fused) {
  check_finite(fused, "fused matrix");
  ad::Var x = fused;
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    x = attention_layer(tape, stack.layers[l], stack.heads, x);
    check_finite(x, "attention layer " + std::to_string(l));
  }
  ad::Var y = stack.norm(tape, x);
  check_finite(y, "final layer norm");
  return y;
}

struct ScaleOutput {
  ad::Var gate;     // 1 x N
  ad::Var fused;    // N x d
  ad::Var final;    // N x d
  ad::Var z;        // 1 x d
  std::vector<ad::Var> targets;  // N stop-gradient distillation targets, 1 x d
};

struct FusionOutput {
  std::array<std::optional<ScaleOutput>, 3> scales;
  ad::Var task_input;  // 1 x (|active| * d)
};

/// Runs fusion on already-aligned inputs (projected tile features or pooled
/// slide vectors), one vector per teacher per active scale. With use_moe off the
/// gate is the constant uniform vector.
inline FusionOutput fuse_scales(ad::Tape& tape, FusionState& state,
                                const std::array<std::vector<ad::Var>, 3>& aligned, const ScaleSet& active,
                                bool use_moe) {
  require(!active.empty(), ErrorKind::InvalidArgument, "no active scales");
  const std::size_t n = state.num_teachers();
  FusionOutput out;
  std::vector<ad::Var> zs;
  for (Scale s : active.list()) {
    const auto& rows = aligned[index_of(s)];
    require(rows.size() == n, ErrorKind::InvalidArgument,
            "scale " + std::string(to_string(s)) + " is missing aligned features");
    ScaleOutput so;
    if (use_moe) {
      so.gate = gate(tape, state.gates[index_of(s)], ad::concat_cols(rows));
    } else {
      so.gate = tape.constant(Matrix::Constant(1, static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n)));
    }
    so.fused = fuse(so.gate, rows);
    so.final = attend_and_normalize(tape, state.stack, so.fused);
    so.z = ad::mean_rows(so.final);
    for (const ad::Var& r : rows) so.targets.push_back(ad::stop_gradient(r));
    zs.push_back(so.z);
    out.scales[index_of(s)] = std::move(so);
  }
  out.task_input = zs.size() == 1 ? zs.front() : ad::concat_cols(zs);
  return out;
}

// ---------------------------------------------------------------------------
// Value-level wrappers. Each runs a private tape over a copy of the component.

struct ProjectedValues {
  std::vector<Matrix> projected;
  Matrix concat;
};

inline ProjectedValues project_and_concat(const FusionState& state, std::span<const std::string> order,
                                          std::span<const MultiScaleFeature> features, Scale scale) {
  FusionState copy = state;
  ad::Tape tape;
  require(features.size() == order.size(), ErrorKind::InvalidArgument, "one feature per teacher name required");
  std::vector<ad::Var> in;
  for (const MultiScaleFeature& f : features) in.push_back(tape.constant(row_matrix(std::span<const float>(f.at(scale)))));
  ProjectedScale p = project_and_concat(tape, copy, order, in, scale);
  ProjectedValues out;
  for (const ad::Var& v : p.projected) out.projected.push_back(v.value());
  out.concat = p.concat.value();
  return out;
}

inline std::vector<double> gate_values(const GatingNetwork& net, const Matrix& f_concat) {
  GatingNetwork copy = net;
  ad::Tape tape;
  return to_vector(gate(tape, copy, tape.constant(f_concat)).value());
}

inline Matrix fuse_values(std::span<const double> g, const std::vector<Matrix>& projected) {
  ad::Tape tape;
  std::vector<ad::Var> rows;
  for (const Matrix& m : projected) rows.push_back(tape.constant(m));
  return fuse(tape.constant(row_matrix(g)), rows).value();
}

inline Matrix attend_and_normalize_values(const StudentStack& stack, const Matrix& fused) {
  StudentStack copy = stack;
  ad::Tape tape;
  return attend_and_normalize(tape, copy, tape.constant(fused)).value();
}

struct StudentEmbedding {
  std::array<std::optional<RowVectorD>, 3> z;
  RowVectorD task_input;
};

/// z_s = mean over the N rows of f_final at each scale; task input is the in-order concatenation.
inline StudentEmbedding student_embed(const std::array<std::optional<Matrix>, 3>& finals) {
  StudentEmbedding e;
  std::vector<double> concat;
  for (Scale s : kAllScales) {
    const auto& f = finals[index_of(s)];
    require(f.has_value(), ErrorKind::InvalidArgument, "missing scale " + std::string(to_string(s)));
    RowVectorD z = f->colwise().mean();
    concat.insert(concat.end(), z.data(), z.data() + z.size());
    e.z[index_of(s)] = std::move(z);
  }
  e.task_input = Eigen::Map<RowVectorD>(concat.data(), static_cast<Eigen::Index>(concat.size()));
  return e;
}

}  // namespace shazam::fusion
