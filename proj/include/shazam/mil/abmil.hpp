#pragma once

// Gated attention MIL pooling: score_j = w^T (tanh(V h_j) * sigmoid(U h_j)),
// weights = softmax over the bag, slide vector = sum_j weight_j h_j.

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "shazam/core/autodiff.hpp"
#include "shazam/core/error.hpp"
#include "shazam/core/layers.hpp"
#include "shazam/feature_store/types.hpp"

namespace shazam::mil {

struct AbmilHead {
  Linear tanh_branch;
  Linear sigmoid_branch;
  Linear score;

  AbmilHead() = default;
  AbmilHead(const std::string& name, Eigen::Index dim, Eigen::Index hidden, std::uint64_t seed)
      : tanh_branch(name + ".V", dim, hidden, seed),
        sigmoid_branch(name + ".U", dim, hidden, seed),
        score(name + ".w", hidden, 1, seed) {}

  void collect(std::vector<Parameter*>& o) {
    tanh_branch.collect(o);
    sigmoid_branch.collect(o);
    score.collect(o);
  }
};

/// Three independent heads, one per scale.
struct AbmilHeads {
  std::array<AbmilHead, 3> heads;

  AbmilHeads() = default;
  AbmilHeads(Eigen::Index dim, Eigen::Index hidden, std::uint64_t seed) {
    for (Scale s : kAllScales)
      heads[index_of(s)] = AbmilHead("abmil." + std::string(to_string(s)), dim, hidden, seed);
  }

  AbmilHead& at(Scale s) { return heads[index_of(s)]; }

  void collect(std::vector<Parameter*>& o) {
    for (AbmilHead& h : heads) h.collect(o);
  }
};

struct Pooled {
  ad::Var slide;    // 1 x d
  ad::Var weights;  // 1 x n
};

inline Pooled abmil_pool(ad::Tape& tape, AbmilHead& head, const ad::Var& bag) {
  require(bag.rows() >= 1, ErrorKind::InvalidArgument, "empty bag");
  require(bag.value().allFinite(), ErrorKind::NumericError, "non-finite bag");
  ad::Var a = ad::tanh(head.tanh_branch(tape, bag));
  ad::Var b = ad::sigmoid(head.sigmoid_branch(tape, bag));
  ad::Var scores = head.score(tape, ad::hadamard(a, b));  // n x 1
  ad::Var weights = ad::softmax_rows(ad::transpose(scores));
  return {ad::matmul(weights, bag), weights};
}

struct PooledValues {
  RowVectorD slide;
  std::vector<double> weights;
};

inline PooledValues abmil_pool(const AbmilHead& head, const Matrix& bag) {
  require(bag.rows() >= 1, ErrorKind::InvalidArgument, "empty bag");
  AbmilHead copy = head;
  ad::Tape tape;
  Pooled p = abmil_pool(tape, copy, tape.constant(bag));
  return {p.slide.value().row(0), to_vector(p.weights.value())};
}

struct AttentionRecord {
  std::string tile_id;
  Scale scale;
  std::string teacher;
  double weight;
};

inline void write_attention_csv(const std::filesystem::path& path, const std::vector<AttentionRecord>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << "tile_id,scale,teacher,weight\n";
  out.precision(9);
  for (const AttentionRecord& r : rows)
    out << r.tile_id << ',' << to_string(r.scale) << ',' << r.teacher << ',' << r.weight << '\n';
}

}  // namespace shazam::mil
