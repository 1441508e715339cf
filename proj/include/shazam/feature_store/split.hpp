#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "shazam/core/error.hpp"
#include "shazam/core/random.hpp"
#include "shazam/feature_store/types.hpp"

namespace shazam {

/// Sample indices into FeatureSet::samples.
struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Patient-level k-fold split with k = min(k_requested, #identified patients).
/// Samples without a patient are training-only in every fold.
inline std::vector<Fold> patient_split(const FeatureSet& fs, std::size_t k_requested, std::uint64_t seed) {
  require(k_requested >= 1, ErrorKind::InvalidArgument, "k must be >= 1");
  std::set<std::string> patient_set;
  for (const SampleRecord& s : fs.samples) {
    const std::string& p = fs.manifest.patient(s.id);
    if (p != kUnassigned) patient_set.insert(p);
  }
  require(!patient_set.empty(), ErrorKind::InvalidArgument, "no identified patients to split on");

  std::vector<std::string> patients(patient_set.begin(), patient_set.end());
  Rng rng = make_rng(derive_seed(seed, "patient_split"));
  shuffle(patients, rng);
  const std::size_t k = std::min(k_requested, patients.size());
  std::map<std::string, std::size_t> fold_of;
  for (std::size_t j = 0; j < patients.size(); ++j) fold_of[patients[j]] = j % k;

  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < fs.samples.size(); ++i) {
    const std::string& p = fs.manifest.patient(fs.samples[i].id);
    if (p == kUnassigned) {
      for (Fold& f : folds) f.train.push_back(i);
      continue;
    }
    const std::size_t home = fold_of.at(p);
    for (std::size_t f = 0; f < k; ++f) (f == home ? folds[f].test : folds[f].train).push_back(i);
  }
  return folds;
}

/// Stable fingerprint of a split; identical splits give identical strings.
inline std::string splits_hash(const FeatureSet& fs, const std::vector<Fold>& folds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    h = fnv1a("fold" + std::to_string(f), h);
    for (std::size_t i : folds[f].test) h = fnv1a(fs.samples[i].id + ";", h);
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace shazam
