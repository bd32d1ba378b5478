#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "eegalign/epochs.hpp"
#include "eegalign/error.hpp"
#include "eegalign/rng.hpp"

namespace eegalign {

enum class SamplerMethod { kIdes, kAverageRepeats };

inline const char* to_string(SamplerMethod m) {
  return m == SamplerMethod::kIdes ? "ides" : "average_repeats";
}

inline SamplerMethod sampler_method_from_string(const std::string& s) {
  if (s == "ides") return SamplerMethod::kIdes;
  if (s == "average_repeats") return SamplerMethod::kAverageRepeats;
  fail(ErrorKind::kConfig, "unknown sampler method '" + s + "'");
}

struct SamplerConfig {
  SamplerMethod method = SamplerMethod::kIdes;
  int k = 7;  // IDES draw size
  std::uint64_t seed = 0;
};

// Per-concept index of training trial slots (one per available (image,
// repeat) pair) and validation holdout, bound to one EpochSet. The bound
// set must outlive the space.
struct ConceptSpace {
  const EpochSet* epochs = nullptr;
  std::vector<std::string> concepts;  // ordered
  std::map<std::string, std::vector<int>> slots;
  std::map<std::string, std::vector<int>> holdout;
  // Retained training images per concept, sorted; schedule units come from
  // these so IDES and average-repeats share identical batch structures.
  std::map<std::string, std::vector<std::string>> images;
  // The held-out image per concept (empty when the holdout came from an
  // explicit val split).
  std::map<std::string, std::string> holdout_image;

  int min_slot_count() const {
    int m = std::numeric_limits<int>::max();
    for (const auto& [c, s] : slots) m = std::min(m, static_cast<int>(s.size()));
    return slots.empty() ? 0 : m;
  }
};

// Builds the training space: per concept, all repeats of the
// lexicographically last image move to the validation holdout; the rest
// become sampling slots. Trials already marked val join the holdout.
inline ConceptSpace build_concept_space(const EpochSet& epochs) {
  ConceptSpace space;
  space.epochs = &epochs;
  std::map<std::string, std::map<std::string, std::vector<int>>> grouped;
  for (int i = 0; i < epochs.n_trials(); ++i) {
    const TrialMeta& m = epochs.meta[static_cast<std::size_t>(i)];
    if (m.split == Split::kTrain) grouped[m.concept_id][m.image_id].push_back(i);
    if (m.split == Split::kVal) space.holdout[m.concept_id].push_back(i);
  }
  require(!grouped.empty(), ErrorKind::kValidation,
          "no train-split trials to build a concept space from");
  for (auto& [concept_id, by_image] : grouped) {
    require(by_image.size() >= 2, ErrorKind::kHoldoutRule,
            "concept '" + concept_id +
                "' has fewer than two images; cannot hold one out");
    const std::string& last_image = by_image.rbegin()->first;  // lexicographic
    space.concepts.push_back(concept_id);
    space.holdout_image[concept_id] = last_image;
    for (auto& [image_id, trials] : by_image) {
      if (image_id == last_image) {
        auto& h = space.holdout[concept_id];
        h.insert(h.end(), trials.begin(), trials.end());
      } else {
        auto& s = space.slots[concept_id];
        s.insert(s.end(), trials.begin(), trials.end());
        space.images[concept_id].push_back(image_id);
      }
    }
  }
  return space;
}

namespace detail {

// Mean of the referenced trials, accumulated in double in ascending index
// order so the result is reproducible bit-for-bit from the logged indices.
inline RowMatrixXf mean_of_slots(const EpochSet& epochs,
                                 std::vector<int> indices) {
  std::sort(indices.begin(), indices.end());
  Eigen::MatrixXd acc =
      Eigen::MatrixXd::Zero(epochs.n_channels(), epochs.n_samples());
  for (int idx : indices) acc += epochs.trial(idx).cast<double>();
  acc /= static_cast<double>(indices.size());
  return acc.cast<float>();
}

}  // namespace detail

// Uniform draw of k distinct slots of one concept; returns the chosen trial
// indices (ascending). Averaging may mix images but never concepts.
inline std::vector<int> ides_draw_indices(const ConceptSpace& space,
                                          const std::string& concept_id,
                                          int k, Rng& rng) {
  const auto it = space.slots.find(concept_id);
  require(it != space.slots.end(), ErrorKind::kLookup,
          "unknown concept '" + concept_id + "'");
  const std::vector<int>& pool = it->second;
  require(k >= 1 && k <= static_cast<int>(pool.size()), ErrorKind::kSampling,
          "draw size " + std::to_string(k) + " exceeds the " +
              std::to_string(pool.size()) + " slots of '" + concept_id + "'");
  std::vector<int> chosen;
  chosen.reserve(static_cast<std::size_t>(k));
  for (int local : rng.sample_without_replacement(static_cast<int>(pool.size()), k)) {
    chosen.push_back(pool[static_cast<std::size_t>(local)]);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

inline RowMatrixXf ides_draw(const ConceptSpace& space,
                             const std::string& concept_id, int k, Rng& rng) {
  return detail::mean_of_slots(*space.epochs,
                               ides_draw_indices(space, concept_id, k, rng));
}

// All training repeats of one (concept, image) pair.
inline std::vector<int> average_repeats_indices(const ConceptSpace& space,
                                                const std::string& concept_id,
                                                const std::string& image_id) {
  const auto it = space.slots.find(concept_id);
  require(it != space.slots.end(), ErrorKind::kLookup,
          "unknown concept '" + concept_id + "'");
  std::vector<int> chosen;
  for (int idx : it->second) {
    if (space.epochs->meta[static_cast<std::size_t>(idx)].image_id == image_id) {
      chosen.push_back(idx);
    }
  }
  require(!chosen.empty(), ErrorKind::kLookup,
          "concept '" + concept_id + "' has no training repeats of image '" +
              image_id + "'");
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

// Conventional baseline: mean across the repeats of one image only.
inline RowMatrixXf average_repeats_draw(const ConceptSpace& space,
                                        const std::string& concept_id,
                                        const std::string& image_id,
                                        Rng& /*rng*/) {
  return detail::mean_of_slots(
      *space.epochs, average_repeats_indices(space, concept_id, image_id));
}

// Per test concept, the element-wise mean over all its test repeats.
inline std::map<std::string, RowMatrixXf> test_aggregate(const EpochSet& epochs) {
  std::map<std::string, std::vector<int>> by_concept;
  for (int i = 0; i < epochs.n_trials(); ++i) {
    const TrialMeta& m = epochs.meta[static_cast<std::size_t>(i)];
    if (m.split == Split::kTest) by_concept[m.concept_id].push_back(i);
  }
  require(!by_concept.empty(), ErrorKind::kEmptyConcept,
          "no test-split trials to aggregate");
  std::map<std::string, RowMatrixXf> out;
  for (auto& [concept_id, trials] : by_concept) {
    out.emplace(concept_id, detail::mean_of_slots(epochs, trials));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic batch scheduling. One unit per (concept, retained image)
// per epoch; IDES ignores the image when drawing slots but keeps it as the
// positive-pair label source.

struct DrawSpec {
  std::string concept_id;
  std::string image_id;
  std::uint64_t draw_seed = 0;
};

using Batch = std::vector<DrawSpec>;

inline std::vector<Batch> make_epoch_schedule(const ConceptSpace& space,
                                              const SamplerConfig& config,
                                              int batch_size, int epoch_index) {
  require(batch_size >= 2, ErrorKind::kValidation, "batch_size must be >= 2");
  if (config.method == SamplerMethod::kIdes) {
    require(config.k <= space.min_slot_count(), ErrorKind::kSampling,
            "IDES k exceeds the smallest concept slot pool");
  }
  std::vector<std::pair<std::string, std::string>> units;
  for (const std::string& concept_id : space.concepts) {
    const auto it = space.images.find(concept_id);
    if (it == space.images.end()) continue;
    for (const std::string& image_id : it->second) {
      units.emplace_back(concept_id, image_id);
    }
  }
  Rng shuffle_rng(derive_seed({config.seed, 0x5C4EDULEull,
                               static_cast<std::uint64_t>(epoch_index)}));
  const std::vector<int> perm =
      shuffle_rng.permutation(static_cast<int>(units.size()));

  std::vector<Batch> batches;
  Batch current;
  for (std::size_t pos = 0; pos < perm.size(); ++pos) {
    const auto& [concept_id, image_id] =
        units[static_cast<std::size_t>(perm[pos])];
    DrawSpec d;
    d.concept_id = concept_id;
    d.image_id = image_id;
    d.draw_seed = derive_seed({config.seed, 0xD4A3ull,
                               static_cast<std::uint64_t>(epoch_index),
                               static_cast<std::uint64_t>(pos)});
    current.push_back(std::move(d));
    if (static_cast<int>(current.size()) == batch_size) {
      batches.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

// One JSON-lines audit record per executed draw.
inline void write_draw_audit(std::ostream& os, int epoch, int batch,
                             const DrawSpec& spec,
                             const std::vector<int>& slot_indices) {
  json j;
  j["epoch"] = epoch;
  j["batch"] = batch;
  j["concept_id"] = spec.concept_id;
  j["image_id"] = spec.image_id;
  j["draw_seed"] = spec.draw_seed;
  j["slots"] = slot_indices;
  os << j.dump() << "\n";
}

}  // namespace eegalign
