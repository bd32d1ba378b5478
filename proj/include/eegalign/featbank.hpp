#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "eegalign/binio.hpp"
#include "eegalign/error.hpp"

namespace eegalign {

enum class Modality { kVisual, kLanguage, kMultimodal };

inline const char* to_string(Modality m) {
  switch (m) {
    case Modality::kVisual: return "visual";
    case Modality::kLanguage: return "language";
    case Modality::kMultimodal: return "multimodal";
  }
  return "visual";
}

inline Modality modality_from_string(const std::string& s) {
  if (s == "visual") return Modality::kVisual;
  if (s == "language") return Modality::kLanguage;
  if (s == "multimodal") return Modality::kMultimodal;
  fail(ErrorKind::kFormat, "unknown modality '" + s + "'");
}

struct FeatureItem {
  std::string concept_id;
  std::optional<std::string> image_id;  // empty for concept-level vectors
};

// Matrix of externally extracted feature vectors keyed by concept/image.
// Rows align with items; one modality per bank.
struct FeatureBank {
  std::vector<FeatureItem> items;
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> vectors;
  Modality modality = Modality::kVisual;
  std::string source;  // provenance, e.g. "ViT-B-16 / Laion 400M"
  bool normalized = false;

  int n_items() const { return static_cast<int>(items.size()); }
  int dim() const { return static_cast<int>(vectors.cols()); }

  void validate() const {
    require(static_cast<int>(vectors.rows()) == n_items(), ErrorKind::kValidation,
            "vectors row count disagrees with items");
    require(n_items() == 0 || dim() > 0, ErrorKind::kValidation,
            "feature dimension must be positive");
    std::set<std::pair<std::string, std::string>> seen;
    for (const FeatureItem& it : items) {
      const bool fresh =
          seen.insert({it.concept_id, it.image_id.value_or("")}).second;
      require(fresh, ErrorKind::kValidation,
              "duplicate feature item (" + it.concept_id + ", " +
                  it.image_id.value_or("<concept>") + ")");
    }
    if (normalized) {
      for (int r = 0; r < n_items(); ++r) {
        require(std::abs(vectors.row(r).norm() - 1.0f) <= 1e-5f,
                ErrorKind::kValidation,
                "normalized flag set but row " + std::to_string(r) +
                    " is not unit length");
      }
    }
  }

  // Row index of (concept, image); image empty matches concept-level rows.
  std::optional<int> find(const std::string& concept_id,
                          const std::optional<std::string>& image_id) const {
    build_index();
    const auto it = index_.find({concept_id, image_id.value_or("")});
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  mutable std::map<std::pair<std::string, std::string>, int> index_;
  void build_index() const {
    if (!index_.empty() || items.empty()) return;
    for (int i = 0; i < n_items(); ++i) {
      index_[{items[static_cast<std::size_t>(i)].concept_id,
              items[static_cast<std::size_t>(i)].image_id.value_or("")}] = i;
    }
  }
};

namespace detail {

inline Eigen::RowVectorXf unit_normalized(const Eigen::RowVectorXf& v,
                                          const std::string& what) {
  const double n = v.cast<double>().norm();
  require(n > 1e-12, ErrorKind::kNormalization,
          "zero vector cannot be unit-normalized (" + what + ")");
  return (v.cast<double>() / n).cast<float>();
}

}  // namespace detail

inline FeatureBank normalize_rows(FeatureBank bank) {
  for (int r = 0; r < bank.n_items(); ++r) {
    bank.vectors.row(r) = detail::unit_normalized(
        bank.vectors.row(r), "item " + bank.items[static_cast<std::size_t>(r)].concept_id);
  }
  bank.normalized = true;
  return bank;
}

// ---------------------------------------------------------------------------
// FeatBank on-disk format: manifest.json + features.f32le ([item][dim]).

inline void save_featbank(const FeatureBank& bank, const fs::path& dir) {
  bank.validate();
  fs::create_directories(dir);
  json manifest;
  manifest["format_version"] = 1;
  manifest["modality"] = to_string(bank.modality);
  manifest["dim"] = bank.dim();
  manifest["source"] = bank.source;
  manifest["normalized"] = bank.normalized;
  json items = json::array();
  for (const FeatureItem& it : bank.items) {
    json entry;
    entry["concept_id"] = it.concept_id;
    if (it.image_id) {
      entry["image_id"] = *it.image_id;
    } else {
      entry["image_id"] = nullptr;
    }
    items.push_back(std::move(entry));
  }
  manifest["items"] = std::move(items);
  write_json_file(dir / "manifest.json", manifest);
  write_f32le(dir / "features.f32le", bank.vectors.data(),
              static_cast<std::size_t>(bank.vectors.size()));
}

inline FeatureBank load_featbank(const fs::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  FeatureBank bank;
  int dim = 0;
  try {
    require(manifest.at("format_version").get<int>() == 1, ErrorKind::kFormat,
            "unsupported FeatBank format_version");
    bank.modality = modality_from_string(manifest.at("modality").get<std::string>());
    dim = manifest.at("dim").get<int>();
    bank.source = manifest.at("source").get<std::string>();
    bank.normalized = manifest.at("normalized").get<bool>();
    for (const json& it : manifest.at("items")) {
      FeatureItem item;
      item.concept_id = it.at("concept_id").get<std::string>();
      if (!it.at("image_id").is_null()) {
        item.image_id = it.at("image_id").get<std::string>();
      }
      bank.items.push_back(std::move(item));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, "manifest.json: " + std::string(e.what()));
  }
  const std::vector<float> blob = read_f32le(dir / "features.f32le");
  const std::size_t expect =
      static_cast<std::size_t>(bank.items.size()) * static_cast<std::size_t>(dim);
  require(blob.size() == expect, ErrorKind::kCorruption,
          "features.f32le holds " + std::to_string(blob.size() * 4) +
              " bytes, manifest implies " + std::to_string(expect * 4));
  bank.vectors.resize(static_cast<Eigen::Index>(bank.items.size()), dim);
  std::copy(blob.begin(), blob.end(), bank.vectors.data());
  bank.validate();
  return bank;
}

// ---------------------------------------------------------------------------
// Bank builders.

// Joins per-modality banks row-wise: each half is unit-normalized, the
// halves are concatenated, and the joint vector is unit-normalized again so
// neither modality dominates by scale. raw_concat skips the per-half
// normalization (ablation switch); the joint normalization always runs
// because downstream modules require unit rows.
inline FeatureBank concat_multimodal(const FeatureBank& visual,
                                     const FeatureBank& language,
                                     bool raw_concat = false) {
  require(visual.modality == Modality::kVisual &&
              language.modality == Modality::kLanguage,
          ErrorKind::kAlignment, "expected a visual bank and a language bank");
  require(visual.n_items() == language.n_items(), ErrorKind::kAlignment,
          "banks hold different item counts");
  for (int i = 0; i < visual.n_items(); ++i) {
    const FeatureItem& a = visual.items[static_cast<std::size_t>(i)];
    const FeatureItem& b = language.items[static_cast<std::size_t>(i)];
    require(a.concept_id == b.concept_id && a.image_id == b.image_id,
            ErrorKind::kAlignment,
            "banks disagree on item " + std::to_string(i) + " (" +
                a.concept_id + " vs " + b.concept_id + ")");
  }
  FeatureBank out;
  out.items = visual.items;
  out.modality = Modality::kMultimodal;
  out.source = visual.source + " + " + language.source;
  out.vectors.resize(visual.n_items(), visual.dim() + language.dim());
  for (int i = 0; i < visual.n_items(); ++i) {
    Eigen::RowVectorXf v = visual.vectors.row(i);
    Eigen::RowVectorXf l = language.vectors.row(i);
    const std::string key = visual.items[static_cast<std::size_t>(i)].concept_id;
    if (!raw_concat) {
      v = detail::unit_normalized(v, "visual " + key);
      l = detail::unit_normalized(l, "language " + key);
    }
    Eigen::RowVectorXf joint(v.size() + l.size());
    joint << v, l;
    out.vectors.row(i) = detail::unit_normalized(joint, "joint " + key);
  }
  out.normalized = true;
  out.validate();
  return out;
}

// Out-of-distribution candidates: per concept, the arithmetic mean of its
// image-level vectors in raw feature space, unit-normalized afterwards.
inline FeatureBank build_ood_bank(const FeatureBank& per_image) {
  std::map<std::string, std::vector<int>> by_concept;
  for (int i = 0; i < per_image.n_items(); ++i) {
    by_concept[per_image.items[static_cast<std::size_t>(i)].concept_id].push_back(i);
  }
  require(!by_concept.empty(), ErrorKind::kEmptyConcept, "bank holds no items");
  FeatureBank out;
  out.modality = per_image.modality;
  out.source = per_image.source;
  out.vectors.resize(static_cast<Eigen::Index>(by_concept.size()),
                     per_image.dim());
  int row = 0;
  for (const auto& [concept_id, rows] : by_concept) {
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(per_image.dim());
    for (int r : rows) acc += per_image.vectors.row(r).cast<double>();
    acc /= static_cast<double>(rows.size());
    out.vectors.row(row) = detail::unit_normalized(
        acc.cast<float>(), "ood mean of concept " + concept_id);
    out.items.push_back({concept_id, std::nullopt});
    ++row;
  }
  out.normalized = true;
  out.validate();
  return out;
}

// In-distribution candidates: exactly one image vector per concept,
// re-keyed to concept level and unit-normalized.
inline FeatureBank build_id_bank(const FeatureBank& per_image) {
  std::map<std::string, int> count;
  for (const FeatureItem& it : per_image.items) count[it.concept_id]++;
  require(!count.empty(), ErrorKind::kEmptyConcept, "bank holds no items");
  for (const auto& [concept_id, n] : count) {
    require(n == 1, ErrorKind::kAmbiguity,
            "concept '" + concept_id + "' holds " + std::to_string(n) +
                " image vectors; an ID bank needs exactly one");
  }
  FeatureBank out;
  out.modality = per_image.modality;
  out.source = per_image.source;
  out.vectors.resize(per_image.n_items(), per_image.dim());
  std::map<std::string, int> order;
  for (int i = 0; i < per_image.n_items(); ++i) {
    order[per_image.items[static_cast<std::size_t>(i)].concept_id] = i;
  }
  int row = 0;
  for (const auto& [concept_id, src_row] : order) {
    out.vectors.row(row) = detail::unit_normalized(
        per_image.vectors.row(src_row), "concept " + concept_id);
    out.items.push_back({concept_id, std::nullopt});
    ++row;
  }
  out.normalized = true;
  out.validate();
  return out;
}

}  // namespace eegalign
