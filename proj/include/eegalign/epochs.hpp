#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "eegalign/binio.hpp"
#include "eegalign/error.hpp"

namespace eegalign {

using RowMatrixXf =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Split { kTrain, kVal, kTest };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  fail(ErrorKind::kFormat, "unknown split '" + s + "'");
}

struct TrialMeta {
  std::string concept_id;
  std::string image_id;
  int repeat_id = 0;
  Split split = Split::kTrain;
};

// A participant's epoched trials: [n_trials x n_channels x n_samples]
// row-major float32 plus per-trial metadata. Values are microvolts until
// whitening rescales them.
class EpochSet {
 public:
  std::string participant_id;
  double sampling_rate_hz = 0.0;
  double time_origin_ms = 0.0;  // time of sample index 0 vs stimulus onset
  std::vector<std::string> channel_names;
  std::vector<TrialMeta> meta;
  std::vector<float> data;  // [trial][channel][sample]

  int n_trials() const { return static_cast<int>(meta.size()); }
  int n_channels() const { return static_cast<int>(channel_names.size()); }
  int n_samples() const { return n_samples_; }
  void set_n_samples(int n) { n_samples_ = n; }

  double sample_period_ms() const { return 1000.0 / sampling_rate_hz; }
  double time_of_sample(int i) const {
    return time_origin_ms + i * sample_period_ms();
  }

  Eigen::Map<const RowMatrixXf> trial(int i) const {
    return {data.data() +
                static_cast<std::size_t>(i) * static_cast<std::size_t>(
                                                  n_channels() * n_samples_),
            n_channels(), n_samples_};
  }
  Eigen::Map<RowMatrixXf> trial(int i) {
    return {data.data() +
                static_cast<std::size_t>(i) * static_cast<std::size_t>(
                                                  n_channels() * n_samples_),
            n_channels(), n_samples_};
  }

  void validate() const {
    require(sampling_rate_hz > 0.0, ErrorKind::kValidation,
            "sampling_rate_hz must be positive");
    require(n_samples_ > 0, ErrorKind::kValidation, "n_samples must be positive");
    require(!channel_names.empty(), ErrorKind::kValidation,
            "channel_names must be non-empty");
    const std::size_t expect = static_cast<std::size_t>(n_trials()) *
                               static_cast<std::size_t>(n_channels()) *
                               static_cast<std::size_t>(n_samples_);
    require(data.size() == expect, ErrorKind::kValidation,
            "trials tensor size disagrees with metadata");
    std::set<std::tuple<std::string, std::string, int>> seen;
    for (const TrialMeta& m : meta) {
      const bool fresh =
          seen.insert({m.concept_id, m.image_id, m.repeat_id}).second;
      require(fresh, ErrorKind::kValidation,
              "duplicate trial triple (" + m.concept_id + ", " + m.image_id +
                  ", " + std::to_string(m.repeat_id) + ")");
    }
  }

 private:
  int n_samples_ = 0;
};

// ---------------------------------------------------------------------------
// EEGPack on-disk format: manifest.json + epochs.f32le ([trial][channel]
// [sample], little-endian float32).

inline void save_eegpack(const EpochSet& epochs, const fs::path& dir) {
  epochs.validate();
  fs::create_directories(dir);
  json manifest;
  manifest["format_version"] = 1;
  manifest["participant_id"] = epochs.participant_id;
  manifest["sampling_rate_hz"] = epochs.sampling_rate_hz;
  manifest["time_origin_ms"] = epochs.time_origin_ms;
  manifest["n_samples"] = epochs.n_samples();
  manifest["channel_names"] = epochs.channel_names;
  json trials = json::array();
  for (const TrialMeta& m : epochs.meta) {
    trials.push_back({{"concept_id", m.concept_id},
                      {"image_id", m.image_id},
                      {"repeat_id", m.repeat_id},
                      {"split", to_string(m.split)}});
  }
  manifest["trials"] = std::move(trials);
  write_json_file(dir / "manifest.json", manifest);
  write_f32le(dir / "epochs.f32le", epochs.data.data(), epochs.data.size());
}

inline EpochSet load_eegpack(const fs::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  EpochSet out;
  try {
    require(manifest.at("format_version").get<int>() == 1, ErrorKind::kFormat,
            "unsupported EEGPack format_version");
    out.participant_id = manifest.at("participant_id").get<std::string>();
    out.sampling_rate_hz = manifest.at("sampling_rate_hz").get<double>();
    out.time_origin_ms = manifest.at("time_origin_ms").get<double>();
    out.set_n_samples(manifest.at("n_samples").get<int>());
    out.channel_names =
        manifest.at("channel_names").get<std::vector<std::string>>();
    for (const json& t : manifest.at("trials")) {
      TrialMeta m;
      m.concept_id = t.at("concept_id").get<std::string>();
      m.image_id = t.at("image_id").get<std::string>();
      m.repeat_id = t.at("repeat_id").get<int>();
      m.split = split_from_string(t.at("split").get<std::string>());
      out.meta.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, "manifest.json: " + std::string(e.what()));
  }
  out.data = read_f32le(dir / "epochs.f32le");
  const std::size_t expect = static_cast<std::size_t>(out.n_trials()) *
                             static_cast<std::size_t>(out.n_channels()) *
                             static_cast<std::size_t>(out.n_samples());
  require(out.data.size() == expect, ErrorKind::kCorruption,
          "epochs.f32le holds " + std::to_string(out.data.size() * 4) +
              " bytes, manifest implies " + std::to_string(expect * 4));
  out.validate();
  return out;
}

}  // namespace eegalign
