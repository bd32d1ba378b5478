#pragma once

#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "eegalign/epochs.hpp"
#include "eegalign/error.hpp"
#include "eegalign/rng.hpp"

namespace testutil {

// Builds a grid EpochSet: concepts x images x repeats, one trial each,
// filled by fn(trial_index, channel, sample).
inline eegalign::EpochSet make_epochs(
    int concepts, int images, int repeats, int channels, int samples,
    double rate_hz = 1000.0, double origin_ms = 0.0,
    const std::function<float(int, int, int)>& fn =
        [](int, int, int) { return 0.0f; },
    eegalign::Split split = eegalign::Split::kTrain) {
  eegalign::EpochSet e;
  e.participant_id = "test";
  e.sampling_rate_hz = rate_hz;
  e.time_origin_ms = origin_ms;
  for (int c = 0; c < channels; ++c) {
    e.channel_names.push_back("ch" + std::to_string(c));
  }
  e.set_n_samples(samples);
  int trial = 0;
  for (int c = 0; c < concepts; ++c) {
    for (int i = 0; i < images; ++i) {
      for (int r = 0; r < repeats; ++r) {
        eegalign::TrialMeta m;
        m.concept_id = "c" + std::to_string(c);
        m.image_id = std::string("i") + (i < 10 ? "0" : "") + std::to_string(i);
        m.repeat_id = r;
        m.split = split;
        e.meta.push_back(std::move(m));
        for (int ch = 0; ch < channels; ++ch) {
          for (int s = 0; s < samples; ++s) {
            e.data.push_back(fn(trial, ch, s));
          }
        }
        ++trial;
      }
    }
  }
  e.validate();
  return e;
}

template <typename Fn>
void expect_error(eegalign::ErrorKind kind, Fn&& fn) {
  try {
    fn();
    FAIL("expected an error of kind " << eegalign::to_string(kind));
  } catch (const eegalign::Error& e) {
    if (e.kind() != kind) {
      FAIL("expected kind " << eegalign::to_string(kind) << ", got "
                            << eegalign::to_string(e.kind()) << ": "
                            << e.what());
    }
    SUCCEED();
  }
}

// Scratch directory unique to the calling test, cleaned up on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    eegalign::Rng rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() /
            ("eegalign_" + tag + "_" + std::to_string(rng.next_u64()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
