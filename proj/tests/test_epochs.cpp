#include <catch2/catch_amalgamated.hpp>
#include <fstream>

#include "eegalign/epochs.hpp"
#include "helpers.hpp"

using namespace eegalign;
using testutil::expect_error;
using testutil::make_epochs;
using testutil::TempDir;

TEST_CASE("eegpack round trip is bit-exact") {
  Rng rng(42);
  EpochSet e = make_epochs(2, 2, 3, 4, 16, 500.0, -20.0,
                           [&](int, int, int) {
                             return static_cast<float>(rng.gaussian());
                           });
  TempDir dir("roundtrip");
  save_eegpack(e, dir.path() / "pack");
  const EpochSet back = load_eegpack(dir.path() / "pack");
  REQUIRE(back.data == e.data);
  REQUIRE(back.participant_id == e.participant_id);
  REQUIRE(back.sampling_rate_hz == e.sampling_rate_hz);
  REQUIRE(back.time_origin_ms == e.time_origin_ms);
  REQUIRE(back.channel_names == e.channel_names);
  REQUIRE(back.n_trials() == e.n_trials());
  for (int i = 0; i < back.n_trials(); ++i) {
    REQUIRE(back.meta[i].concept_id == e.meta[i].concept_id);
    REQUIRE(back.meta[i].image_id == e.meta[i].image_id);
    REQUIRE(back.meta[i].repeat_id == e.meta[i].repeat_id);
    REQUIRE(back.meta[i].split == e.meta[i].split);
  }
}

TEST_CASE("load echoes the manifest shape") {
  EpochSet e = make_epochs(10, 10, 4, 63, 250);
  REQUIRE(e.n_trials() == 400);
  TempDir dir("shape");
  save_eegpack(e, dir.path() / "pack");
  const EpochSet back = load_eegpack(dir.path() / "pack");
  REQUIRE(back.n_trials() == 400);
  REQUIRE(back.n_channels() == 63);
  REQUIRE(back.n_samples() == 250);
}

TEST_CASE("short blob is a corruption error") {
  EpochSet e = make_epochs(2, 2, 1, 3, 8);
  TempDir dir("short");
  save_eegpack(e, dir.path() / "pack");
  const auto blob = dir.path() / "pack" / "epochs.f32le";
  const auto bytes = std::filesystem::file_size(blob);
  std::filesystem::resize_file(blob, bytes - 4);
  expect_error(ErrorKind::kCorruption,
               [&] { load_eegpack(dir.path() / "pack"); });
}

TEST_CASE("missing files are format errors") {
  TempDir dir("missing");
  expect_error(ErrorKind::kFormat, [&] { load_eegpack(dir.path() / "nope"); });

  EpochSet e = make_epochs(1, 2, 1, 2, 4);
  save_eegpack(e, dir.path() / "pack");
  std::filesystem::remove(dir.path() / "pack" / "epochs.f32le");
  expect_error(ErrorKind::kFormat, [&] { load_eegpack(dir.path() / "pack"); });
}

TEST_CASE("duplicate trial triple is a validation error") {
  EpochSet e = make_epochs(1, 2, 2, 2, 4);
  e.meta[1] = e.meta[0];
  expect_error(ErrorKind::kValidation, [&] { e.validate(); });

  TempDir dir("dup");
  EpochSet ok = make_epochs(1, 2, 2, 2, 4);
  save_eegpack(ok, dir.path() / "pack");
  json manifest = read_json_file(dir.path() / "pack" / "manifest.json");
  manifest["trials"][1] = manifest["trials"][0];
  write_json_file(dir.path() / "pack" / "manifest.json", manifest);
  expect_error(ErrorKind::kValidation,
               [&] { load_eegpack(dir.path() / "pack"); });
}
