#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "eegalign/preprocess.hpp"
#include "eegalign/stats.hpp"
#include "helpers.hpp"

using namespace eegalign;
using testutil::expect_error;
using testutil::make_epochs;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("baseline correction zeroes a constant trial") {
  EpochSet e = make_epochs(1, 2, 1, 3, 1200, 1000.0, -200.0,
                           [](int, int, int) { return 5.0f; });
  const EpochSet out = baseline_correct(e, -200.0, 0.0);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    REQUIRE(out.data[i] == 0.0f);
  }
}

TEST_CASE("baseline window [-200, 0) uses exactly 200 samples at 1000 Hz") {
  // Pre-stimulus samples are 1, the rest 5; a window leaking one
  // post-stimulus sample would shift the subtracted mean.
  EpochSet e = make_epochs(1, 2, 1, 1, 1200, 1000.0, -200.0,
                           [](int, int, int s) { return s < 200 ? 1.0f : 5.0f; });
  const EpochSet out = baseline_correct(e, -200.0, 0.0);
  REQUIRE(out.trial(0)(0, 0) == 0.0f);
  REQUIRE(out.trial(0)(0, 199) == 0.0f);
  REQUIRE(out.trial(0)(0, 200) == 4.0f);
}

TEST_CASE("baseline hand arithmetic") {
  EpochSet e = make_epochs(1, 2, 1, 1, 300, 1000.0, -200.0,
                           [](int, int, int s) { return s < 200 ? 2.0f : 3.0f; });
  const EpochSet out = baseline_correct(e, -200.0, 0.0);
  REQUIRE(out.trial(0)(0, 250) == Catch::Approx(1.0));
}

TEST_CASE("baseline correction is idempotent while the window is retained") {
  Rng rng(7);
  EpochSet e = make_epochs(1, 2, 2, 4, 400, 1000.0, -200.0,
                           [&](int, int, int) {
                             return static_cast<float>(rng.gaussian());
                           });
  const EpochSet once = baseline_correct(e, -200.0, 0.0);
  const EpochSet twice = baseline_correct(once, -200.0, 0.0);
  for (std::size_t i = 0; i < once.data.size(); ++i) {
    REQUIRE(std::abs(once.data[i] - twice.data[i]) < 1e-5f);
  }
}

TEST_CASE("baseline window errors") {
  EpochSet e = make_epochs(1, 2, 1, 1, 300, 1000.0, -200.0);
  expect_error(ErrorKind::kRange, [&] { baseline_correct(e, -300.0, 0.0); });
  expect_error(ErrorKind::kRange, [&] { baseline_correct(e, -100.0, 50.0); });
  expect_error(ErrorKind::kRange, [&] { baseline_correct(e, -100.0, -100.0); });
}

TEST_CASE("crop keeps the requested half-open window") {
  EpochSet e = make_epochs(1, 2, 1, 2, 1200, 1000.0, -200.0);
  const EpochSet out = crop(e, 0.0, 1000.0);
  REQUIRE(out.n_samples() == 1000);
  REQUIRE(out.time_origin_ms == Catch::Approx(0.0));

  const EpochSet all = crop(e, -200.0, 1000.0);
  REQUIRE(all.n_samples() == e.n_samples());
  REQUIRE(all.data == e.data);

  EpochSet slow = make_epochs(1, 2, 1, 1, 250, 250.0, 0.0);
  REQUIRE(crop(slow, 100.0, 200.0).n_samples() == 25);

  expect_error(ErrorKind::kRange, [&] { crop(e, -300.0, 500.0); });
  expect_error(ErrorKind::kRange, [&] { crop(e, 0.0, 1500.0); });
}

TEST_CASE("crop preserves sample values") {
  EpochSet e = make_epochs(1, 2, 1, 1, 100, 1000.0, 0.0,
                           [](int, int, int s) { return static_cast<float>(s); });
  const EpochSet out = crop(e, 10.0, 20.0);
  REQUIRE(out.n_samples() == 10);
  REQUIRE(out.trial(0)(0, 0) == 10.0f);
  REQUIRE(out.trial(0)(0, 9) == 19.0f);
}

TEST_CASE("downsample reaches the paper shape") {
  EpochSet e = make_epochs(1, 2, 1, 63, 1000, 1000.0, 0.0);
  const EpochSet out = downsample(e, 250.0);
  REQUIRE(out.n_channels() == 63);
  REQUIRE(out.n_samples() == 250);
  REQUIRE(out.sampling_rate_hz == 250.0);
}

TEST_CASE("downsample at the source rate is the identity") {
  Rng rng(3);
  EpochSet e = make_epochs(1, 2, 1, 2, 64, 1000.0, 0.0, [&](int, int, int) {
    return static_cast<float>(rng.gaussian());
  });
  const EpochSet out = downsample(e, 1000.0);
  REQUIRE(out.data == e.data);
}

TEST_CASE("downsampled sine matches the analytic sine") {
  const double f = 10.0;
  EpochSet e = make_epochs(1, 2, 1, 1, 1200, 1000.0, 0.0,
                           [&](int, int, int s) {
                             return static_cast<float>(
                                 std::sin(2.0 * kPi * f * s / 1000.0));
                           });
  const EpochSet out = downsample(e, 250.0);
  REQUIRE(out.n_samples() == 300);
  std::vector<double> got, want;
  for (int s = 0; s < out.n_samples(); ++s) {
    got.push_back(out.trial(0)(0, s));
    want.push_back(std::sin(2.0 * kPi * f * s / 250.0));
  }
  REQUIRE(pearson_r(got, want) > 0.999);
}

TEST_CASE("downsample rejects bad rates") {
  EpochSet e = make_epochs(1, 2, 1, 1, 100, 1000.0, 0.0);
  expect_error(ErrorKind::kUnsupportedRate, [&] { downsample(e, 300.0); });
  expect_error(ErrorKind::kRange, [&] { downsample(e, 2000.0); });
}

TEST_CASE("two-stage decimation matches one-stage within 1e-3 relative RMS") {
  // Band-limited mixture well inside both passbands, tapered to zero at
  // the boundaries so edge padding does not dominate the comparison.
  const int n = 4000;
  EpochSet e = make_epochs(1, 2, 1, 1, n, 1000.0, 0.0,
                           [&](int, int, int s) {
                             double v = 0.0;
                             for (double f : {5.0, 17.0, 33.0, 61.0}) {
                               v += std::sin(2.0 * kPi * f * s / 1000.0 + f);
                             }
                             const double w =
                                 0.5 * (1.0 - std::cos(2.0 * kPi * s / (n - 1)));
                             return static_cast<float>(v * w);
                           });
  const EpochSet direct = downsample(e, 250.0);
  const EpochSet staged = downsample(downsample(e, 500.0), 250.0);
  REQUIRE(direct.n_samples() == staged.n_samples());
  double diff = 0.0, ref = 0.0;
  for (int s = 0; s < direct.n_samples(); ++s) {
    const double d = direct.trial(0)(0, s) - staged.trial(0)(0, s);
    diff += d * d;
    ref += direct.trial(0)(0, s) * direct.trial(0)(0, s);
  }
  REQUIRE(std::sqrt(diff / ref) < 1e-3);
}

TEST_CASE("preprocessing chain yields 63x250") {
  Rng rng(11);
  EpochSet e = make_epochs(1, 2, 1, 63, 1200, 1000.0, -200.0,
                           [&](int, int, int) {
                             return static_cast<float>(rng.gaussian());
                           });
  const EpochSet out =
      downsample(crop(baseline_correct(e, -200.0, 0.0), 0.0, 1000.0), 250.0);
  REQUIRE(out.n_channels() == 63);
  REQUIRE(out.n_samples() == 250);
  REQUIRE(out.sampling_rate_hz == 250.0);
  REQUIRE(out.meta.size() == e.meta.size());
}
