#include <Eigen/Dense>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "eegalign/mvnn.hpp"
#include "helpers.hpp"

using namespace eegalign;
using testutil::expect_error;
using testutil::make_epochs;

namespace {

// Gaussian trials with channel covariance sqrt_cov * sqrt_cov^T, iid over
// time points.
EpochSet correlated_epochs(int concepts, int trials_per_concept, int channels,
                           int samples, const Eigen::MatrixXd& sqrt_cov,
                           std::uint64_t seed) {
  EpochSet e = make_epochs(concepts, 1, trials_per_concept, channels, samples);
  Rng rng(seed);
  Eigen::VectorXd z(channels);
  for (int t = 0; t < e.n_trials(); ++t) {
    auto m = e.trial(t);
    for (int s = 0; s < samples; ++s) {
      for (int c = 0; c < channels; ++c) z(c) = rng.gaussian();
      const Eigen::VectorXd mixed = sqrt_cov * z;
      for (int c = 0; c < channels; ++c) m(c, s) = static_cast<float>(mixed(c));
    }
  }
  return e;
}

Eigen::MatrixXd random_spd_sqrt(int n, std::uint64_t seed, double lo = 0.5,
                                double hi = 2.0) {
  Rng rng(seed);
  Eigen::MatrixXd a(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) a(r, c) = rng.gaussian();
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd scales(n);
  for (int i = 0; i < n; ++i) {
    scales(i) = std::sqrt(lo + (hi - lo) * rng.next_double());
  }
  return q * scales.asDiagonal() * q.transpose();
}

}  // namespace

TEST_CASE("whitening of white data is close to the identity") {
  const int channels = 16;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(channels, channels);
  const EpochSet e = correlated_epochs(10, 1000, channels, 20, eye, 5);
  const WhiteningOperator op = mvnn_fit(e, 0.0);
  REQUIRE(op.is_spd());
  REQUIRE((op.matrix - eye).norm() < 0.1);
}

TEST_CASE("operator whitens the true covariance at 10k trials") {
  const int channels = 8;
  const Eigen::MatrixXd sqrt_cov = random_spd_sqrt(channels, 99);
  const Eigen::MatrixXd sigma = sqrt_cov * sqrt_cov.transpose();
  const EpochSet e = correlated_epochs(1, 10000, channels, 250, sqrt_cov, 17);
  const WhiteningOperator op = mvnn_fit(e, 0.0);
  const Eigen::MatrixXd whitened = op.matrix * sigma * op.matrix.transpose();
  REQUIRE((whitened - Eigen::MatrixXd::Identity(channels, channels)).norm() <
          1e-2);
  // Exact self-consistency: operator against its own sample covariance.
  const Eigen::MatrixXd self =
      op.matrix * op.source_covariance * op.matrix.transpose();
  REQUIRE((self - Eigen::MatrixXd::Identity(channels, channels)).norm() < 1e-8);
}

TEST_CASE("full shrinkage collapses to a scaled identity") {
  const Eigen::MatrixXd sqrt_cov = random_spd_sqrt(6, 3);
  const EpochSet e = correlated_epochs(2, 50, 6, 10, sqrt_cov, 23);
  const WhiteningOperator op = mvnn_fit(e, 1.0);
  const double diag = op.matrix(0, 0);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 6; ++c) {
      if (r == c) {
        REQUIRE(op.matrix(r, c) == Catch::Approx(diag).epsilon(1e-9));
      } else {
        REQUIRE(std::abs(op.matrix(r, c)) < 1e-12);
      }
    }
  }
}

TEST_CASE("singular covariance with zero shrinkage advises shrinkage") {
  // Channel 1 duplicates channel 0, so the covariance is rank deficient.
  EpochSet e = make_epochs(2, 1, 20, 3, 8);
  Rng rng(4);
  for (int t = 0; t < e.n_trials(); ++t) {
    auto m = e.trial(t);
    for (int s = 0; s < 8; ++s) {
      const float v = static_cast<float>(rng.gaussian());
      m(0, s) = v;
      m(1, s) = v;
      m(2, s) = static_cast<float>(rng.gaussian());
    }
  }
  expect_error(ErrorKind::kNumerical, [&] { mvnn_fit(e, 0.0); });
  REQUIRE_NOTHROW(mvnn_fit(e, 0.1));
}

TEST_CASE("mvnn_fit preconditions") {
  EpochSet e = make_epochs(1, 1, 1, 2, 4);
  expect_error(ErrorKind::kValidation, [&] { mvnn_fit(e, 0.0); });
  EpochSet ok = make_epochs(1, 1, 4, 2, 4);
  expect_error(ErrorKind::kRange, [&] { mvnn_fit(ok, 1.5); });
}

TEST_CASE("identity operator leaves epochs unchanged") {
  Rng rng(8);
  const EpochSet e = make_epochs(2, 2, 2, 4, 8, 1000.0, 0.0, [&](int, int, int) {
    return static_cast<float>(rng.gaussian());
  });
  WhiteningOperator op;
  op.matrix = Eigen::MatrixXd::Identity(4, 4);
  op.source_covariance = op.matrix;
  const EpochSet out = mvnn_apply(op, e);
  REQUIRE(out.data == e.data);
}

TEST_CASE("scaling operator doubles every sample") {
  Rng rng(9);
  const EpochSet e = make_epochs(1, 2, 2, 3, 5, 1000.0, 0.0, [&](int, int, int) {
    return static_cast<float>(rng.gaussian());
  });
  WhiteningOperator op;
  op.matrix = 2.0 * Eigen::MatrixXd::Identity(3, 3);
  op.source_covariance = Eigen::MatrixXd::Identity(3, 3);
  const EpochSet out = mvnn_apply(op, e);
  for (std::size_t i = 0; i < e.data.size(); ++i) {
    REQUIRE(out.data[i] == Catch::Approx(2.0f * e.data[i]));
  }
}

TEST_CASE("apply rejects mismatched channel counts and keeps metadata") {
  const EpochSet e = make_epochs(1, 2, 2, 3, 5);
  WhiteningOperator op;
  op.matrix = Eigen::MatrixXd::Identity(4, 4);
  expect_error(ErrorKind::kShape, [&] { mvnn_apply(op, e); });

  op.matrix = Eigen::MatrixXd::Identity(3, 3);
  const EpochSet out = mvnn_apply(op, e);
  REQUIRE(out.n_trials() == e.n_trials());
  for (int i = 0; i < e.n_trials(); ++i) {
    REQUIRE(out.meta[i].concept_id == e.meta[i].concept_id);
    REQUIRE(out.meta[i].image_id == e.meta[i].image_id);
    REQUIRE(out.meta[i].repeat_id == e.meta[i].repeat_id);
  }
}

TEST_CASE("whitening its own fitting data gives near-identity covariance") {
  const int channels = 8;
  const Eigen::MatrixXd sqrt_cov = random_spd_sqrt(channels, 31);
  const EpochSet e = correlated_epochs(4, 100, channels, 12, sqrt_cov, 37);
  const WhiteningOperator op = mvnn_fit(e, 0.0);
  const EpochSet white = mvnn_apply(op, e);
  const WhiteningOperator check = mvnn_fit(white, 0.0);
  REQUIRE((check.source_covariance -
           Eigen::MatrixXd::Identity(channels, channels))
              .norm() < 1e-2);
}

TEST_CASE("whitening error shrinks as the trial count grows") {
  const int channels = 8;
  const Eigen::MatrixXd sqrt_cov = random_spd_sqrt(channels, 55);
  const Eigen::MatrixXd sigma = sqrt_cov * sqrt_cov.transpose();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(channels, channels);
  double mean_err[3] = {0.0, 0.0, 0.0};
  const int counts[3] = {100, 1000, 10000};
  for (int seed = 0; seed < 10; ++seed) {
    for (int i = 0; i < 3; ++i) {
      const EpochSet e = correlated_epochs(1, counts[i], channels, 10, sqrt_cov,
                                           1000 + seed * 7 + i);
      const WhiteningOperator op = mvnn_fit(e, 0.0);
      mean_err[i] += (op.matrix * sigma * op.matrix.transpose() - eye).norm();
    }
  }
  REQUIRE(mean_err[0] > mean_err[1]);
  REQUIRE(mean_err[1] > mean_err[2]);
}

TEST_CASE("whitening operator JSON round trip") {
  const Eigen::MatrixXd sqrt_cov = random_spd_sqrt(4, 77);
  const EpochSet e = correlated_epochs(2, 30, 4, 6, sqrt_cov, 78);
  const WhiteningOperator op = mvnn_fit(e, 0.25);
  testutil::TempDir dir("whitening");
  save_whitening(op, dir.path() / "w.json");
  const WhiteningOperator back = load_whitening(dir.path() / "w.json");
  REQUIRE(back.shrinkage == op.shrinkage);
  REQUIRE((back.matrix - op.matrix).norm() < 1e-12);
  REQUIRE((back.source_covariance - op.source_covariance).norm() < 1e-12);
}
