#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "eegalign/binio.hpp"
#include "eegalign/epochs.hpp"
#include "eegalign/error.hpp"

namespace eegalign {

// Whitening operator for multivariate noise normalization. matrix is the
// inverse principal square root of the (shrunk) pooled channel covariance.
struct WhiteningOperator {
  Eigen::MatrixXd matrix;             // [n_channels x n_channels], SPD
  Eigen::MatrixXd source_covariance;  // pooled covariance before shrinkage
  double shrinkage = 0.0;

  int n_channels() const { return static_cast<int>(matrix.rows()); }

  // SPD within 1e-8 on eigenvalues, relative to the largest magnitude.
  bool is_spd(double tol = 1e-8) const {
    if (matrix.rows() != matrix.cols()) return false;
    if ((matrix - matrix.transpose()).cwiseAbs().maxCoeff() > tol) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(matrix);
    const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
    return es.eigenvalues().minCoeff() > -tol * std::max(scale, 1.0);
  }
};

namespace detail {

// Covariance across trials at each time point, averaged over time points.
// Trials enter in index order; summation order is fixed, so the result is
// independent of any outer parallelism.
inline Eigen::MatrixXd time_pooled_covariance(const EpochSet& epochs,
                                              const std::vector<int>& trials) {
  const int nc = epochs.n_channels();
  const int ns = epochs.n_samples();
  const int m = static_cast<int>(trials.size());
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(nc, nc);
  Eigen::MatrixXd x(nc, m);
  for (int s = 0; s < ns; ++s) {
    for (int i = 0; i < m; ++i) {
      const auto tr = epochs.trial(trials[static_cast<std::size_t>(i)]);
      for (int c = 0; c < nc; ++c) x(c, i) = tr(c, s);
    }
    const Eigen::VectorXd mean = x.rowwise().mean();
    x.colwise() -= mean;
    pooled.noalias() += (x * x.transpose()) / (m - 1);
  }
  return pooled / ns;
}

}  // namespace detail

// Fits the whitening operator on training epochs: per-time-point channel
// covariance across trials, estimated within each concept group, averaged
// over concepts and time points, shrunk toward the scaled identity, then
// inverted through its principal square root.
//
// Concepts contribute only if they hold at least two trials; when none
// does, all trials are pooled into a single group.
inline WhiteningOperator mvnn_fit(const EpochSet& epochs, double shrinkage) {
  require(epochs.n_trials() >= 2, ErrorKind::kValidation,
          "mvnn_fit needs at least two trials");
  require(shrinkage >= 0.0 && shrinkage <= 1.0, ErrorKind::kRange,
          "shrinkage must lie in [0, 1]");

  std::map<std::string, std::vector<int>> by_concept;
  for (int i = 0; i < epochs.n_trials(); ++i) {
    by_concept[epochs.meta[static_cast<std::size_t>(i)].concept_id].push_back(i);
  }
  const int nc = epochs.n_channels();
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(nc, nc);
  int groups = 0;
  for (const auto& [concept_id, trials] : by_concept) {
    if (trials.size() < 2) continue;
    sigma += detail::time_pooled_covariance(epochs, trials);
    ++groups;
  }
  if (groups == 0) {
    std::vector<int> all(static_cast<std::size_t>(epochs.n_trials()));
    for (int i = 0; i < epochs.n_trials(); ++i) all[static_cast<std::size_t>(i)] = i;
    sigma = detail::time_pooled_covariance(epochs, all);
  } else {
    sigma /= groups;
  }

  const double target = sigma.trace() / nc;
  Eigen::MatrixXd shrunk = (1.0 - shrinkage) * sigma +
                           shrinkage * target * Eigen::MatrixXd::Identity(nc, nc);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(shrunk);
  const Eigen::VectorXd evals = es.eigenvalues();
  const double max_eval = evals.maxCoeff();
  require(max_eval > 0.0 && evals.minCoeff() > 1e-12 * max_eval,
          ErrorKind::kNumerical,
          "covariance is singular; refit with shrinkage > 0");

  WhiteningOperator op;
  op.matrix = es.eigenvectors() *
              evals.cwiseSqrt().cwiseInverse().asDiagonal() *
              es.eigenvectors().transpose();
  op.source_covariance = std::move(sigma);
  op.shrinkage = shrinkage;
  return op;
}

// Left-multiplies each trial's [channels x samples] matrix by op.matrix.
inline EpochSet mvnn_apply(const WhiteningOperator& op, const EpochSet& epochs) {
  require(op.n_channels() == epochs.n_channels(), ErrorKind::kShape,
          "operator is " + std::to_string(op.n_channels()) +
              "-channel, epochs have " + std::to_string(epochs.n_channels()));
  EpochSet out = epochs;
  for (int t = 0; t < out.n_trials(); ++t) {
    auto m = out.trial(t);
    const Eigen::MatrixXd whitened = op.matrix * m.cast<double>();
    m = whitened.cast<float>();
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON persistence (63x63 doubles are small enough for plain JSON).

inline void save_whitening(const WhiteningOperator& op, const fs::path& path) {
  auto to_rows = [](const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  json j;
  j["format_version"] = 1;
  j["shrinkage"] = op.shrinkage;
  j["matrix"] = to_rows(op.matrix);
  j["source_covariance"] = to_rows(op.source_covariance);
  write_json_file(path, j);
}

inline WhiteningOperator load_whitening(const fs::path& path) {
  const json j = read_json_file(path);
  auto from_rows = [](const json& rows) {
    const auto nr = static_cast<Eigen::Index>(rows.size());
    require(nr > 0, ErrorKind::kFormat, "empty whitening matrix");
    const auto nc = static_cast<Eigen::Index>(rows[0].size());
    Eigen::MatrixXd m(nr, nc);
    for (Eigen::Index r = 0; r < nr; ++r) {
      require(static_cast<Eigen::Index>(rows[r].size()) == nc,
              ErrorKind::kFormat, "ragged whitening matrix");
      for (Eigen::Index c = 0; c < nc; ++c) m(r, c) = rows[r][c].get<double>();
    }
    return m;
  };
  WhiteningOperator op;
  try {
    op.shrinkage = j.at("shrinkage").get<double>();
    op.matrix = from_rows(j.at("matrix"));
    op.source_covariance = from_rows(j.at("source_covariance"));
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
  return op;
}

}  // namespace eegalign
