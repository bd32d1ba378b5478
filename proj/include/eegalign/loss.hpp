#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "eegalign/error.hpp"

namespace eegalign {

// Symmetric InfoNCE over pairwise cosine similarities:
//   logits[i][j] = <eeg[i], targets[j]> / temperature
//   loss = (row-wise CE + column-wise CE with diagonal labels) / 2
struct ContrastiveResult {
  double loss = 0.0;
  Eigen::MatrixXd logits;
};

// Gradients for training. d_log_inv_temp is the derivative with respect to
// ln(1/temperature), the representation the trainer optimizes.
struct ContrastiveGradients {
  Eigen::MatrixXd d_eeg;
  Eigen::MatrixXd d_targets;
  double d_log_inv_temp = 0.0;
};

namespace detail {

inline void check_contrastive_inputs(const Eigen::MatrixXd& eeg,
                                     const Eigen::MatrixXd& targets,
                                     double temperature) {
  require(temperature > 0.0, ErrorKind::kRange, "temperature must be positive");
  require(eeg.rows() >= 2, ErrorKind::kValidation,
          "contrastive loss needs a batch of at least two");
  require(eeg.rows() == targets.rows() && eeg.cols() == targets.cols(),
          ErrorKind::kShape, "eeg and target batches disagree in shape");
  for (Eigen::Index r = 0; r < eeg.rows(); ++r) {
    require(std::abs(eeg.row(r).norm() - 1.0) <= 1e-3, ErrorKind::kValidation,
            "eeg row " + std::to_string(r) + " is not unit length");
    require(std::abs(targets.row(r).norm() - 1.0) <= 1e-3,
            ErrorKind::kValidation,
            "target row " + std::to_string(r) + " is not unit length");
  }
}

// Row-wise softmax with the max subtracted; also accumulates the mean
// diagonal cross-entropy into *ce.
inline Eigen::MatrixXd softmax_rows_ce(const Eigen::MatrixXd& logits,
                                       double* ce) {
  Eigen::MatrixXd probs(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const Eigen::ArrayXd e = (logits.row(r).array() - mx).exp();
    const double z = e.sum();
    probs.row(r) = (e / z).matrix();
    total += -(logits(r, r) - mx - std::log(z));
  }
  *ce = total / static_cast<double>(logits.rows());
  return probs;
}

}  // namespace detail

inline ContrastiveResult contrastive_loss(const Eigen::MatrixXd& eeg,
                                          const Eigen::MatrixXd& targets,
                                          double temperature) {
  detail::check_contrastive_inputs(eeg, targets, temperature);
  ContrastiveResult res;
  res.logits = (eeg * targets.transpose()) / temperature;
  double ce_rows = 0.0, ce_cols = 0.0;
  detail::softmax_rows_ce(res.logits, &ce_rows);
  detail::softmax_rows_ce(res.logits.transpose(), &ce_cols);
  res.loss = 0.5 * (ce_rows + ce_cols);
  return res;
}

inline ContrastiveGradients contrastive_loss_backward(
    const Eigen::MatrixXd& eeg, const Eigen::MatrixXd& targets,
    double temperature, const ContrastiveResult& fwd) {
  const auto b = eeg.rows();
  double ce = 0.0;
  const Eigen::MatrixXd p_rows = detail::softmax_rows_ce(fwd.logits, &ce);
  const Eigen::MatrixXd p_cols =
      detail::softmax_rows_ce(fwd.logits.transpose(), &ce);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(b, b);
  const Eigen::MatrixXd d_logits =
      (0.5 / static_cast<double>(b)) *
      ((p_rows - eye) + (p_cols - eye).transpose());
  ContrastiveGradients g;
  g.d_eeg = d_logits * targets / temperature;
  g.d_targets = d_logits.transpose() * eeg / temperature;
  // logits = sim * exp(log_inv_temp)  =>  dL/d log_inv_temp = sum dL/dlogit * logit
  g.d_log_inv_temp = (d_logits.array() * fwd.logits.array()).sum();
  return g;
}

}  // namespace eegalign
