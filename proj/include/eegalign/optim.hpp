#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <string>

#include "eegalign/encoder.hpp"

namespace eegalign {

// AdamW with decoupled weight decay. Biases and the temperature scalar are
// exempt from decay.
class AdamW {
 public:
  AdamW(double lr, double beta1, double beta2, double weight_decay,
        double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), wd_(weight_decay), eps_(eps) {}

  static bool decays(const std::string& name) {
    return name.find(".b") == std::string::npos && name != "temperature_log";
  }

  void step(EncoderParams& params, const EncoderGradients& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& [name, p] : params.tensors) {
      const auto git = grads.find(name);
      if (git == grads.end()) continue;
      const Eigen::MatrixXd& g = git->second;
      Eigen::MatrixXd& m = moment1_[name];
      Eigen::MatrixXd& v = moment2_[name];
      if (m.size() == 0) {
        m = Eigen::MatrixXd::Zero(p.rows(), p.cols());
        v = Eigen::MatrixXd::Zero(p.rows(), p.cols());
      }
      m = beta1_ * m + (1.0 - beta1_) * g;
      v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
      const Eigen::MatrixXd m_hat = m / bc1;
      const Eigen::MatrixXd v_hat = v / bc2;
      Eigen::MatrixXd update =
          m_hat.array() / (v_hat.array().sqrt() + eps_);
      if (decays(name)) update.array() += wd_ * p.array();
      p -= lr_ * update;
    }
  }

 private:
  double lr_, beta1_, beta2_, wd_, eps_;
  std::int64_t t_ = 0;
  std::map<std::string, Eigen::MatrixXd> moment1_, moment2_;
};

}  // namespace eegalign
