#pragma once

// Reference computations used only by tests. Nothing here calls into the
// code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "fasrec/mlp.hpp"

namespace fasrec::oracle {

// Scalar loops, no Eigen products.
inline Eigen::VectorXd reference_forward(const MlpParams& p, const Eigen::VectorXd& x) {
  auto dense = [](const Eigen::MatrixXd& w, const Eigen::VectorXd& b, const Eigen::VectorXd& in,
                  bool relu) {
    Eigen::VectorXd out(w.rows());
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      long double acc = b[i];
      for (Eigen::Index j = 0; j < w.cols(); ++j) acc += static_cast<long double>(w(i, j)) * in[j];
      out[i] = relu ? std::max(static_cast<double>(acc), 0.0) : static_cast<double>(acc);
    }
    return out;
  };
  return dense(p.w3, p.b3, dense(p.w2, p.b2, dense(p.w1, p.b1, x, true), true), false);
}

// Mean squared error of the reference forward pass over a column batch.
inline double reference_mse(const MlpParams& p, const Eigen::MatrixXd& x,
                            const Eigen::MatrixXd& target) {
  long double sum = 0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const Eigen::VectorXd y = reference_forward(p, x.col(c));
    for (Eigen::Index r = 0; r < y.size(); ++r) {
      const long double d = y[r] - target(r, c);
      sum += d * d;
    }
  }
  return static_cast<double>(sum / static_cast<long double>(target.size()));
}

// Central differences of `loss` with respect to every entry of every tensor.
inline MlpParams finite_difference_gradient(MlpParams p,
                                            const std::function<double(const MlpParams&)>& loss,
                                            double step = 1e-4) {
  MlpParams g = p.zeros_like();
  auto visit = [&](Eigen::MatrixXd MlpParams::*m) {
    for (Eigen::Index i = 0; i < (p.*m).size(); ++i) {
      const double saved = (p.*m).data()[i];
      (p.*m).data()[i] = saved + step;
      const double up = loss(p);
      (p.*m).data()[i] = saved - step;
      const double down = loss(p);
      (p.*m).data()[i] = saved;
      (g.*m).data()[i] = (up - down) / (2 * step);
    }
  };
  auto visit_v = [&](Eigen::VectorXd MlpParams::*m) {
    for (Eigen::Index i = 0; i < (p.*m).size(); ++i) {
      const double saved = (p.*m)[i];
      (p.*m)[i] = saved + step;
      const double up = loss(p);
      (p.*m)[i] = saved - step;
      const double down = loss(p);
      (p.*m)[i] = saved;
      (g.*m)[i] = (up - down) / (2 * step);
    }
  };
  visit(&MlpParams::w1);
  visit_v(&MlpParams::b1);
  visit(&MlpParams::w2);
  visit_v(&MlpParams::b2);
  visit(&MlpParams::w3);
  visit_v(&MlpParams::b3);
  return g;
}

// Textbook Adam on one scalar.
struct ScalarAdam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double m = 0, v = 0;
  int t = 0;

  double step(double theta, double g) {
    ++t;
    m = beta1 * m + (1 - beta1) * g;
    v = beta2 * v + (1 - beta2) * g * g;
    const double m_hat = m / (1 - std::pow(beta1, t));
    const double v_hat = v / (1 - std::pow(beta2, t));
    return theta - lr * m_hat / (std::sqrt(v_hat) + eps);
  }
};

// Least squares on a known support by column-pivoted Householder QR.
inline Eigen::VectorXcd least_squares(const Eigen::MatrixXcd& a, const Eigen::VectorXcd& y) {
  return a.colPivHouseholderQr().solve(y);
}

// Number of entries where |a - b| exceeds max(rel * |b|, abs_floor).
inline int gradient_mismatches(const MlpParams& a, const MlpParams& b, double rel,
                               double abs_floor) {
  int bad = 0;
  auto cmp = [&](const auto& x, const auto& y) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double tol = std::max(rel * std::abs(y.data()[i]), abs_floor);
      if (!(std::abs(x.data()[i] - y.data()[i]) <= tol)) ++bad;
    }
  };
  cmp(a.w1, b.w1);
  cmp(a.b1, b.b1);
  cmp(a.w2, b.w2);
  cmp(a.b2, b.b2);
  cmp(a.w3, b.w3);
  cmp(a.b3, b.b3);
  return bad;
}

// Smallest |pre-activation| over both hidden layers; finite differences are
// only trustworthy when this is well above the step size.
inline double kink_margin(const MlpParams& p, const Eigen::MatrixXd& x) {
  double margin = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const Eigen::VectorXd z1 = p.w1 * x.col(c) + p.b1;
    const Eigen::VectorXd z2 = p.w2 * z1.cwiseMax(0.0) + p.b2;
    margin = std::min({margin, z1.cwiseAbs().minCoeff(), z2.cwiseAbs().minCoeff()});
  }
  return margin;
}

}  // namespace fasrec::oracle
