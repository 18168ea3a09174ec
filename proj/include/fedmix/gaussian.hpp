#pragma once

// Diagonal-covariance Gaussian primitives: the closed-form squared
// 2-Wasserstein distance and the closed-form barycenter. For commuting
// (here: diagonal) covariances the Bures term reduces to the squared
// Euclidean distance between the per-axis standard-deviation vectors, and
// the barycenter averages means and standard deviations.

#include <cmath>

#include "fedmix/common.hpp"

namespace fedmix {

/// One mixture component: mean and per-axis variance.
struct DiagGaussian {
  Vec mean;
  Vec var;

  std::size_t dim() const { return mean.size(); }

  void validate() const {
    require(!mean.empty(), "DiagGaussian: empty mean");
    require(mean.size() == var.size(), "DiagGaussian: mean/var length mismatch");
    for (double v : var) require(v > 0.0, "DiagGaussian: variance must be positive");
  }
};

/// Squared W2 between diagonal Gaussians:
/// ||m_a - m_b||^2 + sum_i (sqrt(va_i) - sqrt(vb_i))^2.
inline double gaussian_w2_sq(const DiagGaussian& a, const DiagGaussian& b) {
  require(a.dim() == b.dim(), "gaussian_w2_sq: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double dm = a.mean[i] - b.mean[i];
    const double ds = std::sqrt(a.var[i]) - std::sqrt(b.var[i]);
    s += dm * dm + ds * ds;
  }
  return s;
}

/// W2 barycenter of diagonal Gaussians: mean = sum_k w_k mean_k and
/// std = sum_k w_k std_k per axis.
inline DiagGaussian gaussian_barycenter(const std::vector<DiagGaussian>& components,
                                        const Vec& weights) {
  require(!components.empty(), "gaussian_barycenter: empty component list");
  require(weights.size() == components.size(), "gaussian_barycenter: weight count mismatch");
  require(is_probability_vector(weights), "gaussian_barycenter: weights not on the simplex");
  const std::size_t d = components.front().dim();
  DiagGaussian out{Vec(d, 0.0), Vec(d, 0.0)};
  Vec std_acc(d, 0.0);
  for (std::size_t k = 0; k < components.size(); ++k) {
    require(components[k].dim() == d, "gaussian_barycenter: dimension mismatch");
    for (std::size_t i = 0; i < d; ++i) {
      out.mean[i] += weights[k] * components[k].mean[i];
      std_acc[i] += weights[k] * std::sqrt(components[k].var[i]);
    }
  }
  for (std::size_t i = 0; i < d; ++i) out.var[i] = std_acc[i] * std_acc[i];
  return out;
}

/// Log density of x under a diagonal Gaussian.
inline double gaussian_log_density(const DiagGaussian& g, const Vec& x) {
  constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)
  double s = 0.0;
  for (std::size_t i = 0; i < g.dim(); ++i) {
    const double d = x[i] - g.mean[i];
    s += kLog2Pi + std::log(g.var[i]) + d * d / g.var[i];
  }
  return -0.5 * s;
}

}  // namespace fedmix
