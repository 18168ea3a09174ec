#pragma once

// EM fitting of diagonal-covariance mixtures. Labeled source data gets one
// mixture per class (a fixed number of components each) which are then
// combined into a single domain-level GMM with component weights scaled by
// empirical class frequency; unlabeled target data gets a single mixture
// with the same total component count fitted directly.

#include <map>

#include "fedmix/common.hpp"
#include "fedmix/gmm.hpp"
#include "fedmix/rng.hpp"

namespace fedmix {

struct EmConfig {
  int max_iters = 200;
  double tol = 1e-6;             // stop when mean log-likelihood improves less
  double variance_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct EmDiagnostics {
  bool converged = true;
  int iterations = 0;
  double final_log_likelihood = 0.0;
};

struct GmmFit {
  LabeledGMM gmm;
  EmDiagnostics diagnostics;
};

namespace detail {

/// k-means++-style seeding: first center uniform over rows, each further
/// center drawn with probability proportional to squared distance from the
/// nearest chosen center.
inline std::vector<std::size_t> kmeanspp_centers(const Matrix& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.rows();
  std::vector<std::size_t> centers;
  centers.push_back(rng.uniform_int(n));
  Vec d2(n, std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    const std::size_t last = centers.back();
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < x.cols(); ++j) {
        const double d = x(i, j) - x(last, j);
        s += d * d;
      }
      d2[i] = std::min(d2[i], s);
    }
    const double total = vec_sum(d2);
    if (total <= 0.0) {
      // All points coincide with a center; fall back to uniform choice.
      centers.push_back(rng.uniform_int(n));
      continue;
    }
    double u = rng.uniform() * total;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      u -= d2[i];
      if (u <= 0.0) {
        pick = i;
        break;
      }
    }
    centers.push_back(pick);
  }
  return centers;
}

/// Plain diagonal-covariance EM on a feature matrix. Components whose
/// responsibility mass collapses keep their previous parameters.
inline GmmFit fit_em(const Matrix& x, std::size_t k, const EmConfig& cfg, std::uint64_t seed,
                     std::size_t n_class) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  require(n >= k, "fit_em: fewer samples than components");
  Rng rng(seed);

  LabeledGMM gmm;
  gmm.weights.assign(k, 1.0 / static_cast<double>(k));
  gmm.labels.assign(k, Vec(n_class, 1.0 / static_cast<double>(n_class)));

  // Init: k-means++ picks for means, global per-axis variance for spread.
  Vec gmean(d, 0.0), gvar(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) gmean[j] += x(i, j);
  for (double& v : gmean) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double dx = x(i, j) - gmean[j];
      gvar[j] += dx * dx;
    }
  for (double& v : gvar) v = std::max(v / static_cast<double>(n), cfg.variance_floor);

  const auto centers = kmeanspp_centers(x, k, rng);
  gmm.components.resize(k);
  for (std::size_t c = 0; c < k; ++c) gmm.components[c] = DiagGaussian{x.row(centers[c]), gvar};

  Matrix resp(n, k);
  Vec logterms(k);
  double prev_ll = -std::numeric_limits<double>::infinity();
  EmDiagnostics diag;
  diag.converged = false;

  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    // E-step and current mean log-likelihood.
    double ll = 0.0;
    Vec xi(d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) xi[j] = x(i, j);
      for (std::size_t c = 0; c < k; ++c)
        logterms[c] = (gmm.weights[c] > 0.0)
                          ? std::log(gmm.weights[c]) + gaussian_log_density(gmm.components[c], xi)
                          : -std::numeric_limits<double>::infinity();
      const double lse = log_sum_exp(logterms);
      ll += lse;
      for (std::size_t c = 0; c < k; ++c) resp(i, c) = std::exp(logterms[c] - lse);
    }
    ll /= static_cast<double>(n);
    diag.iterations = iter;
    diag.final_log_likelihood = ll;
    if (ll - prev_ll < cfg.tol && iter > 1) {
      diag.converged = true;
      break;
    }
    prev_ll = ll;

    // M-step.
    for (std::size_t c = 0; c < k; ++c) {
      double nk = 0.0;
      for (std::size_t i = 0; i < n; ++i) nk += resp(i, c);
      if (nk < 1e-12 * static_cast<double>(n)) {
        gmm.weights[c] = nk / static_cast<double>(n);
        continue;  // dead component, parameters kept
      }
      Vec mean(d, 0.0), var(d, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += resp(i, c) * x(i, j);
      for (double& v : mean) v /= nk;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          const double dx = x(i, j) - mean[j];
          var[j] += resp(i, c) * dx * dx;
        }
      for (double& v : var) v = std::max(v / nk, cfg.variance_floor);
      gmm.weights[c] = nk / static_cast<double>(n);
      gmm.components[c] = DiagGaussian{std::move(mean), std::move(var)};
    }
    // Keep weights an exact probability vector.
    const double wsum = vec_sum(gmm.weights);
    for (double& w : gmm.weights) w /= wsum;
  }
  return GmmFit{std::move(gmm), diag};
}

}  // namespace detail

/// Fits one mixture per class present in the data (n_comp_per_class
/// components, fewer when a class has fewer samples), then combines the
/// class mixtures into a single domain-level GMM whose component weights are
/// scaled by empirical class frequency. Each component's label row is the
/// one-hot vector of its class.
inline GmmFit fit_source_gmm(const LabeledDataset& data, int n_comp_per_class,
                             const EmConfig& cfg = {}) {
  data.validate();
  require(data.has_labels(), "fit_source_gmm: data must be labeled");
  require(n_comp_per_class >= 1, "fit_source_gmm: n_comp_per_class must be positive");
  const std::size_t d = data.dim();
  const std::size_t nc = static_cast<std::size_t>(data.n_class);

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[(*data.labels)[i]].push_back(i);

  LabeledGMM out;
  EmDiagnostics diag;
  for (const auto& [cls, rows] : by_class) {
    Matrix sub(rows.size(), d);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) sub(r, j) = data.features(rows[r], j);
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(n_comp_per_class), rows.size());
    auto fit = detail::fit_em(sub, k, cfg,
                              derive_seed(cfg.seed, {stream::kEmFit, static_cast<std::uint64_t>(cls)}),
                              nc);
    const double class_freq = static_cast<double>(rows.size()) / static_cast<double>(data.size());
    Vec onehot(nc, 0.0);
    onehot[static_cast<std::size_t>(cls)] = 1.0;
    for (std::size_t c = 0; c < fit.gmm.n_components(); ++c) {
      out.weights.push_back(fit.gmm.weights[c] * class_freq);
      out.components.push_back(std::move(fit.gmm.components[c]));
      out.labels.push_back(onehot);
    }
    diag.converged = diag.converged && fit.diagnostics.converged;
    diag.iterations = std::max(diag.iterations, fit.diagnostics.iterations);
    diag.final_log_likelihood += fit.diagnostics.final_log_likelihood * class_freq;
  }
  const double wsum = vec_sum(out.weights);
  for (double& w : out.weights) w /= wsum;
  out.validate();
  return GmmFit{std::move(out), diag};
}

/// Fits a single mixture with the given total component count directly to
/// the data, labels ignored. Label rows are set uniform so the result is a
/// well-formed LabeledGMM; the unsupervised loss never reads them.
inline GmmFit fit_target_gmm(const LabeledDataset& data, int total_components,
                             const EmConfig& cfg = {}) {
  data.validate();
  require(total_components >= 1, "fit_target_gmm: total_components must be positive");
  require(data.size() >= static_cast<std::size_t>(total_components),
          "fit_target_gmm: fewer samples than components");
  auto fit = detail::fit_em(data.features, static_cast<std::size_t>(total_components), cfg,
                            derive_seed(cfg.seed, {stream::kEmFit}),
                            static_cast<std::size_t>(data.n_class));
  fit.gmm.validate();
  return fit;
}

}  // namespace fedmix
