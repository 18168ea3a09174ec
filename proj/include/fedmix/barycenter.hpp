#pragma once

// Labeled Mixture-Wasserstein barycenters of GMM atoms, plus the two
// projections used by the projected-gradient updates.
//
// The barycenter solver is a fixed-point iteration: initialize from the
// atom with the largest coordinate, transport the current iterate onto
// every atom, rebuild each component as the Gaussian W2 barycenter of the
// atom components it receives mass from, and repeat until the objective
// sum_k alpha_k * MW2^2(B, P_k) stops improving. The objective is
// non-increasing across iterations. Mixture weights stay fixed at the
// initializing atom's weights; component label rows are the
// transport-weighted average of atom label rows.

#include "fedmix/common.hpp"
#include "fedmix/gmm.hpp"
#include "fedmix/transport.hpp"

namespace fedmix {

/// Simplex weights expressing a domain as a barycenter of atoms.
using BarycentricCoords = Vec;

/// Euclidean projection onto the probability simplex (sorted-threshold
/// algorithm). Idempotent.
inline Vec project_simplex(const Vec& v) {
  require(!v.empty(), "project_simplex: empty vector");
  Vec u = v;
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, tau = 0.0;
  std::size_t rho = 0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    css += u[j];
    const double t = (css - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) {
      rho = j;
      tau = t;
    }
  }
  (void)rho;
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - tau, 0.0);
  return out;
}

/// Elementwise projection onto [floor, inf).
inline Vec project_positive(const Vec& v, double floor = 1e-6) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i], floor);
  return out;
}

struct BarycenterConfig {
  double tol = 1e-7;
  int max_iters = 50;
};

struct BarycenterResult {
  LabeledGMM gmm;
  std::vector<TransportPlan> plans;  // one per atom, for the returned gmm
  double objective = 0.0;
  Vec objective_history;             // objective after init and each iteration
  int iterations = 0;
  bool converged = false;
};

namespace detail {

/// Geometric-only transport of B onto every atom plus the weighted objective.
inline double barycenter_objective(const LabeledGMM& b, const std::vector<LabeledGMM>& atoms,
                                   const Vec& alpha_n, std::vector<TransportPlan>& plans_out) {
  plans_out.clear();
  plans_out.reserve(atoms.size());
  double obj = 0.0;
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    auto res = mw2_sq(b, atoms[k]);
    obj += alpha_n[k] * res.value;
    plans_out.push_back(std::move(res.plan));
  }
  return obj;
}

/// One fixed-point update under frozen plans: each component of the new B
/// is the mass-weighted Gaussian barycenter of the atom components it is
/// coupled to, its label row the matching average of atom label rows.
inline LabeledGMM barycenter_update(const LabeledGMM& b, const std::vector<LabeledGMM>& atoms,
                                    const Vec& alpha_n,
                                    const std::vector<TransportPlan>& plans) {
  const std::size_t nc = b.n_components();
  const std::size_t d = b.dim();
  const std::size_t n_class = b.num_classes();
  LabeledGMM out;
  out.weights = b.weights;
  out.components.resize(nc);
  out.labels.assign(nc, Vec(n_class, 0.0));
  for (std::size_t c = 0; c < nc; ++c) {
    Vec mean(d, 0.0), stddev(d, 0.0), label(n_class, 0.0);
    double mass = 0.0;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
      if (alpha_n[k] == 0.0) continue;
      const auto& atom = atoms[k];
      for (std::size_t l = 0; l < atom.n_components(); ++l) {
        const double w = alpha_n[k] * plans[k].matrix(c, l);
        if (w == 0.0) continue;
        mass += w;
        for (std::size_t i = 0; i < d; ++i) {
          mean[i] += w * atom.components[l].mean[i];
          stddev[i] += w * std::sqrt(atom.components[l].var[i]);
        }
        for (std::size_t y = 0; y < n_class; ++y) label[y] += w * atom.labels[l][y];
      }
    }
    for (std::size_t i = 0; i < d; ++i) {
      mean[i] /= mass;
      stddev[i] /= mass;
      stddev[i] *= stddev[i];  // back to variance
    }
    for (std::size_t y = 0; y < n_class; ++y) label[y] /= mass;
    out.components[c] = DiagGaussian{std::move(mean), std::move(stddev)};
    out.labels[c] = std::move(label);
  }
  return out;
}

/// Clamps tiny negatives and normalizes to unit mass. Off-simplex sums are
/// tolerated (finite differencing and the envelope optimizer step through
/// them); the resulting loss is invariant to the overall scale of alpha.
inline Vec normalize_coords(const Vec& alpha, std::size_t n_atoms) {
  require(alpha.size() == n_atoms, "gmm_barycenter: alpha length mismatch");
  Vec a = alpha;
  for (double& x : a) {
    require(x >= -1e-9, "gmm_barycenter: negative barycentric coordinate");
    x = std::max(x, 0.0);
  }
  const double s = vec_sum(a);
  require(s > 0.0, "gmm_barycenter: alpha has no mass");
  for (double& x : a) x /= s;
  return a;
}

}  // namespace detail

/// Fixed-point solve of the labeled Mixture-Wasserstein barycenter
/// B = argmin sum_k alpha_k MW2^2(B, P_k) over mixtures with the
/// initializing atom's weights. Non-convergence returns the best iterate
/// with converged = false.
inline BarycenterResult gmm_barycenter(const std::vector<LabeledGMM>& atoms,
                                       const BarycentricCoords& alpha,
                                       const BarycenterConfig& cfg = {}) {
  require(!atoms.empty(), "gmm_barycenter: no atoms");
  for (const auto& a : atoms)
    require(congruent(a, atoms.front()), "gmm_barycenter: atoms not congruent");
  const Vec alpha_n = detail::normalize_coords(alpha, atoms.size());

  BarycenterResult res;
  res.gmm = atoms[argmax(alpha_n)];
  res.objective = detail::barycenter_objective(res.gmm, atoms, alpha_n, res.plans);
  res.objective_history.push_back(res.objective);
  if (res.objective < cfg.tol) {
    res.converged = true;
    return res;
  }

  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    LabeledGMM next = detail::barycenter_update(res.gmm, atoms, alpha_n, res.plans);
    std::vector<TransportPlan> next_plans;
    const double next_obj = detail::barycenter_objective(next, atoms, alpha_n, next_plans);
    const double improvement = res.objective - next_obj;
    res.gmm = std::move(next);
    res.plans = std::move(next_plans);
    res.objective = next_obj;
    res.objective_history.push_back(next_obj);
    res.iterations = iter;
    if (improvement < cfg.tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace fedmix
