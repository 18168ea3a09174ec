#pragma once

// Per-client learnable dictionary: K GMM atoms plus private barycentric
// coordinates. client_loss reconstructs the client's domain as the
// barycenter B(alpha; atoms) and measures the (supervised) Mixture-
// Wasserstein discrepancy to it; gradients are computed analytically with
// all transport plans frozen at their optima. local_step is one projected
// gradient update of every learnable tensor.

#include "fedmix/barycenter.hpp"
#include "fedmix/common.hpp"
#include "fedmix/gmm.hpp"
#include "fedmix/rng.hpp"
#include "fedmix/transport.hpp"

namespace fedmix {

/// Negative label_penalty means "pick automatically from the cost scale".
constexpr double kAutoLabelPenalty = -1.0;

struct Dictionary {
  std::vector<LabeledGMM> atoms;
  BarycentricCoords alpha;

  std::size_t n_atoms() const { return atoms.size(); }

  void validate() const {
    require(!atoms.empty(), "Dictionary: no atoms");
    require(alpha.size() == atoms.size(), "Dictionary: alpha length mismatch");
    require(is_probability_vector(alpha), "Dictionary: alpha not on simplex");
    for (const auto& a : atoms) {
      a.validate();
      require(congruent(a, atoms.front()), "Dictionary: atoms not congruent");
    }
  }
};

struct LossReport {
  double value = 0.0;
  // Indexed [atom][component](coordinate), matching the dictionary shapes.
  std::vector<std::vector<Vec>> per_atom_grad_mean;
  std::vector<std::vector<Vec>> per_atom_grad_var;
  std::vector<std::vector<Vec>> per_atom_grad_labels;
  Vec grad_alpha;
  bool barycenter_converged = true;
  double label_penalty_used = 0.0;
};

/// Atom means i.i.d. standard normal, unit variances, uniform label rows
/// and mixture weights, uniform alpha. Deterministic per seed.
inline Dictionary init_dictionary(int K, int C, int d, int n_class, std::uint64_t rng_seed) {
  require(K >= 1 && C >= 1 && d >= 1 && n_class >= 1, "init_dictionary: all sizes must be >= 1");
  Rng rng(rng_seed);
  Dictionary dict;
  dict.atoms.resize(K);
  for (auto& atom : dict.atoms) {
    atom.weights.assign(C, 1.0 / C);
    atom.components.resize(C);
    atom.labels.assign(C, Vec(n_class, 1.0 / n_class));
    for (auto& comp : atom.components) {
      comp.mean = rng.normal_vec(d);
      comp.var.assign(d, 1.0);
    }
  }
  dict.alpha.assign(K, 1.0 / K);
  return dict;
}

namespace detail {

/// Reconstruction loss and frozen-plan gradients. With every transport
/// plan held at its optimum the barycenter parameters are linear in the
/// atom parameters and in (normalized) alpha, so the chain rule closes in
/// one pass:
///   d loss / d m_B[c]   = 2 (w_B[c] m_B[c] - sum_q pi[c][q] m_Q[q])
///   d m_B[c] / d m_k[l] = alpha_k pi_k[c][l] / w_B[c]
/// and analogously for standard deviations (chained to variances) and
/// label rows. The alpha gradient also accounts for the internal
/// normalization of alpha, making the loss scale-invariant in alpha.
inline LossReport loss_with_gradients(const Dictionary& dict, const LabeledGMM& domain,
                                      bool is_labeled, double label_penalty) {
  const std::size_t K = dict.n_atoms();
  const std::size_t C = dict.atoms.front().n_components();
  const std::size_t d = dict.atoms.front().dim();
  const std::size_t n_class = dict.atoms.front().num_classes();
  require(domain.dim() == d, "client_loss: dimension mismatch");
  if (is_labeled)
    require(domain.num_classes() == n_class, "client_loss: class-count mismatch");

  const double alpha_total = vec_sum(dict.alpha);
  const Vec alpha_n = normalize_coords(dict.alpha, K);

  BarycenterResult bary = gmm_barycenter(dict.atoms, dict.alpha);
  const LabeledGMM& b = bary.gmm;

  LossReport report;
  report.barycenter_converged = bary.converged;

  double penalty = 0.0;
  if (is_labeled) {
    penalty = label_penalty < 0.0 ? auto_label_penalty(mixture_cost_matrix(b, domain))
                                  : label_penalty;
  }
  report.label_penalty_used = penalty;

  const MwResult outer = is_labeled ? smw2_sq(b, domain, penalty) : mw2_sq(b, domain);
  report.value = outer.value;

  // Gradients of the loss with respect to the barycenter's parameters.
  std::vector<Vec> g_mean(C, Vec(d, 0.0));
  std::vector<Vec> g_std(C, Vec(d, 0.0));
  std::vector<Vec> g_lab(C, Vec(n_class, 0.0));
  for (std::size_t c = 0; c < C; ++c) {
    const double wc = b.weights[c];
    for (std::size_t i = 0; i < d; ++i) {
      g_mean[c][i] = 2.0 * wc * b.components[c].mean[i];
      g_std[c][i] = 2.0 * wc * std::sqrt(b.components[c].var[i]);
    }
    for (std::size_t y = 0; y < n_class; ++y)
      g_lab[c][y] = 2.0 * penalty * wc * b.labels[c][y];
    for (std::size_t q = 0; q < domain.n_components(); ++q) {
      const double pi = outer.plan.matrix(c, q);
      if (pi == 0.0) continue;
      for (std::size_t i = 0; i < d; ++i) {
        g_mean[c][i] -= 2.0 * pi * domain.components[q].mean[i];
        g_std[c][i] -= 2.0 * pi * std::sqrt(domain.components[q].var[i]);
      }
      if (penalty > 0.0)
        for (std::size_t y = 0; y < n_class; ++y)
          g_lab[c][y] -= 2.0 * penalty * pi * domain.labels[q][y];
    }
  }

  // Chain through the barycenter's linear dependence on atom parameters.
  report.per_atom_grad_mean.assign(K, std::vector<Vec>(C, Vec(d, 0.0)));
  report.per_atom_grad_var.assign(K, std::vector<Vec>(C, Vec(d, 0.0)));
  report.per_atom_grad_labels.assign(K, std::vector<Vec>(C, Vec(n_class, 0.0)));
  Vec g_alpha(K, 0.0);  // gradient in the normalized coordinates
  for (std::size_t k = 0; k < K; ++k) {
    const auto& atom = dict.atoms[k];
    auto& gm = report.per_atom_grad_mean[k];
    auto& gv = report.per_atom_grad_var[k];
    auto& gl = report.per_atom_grad_labels[k];
    for (std::size_t c = 0; c < C; ++c) {
      const double wc = b.weights[c];
      for (std::size_t l = 0; l < C; ++l) {
        const double pi = bary.plans[k].matrix(c, l);
        if (pi == 0.0) continue;
        const double share = pi / wc;
        const double factor = alpha_n[k] * share;
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          const double sd = std::sqrt(atom.components[l].var[i]);
          gm[l][i] += factor * g_mean[c][i];
          gv[l][i] += factor * g_std[c][i] / (2.0 * sd);
          dot += g_mean[c][i] * atom.components[l].mean[i] + g_std[c][i] * sd;
        }
        for (std::size_t y = 0; y < n_class; ++y) {
          gl[l][y] += factor * g_lab[c][y];
          dot += g_lab[c][y] * atom.labels[l][y];
        }
        g_alpha[k] += share * dot;
      }
    }
  }

  // Quotient rule for the internal normalization alpha / sum(alpha).
  double mean_g = 0.0;
  for (std::size_t k = 0; k < K; ++k) mean_g += alpha_n[k] * g_alpha[k];
  report.grad_alpha.assign(K, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    report.grad_alpha[k] = (g_alpha[k] - mean_g) / alpha_total;
  return report;
}

}  // namespace detail

/// Reconstruction loss of `domain` against B(alpha; atoms) with analytic
/// gradients. Labeled domains use the label-penalized cost (negative
/// penalty selects the automatic scale); unlabeled domains use the purely
/// geometric cost and receive zero label gradients.
inline LossReport client_loss(const Dictionary& dict, const LabeledGMM& domain, bool is_labeled,
                              double label_penalty = kAutoLabelPenalty) {
  return detail::loss_with_gradients(dict, domain, is_labeled, label_penalty);
}

/// One projected gradient update: plain step on means, positivity floor on
/// variances, per-row simplex projection on label rows, simplex projection
/// on alpha. Atom mixture weights are not learned.
inline Dictionary local_step(const Dictionary& dict, const LabeledGMM& domain, bool is_labeled,
                             double eta, double label_penalty = kAutoLabelPenalty) {
  const LossReport report = client_loss(dict, domain, is_labeled, label_penalty);
  Dictionary next = dict;
  for (std::size_t k = 0; k < dict.n_atoms(); ++k) {
    auto& atom = next.atoms[k];
    for (std::size_t l = 0; l < atom.n_components(); ++l) {
      auto& comp = atom.components[l];
      for (std::size_t i = 0; i < comp.mean.size(); ++i) {
        comp.mean[i] -= eta * report.per_atom_grad_mean[k][l][i];
        comp.var[i] -= eta * report.per_atom_grad_var[k][l][i];
      }
      comp.var = project_positive(comp.var);
      for (std::size_t y = 0; y < atom.labels[l].size(); ++y)
        atom.labels[l][y] -= eta * report.per_atom_grad_labels[k][l][y];
      atom.labels[l] = project_simplex(atom.labels[l]);
    }
  }
  for (std::size_t k = 0; k < dict.n_atoms(); ++k) next.alpha[k] -= eta * report.grad_alpha[k];
  next.alpha = project_simplex(next.alpha);
  return next;
}

}  // namespace fedmix
