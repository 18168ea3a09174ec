#pragma once

// Consensus measurement across clients and the barycentric-envelope
// stability study. Consensus compares, for every client pair, the
// barycenters their dictionaries generate over a shared grid of weights;
// the pairwise gap M_ij is the worst (unsquared) Mixture-Wasserstein
// distance over that grid. The envelope study freezes one client's atoms
// and optimizes barycentric coordinates alone against progressively
// class-starved target data.

#include <set>

#include "fedmix/barycenter.hpp"
#include "fedmix/dictionary.hpp"
#include "fedmix/eval.hpp"
#include "fedmix/federation.hpp"

namespace fedmix {

struct WeightGrid {
  std::vector<Vec> weights;  // each on the simplex
};

/// All simplex lattice points with the given denominator: compositions of
/// `resolution` into K nonnegative parts, normalized. Includes every
/// vertex; size C(resolution + K - 1, K - 1).
inline WeightGrid make_weight_grid(int K, int resolution) {
  require(K >= 1 && resolution >= 1, "make_weight_grid: K and resolution must be >= 1");
  WeightGrid grid;
  Vec point(static_cast<std::size_t>(K), 0.0);
  const auto enumerate = [&](auto&& self, int index, int remaining) -> void {
    if (index == K - 1) {
      point[static_cast<std::size_t>(index)] =
          static_cast<double>(remaining) / static_cast<double>(resolution);
      grid.weights.push_back(point);
      return;
    }
    for (int take = 0; take <= remaining; ++take) {
      point[static_cast<std::size_t>(index)] =
          static_cast<double>(take) / static_cast<double>(resolution);
      self(self, index + 1, remaining - take);
    }
  };
  enumerate(enumerate, 0, resolution);
  return grid;
}

struct PairGap {
  int i = 0;
  int j = 0;  // unordered pair, stored with i < j
  double m_ij = 0.0;
};

struct ConsensusRound {
  int round = 0;
  std::vector<PairGap> pairs;

  double max_gap() const {
    double m = 0.0;
    for (const auto& p : pairs) m = std::max(m, p.m_ij);
    return m;
  }
};

struct ConsensusTrace {
  std::vector<ConsensusRound> rounds;
};

/// Worst-case barycenter distance per client pair over the weight grid at
/// the state's current round.
inline ConsensusRound pairwise_discrepancy(const FederationState& state, const WeightGrid& grid) {
  require(state.clients.size() >= 2, "pairwise_discrepancy: need at least 2 clients");
  require(!grid.weights.empty(), "pairwise_discrepancy: empty grid");
  for (const auto& w : grid.weights)
    require(w.size() == state.clients.front().dictionary.n_atoms(),
            "pairwise_discrepancy: grid arity does not match atom count");

  std::vector<std::vector<LabeledGMM>> barys(state.clients.size());
  for (std::size_t ci = 0; ci < state.clients.size(); ++ci) {
    barys[ci].reserve(grid.weights.size());
    for (const auto& w : grid.weights)
      barys[ci].push_back(gmm_barycenter(state.clients[ci].dictionary.atoms, w).gmm);
  }

  ConsensusRound out;
  out.round = state.round;
  for (std::size_t a = 0; a < state.clients.size(); ++a) {
    for (std::size_t b = a + 1; b < state.clients.size(); ++b) {
      double worst = 0.0;
      for (std::size_t l = 0; l < grid.weights.size(); ++l)
        worst = std::max(worst, std::sqrt(mw2_sq(barys[a][l], barys[b][l]).value));
      PairGap gap;
      gap.i = std::min(state.clients[a].id, state.clients[b].id);
      gap.j = std::max(state.clients[a].id, state.clients[b].id);
      gap.m_ij = worst;
      out.pairs.push_back(gap);
    }
  }
  return out;
}

struct EnvelopeConfig {
  int star_client = -1;      // -1: lowest client id supplies the frozen atoms
  int target_components = 0; // 0: match the frozen atoms' component count
  int iters = 200;
  double eta = 0.05;
  std::size_t n_virtual = 1000;
  std::uint64_t seed = 0;
  EmConfig em;
  ClassifierConfig classifier;
};

struct EnvelopeRow {
  std::vector<int> removed_classes;
  Vec alpha;
  double mw2_loss = 0.0;
  double accuracy = 0.0;
};

struct EnvelopeReport {
  int star_client = 0;
  std::vector<EnvelopeRow> rows;
};

namespace detail {

/// Gradient descent on barycentric coordinates with the atoms frozen.
/// Plain (unprojected) steps; coordinates are clamped at zero whenever a
/// step pushes them negative (the barycenter is undefined for negative
/// mass), with a single simplex projection after the final iteration.
inline Vec optimize_alpha(const std::vector<LabeledGMM>& atoms, const LabeledGMM& target,
                          int iters, double eta) {
  Dictionary dict;
  dict.atoms = atoms;
  dict.alpha.assign(atoms.size(), 1.0 / static_cast<double>(atoms.size()));
  for (int it = 0; it < iters; ++it) {
    const LossReport report = client_loss(dict, target, false, 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < dict.alpha.size(); ++k) {
      dict.alpha[k] = std::max(dict.alpha[k] - eta * report.grad_alpha[k], 0.0);
      total += dict.alpha[k];
    }
    if (total == 0.0) dict.alpha.assign(atoms.size(), 1.0 / static_cast<double>(atoms.size()));
  }
  return project_simplex(dict.alpha);
}

}  // namespace detail

/// Fixes one client's atoms and, for the full target plus each reduced
/// variant, refits the target GMM and optimizes coordinates alone. Reports
/// the final coordinates, the reconstruction loss, and the accuracy of a
/// classifier trained on virtual samples and evaluated on the full-class
/// test split.
inline EnvelopeReport envelope_study(const FederationState& source_state,
                                     const LabeledDataset& target_train,
                                     const LabeledDataset& target_test,
                                     const std::vector<std::set<int>>& removed_class_sets,
                                     const EnvelopeConfig& cfg = {}) {
  require(!source_state.clients.empty(), "envelope_study: empty federation");
  int star = cfg.star_client;
  if (star < 0) {
    star = source_state.clients.front().id;
    for (const auto& c : source_state.clients) star = std::min(star, c.id);
  }
  const std::vector<LabeledGMM>& atoms = source_state.client_by_id(star).dictionary.atoms;
  const int target_c = cfg.target_components > 0
                           ? cfg.target_components
                           : static_cast<int>(atoms.front().n_components());

  EnvelopeReport report;
  report.star_client = star;
  for (std::size_t row_idx = 0; row_idx < removed_class_sets.size(); ++row_idx) {
    const auto& removed = removed_class_sets[row_idx];
    const LabeledDataset reduced =
        removed.empty() ? target_train : remove_classes(target_train, removed);
    EmConfig em = cfg.em;
    em.seed = derive_seed(cfg.seed, {stream::kEmFit, row_idx});
    const GmmFit fit = fit_target_gmm(reduced, target_c, em);

    EnvelopeRow row;
    row.removed_classes.assign(removed.begin(), removed.end());
    row.alpha = detail::optimize_alpha(atoms, fit.gmm, cfg.iters, cfg.eta);

    Dictionary dict;
    dict.atoms = atoms;
    dict.alpha = row.alpha;
    row.mw2_loss = client_loss(dict, fit.gmm, false, 0.0).value;

    const LabeledGMM b = gmm_barycenter(atoms, row.alpha).gmm;
    const LabeledDataset virt =
        sample(b, cfg.n_virtual, derive_seed(cfg.seed, {stream::kSample, row_idx}));
    row.accuracy = accuracy(train_classifier(virt, cfg.classifier), target_test);
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace fedmix
