#pragma once

// Exact discrete optimal transport between mixture weight vectors, and the
// mixture-level Wasserstein distances built on it.
//
// The solver is a primal transportation simplex: north-west-corner starting
// basis, spanning-tree potentials, most-negative-reduced-cost pivoting with
// a Bland's-rule fallback that guarantees termination under degeneracy. No
// entropic regularization anywhere; component counts stay small (<= ~100 a
// side) so dense pivoting is the right tool.

#include <cstdint>

#include "fedmix/common.hpp"
#include "fedmix/gmm.hpp"

namespace fedmix {

using CostMatrix = Matrix;

/// Coupling between two weight vectors with prescribed marginals.
struct TransportPlan {
  Matrix matrix;      // C1 x C2, nonnegative
  Vec row_marginal;   // length C1
  Vec col_marginal;   // length C2

  void validate(double tol = 1e-8) const {
    require(matrix.rows() == row_marginal.size() && matrix.cols() == col_marginal.size(),
            "TransportPlan: shape mismatch");
    for (double x : matrix.data()) require(x >= -tol, "TransportPlan: negative entry");
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < matrix.cols(); ++j) s += matrix(i, j);
      require(std::abs(s - row_marginal[i]) <= tol, "TransportPlan: row marginal violated");
    }
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < matrix.rows(); ++i) s += matrix(i, j);
      require(std::abs(s - col_marginal[j]) <= tol, "TransportPlan: column marginal violated");
    }
  }
};

struct OtResult {
  TransportPlan plan;
  double cost = 0.0;
};

/// Exact solution of min_{pi in Pi(mu, nu)} <pi, cost>.
inline OtResult solve_exact_ot(const CostMatrix& cost, const Vec& mu, const Vec& nu) {
  const std::size_t n = mu.size();
  const std::size_t m = nu.size();
  require(n >= 1 && m >= 1, "solve_exact_ot: empty marginals");
  require(cost.rows() == n && cost.cols() == m, "solve_exact_ot: cost shape mismatch");
  for (double x : mu) require(x >= 0.0, "solve_exact_ot: negative weight in mu");
  for (double x : nu) require(x >= 0.0, "solve_exact_ot: negative weight in nu");
  const double sum_mu = vec_sum(mu);
  const double sum_nu = vec_sum(nu);
  require(std::abs(sum_mu - 1.0) <= 1e-9, "solve_exact_ot: mu does not sum to 1");
  require(std::abs(sum_nu - 1.0) <= 1e-9, "solve_exact_ot: nu does not sum to 1");

  // Equalize totals exactly so the starting basis balances.
  Vec a = mu, b = nu;
  const double scale = sum_mu / sum_nu;
  for (double& x : b) x *= scale;

  Matrix flow(n, m);
  std::vector<char> basic(n * m, 0);
  const auto idx = [m](std::size_t i, std::size_t j) { return i * m + j; };

  // North-west corner: exactly n + m - 1 basic cells, zero-flow cells kept.
  {
    Vec ra = a, rb = b;
    std::size_t i = 0, j = 0;
    while (true) {
      const double x = std::min(ra[i], rb[j]);
      flow(i, j) = x;
      basic[idx(i, j)] = 1;
      ra[i] -= x;
      rb[j] -= x;
      if (i == n - 1 && j == m - 1) break;
      if (j == m - 1) ++i;
      else if (i == n - 1) ++j;
      else if (ra[i] <= rb[j]) ++i;
      else ++j;
    }
  }

  double max_abs_cost = 0.0;
  for (double c : cost.data()) max_abs_cost = std::max(max_abs_cost, std::abs(c));
  const double eps = 1e-12 * (1.0 + max_abs_cost);

  const std::size_t total_nodes = n + m;  // rows then cols
  std::vector<double> u(n), v(m);
  std::vector<int> parent(total_nodes);
  std::vector<std::size_t> queue(total_nodes);
  std::vector<std::vector<std::size_t>> row_cols(n), col_rows(m);

  const long bland_after = 5L * static_cast<long>(total_nodes) * static_cast<long>(total_nodes);
  const long max_pivots = 50L * static_cast<long>(total_nodes) * static_cast<long>(total_nodes) + 1000;

  for (long pivot = 0;; ++pivot) {
    if (pivot > max_pivots)
      throw std::runtime_error("solve_exact_ot: pivot limit exceeded");

    // Basis adjacency and potentials (u_i + v_j = c_ij on basic cells).
    for (auto& r : row_cols) r.clear();
    for (auto& c : col_rows) c.clear();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if (basic[idx(i, j)]) {
          row_cols[i].push_back(j);
          col_rows[j].push_back(i);
        }
    std::vector<char> seen(total_nodes, 0);
    std::size_t head = 0, tail = 0;
    u[0] = 0.0;
    seen[0] = 1;
    queue[tail++] = 0;
    while (head < tail) {
      const std::size_t node = queue[head++];
      if (node < n) {
        for (std::size_t j : row_cols[node])
          if (!seen[n + j]) {
            v[j] = cost(node, j) - u[node];
            seen[n + j] = 1;
            queue[tail++] = n + j;
          }
      } else {
        const std::size_t j = node - n;
        for (std::size_t i : col_rows[j])
          if (!seen[i]) {
            u[i] = cost(i, j) - v[j];
            seen[i] = 1;
            queue[tail++] = i;
          }
      }
    }

    // Entering cell: most negative reduced cost, or Bland's rule once the
    // pivot count suggests degenerate stalling.
    std::size_t ei = 0, ej = 0;
    bool found = false;
    if (pivot < bland_after) {
      double best = -eps;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          if (basic[idx(i, j)]) continue;
          const double r = cost(i, j) - u[i] - v[j];
          if (r < best) {
            best = r;
            ei = i;
            ej = j;
            found = true;
          }
        }
    } else {
      for (std::size_t i = 0; i < n && !found; ++i)
        for (std::size_t j = 0; j < m && !found; ++j) {
          if (basic[idx(i, j)]) continue;
          if (cost(i, j) - u[i] - v[j] < -eps) {
            ei = i;
            ej = j;
            found = true;
          }
        }
    }
    if (!found) break;  // optimal

    // Unique tree path from row ei to col ej.
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(seen.begin(), seen.end(), 0);
    head = tail = 0;
    seen[ei] = 1;
    queue[tail++] = ei;
    while (head < tail) {
      const std::size_t node = queue[head++];
      if (node == n + ej) break;
      if (node < n) {
        for (std::size_t j : row_cols[node])
          if (!seen[n + j]) {
            seen[n + j] = 1;
            parent[n + j] = static_cast<int>(node);
            queue[tail++] = n + j;
          }
      } else {
        for (std::size_t i : col_rows[node - n])
          if (!seen[i]) {
            seen[i] = 1;
            parent[i] = static_cast<int>(node);
            queue[tail++] = i;
          }
      }
    }

    std::vector<std::size_t> path_nodes;
    for (int node = static_cast<int>(n + ej); node != -1; node = parent[node])
      path_nodes.push_back(static_cast<std::size_t>(node));
    std::reverse(path_nodes.begin(), path_nodes.end());  // ei ... ej, alternating

    // Cells along the path; even positions lose theta, odd gain it.
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t t = 0; t + 1 < path_nodes.size(); ++t) {
      const std::size_t x = path_nodes[t], y = path_nodes[t + 1];
      cells.emplace_back(x < n ? x : y, x < n ? y - n : x - n);
    }
    double theta = std::numeric_limits<double>::infinity();
    std::size_t leave = 0;
    for (std::size_t t = 0; t < cells.size(); t += 2) {
      const double f = flow(cells[t].first, cells[t].second);
      if (f < theta) {
        theta = f;
        leave = t;
      }
    }
    for (std::size_t t = 0; t < cells.size(); ++t) {
      if (t % 2 == 0) flow(cells[t].first, cells[t].second) -= theta;
      else flow(cells[t].first, cells[t].second) += theta;
    }
    flow(cells[leave].first, cells[leave].second) = 0.0;
    flow(ei, ej) += theta;
    basic[idx(cells[leave].first, cells[leave].second)] = 0;
    basic[idx(ei, ej)] = 1;
  }

  double objective = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) objective += flow(i, j) * cost(i, j);
  return OtResult{TransportPlan{std::move(flow), mu, nu}, objective};
}

/// Pairwise squared Gaussian W2 costs between the components of two mixtures.
inline CostMatrix mixture_cost_matrix(const LabeledGMM& p, const LabeledGMM& q) {
  CostMatrix c(p.n_components(), q.n_components());
  for (std::size_t k = 0; k < p.n_components(); ++k)
    for (std::size_t l = 0; l < q.n_components(); ++l)
      c(k, l) = gaussian_w2_sq(p.components[k], q.components[l]);
  return c;
}

struct MwResult {
  double value = 0.0;
  TransportPlan plan;
};

/// Squared Mixture-Wasserstein distance: exact OT over mixture components
/// with the Gaussian W2 ground cost. Labels are ignored entirely.
inline MwResult mw2_sq(const LabeledGMM& p, const LabeledGMM& q) {
  require(p.dim() == q.dim(), "mw2_sq: dimension mismatch");
  auto res = solve_exact_ot(mixture_cost_matrix(p, q), p.weights, q.weights);
  return MwResult{res.cost, std::move(res.plan)};
}

/// Scale-adaptive default penalty: 1e3 times the median entry of the
/// geometric cost matrix (upper middle for even counts), recomputed per
/// call.
inline double auto_label_penalty(const CostMatrix& geometric_cost) {
  Vec entries = geometric_cost.data();
  const std::size_t mid = entries.size() / 2;
  std::nth_element(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(mid),
                   entries.end());
  return 1e3 * entries[mid];
}

/// Supervised squared Mixture-Wasserstein distance: the ground cost
/// additionally charges label_penalty * ||V_p - V_q||^2 for transporting
/// mass between components with mismatched class-assignment vectors.
inline MwResult smw2_sq(const LabeledGMM& p, const LabeledGMM& q, double label_penalty) {
  require(p.dim() == q.dim(), "smw2_sq: dimension mismatch");
  require(p.num_classes() == q.num_classes(), "smw2_sq: n_class mismatch");
  require(label_penalty >= 0.0, "smw2_sq: label_penalty must be nonnegative");
  CostMatrix c = mixture_cost_matrix(p, q);
  for (std::size_t k = 0; k < p.n_components(); ++k)
    for (std::size_t l = 0; l < q.n_components(); ++l)
      c(k, l) += label_penalty * sq_dist(p.labels[k], q.labels[l]);
  auto res = solve_exact_ot(c, p.weights, q.weights);
  return MwResult{res.cost, std::move(res.plan)};
}

}  // namespace fedmix
