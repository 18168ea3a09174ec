#pragma once

// Labeled Gaussian mixtures and labeled datasets. A LabeledGMM carries, per
// component, a class-assignment vector on the class simplex: one-hot for
// mixtures fitted on labeled data, soft for learned atoms and barycenters.

#include <optional>

#include "fedmix/common.hpp"
#include "fedmix/gaussian.hpp"
#include "fedmix/rng.hpp"

namespace fedmix {

struct LabeledGMM {
  Vec weights;                          // mixture weights, length C
  std::vector<DiagGaussian> components; // length C
  std::vector<Vec> labels;              // C rows, each of length n_class

  std::size_t n_components() const { return components.size(); }
  std::size_t dim() const { return components.empty() ? 0 : components.front().dim(); }
  std::size_t num_classes() const { return labels.empty() ? 0 : labels.front().size(); }

  void validate() const {
    require(!components.empty(), "LabeledGMM: no components");
    require(weights.size() == components.size(), "LabeledGMM: weight count mismatch");
    require(labels.size() == components.size(), "LabeledGMM: label row count mismatch");
    require(is_probability_vector(weights), "LabeledGMM: weights not on the simplex");
    const std::size_t d = components.front().dim();
    const std::size_t nc = labels.front().size();
    for (const auto& c : components) {
      c.validate();
      require(c.dim() == d, "LabeledGMM: component dimension mismatch");
    }
    for (const auto& row : labels) {
      require(row.size() == nc, "LabeledGMM: label row length mismatch");
      require(is_probability_vector(row), "LabeledGMM: label row not on the simplex");
    }
  }
};

/// Two mixtures are structurally congruent when they agree on dimension,
/// class count and component count. Federation-wide exchange requires this.
inline bool congruent(const LabeledGMM& a, const LabeledGMM& b) {
  return a.n_components() == b.n_components() && a.dim() == b.dim() &&
         a.num_classes() == b.num_classes();
}

struct LabeledDataset {
  Matrix features;                        // n x d
  std::optional<std::vector<int>> labels; // class indices in [0, n_class)
  int n_class = 0;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
  bool has_labels() const { return labels.has_value(); }

  void validate() const {
    require(features.rows() >= 1 && features.cols() >= 1, "LabeledDataset: empty data");
    require(n_class >= 1, "LabeledDataset: n_class must be positive");
    if (labels) {
      require(labels->size() == features.rows(), "LabeledDataset: label count mismatch");
      for (int y : *labels)
        require(y >= 0 && y < n_class, "LabeledDataset: label out of range");
    }
  }
};

/// Draws n labeled points. Component index follows the mixture weights, the
/// point follows that component, and the label is the argmax of the
/// component's class-assignment row (lowest index on ties) so that repeated
/// runs with one seed give one virtual dataset.
inline LabeledDataset sample(const LabeledGMM& gmm, std::size_t n, std::uint64_t seed) {
  gmm.validate();
  const std::size_t d = gmm.dim();
  Rng rng(derive_seed(seed, {stream::kSample}));
  LabeledDataset out;
  out.features = Matrix(n, d);
  out.labels = std::vector<int>(n, 0);
  out.n_class = static_cast<int>(gmm.num_classes());
  Vec cumulative(gmm.n_components());
  double acc = 0.0;
  for (std::size_t c = 0; c < gmm.n_components(); ++c) {
    acc += gmm.weights[c];
    cumulative[c] = acc;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * acc;
    std::size_t c = 0;
    while (c + 1 < cumulative.size() && u >= cumulative[c]) ++c;
    const auto& comp = gmm.components[c];
    for (std::size_t j = 0; j < d; ++j)
      out.features(i, j) = comp.mean[j] + std::sqrt(comp.var[j]) * rng.normal();
    (*out.labels)[i] = static_cast<int>(argmax(gmm.labels[c]));
  }
  return out;
}

/// Mean per-sample log density of the data under the mixture.
inline double log_likelihood(const LabeledGMM& gmm, const LabeledDataset& data) {
  require(gmm.dim() == data.dim(), "log_likelihood: dimension mismatch");
  const std::size_t n = data.size();
  double total = 0.0;
  Vec terms(gmm.n_components());
  Vec x(data.dim());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < data.dim(); ++j) x[j] = data.features(i, j);
    for (std::size_t c = 0; c < gmm.n_components(); ++c)
      terms[c] = (gmm.weights[c] > 0.0)
                     ? std::log(gmm.weights[c]) + gaussian_log_density(gmm.components[c], x)
                     : -std::numeric_limits<double>::infinity();
    total += log_sum_exp(terms);
  }
  return total / static_cast<double>(n);
}

}  // namespace fedmix
