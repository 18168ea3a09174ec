#pragma once

// Synthetic multi-domain benchmark, missing-class ablation, virtual-sample
// generation from the target barycenter, and a multinomial logistic
// classifier used as the downstream target model.

#include <algorithm>
#include <set>

#include "fedmix/common.hpp"
#include "fedmix/federation.hpp"
#include "fedmix/gmm.hpp"
#include "fedmix/rng.hpp"

namespace fedmix {

struct SyntheticSpec {
  int n_class = 5;
  int d = 2;
  int n_domains = 4;  // sources plus one target (the last domain)
  int samples_per_domain = 500;
  double shift_scale = 1.0;  // norm of each domain's mean translation
  bool rotation = false;     // per-domain orthogonal mixing of the first two axes
  std::uint64_t seed = 7;
};

struct SyntheticDomains {
  std::vector<LabeledDataset> sources;
  LabeledDataset target_train;
  LabeledDataset target_test;
};

namespace detail {

// Base geometry: classes evenly spaced on a circle of this radius in the
// first two axes, isotropic within-class variance so that orthogonal
// mixing keeps covariances diagonal.
constexpr double kClassSep = 2.0;
constexpr double kBaseVar = 0.075;

inline std::vector<Vec> base_class_means(int n_class, int d) {
  std::vector<Vec> means(static_cast<std::size_t>(n_class), Vec(static_cast<std::size_t>(d), 0.0));
  for (int c = 0; c < n_class; ++c) {
    if (d == 1) {
      means[static_cast<std::size_t>(c)][0] = (c - 0.5 * (n_class - 1)) * kClassSep;
    } else {
      const double angle = 2.0 * 3.14159265358979323846 * c / n_class;
      means[static_cast<std::size_t>(c)][0] = kClassSep * std::cos(angle);
      means[static_cast<std::size_t>(c)][1] = kClassSep * std::sin(angle);
    }
  }
  return means;
}

struct DomainTransform {
  Vec translation;
  double cos_a = 1.0, sin_a = 0.0;  // rotation in the first two axes

  Vec apply(Vec x) const {
    if (x.size() >= 2 && (cos_a != 1.0 || sin_a != 0.0)) {
      const double x0 = x[0], x1 = x[1];
      x[0] = cos_a * x0 - sin_a * x1;
      x[1] = sin_a * x0 + cos_a * x1;
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += translation[i];
    return x;
  }
};

inline DomainTransform domain_transform(const SyntheticSpec& spec, int domain_index) {
  Rng rng(derive_seed(spec.seed, {stream::kSynthetic, 0, static_cast<std::uint64_t>(domain_index)}));
  DomainTransform t;
  t.translation.assign(static_cast<std::size_t>(spec.d), 0.0);
  if (spec.shift_scale > 0.0) {
    Vec dir = rng.normal_vec(static_cast<std::size_t>(spec.d));
    const double n = norm2(dir);
    if (n == 0.0) dir[0] = 1.0;
    for (std::size_t i = 0; i < dir.size(); ++i)
      t.translation[i] = spec.shift_scale * dir[i] / (n == 0.0 ? 1.0 : n);
  }
  if (spec.rotation && spec.d >= 2) {
    const double angle = 2.0 * 3.14159265358979323846 * rng.uniform();
    t.cos_a = std::cos(angle);
    t.sin_a = std::sin(angle);
  }
  return t;
}

inline LabeledDataset sample_domain(const SyntheticSpec& spec, const std::vector<Vec>& means,
                                    const DomainTransform& t, int n, std::uint64_t seed) {
  Rng rng(seed);
  LabeledDataset data;
  data.features = Matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(spec.d));
  data.labels = std::vector<int>(static_cast<std::size_t>(n));
  data.n_class = spec.n_class;
  const double sd = std::sqrt(kBaseVar);
  for (int i = 0; i < n; ++i) {
    const int c = i % spec.n_class;  // balanced classes
    Vec x = means[static_cast<std::size_t>(c)];
    for (auto& v : x) v += sd * rng.normal();
    x = t.apply(std::move(x));
    for (int j = 0; j < spec.d; ++j)
      data.features(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
          x[static_cast<std::size_t>(j)];
    (*data.labels)[static_cast<std::size_t>(i)] = c;
  }
  return data;
}

}  // namespace detail

/// Shared class-conditional Gaussians; each domain gets its own rigid
/// translation (and optional rotation). The last domain is the target; an
/// extra full-class test split is drawn from it. Deterministic per seed.
inline SyntheticDomains generate_domains(const SyntheticSpec& spec) {
  require(spec.n_class >= 1 && spec.d >= 1 && spec.n_domains >= 2 && spec.samples_per_domain >= 1,
          "generate_domains: all counts must be positive and n_domains >= 2");
  require(spec.shift_scale >= 0.0, "generate_domains: negative shift_scale");
  const auto means = detail::base_class_means(spec.n_class, spec.d);

  SyntheticDomains out;
  for (int j = 0; j < spec.n_domains; ++j) {
    const auto t = detail::domain_transform(spec, j);
    auto data = detail::sample_domain(
        spec, means, t, spec.samples_per_domain,
        derive_seed(spec.seed, {stream::kSynthetic, 1, static_cast<std::uint64_t>(j)}));
    if (j + 1 < spec.n_domains) {
      out.sources.push_back(std::move(data));
    } else {
      out.target_train = std::move(data);
      out.target_test = detail::sample_domain(
          spec, means, t, spec.samples_per_domain,
          derive_seed(spec.seed, {stream::kSynthetic, 2, static_cast<std::uint64_t>(j)}));
    }
  }
  return out;
}

/// Drops every sample whose class is listed; n_class metadata is kept (the
/// client still knows the total number of classes).
inline LabeledDataset remove_classes(const LabeledDataset& data, const std::set<int>& class_set) {
  require(data.labels.has_value(), "remove_classes: dataset has no labels");
  std::set<int> present(data.labels->begin(), data.labels->end());
  for (int c : class_set)
    require(present.count(c) == 1, "remove_classes: class not present");
  require(class_set.size() < present.size(), "remove_classes: would remove every class");

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < data.labels->size(); ++i)
    if (class_set.count((*data.labels)[i]) == 0) keep.push_back(i);

  LabeledDataset out;
  out.features = Matrix(keep.size(), data.features.cols());
  out.labels = std::vector<int>(keep.size());
  out.n_class = data.n_class;
  for (std::size_t r = 0; r < keep.size(); ++r) {
    for (std::size_t j = 0; j < data.features.cols(); ++j)
      out.features(r, j) = data.features(keep[r], j);
    (*out.labels)[r] = (*data.labels)[keep[r]];
  }
  return out;
}

/// Labeled points drawn from the target client's reconstructed barycenter.
inline LabeledDataset virtual_target_dataset(const FederationState& state, std::size_t n_samples,
                                             std::uint64_t seed) {
  const ClientState* target = nullptr;
  for (const auto& c : state.clients) {
    if (!c.is_labeled) {
      require(target == nullptr, "virtual_target_dataset: multiple unlabeled clients");
      target = &c;
    }
  }
  require(target != nullptr, "virtual_target_dataset: no unlabeled client");
  const LabeledGMM b = gmm_barycenter(target->dictionary.atoms, target->dictionary.alpha).gmm;
  return sample(b, n_samples, seed);
}

struct ClassifierConfig {
  int epochs = 500;
  double lr = 0.1;
};

/// Multinomial logistic regression, full-batch gradient descent from zero
/// weights (deterministic). Weight layout: n_class x (dim + 1), last
/// column the bias.
struct Classifier {
  Matrix w;
  int n_class = 0;
  int dim = 0;
};

namespace detail {

inline Vec class_scores(const Classifier& clf, const Matrix& x, std::size_t row) {
  Vec s(static_cast<std::size_t>(clf.n_class), 0.0);
  for (int c = 0; c < clf.n_class; ++c) {
    double z = clf.w(static_cast<std::size_t>(c), static_cast<std::size_t>(clf.dim));
    for (int j = 0; j < clf.dim; ++j)
      z += clf.w(static_cast<std::size_t>(c), static_cast<std::size_t>(j)) *
           x(row, static_cast<std::size_t>(j));
    s[static_cast<std::size_t>(c)] = z;
  }
  return s;
}

inline void softmax_inplace(Vec& s) {
  const double m = *std::max_element(s.begin(), s.end());
  double total = 0.0;
  for (auto& v : s) {
    v = std::exp(v - m);
    total += v;
  }
  for (auto& v : s) v /= total;
}

}  // namespace detail

inline Classifier train_classifier(const LabeledDataset& data, const ClassifierConfig& cfg = {}) {
  require(data.labels.has_value(), "train_classifier: dataset has no labels");
  require(data.features.rows() > 0, "train_classifier: empty dataset");
  std::set<int> present(data.labels->begin(), data.labels->end());
  require(present.size() >= 2, "train_classifier: fewer than two classes present");

  Classifier clf;
  clf.n_class = data.n_class;
  clf.dim = static_cast<int>(data.features.cols());
  clf.w = Matrix(static_cast<std::size_t>(clf.n_class), static_cast<std::size_t>(clf.dim) + 1);

  const std::size_t n = data.features.rows();
  Matrix grad(clf.w.rows(), clf.w.cols());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::fill(grad.data().begin(), grad.data().end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      Vec p = detail::class_scores(clf, data.features, i);
      detail::softmax_inplace(p);
      p[static_cast<std::size_t>((*data.labels)[i])] -= 1.0;
      for (int c = 0; c < clf.n_class; ++c) {
        const double pc = p[static_cast<std::size_t>(c)];
        if (pc == 0.0) continue;
        for (int j = 0; j < clf.dim; ++j)
          grad(static_cast<std::size_t>(c), static_cast<std::size_t>(j)) +=
              pc * data.features(i, static_cast<std::size_t>(j));
        grad(static_cast<std::size_t>(c), static_cast<std::size_t>(clf.dim)) += pc;
      }
    }
    const double scale = cfg.lr / static_cast<double>(n);
    for (std::size_t k = 0; k < clf.w.data().size(); ++k) clf.w.data()[k] -= scale * grad.data()[k];
  }
  return clf;
}

inline std::vector<int> classify(const Classifier& clf, const Matrix& features) {
  require(static_cast<int>(features.cols()) == clf.dim, "classify: dimension mismatch");
  std::vector<int> out(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i)
    out[i] = static_cast<int>(argmax(detail::class_scores(clf, features, i)));
  return out;
}

inline double accuracy(const Classifier& clf, const LabeledDataset& test) {
  require(test.labels.has_value(), "accuracy: test set has no labels");
  require(test.features.rows() > 0, "accuracy: empty test set");
  const auto pred = classify(clf, test.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == (*test.labels)[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

/// Row-wise concatenation; used for the pooled-source baseline.
inline LabeledDataset concat_datasets(const std::vector<LabeledDataset>& parts) {
  require(!parts.empty(), "concat_datasets: nothing to concatenate");
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require(p.labels.has_value(), "concat_datasets: dataset has no labels");
    require(p.features.cols() == parts.front().features.cols() &&
                p.n_class == parts.front().n_class,
            "concat_datasets: incompatible datasets");
    rows += p.features.rows();
  }
  LabeledDataset out;
  out.features = Matrix(rows, parts.front().features.cols());
  out.labels = std::vector<int>(rows);
  out.n_class = parts.front().n_class;
  std::size_t r = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.features.rows(); ++i, ++r) {
      for (std::size_t j = 0; j < p.features.cols(); ++j) out.features(r, j) = p.features(i, j);
      (*out.labels)[r] = (*p.labels)[i];
    }
  }
  return out;
}

struct AblationConfig {
  std::vector<double> removal_fractions;  // each in [0, 1)
  int trials = 5;
  std::uint64_t seed = 0;
};

struct AblationRow {
  double fraction = 0.0;
  int trial = 0;
  std::vector<int> removed_classes;
  double accuracy = 0.0;
  std::vector<int> virtual_class_counts;  // class histogram of the virtual dataset
};

struct AblationSummary {
  double fraction = 0.0;
  double mean_accuracy = 0.0;
  double stddev_accuracy = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::vector<AblationSummary> summary;
};

/// Full missing-class study: for each fraction and trial, a seeded random
/// class subset is removed from the target training split only, the
/// federation is trained from scratch, and accuracy is measured on the
/// untouched full-class test split. The training master seed and generated
/// data are identical across cells; only the removed subset varies.
inline AblationReport run_ablation(const SyntheticSpec& spec, const AblationConfig& ablation,
                                   const TrainConfig& train_cfg, std::size_t n_virtual = 1000,
                                   const ClassifierConfig& clf_cfg = {}) {
  require(ablation.trials >= 1, "run_ablation: trials must be >= 1");
  for (double f : ablation.removal_fractions)
    require(f >= 0.0 && f < 1.0, "run_ablation: fractions must lie in [0, 1)");

  const SyntheticDomains domains = generate_domains(spec);
  AblationReport report;
  for (std::size_t fi = 0; fi < ablation.removal_fractions.size(); ++fi) {
    const double fraction = ablation.removal_fractions[fi];
    int n_remove = static_cast<int>(std::llround(fraction * spec.n_class));
    n_remove = std::min(n_remove, spec.n_class - 1);
    Vec cell_acc;
    for (int trial = 0; trial < ablation.trials; ++trial) {
      AblationRow row;
      row.fraction = fraction;
      row.trial = trial;
      if (n_remove > 0) {
        Rng rng(derive_seed(ablation.seed, {stream::kTrial, static_cast<std::uint64_t>(fi),
                                            static_cast<std::uint64_t>(trial)}));
        row.removed_classes = rng.distinct_ints_excluding(spec.n_class, n_remove, -1);
        std::sort(row.removed_classes.begin(), row.removed_classes.end());
      }
      const std::set<int> removed(row.removed_classes.begin(), row.removed_classes.end());
      const LabeledDataset target_train =
          removed.empty() ? domains.target_train : remove_classes(domains.target_train, removed);
      const FederationState state = train(domains.sources, target_train, train_cfg);
      const LabeledDataset virt = virtual_target_dataset(
          state, n_virtual, derive_seed(train_cfg.seed, {stream::kSample}));
      row.virtual_class_counts.assign(static_cast<std::size_t>(spec.n_class), 0);
      for (int lab : *virt.labels) ++row.virtual_class_counts[static_cast<std::size_t>(lab)];
      row.accuracy = accuracy(train_classifier(virt, clf_cfg), domains.target_test);
      cell_acc.push_back(row.accuracy);
      report.rows.push_back(std::move(row));
    }
    AblationSummary s;
    s.fraction = fraction;
    s.mean_accuracy = vec_sum(cell_acc) / static_cast<double>(cell_acc.size());
    double ss = 0.0;
    for (double a : cell_acc) ss += (a - s.mean_accuracy) * (a - s.mean_accuracy);
    s.stddev_accuracy =
        cell_acc.size() > 1 ? std::sqrt(ss / static_cast<double>(cell_acc.size() - 1)) : 0.0;
    report.summary.push_back(s);
  }
  return report;
}

}  // namespace fedmix
