#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fedmix/gaussian.hpp"
#include "fedmix/rng.hpp"
#include "support.hpp"

using namespace fedmix;
using support::gauss;

TEST_CASE("w2 with equal covariances is the squared mean distance") {
  const auto a = gauss({0.0, 0.0}, {1.0, 1.0});
  const auto b = gauss({3.0, 4.0}, {1.0, 1.0});
  REQUIRE(gaussian_w2_sq(a, b) == Catch::Approx(25.0));
}

TEST_CASE("w2 with equal means is the squared std distance") {
  const auto a = gauss({0.5}, {4.0});
  const auto b = gauss({0.5}, {1.0});
  REQUIRE(gaussian_w2_sq(a, b) == Catch::Approx(1.0));
}

TEST_CASE("w2 of a Gaussian with itself is zero") {
  const auto a = gauss({1.0, -2.0, 3.0}, {0.5, 2.0, 1.0});
  REQUIRE(gaussian_w2_sq(a, a) == 0.0);
}

TEST_CASE("w2 is symmetric and dimension-additive") {
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    DiagGaussian a{rng.normal_vec(3), {0.2 + rng.uniform(), 0.2 + rng.uniform(), 0.2 + rng.uniform()}};
    DiagGaussian b{rng.normal_vec(3), {0.2 + rng.uniform(), 0.2 + rng.uniform(), 0.2 + rng.uniform()}};
    REQUIRE(gaussian_w2_sq(a, b) == Catch::Approx(gaussian_w2_sq(b, a)));
    double per_axis = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      DiagGaussian ai{{a.mean[i]}, {a.var[i]}};
      DiagGaussian bi{{b.mean[i]}, {b.var[i]}};
      per_axis += gaussian_w2_sq(ai, bi);
    }
    REQUIRE(gaussian_w2_sq(a, b) == Catch::Approx(per_axis));
  }
}

TEST_CASE("sqrt of w2 obeys the triangle inequality") {
  Rng rng(37);
  for (int t = 0; t < 500; ++t) {
    DiagGaussian g[3];
    for (auto& x : g) x = DiagGaussian{rng.normal_vec(2), {0.1 + rng.uniform(), 0.1 + rng.uniform()}};
    const double ab = std::sqrt(gaussian_w2_sq(g[0], g[1]));
    const double bc = std::sqrt(gaussian_w2_sq(g[1], g[2]));
    const double ac = std::sqrt(gaussian_w2_sq(g[0], g[2]));
    REQUIRE(ac <= ab + bc + 1e-9);
  }
}

TEST_CASE("w2 never exceeds the comonotone coupling's cost") {
  // The closed form is the infimum over couplings, so the explicit coupling
  // X_b = m_b + (sd_b/sd_a)(X_a - m_a) gives a Monte Carlo upper bound.
  Rng rng(41);
  for (int t = 0; t < 5; ++t) {
    DiagGaussian a{rng.normal_vec(2), {0.3 + rng.uniform(), 0.3 + rng.uniform()}};
    DiagGaussian b{rng.normal_vec(2), {0.3 + rng.uniform(), 0.3 + rng.uniform()}};
    const double w2 = gaussian_w2_sq(a, b);
    double mc = 0.0;
    const int n = 200000;
    Rng sampler(derive_seed(100, {static_cast<std::uint64_t>(t)}));
    for (int s = 0; s < n; ++s)
      for (std::size_t i = 0; i < 2; ++i) {
        const double z = sampler.normal();
        const double xa = a.mean[i] + std::sqrt(a.var[i]) * z;
        const double xb = b.mean[i] + std::sqrt(b.var[i]) * z;
        mc += (xa - xb) * (xa - xb);
      }
    mc /= n;
    REQUIRE(w2 == Catch::Approx(mc).margin(0.01 * (1.0 + mc)));
    REQUIRE(w2 <= mc + 0.01 * (1.0 + mc));
  }
}

TEST_CASE("w2 rejects mismatched dimensions") {
  REQUIRE_THROWS(gaussian_w2_sq(gauss({0.0}, {1.0}), gauss({0.0, 0.0}, {1.0, 1.0})));
}

TEST_CASE("gaussian_barycenter interpolates means and stds") {
  const auto a = gauss({0.0}, {1.0});
  const auto b = gauss({2.0}, {1.0});
  const auto bary = gaussian_barycenter({a, b}, {0.5, 0.5});
  REQUIRE(bary.mean[0] == Catch::Approx(1.0));
  REQUIRE(bary.var[0] == Catch::Approx(1.0));
}

TEST_CASE("gaussian_barycenter averages standard deviations, not variances") {
  const auto a = gauss({0.0}, {1.0});
  const auto b = gauss({0.0}, {9.0});
  const auto bary = gaussian_barycenter({a, b}, {0.5, 0.5});
  REQUIRE(bary.var[0] == Catch::Approx(4.0));
}

TEST_CASE("gaussian_barycenter with a one-hot weight returns that component") {
  const auto a = gauss({1.0, 2.0}, {0.5, 0.8});
  const auto b = gauss({-3.0, 0.0}, {2.0, 1.5});
  const auto bary = gaussian_barycenter({a, b}, {0.0, 1.0});
  REQUIRE(bary.mean == b.mean);
  REQUIRE(bary.var[0] == Catch::Approx(b.var[0]));
  REQUIRE(bary.var[1] == Catch::Approx(b.var[1]));
}

TEST_CASE("gaussian_barycenter rejects bad inputs") {
  REQUIRE_THROWS(gaussian_barycenter({}, {}));
  REQUIRE_THROWS(gaussian_barycenter({gauss({0.0}, {1.0})}, {0.5}));
}

TEST_CASE("log density matches the closed form at the mean") {
  const auto g = gauss({0.0}, {1.0});
  REQUIRE(gaussian_log_density(g, {0.0}) == Catch::Approx(-0.5 * std::log(2.0 * M_PI)));
}
