#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedmix/fedmix.hpp"

namespace support {

inline fedmix::DiagGaussian gauss(std::initializer_list<double> mean,
                                  std::initializer_list<double> var) {
  return fedmix::DiagGaussian{fedmix::Vec(mean), fedmix::Vec(var)};
}

// Random valid GMM: positive normalized weights, spread means, variances
// bounded away from zero, labels either one-hot or random simplex points.
inline fedmix::LabeledGMM random_gmm(fedmix::Rng& rng, std::size_t C, std::size_t d,
                                     std::size_t n_class, bool one_hot) {
  fedmix::LabeledGMM g;
  g.weights.resize(C);
  double wsum = 0.0;
  for (auto& w : g.weights) {
    w = 0.2 + rng.uniform();
    wsum += w;
  }
  for (auto& w : g.weights) w /= wsum;
  g.components.resize(C);
  g.labels.assign(C, fedmix::Vec(n_class, 0.0));
  for (std::size_t c = 0; c < C; ++c) {
    g.components[c].mean = rng.normal_vec(d);
    for (auto& x : g.components[c].mean) x *= 2.0;
    g.components[c].var.resize(d);
    for (auto& v : g.components[c].var) v = 0.3 + 1.7 * rng.uniform();
    if (one_hot) {
      g.labels[c][rng.uniform_int(n_class)] = 1.0;
    } else {
      double lsum = 0.0;
      for (auto& x : g.labels[c]) {
        x = 0.1 + rng.uniform();
        lsum += x;
      }
      for (auto& x : g.labels[c]) x /= lsum;
    }
  }
  return g;
}

inline std::filesystem::path fresh_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("fedmix_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void spit(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

// Runs the CLI binary; returns its exit code and captures combined output.
struct CliResult {
  int exit_code = -1;
  std::string output;
};

inline CliResult run_cli(const std::string& args) {
  const auto log = std::filesystem::temp_directory_path() / "fedmix_cli_log.txt";
  const std::string cmd = std::string(FEDMIX_CLI_PATH) + " " + args + " > " +
                          log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.output = slurp(log);
#ifdef _WIN32
  r.exit_code = raw;
#else
  r.exit_code = WEXITSTATUS(raw);
#endif
  return r;
}

}  // namespace support
