// Command-line driver: reproducible federation experiments from one JSON
// config. Subcommands: train, consensus, ablate, envelope, sample.
//
// Exit codes: 0 success, 2 malformed config, 3 data error, 4 numerical
// non-convergence (only with --strict).

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedmix/fedmix.hpp"

namespace {

using fedmix::Json;

constexpr const char* kVersion = "0.1.0";
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Experiment {
  bool synthetic = true;
  fedmix::SyntheticSpec spec;
  std::vector<std::string> source_paths;
  std::string target_train_path;
  std::string target_test_path;  // optional in csv mode
  int csv_n_class = 0;

  fedmix::TrainConfig train;
  std::size_t n_virtual = 1000;
  fedmix::ClassifierConfig classifier;

  int consensus_resolution = 4;
  int consensus_every = 10;

  fedmix::AblationConfig ablation;
  std::vector<double> envelope_fractions;
  fedmix::EnvelopeConfig envelope;

  Json echo;  // fully resolved config, manifest payload
};

struct LoadedData {
  std::vector<fedmix::LabeledDataset> sources;
  fedmix::LabeledDataset target_train;
  std::optional<fedmix::LabeledDataset> target_test;
};

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string("config field has wrong type: ") + key);
  }
}

Json require_object(const Json& j, const char* key) {
  if (!j.contains(key)) return Json::object();
  if (!j.at(key).is_object()) throw ConfigError(std::string("config field must be an object: ") + key);
  return j.at(key);
}

Experiment resolve_config(const Json& raw, std::optional<std::uint64_t> seed_override) {
  if (!raw.is_object()) throw ConfigError("config root must be a JSON object");
  Experiment exp;

  const Json data = require_object(raw, "data");
  const bool has_syn = data.contains("synthetic");
  const bool has_csv = data.contains("csv");
  if (has_syn == has_csv)
    throw ConfigError("config data section needs exactly one of 'synthetic' or 'csv'");
  exp.synthetic = has_syn;
  if (has_syn) {
    const Json s = require_object(data, "synthetic");
    exp.spec.n_class = get_or(s, "n_class", exp.spec.n_class);
    exp.spec.d = get_or(s, "d", exp.spec.d);
    exp.spec.n_domains = get_or(s, "n_domains", exp.spec.n_domains);
    exp.spec.samples_per_domain = get_or(s, "samples_per_domain", exp.spec.samples_per_domain);
    exp.spec.shift_scale = get_or(s, "shift_scale", exp.spec.shift_scale);
    exp.spec.rotation = get_or(s, "rotation", exp.spec.rotation);
    exp.spec.seed = get_or(s, "seed", exp.spec.seed);
    if (exp.spec.n_class < 1 || exp.spec.d < 1 || exp.spec.n_domains < 3 ||
        exp.spec.samples_per_domain < 1 || exp.spec.shift_scale < 0.0)
      throw ConfigError("invalid synthetic spec (counts >= 1, >= 3 domains, shift >= 0)");
  } else {
    const Json c = require_object(data, "csv");
    exp.source_paths = get_or(c, "sources", std::vector<std::string>{});
    exp.target_train_path = get_or(c, "target_train", std::string{});
    exp.target_test_path = get_or(c, "target_test", std::string{});
    exp.csv_n_class = get_or(c, "n_class", 0);
    if (exp.source_paths.size() < 2) throw ConfigError("csv data needs at least two sources");
    if (exp.target_train_path.empty()) throw ConfigError("csv data needs target_train");
    if (exp.csv_n_class < 1) throw ConfigError("csv data needs n_class >= 1");
  }

  const Json fed = require_object(raw, "federation");
  exp.train.atoms = get_or(fed, "atoms", exp.train.atoms);
  exp.train.components_per_class = get_or(fed, "components_per_class", exp.train.components_per_class);
  exp.train.atom_components = get_or(fed, "atom_components", exp.train.atom_components);
  exp.train.rounds = get_or(fed, "rounds", exp.train.rounds);
  exp.train.epochs = get_or(fed, "epochs", exp.train.epochs);
  exp.train.eta = get_or(fed, "eta", exp.train.eta);
  exp.train.seed = get_or(fed, "seed", exp.train.seed);
  if (seed_override) exp.train.seed = *seed_override;
  if (fed.contains("label_penalty")) {
    const Json& lp = fed.at("label_penalty");
    if (lp.is_string()) {
      if (lp.get<std::string>() != "auto")
        throw ConfigError("label_penalty must be \"auto\" or a positive number");
      exp.train.label_penalty = fedmix::kAutoLabelPenalty;
    } else if (lp.is_number()) {
      exp.train.label_penalty = lp.get<double>();
      if (exp.train.label_penalty <= 0.0)
        throw ConfigError("label_penalty must be \"auto\" or a positive number");
    } else {
      throw ConfigError("label_penalty must be \"auto\" or a positive number");
    }
  }
  const std::string strat = get_or(fed, "strategy", std::string{"aggregation"});
  const auto parsed = fedmix::parse_strategy(strat);
  if (!parsed) throw ConfigError("unknown strategy: " + strat);
  exp.train.strategy = *parsed;
  if (exp.train.atoms < 1 || exp.train.components_per_class < 1 || exp.train.atom_components < 0 ||
      exp.train.rounds < 0 || exp.train.epochs < 0 || exp.train.eta < 0.0)
    throw ConfigError("invalid federation hyperparameters");
  const Json em = require_object(fed, "em");
  exp.train.em.max_iters = get_or(em, "max_iters", exp.train.em.max_iters);
  exp.train.em.tol = get_or(em, "tol", exp.train.em.tol);
  exp.train.em.variance_floor = get_or(em, "variance_floor", exp.train.em.variance_floor);

  const Json eval = require_object(raw, "evaluation");
  const auto n_virtual = get_or(eval, "n_virtual", 1000);
  if (n_virtual < 0) throw ConfigError("n_virtual must be >= 0");
  exp.n_virtual = static_cast<std::size_t>(n_virtual);
  const Json clf = require_object(eval, "classifier");
  exp.classifier.epochs = get_or(clf, "epochs", exp.classifier.epochs);
  exp.classifier.lr = get_or(clf, "lr", exp.classifier.lr);

  const Json cons = require_object(raw, "consensus");
  exp.consensus_resolution = get_or(cons, "resolution", exp.consensus_resolution);
  exp.consensus_every = get_or(cons, "every", exp.consensus_every);
  if (exp.consensus_resolution < 1 || exp.consensus_every < 1)
    throw ConfigError("consensus resolution and stride must be >= 1");

  const Json abl = require_object(raw, "ablation");
  exp.ablation.removal_fractions =
      get_or(abl, "removal_fractions", std::vector<double>{0.0, 0.2, 0.4});
  exp.ablation.trials = get_or(abl, "trials", 5);
  exp.ablation.seed =
      get_or(abl, "seed", fedmix::derive_seed(exp.train.seed, {fedmix::stream::kAblation}));
  for (double f : exp.ablation.removal_fractions)
    if (f < 0.0 || f >= 1.0) throw ConfigError("ablation fractions must lie in [0, 1)");
  if (exp.ablation.trials < 1) throw ConfigError("ablation trials must be >= 1");

  const Json env = require_object(raw, "envelope");
  exp.envelope_fractions = get_or(env, "removal_fractions", std::vector<double>{0.0, 0.2, 0.4});
  exp.envelope.iters = get_or(env, "iters", exp.envelope.iters);
  exp.envelope.eta = get_or(env, "eta", exp.envelope.eta);
  exp.envelope.star_client = get_or(env, "star_client", exp.envelope.star_client);
  exp.envelope.seed =
      get_or(env, "seed", fedmix::derive_seed(exp.train.seed, {fedmix::stream::kEnvelope}));
  exp.envelope.n_virtual = exp.n_virtual;
  exp.envelope.em = exp.train.em;
  exp.envelope.classifier = exp.classifier;
  for (double f : exp.envelope_fractions)
    if (f < 0.0 || f >= 1.0) throw ConfigError("envelope fractions must lie in [0, 1)");
  if (exp.envelope.iters < 0 || exp.envelope.eta < 0.0)
    throw ConfigError("invalid envelope optimizer settings");

  Json echo;
  if (exp.synthetic) {
    echo["data"]["synthetic"] = {{"n_class", exp.spec.n_class},
                                 {"d", exp.spec.d},
                                 {"n_domains", exp.spec.n_domains},
                                 {"samples_per_domain", exp.spec.samples_per_domain},
                                 {"shift_scale", exp.spec.shift_scale},
                                 {"rotation", exp.spec.rotation},
                                 {"seed", exp.spec.seed}};
  } else {
    echo["data"]["csv"] = {{"sources", exp.source_paths},
                           {"target_train", exp.target_train_path},
                           {"target_test", exp.target_test_path},
                           {"n_class", exp.csv_n_class}};
  }
  echo["federation"] = {
      {"atoms", exp.train.atoms},
      {"components_per_class", exp.train.components_per_class},
      {"atom_components", exp.train.atom_components},
      {"rounds", exp.train.rounds},
      {"epochs", exp.train.epochs},
      {"eta", exp.train.eta},
      {"label_penalty", exp.train.label_penalty == fedmix::kAutoLabelPenalty
                            ? Json("auto")
                            : Json(exp.train.label_penalty)},
      {"strategy", fedmix::strategy_name(exp.train.strategy)},
      {"seed", exp.train.seed},
      {"em",
       {{"max_iters", exp.train.em.max_iters},
        {"tol", exp.train.em.tol},
        {"variance_floor", exp.train.em.variance_floor}}}};
  echo["evaluation"] = {{"n_virtual", exp.n_virtual},
                        {"classifier", {{"epochs", exp.classifier.epochs}, {"lr", exp.classifier.lr}}}};
  echo["consensus"] = {{"resolution", exp.consensus_resolution}, {"every", exp.consensus_every}};
  echo["ablation"] = {{"removal_fractions", exp.ablation.removal_fractions},
                      {"trials", exp.ablation.trials},
                      {"seed", exp.ablation.seed}};
  echo["envelope"] = {{"removal_fractions", exp.envelope_fractions},
                      {"iters", exp.envelope.iters},
                      {"eta", exp.envelope.eta},
                      {"star_client", exp.envelope.star_client},
                      {"seed", exp.envelope.seed}};
  exp.echo = std::move(echo);
  return exp;
}

LoadedData load_data(const Experiment& exp) {
  LoadedData out;
  if (exp.synthetic) {
    auto domains = fedmix::generate_domains(exp.spec);
    out.sources = std::move(domains.sources);
    out.target_train = std::move(domains.target_train);
    out.target_test = std::move(domains.target_test);
    return out;
  }
  try {
    for (const auto& path : exp.source_paths)
      out.sources.push_back(fedmix::read_dataset_csv(path, exp.csv_n_class));
    out.target_train = fedmix::read_dataset_csv(exp.target_train_path, exp.csv_n_class);
    out.target_train.labels.reset();  // the target is unlabeled by contract
    if (!exp.target_test_path.empty())
      out.target_test = fedmix::read_dataset_csv(exp.target_test_path, exp.csv_n_class);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  for (const auto& src : out.sources)
    if (!src.labels) throw DataError("source datasets must carry a label column");
  return out;
}

int client_count(const Experiment& exp) {
  return exp.synthetic ? exp.spec.n_domains : static_cast<int>(exp.source_paths.size()) + 1;
}

Json build_manifest(const Experiment& exp, const std::string& command, bool strict) {
  Json seeds;
  seeds["master"] = exp.train.seed;
  Json em_seeds = Json::array(), dict_seeds = Json::array();
  for (int i = 0; i < client_count(exp); ++i) {
    em_seeds.push_back(fedmix::derive_seed(
        exp.train.seed, {fedmix::stream::kEmFit, static_cast<std::uint64_t>(i)}));
    dict_seeds.push_back(fedmix::derive_seed(
        exp.train.seed, {fedmix::stream::kDictInit, static_cast<std::uint64_t>(i)}));
  }
  seeds["em_per_client"] = std::move(em_seeds);
  seeds["dictionary_per_client"] = std::move(dict_seeds);
  seeds["virtual_samples"] = fedmix::derive_seed(exp.train.seed, {fedmix::stream::kSample});
  seeds["ablation"] = exp.ablation.seed;
  seeds["envelope"] = exp.envelope.seed;
  return Json{{"command", command},
              {"version", kVersion},
              {"strict", strict},
              {"config", exp.echo},
              {"seeds", std::move(seeds)}};
}

std::string out_path(const std::string& out_dir, const std::string& name) {
  return (std::filesystem::path(out_dir) / name).string();
}

void prepare_out_dir(const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory: " + out_dir);
}

int finish(const fedmix::FederationState& state, bool strict) {
  if (strict && state.nonconverged_events > 0) return kExitNumerical;
  return kExitOk;
}

void write_dictionaries(const fedmix::FederationState& state, const std::string& out_dir) {
  for (const auto& client : state.clients)
    fedmix::write_json_file(out_path(out_dir, "dictionary_client_" + std::to_string(client.id) + ".json"),
                            fedmix::dictionary_to_json(client.dictionary));
}

int cmd_train(const Experiment& exp, const std::string& out_dir, bool strict) {
  const LoadedData data = load_data(exp);
  const auto state = fedmix::train(data.sources, data.target_train, exp.train);

  prepare_out_dir(out_dir);
  fedmix::write_json_file(out_path(out_dir, "manifest.json"), build_manifest(exp, "train", strict));
  write_dictionaries(state, out_dir);
  fedmix::write_loss_trace_csv(out_path(out_dir, "loss_trace.csv"), state);

  const auto virt = fedmix::virtual_target_dataset(
      state, exp.n_virtual, fedmix::derive_seed(exp.train.seed, {fedmix::stream::kSample}));
  fedmix::write_real_virtual_csv(out_path(out_dir, "real_virtual.csv"), data.target_train, virt);

  Json metrics;
  metrics["nonconverged_events"] = state.nonconverged_events;
  metrics["n_virtual"] = exp.n_virtual;
  if (data.target_test && exp.n_virtual > 0) {
    metrics["target_accuracy"] =
        fedmix::accuracy(fedmix::train_classifier(virt, exp.classifier), *data.target_test);
    metrics["baseline_accuracy"] = fedmix::accuracy(
        fedmix::train_classifier(fedmix::concat_datasets(data.sources), exp.classifier),
        *data.target_test);
  }
  fedmix::write_json_file(out_path(out_dir, "metrics.json"), metrics);
  return finish(state, strict);
}

int cmd_consensus(const Experiment& exp, const std::string& out_dir, bool strict) {
  const LoadedData data = load_data(exp);
  auto state = fedmix::initialize_federation(data.sources, data.target_train, exp.train);
  const auto grid = fedmix::make_weight_grid(exp.train.atoms, exp.consensus_resolution);

  fedmix::ConsensusTrace trace;
  trace.rounds.push_back(fedmix::pairwise_discrepancy(state, grid));
  const fedmix::RoundHyper hyper{exp.train.eta, exp.train.epochs, exp.train.label_penalty};
  for (int r = 1; r <= exp.train.rounds; ++r) {
    state = fedmix::run_round(state, hyper);
    if (r % exp.consensus_every == 0 || r == exp.train.rounds)
      trace.rounds.push_back(fedmix::pairwise_discrepancy(state, grid));
  }

  prepare_out_dir(out_dir);
  fedmix::write_json_file(out_path(out_dir, "manifest.json"),
                          build_manifest(exp, "consensus", strict));
  fedmix::write_consensus_csv(out_path(out_dir, "consensus_trace.csv"), trace);
  write_dictionaries(state, out_dir);
  return finish(state, strict);
}

int cmd_ablate(const Experiment& exp, const std::string& out_dir, bool strict) {
  if (!exp.synthetic) throw ConfigError("ablate requires a synthetic data section");
  const auto report =
      fedmix::run_ablation(exp.spec, exp.ablation, exp.train, exp.n_virtual, exp.classifier);

  prepare_out_dir(out_dir);
  fedmix::write_json_file(out_path(out_dir, "manifest.json"), build_manifest(exp, "ablate", strict));
  fedmix::write_ablation_csv(out_path(out_dir, "ablation.csv"), report);
  fedmix::write_json_file(out_path(out_dir, "ablation_summary.json"),
                          fedmix::ablation_summary_json(report));
  return kExitOk;
}

int cmd_envelope(const Experiment& exp, const std::string& out_dir, bool strict) {
  const LoadedData data = load_data(exp);
  if (!data.target_test) throw ConfigError("envelope requires a target test set");
  const auto state = fedmix::train(data.sources, data.target_train, exp.train);

  const int n_class = data.target_train.n_class;
  std::vector<std::set<int>> removal_sets;
  for (std::size_t fi = 0; fi < exp.envelope_fractions.size(); ++fi) {
    int n_remove = static_cast<int>(std::llround(exp.envelope_fractions[fi] * n_class));
    n_remove = std::min(n_remove, n_class - 1);
    std::set<int> removed;
    if (n_remove > 0) {
      fedmix::Rng rng(fedmix::derive_seed(exp.envelope.seed,
                                          {fedmix::stream::kTrial, static_cast<std::uint64_t>(fi)}));
      for (int c : rng.distinct_ints_excluding(n_class, n_remove, -1)) removed.insert(c);
    }
    removal_sets.push_back(std::move(removed));
  }
  auto report = fedmix::envelope_study(state, data.target_train, *data.target_test, removal_sets,
                                       exp.envelope);

  prepare_out_dir(out_dir);
  fedmix::write_json_file(out_path(out_dir, "manifest.json"),
                          build_manifest(exp, "envelope", strict));
  Json report_json = fedmix::envelope_report_to_json(report);
  report_json["fractions"] = exp.envelope_fractions;
  fedmix::write_json_file(out_path(out_dir, "envelope_report.json"), report_json);
  return finish(state, strict);
}

int cmd_sample(const std::string& dict_path, long long n, std::uint64_t seed,
               const std::string& out_dir) {
  if (n < 0) throw ConfigError("sample count must be >= 0");
  fedmix::Dictionary dict;
  try {
    dict = fedmix::dictionary_from_json(fedmix::read_json_file(dict_path));
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  const auto bary = fedmix::gmm_barycenter(dict.atoms, dict.alpha);

  prepare_out_dir(out_dir);
  const std::string path = out_path(out_dir, "virtual_samples.csv");
  if (n == 0) {
    std::string header;
    for (std::size_t j = 0; j < bary.gmm.dim(); ++j) header += (j ? ",f" : "f") + std::to_string(j);
    fedmix::detail::write_text_file(path, header + ",label\n");
    return kExitOk;
  }
  fedmix::write_dataset_csv(path, fedmix::sample(bary.gmm, static_cast<std::size_t>(n), seed));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized GMM dictionary learning for multi-source domain adaptation"};
  app.require_subcommand(1);

  struct CommonArgs {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    bool strict = false;
  };
  std::map<std::string, CommonArgs> args;
  for (const char* name : {"train", "consensus", "ablate", "envelope"}) {
    auto* sub = app.add_subcommand(name);
    auto& a = args[name];
    sub->add_option("--config", a.config, "experiment config JSON")->required();
    sub->add_option("--out", a.out, "output directory");
    sub->add_option("--seed", a.seed, "override the federation master seed");
    sub->add_flag("--strict", a.strict, "treat numerical non-convergence as fatal (exit 4)");
  }
  app.get_subcommand("train")->description("train the federation, export dictionaries and traces");
  app.get_subcommand("consensus")->description("train while tracking inter-client discrepancy");
  app.get_subcommand("ablate")->description("missing-class robustness study");
  app.get_subcommand("envelope")->description("barycentric coordinate stability study");

  auto* sample_cmd = app.add_subcommand("sample", "draw virtual samples from a saved dictionary");
  std::string dict_path;
  long long sample_n = 1000;
  std::uint64_t sample_seed = 0;
  std::string sample_out = "out";
  sample_cmd->add_option("--dictionary", dict_path, "dictionary JSON path")->required();
  sample_cmd->add_option("--n", sample_n, "number of samples");
  sample_cmd->add_option("--seed", sample_seed, "sampling seed");
  sample_cmd->add_option("--out", sample_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (sample_cmd->parsed()) return cmd_sample(dict_path, sample_n, sample_seed, sample_out);
    const std::string name = app.get_subcommands().front()->get_name();
    const CommonArgs& a = args.at(name);
    Json raw;
    try {
      raw = fedmix::read_json_file(a.config);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    const Experiment exp = resolve_config(raw, a.seed);
    if (name == "train") return cmd_train(exp, a.out, a.strict);
    if (name == "consensus") return cmd_consensus(exp, a.out, a.strict);
    if (name == "ablate") return cmd_ablate(exp, a.out, a.strict);
    return cmd_envelope(exp, a.out, a.strict);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const Json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
}
