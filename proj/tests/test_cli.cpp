#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <string>

#include "fedmix/io.hpp"
#include "support.hpp"

using namespace fedmix;
using support::fresh_dir;
using support::run_cli;
using support::slurp;
using support::spit;

namespace {

namespace fs = std::filesystem;

std::size_t line_count(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// Small but complete experiment: 3 domains (2 sources + target), 2 rounds.
Json base_config() {
  Json cfg;
  cfg["data"]["synthetic"] = {{"n_class", 3},      {"d", 2},
                              {"n_domains", 3},    {"samples_per_domain", 45},
                              {"shift_scale", 1.0}, {"seed", 5}};
  cfg["federation"] = {{"atoms", 2}, {"components_per_class", 1}, {"rounds", 2},
                       {"epochs", 1}, {"seed", 33}};
  cfg["evaluation"] = {{"n_virtual", 120},
                       {"classifier", {{"epochs", 100}, {"lr", 0.1}}}};
  cfg["consensus"] = {{"resolution", 2}, {"every", 1}};
  cfg["ablation"] = {{"removal_fractions", Vec{0.0}}, {"trials", 1}};
  cfg["envelope"] = {{"removal_fractions", Vec{0.0}}, {"iters", 40}};
  return cfg;
}

std::string write_config(const fs::path& dir, const Json& cfg) {
  const auto path = (dir / "config.json").string();
  write_json_file(path, cfg);
  return path;
}

std::string q(const std::string& s) { return "\"" + s + "\""; }

}  // namespace

TEST_CASE("help exits cleanly") {
  const auto r = run_cli("--help");
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.output.find("train") != std::string::npos);
  REQUIRE(r.output.find("sample") != std::string::npos);
}

TEST_CASE("train emits the full artifact set") {
  const auto dir = fresh_dir("cli_train");
  const auto cfg = write_config(dir, base_config());
  const auto out = (dir / "out").string();
  const auto r = run_cli("train --config " + q(cfg) + " --out " + q(out));
  INFO(r.output);
  REQUIRE(r.exit_code == 0);

  for (const char* name : {"manifest.json", "dictionary_client_0.json",
                           "dictionary_client_1.json", "dictionary_client_2.json",
                           "loss_trace.csv", "real_virtual.csv", "metrics.json"})
    REQUIRE(fs::exists(fs::path(out) / name));

  const auto trace = slurp(fs::path(out) / "loss_trace.csv");
  REQUIRE(trace.rfind("round,client_id,loss,strategy\n", 0) == 0);
  REQUIRE(line_count(trace) == 1 + 2 * 3);  // header + rounds x clients

  const Json manifest = read_json_file((fs::path(out) / "manifest.json").string());
  REQUIRE(manifest.at("command") == "train");
  REQUIRE(manifest.at("seeds").at("master") == 33);
  REQUIRE(manifest.at("seeds").at("em_per_client").size() == 3);
  REQUIRE(manifest.at("config").at("federation").at("label_penalty") == "auto");
  REQUIRE(manifest.at("config").at("federation").at("strategy") == "aggregation");

  const Json metrics = read_json_file((fs::path(out) / "metrics.json").string());
  REQUIRE(metrics.contains("target_accuracy"));
  REQUIRE(metrics.contains("baseline_accuracy"));
  REQUIRE(metrics.at("n_virtual") == 120);

  // Dictionaries must parse back and carry the configured shape.
  const auto dict = dictionary_from_json(
      read_json_file((fs::path(out) / "dictionary_client_2.json").string()));
  REQUIRE(dict.atoms.size() == 2);
  REQUIRE(dict.atoms[0].n_components() == 3);  // n_class x components_per_class
}

TEST_CASE("repeated runs are byte-identical") {
  const auto dir = fresh_dir("cli_repro");
  const auto cfg = write_config(dir, base_config());
  const auto out_a = (dir / "a").string();
  const auto out_b = (dir / "b").string();
  REQUIRE(run_cli("train --config " + q(cfg) + " --out " + q(out_a)).exit_code == 0);
  REQUIRE(run_cli("train --config " + q(cfg) + " --out " + q(out_b)).exit_code == 0);
  for (const char* name : {"dictionary_client_0.json", "dictionary_client_2.json",
                           "loss_trace.csv", "real_virtual.csv", "metrics.json"})
    REQUIRE(slurp(fs::path(out_a) / name) == slurp(fs::path(out_b) / name));
}

TEST_CASE("the seed flag overrides the config seed") {
  const auto dir = fresh_dir("cli_seed");
  const auto cfg = write_config(dir, base_config());
  const auto out_a = (dir / "a").string();
  const auto out_b = (dir / "b").string();
  REQUIRE(run_cli("train --config " + q(cfg) + " --out " + q(out_a)).exit_code == 0);
  REQUIRE(run_cli("train --config " + q(cfg) + " --seed 77 --out " + q(out_b)).exit_code == 0);

  const Json manifest = read_json_file((fs::path(out_b) / "manifest.json").string());
  REQUIRE(manifest.at("seeds").at("master") == 77);
  REQUIRE(manifest.at("config").at("federation").at("seed") == 77);
  REQUIRE(slurp(fs::path(out_a) / "dictionary_client_0.json") !=
          slurp(fs::path(out_b) / "dictionary_client_0.json"));
}

TEST_CASE("config problems exit with code 2") {
  const auto dir = fresh_dir("cli_badcfg");

  REQUIRE(run_cli("train --config " + q((dir / "absent.json").string())).exit_code == 2);
  REQUIRE(run_cli("train").exit_code == 2);           // --config is required
  REQUIRE(run_cli("shuffle").exit_code == 2);         // unknown subcommand
  REQUIRE(run_cli("").exit_code == 2);                // a subcommand is required

  const auto mangled = (dir / "mangled.json").string();
  spit(mangled, "{ \"data\": ");
  REQUIRE(run_cli("train --config " + q(mangled)).exit_code == 2);

  auto bad_strategy = base_config();
  bad_strategy["federation"]["strategy"] = "broadcast";
  REQUIRE(run_cli("train --config " + q(write_config(dir, bad_strategy))).exit_code == 2);

  auto no_data = base_config();
  no_data.erase("data");
  const auto r = run_cli("train --config " + q(write_config(dir, no_data)));
  REQUIRE(r.exit_code == 2);
  REQUIRE(r.output.find("config error") != std::string::npos);

  auto both = base_config();
  both["data"]["csv"] = {{"sources", std::vector<std::string>{"a", "b"}},
                         {"target_train", "t"}, {"n_class", 3}};
  REQUIRE(run_cli("train --config " + q(write_config(dir, both))).exit_code == 2);
}

TEST_CASE("csv data flows through training") {
  const auto dir = fresh_dir("cli_csv");
  SyntheticSpec spec;
  spec.n_class = 3;
  spec.n_domains = 3;
  spec.samples_per_domain = 45;
  spec.seed = 5;
  const auto domains = generate_domains(spec);
  const auto s0 = (dir / "s0.csv").string();
  const auto s1 = (dir / "s1.csv").string();
  const auto tt = (dir / "target_train.csv").string();
  const auto te = (dir / "target_test.csv").string();
  write_dataset_csv(s0, domains.sources[0]);
  write_dataset_csv(s1, domains.sources[1]);
  write_dataset_csv(tt, domains.target_train);
  write_dataset_csv(te, domains.target_test);

  Json cfg = base_config();
  cfg["data"].erase("synthetic");
  cfg["data"]["csv"] = {{"sources", std::vector<std::string>{s0, s1}},
                        {"target_train", tt},
                        {"target_test", te},
                        {"n_class", 3}};
  const auto out = (dir / "out").string();
  const auto r = run_cli("train --config " + q(write_config(dir, cfg)) + " --out " + q(out));
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  REQUIRE(fs::exists(fs::path(out) / "metrics.json"));

  // Virtual rows keep their labels; real target rows are unlabeled (-1).
  const auto rv = slurp(fs::path(out) / "real_virtual.csv");
  REQUIRE(rv.find(",-1,real\n") != std::string::npos);
  REQUIRE(rv.find(",virtual\n") != std::string::npos);
}

TEST_CASE("unreadable data exits with code 3 and names the file") {
  const auto dir = fresh_dir("cli_baddata");
  Json cfg = base_config();
  cfg["data"].erase("synthetic");
  const auto ghost = (dir / "ghost.csv").string();
  cfg["data"]["csv"] = {{"sources", std::vector<std::string>{ghost, ghost}},
                        {"target_train", ghost},
                        {"n_class", 3}};
  const auto r = run_cli("train --config " + q(write_config(dir, cfg)));
  REQUIRE(r.exit_code == 3);
  REQUIRE(r.output.find("data error") != std::string::npos);
  REQUIRE(r.output.find("ghost.csv") != std::string::npos);
}

TEST_CASE("consensus traces the discrepancy schedule") {
  const auto dir = fresh_dir("cli_consensus");
  const auto cfg = write_config(dir, base_config());
  const auto out = (dir / "out").string();
  const auto r = run_cli("consensus --config " + q(cfg) + " --out " + q(out));
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  const auto trace = slurp(fs::path(out) / "consensus_trace.csv");
  REQUIRE(trace.rfind("round,i,j,M_ij\n", 0) == 0);
  // Rounds 0, 1, 2 with stride 1; three client pairs each.
  REQUIRE(line_count(trace) == 1 + 3 * 3);
  REQUIRE(fs::exists(fs::path(out) / "dictionary_client_1.json"));
}

TEST_CASE("ablate writes per-cell rows and a summary") {
  const auto dir = fresh_dir("cli_ablate");
  const auto cfg = write_config(dir, base_config());
  const auto out = (dir / "out").string();
  const auto r = run_cli("ablate --config " + q(cfg) + " --out " + q(out));
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  const auto csv = slurp(fs::path(out) / "ablation.csv");
  REQUIRE(csv.rfind("fraction,trial,removed_classes,accuracy\n", 0) == 0);
  REQUIRE(line_count(csv) == 2);  // one fraction x one trial
  const Json summary = read_json_file((fs::path(out) / "ablation_summary.json").string());
  REQUIRE(summary.size() == 1);
  REQUIRE(summary[0].at("fraction") == 0.0);
}

TEST_CASE("ablate refuses csv data") {
  const auto dir = fresh_dir("cli_ablate_csv");
  Json cfg = base_config();
  cfg["data"].erase("synthetic");
  cfg["data"]["csv"] = {{"sources", std::vector<std::string>{"x.csv", "y.csv"}},
                        {"target_train", "t.csv"},
                        {"n_class", 3}};
  REQUIRE(run_cli("ablate --config " + q(write_config(dir, cfg))).exit_code == 2);
}

TEST_CASE("envelope reports one row per fraction") {
  const auto dir = fresh_dir("cli_envelope");
  const auto cfg = write_config(dir, base_config());
  const auto out = (dir / "out").string();
  const auto r = run_cli("envelope --config " + q(cfg) + " --out " + q(out));
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  const Json report = read_json_file((fs::path(out) / "envelope_report.json").string());
  REQUIRE(report.at("fractions") == Json::array({0.0}));
  REQUIRE(report.at("rows").size() == 1);
  REQUIRE(report.at("rows")[0].at("removed_classes").empty());
  REQUIRE(report.at("rows")[0].at("alpha").size() == 2);
}

TEST_CASE("sample reproduces draws from a saved dictionary") {
  const auto dir = fresh_dir("cli_sample");
  const auto cfg = write_config(dir, base_config());
  const auto out = (dir / "out").string();
  REQUIRE(run_cli("train --config " + q(cfg) + " --out " + q(out)).exit_code == 0);
  const auto dict = (fs::path(out) / "dictionary_client_2.json").string();

  const auto s_a = (dir / "sa").string();
  const auto s_b = (dir / "sb").string();
  REQUIRE(run_cli("sample --dictionary " + q(dict) + " --n 50 --seed 9 --out " + q(s_a))
              .exit_code == 0);
  REQUIRE(run_cli("sample --dictionary " + q(dict) + " --n 50 --seed 9 --out " + q(s_b))
              .exit_code == 0);
  const auto csv = slurp(fs::path(s_a) / "virtual_samples.csv");
  REQUIRE(csv.rfind("f0,f1,label\n", 0) == 0);
  REQUIRE(line_count(csv) == 51);
  REQUIRE(csv == slurp(fs::path(s_b) / "virtual_samples.csv"));

  const auto s_zero = (dir / "s0").string();
  REQUIRE(run_cli("sample --dictionary " + q(dict) + " --n 0 --out " + q(s_zero)).exit_code == 0);
  REQUIRE(slurp(fs::path(s_zero) / "virtual_samples.csv") == "f0,f1,label\n");

  REQUIRE(run_cli("sample --dictionary " + q((dir / "no.json").string())).exit_code == 3);
}

TEST_CASE("strict mode turns unconverged fits into exit 4") {
  const auto dir = fresh_dir("cli_strict");
  Json cfg = base_config();
  cfg["federation"]["em"] = {{"max_iters", 1}, {"tol", 1e-12}};
  const auto path = write_config(dir, cfg);
  const auto out = (dir / "out").string();
  const auto strict = run_cli("train --config " + q(path) + " --strict --out " + q(out));
  REQUIRE(strict.exit_code == 4);
  // Artifacts are still produced; strictness only changes the exit code.
  REQUIRE(fs::exists(fs::path(out) / "metrics.json"));
  const Json metrics = read_json_file((fs::path(out) / "metrics.json").string());
  REQUIRE(metrics.at("nonconverged_events") > 0);

  const auto lax = run_cli("train --config " + q(path) + " --out " + q((dir / "lax").string()));
  REQUIRE(lax.exit_code == 0);
}

TEST_CASE("zero virtual samples skips the accuracy metrics") {
  const auto dir = fresh_dir("cli_novirt");
  Json cfg = base_config();
  cfg["evaluation"]["n_virtual"] = 0;
  const auto out = (dir / "out").string();
  const auto r = run_cli("train --config " + q(write_config(dir, cfg)) + " --out " + q(out));
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  const Json metrics = read_json_file((fs::path(out) / "metrics.json").string());
  REQUIRE_FALSE(metrics.contains("target_accuracy"));
  REQUIRE(metrics.at("n_virtual") == 0);
}
