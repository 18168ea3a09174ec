#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "fedmix/io.hpp"
#include "support.hpp"

using namespace fedmix;
using support::fresh_dir;
using support::random_gmm;
using support::slurp;
using support::spit;

namespace {

LabeledDataset tiny_dataset() {
  LabeledDataset d;
  d.features = Matrix(3, 2);
  d.features(0, 0) = 1.5;
  d.features(0, 1) = -2.25;
  d.features(1, 0) = 0.0;
  d.features(1, 1) = 4.0;
  d.features(2, 0) = 1.0 / 3.0;
  d.features(2, 1) = 0.1;
  d.labels = std::vector<int>{0, 1, 1};
  d.n_class = 2;
  return d;
}

}  // namespace

TEST_CASE("labeled dataset csv round-trips exactly") {
  const auto dir = fresh_dir("io_labeled");
  const auto path = (dir / "data.csv").string();
  const auto data = tiny_dataset();
  write_dataset_csv(path, data);

  REQUIRE(slurp(path).rfind("f0,f1,label\n", 0) == 0);

  const auto back = read_dataset_csv(path);
  REQUIRE(back.features == data.features);
  REQUIRE(*back.labels == *data.labels);
  REQUIRE(back.n_class == 2);  // inferred from max label

  const auto wide = read_dataset_csv(path, 6);
  REQUIRE(wide.n_class == 6);
}

TEST_CASE("unlabeled dataset csv needs an explicit class count") {
  const auto dir = fresh_dir("io_unlabeled");
  const auto path = (dir / "data.csv").string();
  auto data = tiny_dataset();
  data.labels.reset();
  write_dataset_csv(path, data);

  REQUIRE(slurp(path).rfind("f0,f1\n", 0) == 0);
  const auto back = read_dataset_csv(path, 4);
  REQUIRE_FALSE(back.has_labels());
  REQUIRE(back.n_class == 4);
  REQUIRE(back.features == data.features);
  REQUIRE_THROWS(read_dataset_csv(path));
}

TEST_CASE("csv floats survive a write-read cycle bit for bit") {
  const auto dir = fresh_dir("io_floats");
  const auto path = (dir / "data.csv").string();
  const Vec values = {1.0 / 3.0, 0.1 + 0.2, -7.123456789012345e+10,
                      2.2250738585072014e-308, 1e-300, 123456789.98765433};
  LabeledDataset data;
  data.features = Matrix(values.size(), 1);
  for (std::size_t i = 0; i < values.size(); ++i) data.features(i, 0) = values[i];
  data.n_class = 1;
  write_dataset_csv(path, data);
  const auto back = read_dataset_csv(path, 1);
  for (std::size_t i = 0; i < values.size(); ++i) REQUIRE(back.features(i, 0) == values[i]);
}

TEST_CASE("dataset csv rejects malformed input") {
  const auto dir = fresh_dir("io_bad");
  REQUIRE_THROWS(read_dataset_csv((dir / "missing.csv").string()));

  const auto empty = (dir / "empty.csv").string();
  spit(empty, "");
  REQUIRE_THROWS(read_dataset_csv(empty));

  const auto badcol = (dir / "badcol.csv").string();
  spit(badcol, "x0,label\n1.0,0\n");
  REQUIRE_THROWS(read_dataset_csv(badcol));

  const auto ragged = (dir / "ragged.csv").string();
  spit(ragged, "f0,f1,label\n1.0,2.0,0\n1.0,1\n");
  REQUIRE_THROWS(read_dataset_csv(ragged));
}

TEST_CASE("dataset csv tolerates CRLF line endings") {
  const auto dir = fresh_dir("io_crlf");
  const auto path = (dir / "data.csv").string();
  spit(path, "f0,label\r\n2.5,0\r\n-1.5,1\r\n");
  const auto data = read_dataset_csv(path);
  REQUIRE(data.size() == 2);
  REQUIRE(data.features(0, 0) == 2.5);
  REQUIRE(*data.labels == std::vector<int>{0, 1});
}

TEST_CASE("gmm json round-trips through text") {
  Rng rng(313);
  const auto gmm = random_gmm(rng, 3, 2, 4, false);
  const Json j = Json::parse(gmm_to_json(gmm).dump());
  const auto back = gmm_from_json(j);
  REQUIRE(back.weights == gmm.weights);
  for (std::size_t c = 0; c < 3; ++c) {
    REQUIRE(back.components[c].mean == gmm.components[c].mean);
    REQUIRE(back.components[c].var == gmm.components[c].var);
    REQUIRE(back.labels[c] == gmm.labels[c]);
  }
}

TEST_CASE("gmm json validates field agreement") {
  Rng rng(317);
  Json j = gmm_to_json(random_gmm(rng, 2, 2, 2, true));
  j["means"].erase(1);
  REQUIRE_THROWS(gmm_from_json(j));
  Json missing = gmm_to_json(random_gmm(rng, 2, 2, 2, true));
  missing.erase("weights");
  REQUIRE_THROWS(gmm_from_json(missing));
}

TEST_CASE("dictionary json round-trips through text") {
  Dictionary dict = init_dictionary(2, 3, 2, 3, 88);
  dict.alpha = {0.25, 0.75};
  const Json j = Json::parse(dictionary_to_json(dict).dump());
  const auto back = dictionary_from_json(j);
  REQUIRE(back.alpha == dict.alpha);
  REQUIRE(back.atoms.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    REQUIRE(back.atoms[k].components[1].mean == dict.atoms[k].components[1].mean);
    REQUIRE(back.atoms[k].labels == dict.atoms[k].labels);
  }

  Json bad = dictionary_to_json(dict);
  bad["alpha"] = Vec{0.5, 0.9};  // off the simplex
  REQUIRE_THROWS(dictionary_from_json(bad));
}

TEST_CASE("exchange payload carries atoms but never coordinates") {
  const Dictionary dict = init_dictionary(2, 2, 2, 2, 5);
  const Json payload = exchange_payload_json(7, 1, dict.atoms);
  REQUIRE(payload.at("round") == 7);
  REQUIRE(payload.at("sender") == 1);
  REQUIRE(payload.at("atoms").size() == 2);
  const auto atom0 = gmm_from_json(payload.at("atoms")[0]);
  REQUIRE(atom0.components[0].mean == dict.atoms[0].components[0].mean);
  REQUIRE(payload.dump().find("alpha") == std::string::npos);
}

TEST_CASE("loss trace csv has one row per client per completed round") {
  FederationState st;
  st.round = 2;
  st.strategy = Strategy::Replacement;
  for (int id = 0; id < 2; ++id) {
    ClientState c;
    c.id = id;
    c.loss_history = {8.0, 4.5, 2.25 + id};
    st.clients.push_back(std::move(c));
  }
  const auto dir = fresh_dir("io_trace");
  const auto path = (dir / "loss_trace.csv").string();
  write_loss_trace_csv(path, st);
  REQUIRE(slurp(path) ==
          "round,client_id,loss,strategy\n"
          "1,0,4.5,replacement\n"
          "1,1,4.5,replacement\n"
          "2,0,2.25,replacement\n"
          "2,1,3.25,replacement\n");

  st.clients[0].loss_history.pop_back();
  REQUIRE_THROWS(write_loss_trace_csv(path, st));
}

TEST_CASE("consensus csv format") {
  ConsensusTrace trace;
  ConsensusRound round;
  round.round = 3;
  round.pairs = {{0, 2, 0.5}, {1, 2, 1.25}};
  trace.rounds.push_back(round);
  const auto dir = fresh_dir("io_consensus");
  const auto path = (dir / "consensus.csv").string();
  write_consensus_csv(path, trace);
  REQUIRE(slurp(path) ==
          "round,i,j,M_ij\n"
          "3,0,2,0.5\n"
          "3,1,2,1.25\n");
}

TEST_CASE("class lists join with semicolons") {
  REQUIRE(join_class_list({}) == "");
  REQUIRE(join_class_list({3}) == "3");
  REQUIRE(join_class_list({1, 2, 4}) == "1;2;4");
}

TEST_CASE("ablation csv and summary json formats") {
  AblationReport report;
  AblationRow row;
  row.fraction = 0.25;
  row.trial = 1;
  row.removed_classes = {0, 2};
  row.accuracy = 0.875;
  report.rows.push_back(row);
  report.summary.push_back({0.25, 0.875, 0.0});

  const auto dir = fresh_dir("io_ablation");
  const auto path = (dir / "ablation.csv").string();
  write_ablation_csv(path, report);
  REQUIRE(slurp(path) ==
          "fraction,trial,removed_classes,accuracy\n"
          "0.25,1,0;2,0.875\n");

  const Json summary = ablation_summary_json(report);
  REQUIRE(summary.size() == 1);
  REQUIRE(summary[0].at("fraction") == 0.25);
  REQUIRE(summary[0].at("mean_accuracy") == 0.875);
  REQUIRE(summary[0].at("stddev_accuracy") == 0.0);
}

TEST_CASE("envelope report json shape") {
  EnvelopeReport report;
  report.star_client = 2;
  EnvelopeRow row;
  row.removed_classes = {1, 3};
  row.alpha = {0.5, 0.5};
  row.mw2_loss = 1.5;
  row.accuracy = 0.75;
  report.rows.push_back(row);
  const Json j = envelope_report_to_json(report);
  REQUIRE(j.at("star_client") == 2);
  REQUIRE(j.at("rows").size() == 1);
  REQUIRE(j.at("rows")[0].at("removed_classes") == Json::array({1, 3}));
  REQUIRE(j.at("rows")[0].at("alpha") == Json::array({0.5, 0.5}));
  REQUIRE(j.at("rows")[0].at("mw2_loss") == 1.5);
  REQUIRE(j.at("rows")[0].at("accuracy") == 0.75);
}

TEST_CASE("real and virtual samples share one tagged table") {
  LabeledDataset real;
  real.features = Matrix(2, 2);
  real.features(0, 0) = 1.0;
  real.features(0, 1) = 2.0;
  real.features(1, 0) = 3.0;
  real.features(1, 1) = 4.0;
  real.labels = std::vector<int>{0, 1};
  real.n_class = 2;

  LabeledDataset virt;
  virt.features = Matrix(1, 2);
  virt.features(0, 0) = -1.0;
  virt.features(0, 1) = -2.0;
  virt.n_class = 2;  // unlabeled rows are tagged -1

  const auto dir = fresh_dir("io_rv");
  const auto path = (dir / "real_virtual.csv").string();
  write_real_virtual_csv(path, real, virt);
  REQUIRE(slurp(path) ==
          "f0,f1,label,source\n"
          "1,2,0,real\n"
          "3,4,1,real\n"
          "-1,-2,-1,virtual\n");

  LabeledDataset narrow;
  narrow.features = Matrix(1, 1);
  narrow.n_class = 2;
  REQUIRE_THROWS(write_real_virtual_csv(path, real, narrow));
}

TEST_CASE("json files round-trip and report open failures") {
  const auto dir = fresh_dir("io_json");
  const auto path = (dir / "blob.json").string();
  const Json j{{"name", "trial"}, {"values", {1.0, 0.5}}, {"n", 3}};
  write_json_file(path, j);
  REQUIRE(read_json_file(path) == j);
  REQUIRE(slurp(path).back() == '\n');
  REQUIRE_THROWS(read_json_file((dir / "absent.json").string()));
}
