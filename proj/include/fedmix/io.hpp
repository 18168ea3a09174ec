#pragma once

// CSV and JSON serialization for datasets, mixtures, dictionaries, and
// experiment artifacts. CSV floats carry 17 significant digits so values
// round-trip exactly; JSON uses the library's shortest exact encoding.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedmix/analysis.hpp"
#include "fedmix/dictionary.hpp"
#include "fedmix/eval.hpp"
#include "fedmix/federation.hpp"
#include "fedmix/gmm.hpp"

namespace fedmix {

using Json = nlohmann::json;

inline std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Datasets

inline void write_dataset_csv(const std::string& path, const LabeledDataset& data) {
  std::ostringstream out;
  const std::size_t d = data.features.cols();
  for (std::size_t j = 0; j < d; ++j) out << (j ? "," : "") << "f" << j;
  if (data.labels) out << (d ? "," : "") << "label";
  out << "\n";
  for (std::size_t i = 0; i < data.features.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) out << (j ? "," : "") << fmt17(data.features(i, j));
    if (data.labels) out << (d ? "," : "") << (*data.labels)[i];
    out << "\n";
  }
  detail::write_text_file(path, out.str());
}

/// Reads a dataset CSV (header row f0..f{d-1}[,label]). When n_class is
/// not positive it is inferred as max(label) + 1.
inline LabeledDataset read_dataset_csv(const std::string& path, int n_class = 0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  require(!header.empty(), "dataset header missing: " + path);
  const bool has_label = header.back() == "label";
  const std::size_t d = header.size() - (has_label ? 1 : 0);
  require(d >= 1, "dataset has no feature columns: " + path);
  for (std::size_t j = 0; j < d; ++j)
    require(header[j] == "f" + std::to_string(j), "unexpected dataset column: " + header[j]);

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    require(fields.size() == header.size(), "dataset row arity mismatch: " + path);
    for (std::size_t j = 0; j < d; ++j) values.push_back(std::stod(fields[j]));
    if (has_label) labels.push_back(std::stoi(fields[d]));
    ++rows;
  }
  LabeledDataset data;
  data.features = Matrix(rows, d);
  data.features.data() = std::move(values);
  if (has_label) {
    data.labels = std::move(labels);
    int max_label = -1;
    for (int l : *data.labels) max_label = std::max(max_label, l);
    data.n_class = n_class > 0 ? n_class : max_label + 1;
  } else {
    require(n_class >= 1, "unlabeled dataset needs an explicit class count: " + path);
    data.n_class = n_class;
  }
  data.validate();
  return data;
}

// ---------------------------------------------------------------------------
// Mixtures and dictionaries

inline Json gmm_to_json(const LabeledGMM& gmm) {
  Json j;
  j["weights"] = gmm.weights;
  Json means = Json::array(), vars = Json::array(), labels = Json::array();
  for (std::size_t c = 0; c < gmm.n_components(); ++c) {
    means.push_back(gmm.components[c].mean);
    vars.push_back(gmm.components[c].var);
    labels.push_back(gmm.labels[c]);
  }
  j["means"] = std::move(means);
  j["vars"] = std::move(vars);
  j["labels"] = std::move(labels);
  return j;
}

inline LabeledGMM gmm_from_json(const Json& j) {
  LabeledGMM gmm;
  gmm.weights = j.at("weights").get<Vec>();
  const auto& means = j.at("means");
  const auto& vars = j.at("vars");
  const auto& labels = j.at("labels");
  require(means.size() == gmm.weights.size() && vars.size() == gmm.weights.size() &&
              labels.size() == gmm.weights.size(),
          "gmm json: field lengths disagree");
  for (std::size_t c = 0; c < gmm.weights.size(); ++c) {
    gmm.components.push_back(DiagGaussian{means[c].get<Vec>(), vars[c].get<Vec>()});
    gmm.labels.push_back(labels[c].get<Vec>());
  }
  gmm.validate();
  return gmm;
}

inline Json dictionary_to_json(const Dictionary& dict) {
  Json atoms = Json::array();
  for (const auto& a : dict.atoms) atoms.push_back(gmm_to_json(a));
  return Json{{"atoms", std::move(atoms)}, {"alpha", dict.alpha}};
}

inline Dictionary dictionary_from_json(const Json& j) {
  Dictionary dict;
  for (const auto& a : j.at("atoms")) dict.atoms.push_back(gmm_from_json(a));
  dict.alpha = j.at("alpha").get<Vec>();
  dict.validate();
  return dict;
}

/// Federation wire format: atoms only, coordinates structurally absent.
inline Json exchange_payload_json(int round, int sender, const std::vector<LabeledGMM>& atoms) {
  Json arr = Json::array();
  for (const auto& a : atoms) arr.push_back(gmm_to_json(a));
  return Json{{"round", round}, {"sender", sender}, {"atoms", std::move(arr)}};
}

// ---------------------------------------------------------------------------
// Experiment artifacts

/// One row per client per completed round: round, client_id, loss, strategy.
inline void write_loss_trace_csv(const std::string& path, const FederationState& state) {
  std::ostringstream out;
  out << "round,client_id,loss,strategy\n";
  const char* strat = strategy_name(state.strategy);
  for (int r = 1; r <= state.round; ++r) {
    for (const auto& c : state.clients) {
      require(static_cast<std::size_t>(r) < c.loss_history.size(),
              "loss trace: missing round entry");
      out << r << "," << c.id << "," << fmt17(c.loss_history[static_cast<std::size_t>(r)]) << ","
          << strat << "\n";
    }
  }
  detail::write_text_file(path, out.str());
}

inline void write_consensus_csv(const std::string& path, const ConsensusTrace& trace) {
  std::ostringstream out;
  out << "round,i,j,M_ij\n";
  for (const auto& round : trace.rounds)
    for (const auto& p : round.pairs)
      out << round.round << "," << p.i << "," << p.j << "," << fmt17(p.m_ij) << "\n";
  detail::write_text_file(path, out.str());
}

inline std::string join_class_list(const std::vector<int>& classes) {
  std::string s;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (i) s += ';';
    s += std::to_string(classes[i]);
  }
  return s;
}

inline void write_ablation_csv(const std::string& path, const AblationReport& report) {
  std::ostringstream out;
  out << "fraction,trial,removed_classes,accuracy\n";
  for (const auto& row : report.rows)
    out << fmt17(row.fraction) << "," << row.trial << "," << join_class_list(row.removed_classes)
        << "," << fmt17(row.accuracy) << "\n";
  detail::write_text_file(path, out.str());
}

inline Json ablation_summary_json(const AblationReport& report) {
  Json arr = Json::array();
  for (const auto& s : report.summary)
    arr.push_back(Json{{"fraction", s.fraction},
                       {"mean_accuracy", s.mean_accuracy},
                       {"stddev_accuracy", s.stddev_accuracy}});
  return arr;
}

inline Json envelope_report_to_json(const EnvelopeReport& report) {
  Json rows = Json::array();
  for (const auto& r : report.rows)
    rows.push_back(Json{{"removed_classes", r.removed_classes},
                        {"alpha", r.alpha},
                        {"mw2_loss", r.mw2_loss},
                        {"accuracy", r.accuracy}});
  return Json{{"star_client", report.star_client}, {"rows", std::move(rows)}};
}

/// Real target rows and virtual-barycenter rows in one table, tagged by a
/// `source` column, for external projection tools.
inline void write_real_virtual_csv(const std::string& path, const LabeledDataset& real,
                                   const LabeledDataset& virt) {
  require(real.features.cols() == virt.features.cols(), "real/virtual dimension mismatch");
  std::ostringstream out;
  const std::size_t d = real.features.cols();
  for (std::size_t j = 0; j < d; ++j) out << "f" << j << ",";
  out << "label,source\n";
  const auto emit = [&](const LabeledDataset& data, const char* tag) {
    for (std::size_t i = 0; i < data.features.rows(); ++i) {
      for (std::size_t j = 0; j < d; ++j) out << fmt17(data.features(i, j)) << ",";
      out << (data.labels ? (*data.labels)[i] : -1) << "," << tag << "\n";
    }
  };
  emit(real, "real");
  emit(virt, "virtual");
  detail::write_text_file(path, out.str());
}

inline void write_json_file(const std::string& path, const Json& j) {
  detail::write_text_file(path, j.dump(2) + "\n");
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open json: " + path);
  Json j;
  in >> j;
  return j;
}

}  // namespace fedmix
