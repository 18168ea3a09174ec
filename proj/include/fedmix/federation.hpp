#pragma once

// Serverless round-synchronous gossip: every round each client exchanges
// atoms with randomly selected peers and then takes E local projected
// gradient steps on its own domain. All exchanges read round-start
// snapshots, so within a round the clients' updates commute and the whole
// simulation is deterministic given (config, seed). Barycentric
// coordinates are never part of any exchange; the exchange functions
// accept atom lists only.

#include <optional>
#include <unordered_map>

#include "fedmix/dictionary.hpp"
#include "fedmix/em.hpp"
#include "fedmix/gmm.hpp"
#include "fedmix/rng.hpp"

namespace fedmix {

enum class Strategy { Replacement, Aggregation };

inline const char* strategy_name(Strategy s) {
  return s == Strategy::Replacement ? "replacement" : "aggregation";
}

inline std::optional<Strategy> parse_strategy(const std::string& name) {
  if (name == "replacement") return Strategy::Replacement;
  if (name == "aggregation") return Strategy::Aggregation;
  return std::nullopt;
}

struct ClientState {
  int id = 0;
  Dictionary dictionary;
  LabeledGMM domain;
  bool is_labeled = true;
  Vec loss_history;  // entry 0 at initialization, then one per round
};

struct ExchangeRecord {
  int round = 0;
  int sender = 0;
  int receiver = 0;
  bool operator==(const ExchangeRecord&) const = default;
};

struct FederationState {
  std::vector<ClientState> clients;
  int round = 0;
  Strategy strategy = Strategy::Aggregation;
  std::uint64_t rng_seed = 0;
  std::vector<ExchangeRecord> exchange_log;
  int nonconverged_events = 0;  // EM or barycenter iterations hitting max_iters

  const ClientState& client_by_id(int id) const {
    for (const auto& c : clients)
      if (c.id == id) return c;
    throw std::invalid_argument("FederationState: unknown client id");
  }
};

/// Uniformly random distinct peer ids, excluding the caller. Deterministic
/// given (rng_seed, round, client_id).
inline std::vector<int> select_peers(const FederationState& state, int client_id, int count) {
  require(count == 1 || count == 2, "select_peers: count must be 1 or 2");
  require(static_cast<int>(state.clients.size()) >= count + 1, "select_peers: too few clients");
  std::vector<int> pool;
  pool.reserve(state.clients.size() - 1);
  for (const auto& c : state.clients)
    if (c.id != client_id) pool.push_back(c.id);
  require(pool.size() == state.clients.size() - 1, "select_peers: unknown client id");
  Rng rng(derive_seed(state.rng_seed, {stream::kPeerSelect, static_cast<std::uint64_t>(state.round),
                                       static_cast<std::uint64_t>(client_id)}));
  for (int i = 0; i < count; ++i) {
    const std::size_t j =
        static_cast<std::size_t>(i) + rng.uniform_int(pool.size() - static_cast<std::size_t>(i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  return {pool.begin(), pool.begin() + count};
}

namespace detail {

inline void require_congruent_atoms(const std::vector<LabeledGMM>& a,
                                    const std::vector<LabeledGMM>& b) {
  require(a.size() == b.size(), "exchange: atom count mismatch");
  for (std::size_t k = 0; k < a.size(); ++k)
    require(congruent(a[k], b[k]), "exchange: atoms not congruent");
}

}  // namespace detail

/// Replacement gossip: the receiver adopts the sender's atoms wholesale.
/// Its barycentric coordinates are untouched (they are never shared).
inline Dictionary exchange_replacement(const Dictionary& receiver,
                                       const std::vector<LabeledGMM>& sender_atoms) {
  detail::require_congruent_atoms(receiver.atoms, sender_atoms);
  Dictionary out = receiver;
  out.atoms = sender_atoms;
  return out;
}

/// Aggregation gossip: each atom becomes the uniform Wasserstein mean of
/// the client's own copy and two peers' copies at the same index.
inline Dictionary exchange_aggregation(const Dictionary& own, const std::vector<LabeledGMM>& atoms_1,
                                       const std::vector<LabeledGMM>& atoms_2) {
  detail::require_congruent_atoms(own.atoms, atoms_1);
  detail::require_congruent_atoms(own.atoms, atoms_2);
  Dictionary out = own;
  const Vec third(3, 1.0 / 3.0);
  for (std::size_t k = 0; k < own.atoms.size(); ++k) {
    out.atoms[k] = gmm_barycenter({own.atoms[k], atoms_1[k], atoms_2[k]}, third).gmm;
  }
  return out;
}

struct RoundHyper {
  double eta = 0.05;
  int epochs = 5;
  double label_penalty = kAutoLabelPenalty;
};

/// One synchronous federation round: exchange against round-start
/// snapshots, E local steps per client, then one loss evaluation for the
/// telemetry trace. Pure; returns the advanced state.
inline FederationState run_round(const FederationState& state, const RoundHyper& hyper) {
  require(hyper.epochs >= 0, "run_round: negative epoch count");
  FederationState next = state;
  std::unordered_map<int, const std::vector<LabeledGMM>*> atoms_at_start;
  for (const auto& c : state.clients) atoms_at_start.emplace(c.id, &c.dictionary.atoms);

  for (auto& client : next.clients) {
    if (state.strategy == Strategy::Replacement) {
      const auto peers = select_peers(state, client.id, 1);
      client.dictionary = exchange_replacement(client.dictionary, *atoms_at_start.at(peers[0]));
      next.exchange_log.push_back({state.round, peers[0], client.id});
    } else {
      const auto peers = select_peers(state, client.id, 2);
      client.dictionary = exchange_aggregation(client.dictionary, *atoms_at_start.at(peers[0]),
                                               *atoms_at_start.at(peers[1]));
      next.exchange_log.push_back({state.round, peers[0], client.id});
      next.exchange_log.push_back({state.round, peers[1], client.id});
    }
    for (int e = 0; e < hyper.epochs; ++e) {
      client.dictionary = local_step(client.dictionary, client.domain, client.is_labeled,
                                     hyper.eta, hyper.label_penalty);
    }
    const LossReport report =
        client_loss(client.dictionary, client.domain, client.is_labeled, hyper.label_penalty);
    client.loss_history.push_back(report.value);
    if (!report.barycenter_converged) ++next.nonconverged_events;
  }
  next.round = state.round + 1;
  return next;
}

struct TrainConfig {
  int atoms = 3;                  // K
  int components_per_class = 2;   // source GMM components per class
  int atom_components = 0;        // 0 -> n_class * components_per_class
  int rounds = 100;
  int epochs = 5;
  double eta = 0.05;
  double label_penalty = kAutoLabelPenalty;
  Strategy strategy = Strategy::Aggregation;
  std::uint64_t seed = 0;
  EmConfig em;                    // seed field is overridden per client
};

namespace detail {

/// Fits every domain GMM and initializes per-client dictionaries with
/// seeds derived from the master seed. Target (when present) is appended
/// last and is the only unlabeled client.
inline FederationState init_federation(const std::vector<LabeledDataset>& sources,
                                       const LabeledDataset* target, const TrainConfig& cfg) {
  require(sources.size() >= 2, "train: need at least 2 source domains");
  require(cfg.atoms >= 1 && cfg.components_per_class >= 1, "train: bad dictionary sizes");
  const std::size_t d = sources.front().features.cols();
  const int n_class = sources.front().n_class;
  for (const auto& s : sources) {
    require(s.labels.has_value(), "train: source dataset missing labels");
    require(s.features.cols() == d && s.n_class == n_class, "train: incompatible source domains");
  }
  if (target) {
    require(target->features.cols() == d && target->n_class == n_class,
            "train: incompatible target domain");
  }
  const int atom_c =
      cfg.atom_components > 0 ? cfg.atom_components : n_class * cfg.components_per_class;

  FederationState st;
  st.strategy = cfg.strategy;
  st.rng_seed = cfg.seed;
  int id = 0;
  auto add_client = [&](const LabeledGMM& domain, bool is_labeled, const EmDiagnostics& diag) {
    ClientState c;
    c.id = id;
    c.domain = domain;
    c.is_labeled = is_labeled;
    c.dictionary = init_dictionary(cfg.atoms, atom_c, static_cast<int>(d), n_class,
                                   derive_seed(cfg.seed, {stream::kDictInit,
                                                          static_cast<std::uint64_t>(id)}));
    if (!diag.converged) ++st.nonconverged_events;
    st.clients.push_back(std::move(c));
    ++id;
  };
  for (const auto& s : sources) {
    EmConfig em = cfg.em;
    em.seed = derive_seed(cfg.seed, {stream::kEmFit, static_cast<std::uint64_t>(id)});
    const GmmFit fit = fit_source_gmm(s, cfg.components_per_class, em);
    add_client(fit.gmm, true, fit.diagnostics);
  }
  if (target) {
    EmConfig em = cfg.em;
    em.seed = derive_seed(cfg.seed, {stream::kEmFit, static_cast<std::uint64_t>(id)});
    const GmmFit fit = fit_target_gmm(*target, n_class * cfg.components_per_class, em);
    add_client(fit.gmm, false, fit.diagnostics);
  }
  for (auto& c : st.clients) {
    const LossReport report =
        client_loss(c.dictionary, c.domain, c.is_labeled, cfg.label_penalty);
    c.loss_history.push_back(report.value);
  }
  return st;
}

}  // namespace detail

/// Round-zero state: fitted domain GMMs, freshly seeded dictionaries, no
/// exchanges yet. Useful for drivers that interleave rounds with
/// measurements.
inline FederationState initialize_federation(const std::vector<LabeledDataset>& sources,
                                             const LabeledDataset& target,
                                             const TrainConfig& cfg) {
  return detail::init_federation(sources, &target, cfg);
}

inline FederationState initialize_federation_sources_only(
    const std::vector<LabeledDataset>& sources, const TrainConfig& cfg) {
  return detail::init_federation(sources, nullptr, cfg);
}

/// Full decentralized training: fit domain GMMs, init dictionaries, run
/// cfg.rounds gossip rounds. The target dataset is treated as unlabeled.
inline FederationState train(const std::vector<LabeledDataset>& sources,
                             const LabeledDataset& target, const TrainConfig& cfg) {
  FederationState st = detail::init_federation(sources, &target, cfg);
  const RoundHyper hyper{cfg.eta, cfg.epochs, cfg.label_penalty};
  for (int r = 0; r < cfg.rounds; ++r) st = run_round(st, hyper);
  return st;
}

/// Source-only federation (no target client); used by the envelope study,
/// which freezes one source's atoms afterwards.
inline FederationState train_sources_only(const std::vector<LabeledDataset>& sources,
                                          const TrainConfig& cfg) {
  FederationState st = detail::init_federation(sources, nullptr, cfg);
  const RoundHyper hyper{cfg.eta, cfg.epochs, cfg.label_penalty};
  for (int r = 0; r < cfg.rounds; ++r) st = run_round(st, hyper);
  return st;
}

}  // namespace fedmix
