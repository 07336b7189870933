#include "fedglu/federated.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

#include "fedglu/errors.hpp"
#include "fedglu/eval.hpp"
#include "fedglu/rng.hpp"

namespace fedglu::fed {

void FedConfig::validate() const {
  if (rounds < 0) throw ConfigError("federated.rounds must be non-negative");
  if (local_epochs < 0) throw ConfigError("federated.local_epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("federated.batch_size must be positive");
  if (!(client_lr > 0.0)) throw ConfigError("federated.client_lr must be positive");
  if (!(server_lr > 0.0)) throw ConfigError("federated.server_lr must be positive");
  if (finetune_epochs < 0) throw ConfigError("federated.finetune_epochs must be non-negative");
  if (finetune_patience < 0) throw ConfigError("federated.finetune_patience must be non-negative");
}

std::uint64_t param_digest(std::span<const double> params) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(params.data()), params.size_bytes()));
}

std::uint64_t client_round_seed(std::uint64_t seed, const std::string& patient_id, int round) {
  return derive_seed(seed, "fed/client/" + patient_id + "/round/" + std::to_string(round));
}

ClientReturn client_update(ClientState& client, const std::vector<int>& dims, std::span<const double> global,
                           const FedConfig& cfg, std::uint64_t round_seed) {
  if (client.train.empty()) throw EmptyDataset("client '" + client.patient_id + "' has no training samples");
  nn::MlpModel model(dims, ParamVector(global.begin(), global.end()));
  nn::TrainConfig tc;
  tc.learning_rate = cfg.client_lr;
  tc.batch_size = cfg.batch_size;
  tc.max_epochs = cfg.local_epochs;
  tc.patience = std::max(cfg.local_epochs, 1);
  tc.seed = round_seed;
  auto result = nn::train(std::move(model), client.train, loss::LossSpec::mse(), tc);

  ClientReturn ret;
  ret.patient_id = client.patient_id;
  ret.n_k = client.n();
  ret.mean_train_loss = result.train_loss.empty()
                            ? nn::evaluate_loss(result.model, client.train, loss::LossSpec::mse())
                            : result.train_loss.back();
  ret.params = result.model.flatten();
  client.params = ret.params;
  return ret;
}

namespace {

std::vector<const ClientReturn*> sorted_by_id(std::span<const ClientReturn> returns) {
  std::vector<const ClientReturn*> order;
  for (const auto& r : returns) order.push_back(&r);
  std::sort(order.begin(), order.end(),
            [](const ClientReturn* a, const ClientReturn* b) { return a->patient_id < b->patient_id; });
  return order;
}

}  // namespace

ParamVector weighted_average(std::span<const ClientReturn> returns) {
  if (returns.empty()) throw NoClients("aggregation needs at least one client");
  const std::size_t len = returns.front().params.size();
  std::size_t n = 0;
  for (const auto& r : returns) {
    if (r.params.size() != len) throw ShapeMismatch("client '" + r.patient_id + "' returned a different shape");
    n += r.n_k;
  }
  if (n == 0) throw NoClients("aggregation weights sum to zero");

  ParamVector avg(len, 0.0);
  for (const ClientReturn* r : sorted_by_id(returns)) {
    const double w = static_cast<double>(r->n_k) / static_cast<double>(n);
    for (std::size_t i = 0; i < len; ++i) avg[i] += w * r->params[i];
  }
  return avg;
}

ServerState aggregate(ServerState server, std::span<const ClientReturn> returns) {
  ParamVector avg = weighted_average(returns);
  if (!server.global.empty() && server.global.size() != avg.size()) {
    throw ShapeMismatch("client parameters do not match the global model");
  }
  if (server.server_lr == 1.0 || server.global.empty()) {
    server.global = std::move(avg);
  } else {
    for (std::size_t i = 0; i < avg.size(); ++i) {
      server.global[i] -= server.server_lr * (server.global[i] - avg[i]);
    }
  }
  ++server.round;
  return server;
}

FederatedResult run_federated(std::vector<ClientState>& clients, const nn::MlpModel& initial, const FedConfig& cfg,
                              const RoundObserver& observer) {
  cfg.validate();
  if (clients.empty()) throw NoClients("federated training needs at least one client");
  for (const auto& c : clients) {
    if (c.train.empty()) throw EmptyDataset("client '" + c.patient_id + "' has no training samples");
  }

  FederatedResult out;
  out.server.global = initial.flatten();
  out.server.server_lr = cfg.server_lr;
  const auto& dims = initial.dims();

  // Iterate clients in id order so the ledger does not depend on input order.
  std::vector<std::size_t> order(clients.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return clients[a].patient_id < clients[b].patient_id; });

  for (int round = 0; round < cfg.rounds; ++round) {
    std::vector<ClientReturn> returns;
    returns.reserve(clients.size());
    for (std::size_t idx : order) {
      auto& c = clients[idx];
      returns.push_back(client_update(c, dims, out.server.global, cfg, client_round_seed(cfg.seed, c.patient_id, round)));
    }
    out.server = aggregate(std::move(out.server), returns);

    RoundRecord rec;
    rec.round = round + 1;
    double weighted_loss = 0.0;
    double weighted_mse = 0.0;
    const nn::MlpModel global_model(dims, out.server.global);
    for (const auto& r : returns) {
      rec.client_ids.push_back(r.patient_id);
      rec.n_k.push_back(r.n_k);
      rec.client_train_loss.push_back(r.mean_train_loss);
      rec.client_param_digests.push_back(param_digest(r.params));
      rec.n += r.n_k;
      weighted_loss += static_cast<double>(r.n_k) * r.mean_train_loss;
    }
    for (std::size_t idx : order) {
      const auto& c = clients[idx];
      weighted_mse += static_cast<double>(c.n()) * nn::evaluate_loss(global_model, c.train, loss::LossSpec::mse());
    }
    rec.mean_client_loss = weighted_loss / static_cast<double>(rec.n);
    rec.global_train_mse = weighted_mse / static_cast<double>(rec.n);
    rec.global_digest = param_digest(out.server.global);
    out.server.global_train_mse.push_back(rec.global_train_mse);
    if (observer) observer(rec, out.server.global);
    out.ledger.push_back(std::move(rec));
  }
  return out;
}

nn::MlpModel local_finetune(const ClientState& client, const nn::MlpModel& global, const loss::HhParams& hh,
                            const FedConfig& cfg, std::uint64_t seed) {
  if (client.train.empty()) throw EmptyDataset("client '" + client.patient_id + "' has no training samples");
  loss::LossSpec spec;
  spec.kind = loss::LossKind::Hh;
  spec.hh = hh;
  nn::TrainConfig tc;
  tc.learning_rate = cfg.client_lr;
  tc.batch_size = cfg.batch_size;
  tc.max_epochs = cfg.finetune_epochs;
  tc.patience = cfg.finetune_patience;
  tc.seed = seed;
  const cgm::SampleSet* val = client.val ? &*client.val : nullptr;
  return nn::train(global, client.train, spec, tc, val).model;
}

std::vector<double> default_alpha_grid() {
  return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 1.0};
}

AlphaSelection select_alpha(std::span<const double> candidates,
                            const std::function<std::optional<double>(double)>& score) {
  if (candidates.empty()) throw ConfigError("alpha selection needs at least one candidate");
  AlphaSelection sel;
  sel.candidates.assign(candidates.begin(), candidates.end());
  std::optional<double> best;
  for (double a : candidates) {
    const auto s = score(a);
    sel.scores.push_back(s);
    if (!s) {
      sel.fallback = true;
      continue;
    }
    if (!best || *s < *best || (*s == *best && a > sel.alpha)) {
      best = s;
      sel.alpha = a;
    }
  }
  if (sel.fallback || !best) {
    sel.fallback = true;
    sel.alpha = kFallbackAlpha;
  }
  return sel;
}

SelectedModel select_alpha_by_training(const std::function<nn::MlpModel(double)>& train_fn,
                                       std::span<const double> candidates, const cgm::SampleSet& train,
                                       const cgm::Normalizer& norm) {
  if (candidates.empty()) throw ConfigError("alpha selection needs at least one candidate");
  const auto targets = train.targets();
  const bool has_hypo = std::any_of(targets.begin(), targets.end(), [](double y) { return y < 70.0; });
  const bool has_hyper = std::any_of(targets.begin(), targets.end(), [](double y) { return y > 180.0; });
  if (!has_hypo || !has_hyper) {
    SelectedModel out{AlphaSelection{}, train_fn(kFallbackAlpha)};
    out.selection.candidates.assign(candidates.begin(), candidates.end());
    out.selection.scores.assign(candidates.size(), std::nullopt);
    out.selection.fallback = true;
    return out;
  }

  std::optional<nn::MlpModel> best_model;
  std::optional<double> best_score;
  double best_alpha = 0.0;
  auto score = [&](double alpha) -> std::optional<double> {
    nn::MlpModel m = train_fn(alpha);
    const auto pred = nn::predict(m, train, norm);
    const auto pairs = eval::make_pairs(targets, pred);
    const auto s = eval::region_rmse(pairs).combined();
    if (s && (!best_score || *s < *best_score || (*s == *best_score && alpha > best_alpha))) {
      best_score = s;
      best_alpha = alpha;
      best_model = std::move(m);
    }
    return s;
  };
  SelectedModel out{select_alpha(candidates, score), nn::MlpModel{}};
  out.model = best_model ? std::move(*best_model) : train_fn(out.selection.alpha);
  return out;
}

nn::MlpModel train_local(const cgm::SampleSet& samples, const loss::LossSpec& loss, const nn::TrainConfig& cfg,
                         std::uint64_t init_seed, const std::vector<int>& dims) {
  if (samples.empty()) throw EmptyDataset("local training needs samples");
  return nn::train(nn::init_model(init_seed, dims), samples, loss, cfg).model;
}

nn::MlpModel train_central(std::span<const cgm::SampleSet> per_patient, const loss::LossSpec& loss,
                           const nn::TrainConfig& cfg, std::uint64_t init_seed, const std::vector<int>& dims) {
  std::size_t total = 0;
  for (const auto& s : per_patient) total += s.size();
  if (total == 0) throw EmptyDataset("central training needs samples");
  cgm::SampleSet pooled(per_patient.front().wl());
  pooled.reserve(total);
  for (const auto& s : per_patient) pooled.append(s);
  return nn::train(nn::init_model(init_seed, dims), pooled, loss, cfg).model;
}

}  // namespace fedglu::fed
