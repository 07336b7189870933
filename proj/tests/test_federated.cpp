#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedglu/errors.hpp"
#include "fedglu/eval.hpp"
#include "fedglu/federated.hpp"
#include "fedglu/rng.hpp"
#include "fedglu/synthetic.hpp"

using namespace fedglu;
using fed::ClientReturn;
using fed::ParamVector;

namespace {

const std::vector<int> kTiny = {24, 16, 8, 1};

ClientReturn ret(std::string id, std::size_t n, ParamVector p) { return ClientReturn{std::move(id), n, std::move(p), 0.0}; }

ParamVector random_vec(Rng& rng, std::size_t n) {
  ParamVector v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Samples whose targets all lie inside [lo, hi] mg/dL.
cgm::SampleSet band_samples(std::size_t n, double lo, double hi, std::uint64_t seed) {
  Rng rng(seed);
  const cgm::Normalizer norm;
  cgm::SampleSet s(24);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(24);
    double g = rng.uniform(lo, hi);
    for (auto& v : x) {
      v = norm.normalize(g);
      g = std::clamp(g + rng.normal(0.0, 2.0), lo, hi);
    }
    s.push_back(x, g, static_cast<std::int64_t>(i) * 300);
  }
  return s;
}

cgm::SampleSet patient_samples(double hypo, double hyper, std::uint64_t seed, int days = 4) {
  cgm::SyntheticCohortSpec spec;
  spec.n_patients = 1;
  spec.days_per_patient = days;
  spec.target_hypo_fraction = hypo;
  spec.target_hyper_fraction = hyper;
  spec.rng_seed = seed;
  const auto cohort = cgm::generate_synthetic_cohort(spec);
  return cgm::window_samples(cgm::preprocess(cohort.series.front()), cgm::WindowConfig{});
}

fed::FedConfig small_cfg() {
  fed::FedConfig cfg;
  cfg.rounds = 3;
  cfg.batch_size = 64;
  cfg.seed = 11;
  cfg.finetune_epochs = 5;
  cfg.finetune_patience = 5;
  return cfg;
}

}  // namespace

TEST_CASE("weighted_average examples") {
  const ParamVector p = {1.0, 2.0, -3.0};
  const ParamVector q = {3.0, 0.0, 5.0};
  std::vector<ClientReturn> two = {ret("a", 4, p), ret("b", 4, q)};
  CHECK(fed::weighted_average(two) == ParamVector{2.0, 1.0, 1.0});

  const ParamVector v = {8.0, -4.0};
  std::vector<ClientReturn> skew = {ret("a", 1, {0.0, 0.0}), ret("b", 3, v)};
  CHECK(fed::weighted_average(skew) == ParamVector{6.0, -3.0});

  std::vector<ClientReturn> one = {ret("only", 17, p)};
  CHECK(fed::weighted_average(one) == p);

  std::vector<ClientReturn> none;
  CHECK_THROWS_AS(fed::weighted_average(none), NoClients);
  std::vector<ClientReturn> bad = {ret("a", 1, p), ret("b", 1, {1.0})};
  CHECK_THROWS_AS(fed::weighted_average(bad), ShapeMismatch);
}

TEST_CASE("weighted_average properties") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t len = 1 + rng.below(40);
    const std::size_t k = 1 + rng.below(8);
    std::vector<ClientReturn> rs;
    for (std::size_t i = 0; i < k; ++i) {
      rs.push_back(ret("p" + std::to_string(i), 1 + rng.below(500), random_vec(rng, len)));
    }
    const auto avg = fed::weighted_average(rs);

    // order of arrival does not matter, bit for bit
    auto shuffled = rs;
    rng.shuffle(std::span<ClientReturn>(shuffled));
    CHECK(fed::weighted_average(shuffled) == avg);

    // affine equivariance: a*w + c averages to a*avg + c
    const double a = rng.uniform(-3.0, 3.0);
    const double c = rng.uniform(-5.0, 5.0);
    auto moved = rs;
    for (auto& r : moved) {
      for (auto& x : r.params) x = a * x + c;
    }
    const auto avg_moved = fed::weighted_average(moved);
    for (std::size_t i = 0; i < len; ++i) REQUIRE(std::abs(avg_moved[i] - (a * avg[i] + c)) < 1e-12 * (1 + std::abs(avg_moved[i])) + 1e-12);

    // identical clients average to themselves
    auto same = rs;
    for (auto& r : same) r.params = rs.front().params;
    const auto avg_same = fed::weighted_average(same);
    for (std::size_t i = 0; i < len; ++i) REQUIRE(std::abs(avg_same[i] - rs.front().params[i]) < 1e-12 * (1 + std::abs(avg_same[i])));
  }
}

TEST_CASE("aggregate applies the server learning rate") {
  Rng rng(5);
  std::vector<ClientReturn> rs = {ret("a", 10, random_vec(rng, 6)), ret("b", 30, random_vec(rng, 6))};
  const auto avg = fed::weighted_average(rs);

  fed::ServerState s;
  s.global = random_vec(rng, 6);
  s.server_lr = 1.0;
  const auto full = fed::aggregate(s, rs);
  CHECK(full.global == avg);
  CHECK(full.round == 1);

  s.server_lr = 0.5;
  const auto half = fed::aggregate(s, rs);
  for (std::size_t i = 0; i < 6; ++i) CHECK(half.global[i] == doctest::Approx(0.5 * s.global[i] + 0.5 * avg[i]).epsilon(1e-14));

  s.global.resize(5);
  CHECK_THROWS_AS(fed::aggregate(s, rs), ShapeMismatch);
}

TEST_CASE("client_update") {
  const auto init = nn::init_model(1, kTiny);
  fed::ClientState c{"p1", band_samples(100, 60, 250, 1), std::nullopt, {}};
  auto cfg = small_cfg();

  cfg.local_epochs = 0;
  const auto still = fed::client_update(c, kTiny, init.flatten(), cfg, 3);
  CHECK(still.params == init.flatten());
  CHECK(still.n_k == 100);

  cfg.local_epochs = 1;
  const auto moved = fed::client_update(c, kTiny, init.flatten(), cfg, 3);
  CHECK(moved.params != init.flatten());
  CHECK(c.params == moved.params);
  const auto again = fed::client_update(c, kTiny, init.flatten(), cfg, 3);
  CHECK(again.params == moved.params);
}

TEST_CASE("one-client federation equals sequential training") {
  fed::ClientState c{"solo", band_samples(150, 50, 300, 2), std::nullopt, {}};
  auto cfg = small_cfg();
  cfg.rounds = 4;
  cfg.local_epochs = 2;
  const auto init = nn::init_model(4, kTiny);

  std::vector<fed::ClientState> clients = {c};
  const auto res = fed::run_federated(clients, init, cfg);

  nn::MlpModel seq = init;
  for (int r = 0; r < cfg.rounds; ++r) {
    nn::TrainConfig tc;
    tc.learning_rate = cfg.client_lr;
    tc.batch_size = cfg.batch_size;
    tc.max_epochs = cfg.local_epochs;
    tc.patience = cfg.local_epochs;
    tc.seed = fed::client_round_seed(cfg.seed, "solo", r);
    seq = nn::train(seq, c.train, loss::LossSpec::mse(), tc).model;
  }
  CHECK(res.server.global == seq.flatten());
}

TEST_CASE("federated ledger and determinism") {
  auto cfg = small_cfg();
  const auto init = nn::init_model(6, kTiny);
  std::vector<fed::ClientState> clients = {
      {"p2", band_samples(80, 50, 300, 3), std::nullopt, {}},
      {"p1", band_samples(120, 50, 300, 4), std::nullopt, {}},
      {"p3", band_samples(40, 50, 300, 5), std::nullopt, {}},
  };
  int observed = 0;
  const auto res = fed::run_federated(clients, init, cfg,
                                      [&](const fed::RoundRecord& rec, std::span<const double> w) {
                                        ++observed;
                                        CHECK(rec.global_digest == fed::param_digest(w));
                                      });
  CHECK(observed == cfg.rounds);
  REQUIRE(res.ledger.size() == static_cast<std::size_t>(cfg.rounds));
  for (const auto& rec : res.ledger) {
    CHECK(rec.client_ids == std::vector<std::string>{"p1", "p2", "p3"});
    std::size_t n = 0;
    for (auto k : rec.n_k) n += k;
    CHECK(n == rec.n);
    CHECK(rec.n == 240);
    CHECK(std::isfinite(rec.global_train_mse));
  }
  CHECK(res.server.round == cfg.rounds);

  // client input order does not change the outcome
  std::vector<fed::ClientState> reordered = {clients[1], clients[2], clients[0]};
  const auto res2 = fed::run_federated(reordered, init, cfg);
  CHECK(res2.server.global == res.server.global);

  std::vector<fed::ClientState> none;
  CHECK_THROWS_AS(fed::run_federated(none, init, cfg), NoClients);
}

TEST_CASE("identical clients with a shared seed aggregate to one client's update") {
  auto cfg = small_cfg();
  const auto init = nn::init_model(8, kTiny);
  const auto data = band_samples(90, 50, 300, 8);
  std::vector<fed::ClientState> twins = {{"a", data, std::nullopt, {}}, {"b", data, std::nullopt, {}}, {"c", data, std::nullopt, {}}};
  std::vector<ClientReturn> rs;
  for (auto& c : twins) rs.push_back(fed::client_update(c, kTiny, init.flatten(), cfg, 99));
  CHECK(rs[0].params == rs[1].params);
  fed::ServerState s;
  s.global = init.flatten();
  const auto next = fed::aggregate(s, rs);
  for (std::size_t i = 0; i < next.global.size(); ++i) REQUIRE(std::abs(next.global[i] - rs[0].params[i]) < 1e-12);
}

TEST_CASE("select_alpha") {
  const std::vector<double> cands = {0.2, 0.5, 0.8};
  const std::vector<double> scores = {5.0, 3.0, 9.0};
  auto by_table = [&](double a) -> std::optional<double> {
    for (std::size_t i = 0; i < cands.size(); ++i)
      if (cands[i] == a) return scores[i];
    return std::nullopt;
  };
  const auto sel = fed::select_alpha(cands, by_table);
  CHECK(sel.alpha == 0.5);
  CHECK_FALSE(sel.fallback);

  const std::vector<double> single = {0.85};
  CHECK(fed::select_alpha(single, [](double) { return std::optional<double>(1.0); }).alpha == 0.85);

  const auto tie = fed::select_alpha(cands, [](double) { return std::optional<double>(2.0); });
  CHECK(tie.alpha == 0.8);

  const auto fb = fed::select_alpha(cands, [](double a) { return a == 0.8 ? std::nullopt : std::optional<double>(a); });
  CHECK(fb.fallback);
  CHECK(fb.alpha == fed::kFallbackAlpha);

  const std::vector<double> empty;
  CHECK_THROWS_AS(fed::select_alpha(empty, by_table), ConfigError);

  const auto grid = fed::default_alpha_grid();
  CHECK(grid.size() == 13);
  CHECK(std::is_sorted(grid.begin(), grid.end()));
}

TEST_CASE("select_alpha_by_training falls back without excursions") {
  const auto data = band_samples(60, 80, 170, 9);
  std::vector<double> trained;
  auto train_fn = [&](double a) {
    trained.push_back(a);
    return nn::init_model(1, kTiny);
  };
  const auto cands = fed::default_alpha_grid();
  const auto out = fed::select_alpha_by_training(train_fn, cands, data);
  CHECK(out.selection.fallback);
  CHECK(out.selection.alpha == 0.5);
  CHECK(trained == std::vector<double>{0.5});
}

TEST_CASE("central training over one patient is local training") {
  const auto data = band_samples(120, 50, 300, 10);
  nn::TrainConfig tc;
  tc.batch_size = 32;
  tc.max_epochs = 3;
  tc.seed = 2;
  const std::vector<cgm::SampleSet> cohort = {data};
  CHECK(fed::train_central(cohort, loss::LossSpec::mse(), tc, 5, kTiny) ==
        fed::train_local(data, loss::LossSpec::mse(), tc, 5, kTiny));
}

TEST_CASE("fine-tuning without excursions reduces to MSE training") {
  fed::ClientState c{"calm", band_samples(100, 75, 175, 12), std::nullopt, {}};
  const auto global = nn::init_model(3, kTiny);
  const auto cfg = small_cfg();
  loss::HhParams hh;
  hh.alpha = 0.9;
  const auto tuned = fed::local_finetune(c, global, hh, cfg, 77);
  CHECK(tuned.dims() == global.dims());

  nn::TrainConfig tc;
  tc.learning_rate = cfg.client_lr;
  tc.batch_size = cfg.batch_size;
  tc.max_epochs = cfg.finetune_epochs;
  tc.patience = cfg.finetune_patience;
  tc.seed = 77;
  CHECK(tuned == nn::train(global, c.train, loss::LossSpec::mse(), tc).model);
}

TEST_CASE("hypo-weighted fine-tuning improves hypo accuracy on a hypo-rich patient") {
  const auto data = patient_samples(0.15, 0.25, 31);
  auto cfg = small_cfg();
  cfg.rounds = 5;
  cfg.local_epochs = 2;
  cfg.finetune_epochs = 20;
  cfg.finetune_patience = 20;
  std::vector<fed::ClientState> clients = {{"synth", data, std::nullopt, {}}};
  const auto res = fed::run_federated(clients, nn::init_model(13, kTiny), cfg);
  const nn::MlpModel global(kTiny, res.server.global);

  loss::HhParams hh;
  hh.alpha = 1.0;
  const auto tuned = fed::local_finetune(clients[0], global, hh, cfg, 5);

  auto hypo_rmse = [&](const nn::MlpModel& m) {
    const auto pairs = eval::make_pairs(data.targets(), nn::predict(m, data));
    return *eval::region_rmse(pairs).hypo;
  };
  CHECK(hypo_rmse(tuned) < hypo_rmse(global));
}
