#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "fedglu/errors.hpp"
#include "fedglu/loss.hpp"
#include "fedglu/rng.hpp"

using namespace fedglu;
using loss::LossSpec;

TEST_CASE("hand-derived HH values") {
  CHECK(loss::per_sample_loss(LossSpec::hypo_hyper(0.4), 100, 110) == 100.0);
  CHECK(loss::per_sample_loss(LossSpec::hypo_hyper(1.0), 60, 80) == 84900.0);
  CHECK(loss::per_sample_loss(LossSpec::hypo_hyper(0.3), 200, 190) == doctest::Approx(39475.0).epsilon(1e-15));
  CHECK(loss::per_sample_grad(LossSpec::hypo_hyper(1.0), 60, 80) == 4265.0);
}

TEST_CASE("normal band boundaries are inclusive") {
  const auto hh = LossSpec::hypo_hyper(0.7);
  CHECK(loss::per_sample_loss(hh, 70, 90) == 400.0);
  CHECK(loss::per_sample_loss(hh, 180, 160) == 400.0);
  CHECK(loss::per_sample_loss(hh, 69.999, 90) > 400.0);
}

TEST_CASE("perfect prediction is stationary") {
  for (double y : {40.0, 69.0, 125.0, 181.0, 400.0}) {
    CHECK(loss::per_sample_grad(LossSpec::mse(), y, y) == 0.0);
    CHECK(loss::per_sample_grad(LossSpec::hypo_hyper(0.6), y, y) == 0.0);
  }
}

TEST_CASE("HH equals MSE inside [70, 180] and dominates it elsewhere") {
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) {
    const double y = rng.uniform(70.0, 180.0);
    const double p = rng.uniform(0.0, 500.0);
    const double a = rng.uniform();
    REQUIRE(loss::per_sample_loss(LossSpec::hypo_hyper(a), y, p) == loss::per_sample_loss(LossSpec::mse(), y, p));
  }
  for (int i = 0; i < 10000; ++i) {
    const double y = rng.uniform(40.0, 400.0);
    const double p = rng.uniform(40.0, 400.0);
    const double a = rng.uniform();
    REQUIRE(loss::per_sample_loss(LossSpec::hypo_hyper(a), y, p) >= (y - p) * (y - p));
  }
}

TEST_CASE("penalty depends on the error only through its magnitude") {
  const auto hh = LossSpec::hypo_hyper(0.35);
  for (double y : {45.0, 62.0, 190.0, 333.0}) {
    for (double e : {0.5, 3.0, 17.0}) {
      CHECK(loss::per_sample_loss(hh, y, y + e) == loss::per_sample_loss(hh, y, y - e));
    }
  }
}

TEST_CASE("HH is monotone in alpha on excursion samples") {
  const std::vector<double> alphas = {0.0, 0.1, 0.3, 0.5, 0.85, 1.0};
  for (double y : {45.0, 65.0}) {
    double prev = -1.0;
    for (double a : alphas) {
      const double v = loss::per_sample_loss(LossSpec::hypo_hyper(a), y, y + 12.0);
      CHECK(v > prev);
      prev = v;
    }
  }
  for (double y : {185.0, 320.0}) {
    double prev = 1e300;
    for (double a : alphas) {
      const double v = loss::per_sample_loss(LossSpec::hypo_hyper(a), y, y - 9.0);
      CHECK(v < prev);
      prev = v;
    }
  }
}

TEST_CASE("gradient matches central finite differences") {
  Rng rng(5);
  const double h = 1e-4;
  for (int i = 0; i < 2000; ++i) {
    const double y = rng.uniform(40.0, 400.0);
    double p = rng.uniform(40.0, 400.0);
    if (std::abs(p - y) < 1e-2) p += 1.0;
    const auto spec = i % 2 ? LossSpec::mse() : LossSpec::hypo_hyper(rng.uniform());
    const double fd = (loss::per_sample_loss(spec, y, p + h) - loss::per_sample_loss(spec, y, p - h)) / (2 * h);
    const double g = loss::per_sample_grad(spec, y, p);
    REQUIRE(std::abs(fd - g) <= 1e-6 * std::max(1.0, std::abs(g)));
  }
}

TEST_CASE("batch reductions") {
  const auto mse = LossSpec::mse();
  const std::vector<double> y = {100, 100};
  const std::vector<double> p = {102, 100 + std::sqrt(6.0)};
  CHECK(loss::batch_loss(mse, std::vector<double>{100, 120}, std::vector<double>{102, 122}) == 4.0);
  CHECK(loss::batch_loss(mse, y, p) == doctest::Approx(5.0));

  const auto hh = LossSpec::hypo_hyper(0.9);
  const std::vector<double> same_y(7, 55.0), same_p(7, 71.0);
  CHECK(loss::batch_loss(hh, same_y, same_p) == doctest::Approx(loss::per_sample_loss(hh, 55, 71)));

  const std::vector<double> ys = {50, 100, 250, 300};
  const std::vector<double> ps = {60, 90, 240, 310};
  const auto g = loss::batch_grad(hh, ys, ps);
  double sum = 0.0, expected = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    sum += g[i];
    expected += loss::per_sample_grad(hh, ys[i], ps[i]);
  }
  CHECK(sum == doctest::Approx(expected / 4.0));

  CHECK_THROWS_AS(loss::batch_loss(mse, std::vector<double>{}, std::vector<double>{}), EmptyBatch);
  CHECK_THROWS_AS(loss::batch_grad(mse, std::vector<double>{}, std::vector<double>{}), EmptyBatch);
}

TEST_CASE("alpha domain is the closed unit interval") {
  CHECK_NOTHROW(LossSpec::hypo_hyper(0.0).validate());
  CHECK_NOTHROW(LossSpec::hypo_hyper(1.0).validate());
  CHECK_THROWS_AS(LossSpec::hypo_hyper(1.01).validate(), ConfigError);
  CHECK_THROWS_AS(LossSpec::hypo_hyper(-0.1).validate(), ConfigError);
}
