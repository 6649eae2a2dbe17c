#include <cmath>
#include <vector>

#include "amoene/random.hpp"
#include "amoene/survival.hpp"
#include "doctest.h"

using namespace amoene;

namespace {

// -log P(event bin in admissible set) by summing per-bin probabilities.
double enumerated_nll(const std::vector<double>& z, const MTLRTarget& t) {
  double total = 0.0;
  for (double v : z) total += std::exp(v);
  double admissible = 0.0;
  for (std::size_t b = 0; b < z.size(); ++b)
    if (t.y[b]) admissible += std::exp(z[b]) / total;
  return -std::log(admissible);
}

MTLRTarget random_target(std::size_t bins, Rng& rng) {
  MTLRTarget t;
  t.y.assign(bins, 0);
  const std::size_t b = uniform_index(rng, bins);
  t.censored = bernoulli(rng, 0.5);
  if (t.censored)
    for (std::size_t j = b; j < bins; ++j) t.y[j] = 1;
  else
    t.y[b] = 1;
  return t;
}

}  // namespace

TEST_CASE("make_bins quantile boundaries") {
  std::vector<double> t16;
  for (int i = 1; i <= 16; ++i) t16.push_back(i);
  auto g = make_bins(t16);
  REQUIRE(g.bins() == 4);
  CHECK(g.boundaries[0] == doctest::Approx(4.75).epsilon(1e-14));
  CHECK(g.boundaries[1] == doctest::Approx(8.5).epsilon(1e-14));
  CHECK(g.boundaries[2] == doctest::Approx(12.25).epsilon(1e-14));

  CHECK_THROWS_AS(make_bins(std::vector<double>{1, 1, 1, 1}), ShapeError);
  CHECK_THROWS_AS(make_bins(std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(make_bins(std::vector<double>{1, 2, 3, -1}), ShapeError);

  Rng rng(3);
  std::vector<double> t100(100);
  for (auto& t : t100) t = uniform(rng, 0.5, 120.0);
  auto g100 = make_bins(t100);
  REQUIRE(g100.bins() == 10);
  std::vector<int> counts(10, 0);
  for (double t : t100) counts[g100.bin_of(t)]++;
  for (int c : counts) CHECK(std::abs(c - 10) <= 1);
}

TEST_CASE("make_bins collapses duplicate quantiles") {
  std::vector<double> t{1, 1, 1, 1, 1, 1, 1, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto g = make_bins(t);
  CHECK(g.bins() < 4);
  for (std::size_t i = 1; i < g.boundaries.size(); ++i) CHECK(g.boundaries[i] > g.boundaries[i - 1]);
}

TEST_CASE("encode_mtlr_target") {
  BinGrid g{{10.0, 20.0, 30.0}};
  auto a = encode_mtlr_target({5.0, true}, g);
  CHECK(a.y == std::vector<std::uint8_t>{1, 0, 0, 0});
  auto b = encode_mtlr_target({25.0, false}, g);
  CHECK(b.y == std::vector<std::uint8_t>{0, 0, 1, 1});
  CHECK(b.censored);
  auto c = encode_mtlr_target({99.0, false}, g);
  CHECK(c.y == std::vector<std::uint8_t>{0, 0, 0, 1});
  // left-closed bins
  CHECK(encode_mtlr_target({20.0, true}, g).y == std::vector<std::uint8_t>{0, 0, 1, 0});
  CHECK_THROWS_AS(encode_mtlr_target({0.0, true}, g), ShapeError);
  CHECK_THROWS_AS(encode_mtlr_target({-3.0, false}, g), ShapeError);
}

TEST_CASE("mtlr_nll examples") {
  std::vector<MTLRTarget> unc{{{1, 0, 0, 0}, false}};
  std::vector<double> z0(4, 0.0);
  CHECK(std::abs(mtlr_nll(z0, 4, unc) - std::log(4.0)) < 1e-12);
  CHECK(std::abs(mtlr_nll(z0, 4, unc) - 1.386294) < 1e-6);

  std::vector<MTLRTarget> cen{{{0, 0, 1, 1}, true}};
  CHECK(std::abs(mtlr_nll(z0, 4, cen) - std::log(2.0)) < 1e-12);

  std::vector<double> sharp{30.0, 0.0, 0.0, 0.0};
  CHECK(mtlr_nll(sharp, 4, unc) < 1e-9);

  CHECK_THROWS_AS(mtlr_nll(std::vector<double>{}, 4, std::vector<MTLRTarget>{}), ShapeError);
  CHECK_THROWS_AS(mtlr_nll(std::vector<double>{NAN, 0, 0, 0}, 4, unc), NumericError);
  // sum vs mean reduction
  std::vector<MTLRTarget> two{unc[0], cen[0]};
  std::vector<double> z8(8, 0.0);
  CHECK(std::abs(mtlr_nll(z8, 4, two, Reduction::sum) - 2.0 * mtlr_nll(z8, 4, two)) < 1e-12);
}

TEST_CASE("mtlr_nll matches enumeration of event-bin assignments") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t bins = 2 + uniform_index(rng, 5);
    std::vector<double> z(bins);
    for (auto& v : z) v = uniform(rng, -4.0, 4.0);
    const auto t = random_target(bins, rng);
    std::vector<MTLRTarget> ts{t};
    CHECK(std::abs(mtlr_nll(z, bins, ts) - enumerated_nll(z, t)) < 1e-10);
  }
}

TEST_CASE("mtlr_nll gradient matches finite differences") {
  Rng rng(4);
  std::vector<MTLRTarget> targets;
  for (int i = 0; i < 3; ++i) targets.push_back(random_target(4, rng));
  targets[0].censored = false;
  targets[0].y = {0, 1, 0, 0};
  targets[1].censored = true;
  targets[1].y = {0, 0, 1, 1};
  std::vector<double> z(12);
  for (auto& v : z) v = uniform(rng, -2.0, 2.0);
  std::vector<Tensor> in{Tensor::matrix(3, 4, z)};
  const double err = grad_check(
      [&](Graph& g, std::span<const Tensor> x) { return mtlr_nll(g, x[0], targets); }, in, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("survival_curve and risk_score") {
  auto s = survival_curve(std::vector<double>{0, 0, 0, 0});
  const std::vector<double> expect{0.75, 0.5, 0.25, 0.0};
  for (int i = 0; i < 4; ++i) CHECK(std::abs(s[i] - expect[i]) < 1e-15);

  auto last = survival_curve(std::vector<double>{-800, -800, -800, 0});
  CHECK(last[0] == doctest::Approx(1.0));
  CHECK(last[2] == doctest::Approx(1.0));
  CHECK(last[3] == 0.0);
  CHECK(std::abs(risk_score(std::vector<double>{-800, -800, -800, 0}) + 3.0) < 1e-12);
  CHECK(std::abs(risk_score(std::vector<double>{0, -800, -800, -800})) < 1e-12);
  CHECK_THROWS_AS(survival_curve(std::vector<double>{0, INFINITY}), NumericError);

  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> z(2 + uniform_index(rng, 10));
    for (auto& v : z) v = uniform(rng, -6, 6);
    auto c = survival_curve(z);
    for (std::size_t j = 0; j < c.size(); ++j) {
      CHECK(c[j] >= 0.0);
      CHECK(c[j] <= 1.0);
      if (j) CHECK(c[j] <= c[j - 1]);
    }
    CHECK(c.back() == 0.0);
    // moving probability mass from a later bin to an earlier one raises risk
    const std::size_t a = uniform_index(rng, z.size() - 1);
    const std::size_t b = a + 1 + uniform_index(rng, z.size() - a - 1);
    std::vector<double> prob(z.size());
    double tot = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) tot += (prob[j] = std::exp(z[j]));
    for (auto& v : prob) v /= tot;
    const double delta = 0.5 * prob[b];
    auto shifted = z;
    shifted[a] = std::log(prob[a] + delta);
    shifted[b] = std::log(prob[b] - delta);
    for (std::size_t j = 0; j < z.size(); ++j)
      if (j != a && j != b) shifted[j] = std::log(prob[j]);
    CHECK(risk_score(shifted) > risk_score(z));
  }
}

TEST_CASE("weighted_censored_bce") {
  for (int y : {0, 1}) CHECK(std::abs(weighted_censored_bce(0.5, y) - std::log(2.0)) < 1e-15);
  CHECK(weighted_censored_bce(1.0 - 1e-13, 1) < 1e-11);
  CHECK(std::abs(weighted_censored_bce(0.25, 1, {1.0, 2.0}) - 2.0 * std::log(4.0)) < 1e-12);
  CHECK(std::abs(2.0 * std::log(4.0) - 2.772589) < 1e-6);
  CHECK_THROWS_AS(weighted_censored_bce(0.0, 1), ShapeError);
  CHECK_THROWS_AS(weighted_censored_bce(1.0, 0), ShapeError);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const double p = uniform(rng, 0.001, 0.999);
    const int y = bernoulli(rng, 0.5);
    CHECK(std::abs(weighted_censored_bce(p, y) - log_loss(p, y)) < 1e-15);
  }
}

TEST_CASE("weighted_bce_with_logits agrees with the probability form and its gradient") {
  Rng rng(12);
  std::vector<double> z(6);
  for (auto& v : z) v = uniform(rng, -3, 3);
  std::vector<int> y{1, 0, 0, 1, 0, 1};
  ClassWeights w{0.7, 1.9};
  Graph g;
  auto l = weighted_bce_with_logits(g, Tensor::vector(z), y, w);
  double direct = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) direct += weighted_censored_bce(1 / (1 + std::exp(-z[i])), y[i], w);
  CHECK(std::abs(l.item() - direct / 6.0) < 1e-12);
  std::vector<Tensor> in{Tensor::vector(z)};
  CHECK(grad_check([&](Graph& gg, std::span<const Tensor> x) { return weighted_bce_with_logits(gg, x[0], y, w); },
                   in) < 1e-4);
}

TEST_CASE("class_weights") {
  std::vector<int> bal{0, 1, 0, 1};
  auto w = class_weights(bal);
  CHECK(w.w0 == 1.0);
  CHECK(w.w1 == 1.0);
  std::vector<int> skew(100, 0);
  for (int i = 0; i < 10; ++i) skew[i] = 1;
  auto s = class_weights(skew);
  CHECK(std::abs(s.w0 - 100.0 / 180.0) < 1e-15);
  CHECK(s.w1 == 5.0);
  CHECK(std::abs(s.w0 * 90 - s.w1 * 10) < 1e-12);
  CHECK_THROWS_AS(class_weights(std::vector<int>{0, 0, 0}), ShapeError);
}

TEST_CASE("soft_dice_loss") {
  std::vector<double> truth{1, 1, 0, 0, 1};
  CHECK(soft_dice_loss(truth, truth) < 1e-8);
  std::vector<double> other{0, 0, 1, 1, 0};
  CHECK(std::abs(soft_dice_loss(other, truth) - 1.0) < 1e-12);
  std::vector<double> ones(50, 1.0), halves(50, 0.5);
  CHECK(std::abs(soft_dice_loss(halves, ones) - 1.0 / 3.0) < 1e-9);
  CHECK_THROWS_AS(soft_dice_loss(ones, truth), ShapeError);

  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> p(20), t(20), b(20);
    for (std::size_t j = 0; j < 20; ++j) {
      p[j] = uniform01(rng);
      t[j] = bernoulli(rng, 0.4);
      b[j] = bernoulli(rng, 0.4);
    }
    const double l = soft_dice_loss(p, t);
    CHECK(l >= 0.0);
    CHECK(l <= 1.0);
    CHECK(std::abs(soft_dice_loss(b, t) - soft_dice_loss(t, b)) < 1e-15);
  }
  std::vector<double> p(10);
  for (auto& v : p) v = uniform(rng, 0.1, 0.9);
  std::vector<double> t{1, 0, 1, 1, 0, 0, 1, 0, 1, 0};
  std::vector<Tensor> in{Tensor::vector(p)};
  CHECK(grad_check([&](Graph& g, std::span<const Tensor> x) { return soft_dice_loss(g, x[0], t); }, in) < 1e-4);
}

TEST_CASE("landmark label") {
  CHECK(landmark_label({12.0, true}) == 1);
  CHECK(landmark_label({24.0, true}) == 1);
  CHECK(landmark_label({30.0, true}) == 0);
  CHECK(landmark_label({12.0, false}) == 0);
}
