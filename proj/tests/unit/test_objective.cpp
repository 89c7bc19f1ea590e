#include <doctest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "sed/core_math.hpp"
#include "sed/objective.hpp"

using namespace sed;

namespace {

Tensor3 tensor(const std::vector<std::vector<std::vector<double>>>& v) {
  Tensor3 t(v.size(), v[0].size(), v[0][0].size());
  for (std::size_t n = 0; n < v.size(); ++n) {
    for (std::size_t m = 0; m < v[n].size(); ++m) {
      for (std::size_t k = 0; k < v[n][m].size(); ++k) t(n, m, k) = v[n][m][k];
    }
  }
  return t;
}

Tensor3 random_tensor(oracle::Gen& g, std::size_t b, std::size_t m, std::size_t c, double scale) {
  Tensor3 t(b, m, c);
  for (auto& v : t.data) v = g.uniform(-scale, scale);
  return t;
}

std::vector<std::uint32_t> random_labels(oracle::Gen& g, std::size_t b, std::size_t c) {
  std::vector<std::uint32_t> y(b);
  for (auto& v : y) v = static_cast<std::uint32_t>(g.index(c));
  return y;
}

// Logits whose softmax is p up to rounding.
std::vector<double> logits_of(const std::vector<double>& p) {
  std::vector<double> z;
  for (double v : p) z.push_back(std::log(v));
  return z;
}

}  // namespace

TEST_CASE("main loss examples") {
  const std::vector<double> uniform = {0, 0, 0, 0};
  CHECK(main_loss(uniform, 2, 0).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  const std::vector<double> one = {0.3, -1.2, 2.0};
  CHECK(main_loss(one, 1, 2).value == cross_entropy(one, 2));

  const std::vector<double> two = {0, std::log(3.0), 0, 0};
  CHECK(main_loss(two, 2, 0).value == doctest::Approx(1.039720770839918).epsilon(1e-13));
}

TEST_CASE("main loss gradient is the member-averaged CE gradient") {
  oracle::Gen g(31);
  for (int t = 0; t < 50; ++t) {
    const std::size_t m = g.range(1, 4), c = g.range(2, 5);
    auto z = g.vec(m * c, -3, 3);
    const std::size_t y = g.index(c);
    const auto r = main_loss(z, m, y);
    for (std::size_t i = 0; i < z.size(); ++i) {
      auto up = z, down = z;
      up[i] += 1e-6;
      down[i] -= 1e-6;
      const double fd = (main_loss(up, m, y).value - main_loss(down, m, y).value) / 2e-6;
      CHECK(std::fabs(fd - r.grad[i]) <= 1e-7);
    }
  }
}

TEST_CASE("a2d pair worked examples") {
  const auto disagree = a2d_pair(std::vector<double>{1, 0}, std::vector<double>{0, 1});
  CHECK(disagree.value == 0.0);

  const auto agree = a2d_pair(std::vector<double>{1, 0}, std::vector<double>{1, 0});
  CHECK(agree.value == doctest::Approx(-std::log(1e-12)).epsilon(1e-14));
  CHECK(agree.value == doctest::Approx(27.631021115928547));
  for (double v : agree.grad_m) CHECK(v == 0.0);
  for (double v : agree.grad_l) CHECK(v == 0.0);

  const auto r = a2d_pair(std::vector<double>{0.6, 0.4}, std::vector<double>{0.3, 0.7});
  CHECK(r.reference_class == 0);
  CHECK(std::fabs(r.value - 0.616186) <= 1e-6);
  CHECK(r.value == doctest::Approx(-std::log(0.54)).epsilon(1e-14));
}

TEST_CASE("a2d pair is symmetric for a fixed reference class") {
  oracle::Gen g(32);
  for (int t = 0; t < 500; ++t) {
    const std::size_t c = g.range(2, 6);
    const auto p = g.simplex(c), q = g.simplex(c);
    const std::size_t ref = g.index(c);
    CHECK(std::fabs(a2d_pair(p, q, ref).value - a2d_pair(q, p, ref).value) <= 1e-12);
  }
}

TEST_CASE("a2d pair is zero only at full disagreement and grows with agreement") {
  CHECK(a2d_pair(std::vector<double>{0.7, 0.3}, std::vector<double>{0.4, 0.6}).value > 0.0);
  for (double a = 0.51; a <= 1.0; a += 0.05) {
    double prev = -INFINITY;
    for (double b = 0.0; b <= 1.0; b += 0.05) {
      const double v = a2d_pair(std::vector<double>{a, 1 - a}, std::vector<double>{b, 1 - b}).value;
      CHECK(v > prev);
      prev = v;
    }
  }
  const auto full = a2d_pair(std::vector<double>{1, 0, 0}, std::vector<double>{0, 0, 1});
  CHECK(full.value == 0.0);
}

TEST_CASE("a2d pair gradient against finite differences") {
  oracle::Gen g(33);
  int checked = 0;
  while (checked < 200) {
    const std::size_t c = g.range(2, 5);
    const auto zm = g.vec(c, -3, 3), zl = g.vec(c, -3, 3);
    const auto pm = softmax(zm), pl = softmax(zl);
    const std::size_t ref = argmax_tiebreak_low(pm);
    const auto r = a2d_pair(pm, pl);
    auto value = [&](const std::vector<double>& a, const std::vector<double>& b) {
      return oracle::a2d(oracle::softmax(oracle::widen(a)), oracle::softmax(oracle::widen(b)), ref);
    };
    for (std::size_t k = 0; k < c; ++k) {
      auto up = zm, down = zm;
      up[k] += 1e-5;
      down[k] -= 1e-5;
      CHECK(oracle::close_rel(r.grad_m[k], (value(up, zl) - value(down, zl)) / 2e-5L, 1e-6, 1e-4));
      up = zl;
      down = zl;
      up[k] += 1e-5;
      down[k] -= 1e-5;
      CHECK(oracle::close_rel(r.grad_l[k], (value(zm, up) - value(zm, down)) / 2e-5L, 1e-6, 1e-4));
    }
    ++checked;
  }
}

TEST_CASE("a2d pair handles one-hot inputs") {
  const std::vector<double> a = {0, 1, 0}, b = {0, 1, 0}, c = {1, 0, 0};
  for (const auto& r : {a2d_pair(a, b), a2d_pair(a, c), a2d_pair(c, a)}) {
    CHECK(std::isfinite(r.value));
    CHECK(all_finite(r.grad_m));
    CHECK(all_finite(r.grad_l));
  }
}

TEST_CASE("sample weights") {
  CHECK(alpha_from_ce(std::vector<double>{1.0, 3.0}) == std::vector<double>{0.25, 0.75});
  for (double v : alpha_from_ce(std::vector<double>{0.4, 0.4, 0.4})) CHECK(v == doctest::Approx(1 / 0.4));

  // Confident correct predictions: CE underflows towards 0 but stays finite.
  const Tensor3 sure = tensor({{{800, -800}, {800, -800}}, {{-800, 800}, {-800, 800}}});
  const auto w = sample_weights(sure, std::vector<std::uint32_t>{0, 1});
  for (double a : w.alpha) {
    CHECK(std::isfinite(a));
    CHECK(a >= 0.0);
  }

  oracle::Gen g(34);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t b = g.range(1, 16), m = g.range(1, 5), c = g.range(2, 6);
    const auto logits = random_tensor(g, b, m, c, 4);
    const auto labels = random_labels(g, b, c);
    const auto sw = sample_weights(logits, labels);
    if (sw.batch_mean_ce <= 1e-6) continue;
    const double mean_alpha = std::accumulate(sw.alpha.begin(), sw.alpha.end(), 0.0) / b;
    CHECK(std::fabs(mean_alpha * sw.batch_mean_ce - 1.0) <= 1e-9);
  }
}

TEST_CASE("sed batch loss composes main, alpha and a2d") {
  // Closed form for one sample with CE 2 (alpha 1/2) and A2D 0.616186.
  const double lambda = 1.7;
  const double alpha = alpha_from_ce(std::vector<double>{2.0})[0];
  CHECK(alpha == 0.5);
  CHECK(2.0 + lambda * alpha * 0.616186 == doctest::Approx(2.0 + lambda * 0.5 * 0.616186));

  // The same composition on real logits.
  const auto z1 = logits_of({0.6, 0.4}), z2 = logits_of({0.3, 0.7});
  const Tensor3 logits = tensor({{z1, z2}});
  const std::vector<std::uint32_t> y = {0};
  const auto r = sed_batch_loss(logits, y, std::vector<std::size_t>{0, 1}, lambda);
  const auto w = sample_weights(logits, y);
  const double main = (cross_entropy(z1, 0) + cross_entropy(z2, 0)) / 2;
  const double a2d = -std::log(0.54);
  CHECK(r.main_value == doctest::Approx(main).epsilon(1e-14));
  CHECK(r.div_value == doctest::Approx(w.alpha[0] * a2d).epsilon(1e-12));
  CHECK(r.value == doctest::Approx(main + lambda * w.alpha[0] * a2d).epsilon(1e-12));
}

TEST_CASE("lambda zero bit-equals the main loss path") {
  oracle::Gen g(35);
  for (int t = 0; t < 100; ++t) {
    const std::size_t b = g.range(1, 8), m = g.range(2, 5), c = g.range(2, 5);
    const auto logits = random_tensor(g, b, m, c, 3);
    const auto labels = random_labels(g, b, c);
    const std::vector<std::size_t> pair = {0, 1};
    const auto r = sed_batch_loss(logits, labels, pair, 0.0);
    Tensor3 grad(b, m, c);
    double total = 0;
    for (std::size_t n = 0; n < b; ++n) {
      const auto ml = main_loss(std::span<const double>(logits.data).subspan(n * m * c, m * c), m, labels[n]);
      total += ml.value;
      for (std::size_t i = 0; i < m * c; ++i) grad.data[n * m * c + i] = ml.grad[i] * (1.0 / static_cast<double>(b));
    }
    CHECK(r.value == total * (1.0 / static_cast<double>(b)));
    CHECK(r.grad == grad);
    CHECK(r.div_value == 0.0);
    CHECK(r.mean_alpha == 0.0);
  }
}

TEST_CASE("pair subset validation") {
  const Tensor3 logits(2, 3, 2);
  const std::vector<std::uint32_t> y = {0, 1};
  CHECK_THROWS_AS(sed_batch_loss(logits, y, std::vector<std::size_t>{1, 1}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(sed_batch_loss(logits, y, std::vector<std::size_t>{0}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(sed_batch_loss(logits, y, std::vector<std::size_t>{0, 3}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(sed_batch_loss(logits, y, std::vector<std::size_t>{0, 1}, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(sed_batch_loss(logits, std::vector<std::uint32_t>{0, 2}, std::vector<std::size_t>{0, 1}, 1.0),
                  std::invalid_argument);
}

TEST_CASE("members outside the subset get no disagreement gradient") {
  oracle::Gen g(36);
  const auto logits = random_tensor(g, 4, 4, 3, 2);
  const auto labels = random_labels(g, 4, 3);
  const std::vector<std::size_t> subset = {1, 3};
  const auto with = sed_batch_loss(logits, labels, subset, 2.0);
  const auto without = sed_batch_loss(logits, labels, subset, 0.0);
  for (std::size_t n = 0; n < 4; ++n) {
    for (std::size_t m : {0u, 2u}) {
      for (std::size_t k = 0; k < 3; ++k) CHECK(with.grad(n, m, k) == without.grad(n, m, k));
    }
  }
}

TEST_CASE("full objective gradient through the heads") {
  oracle::Gen g(37);
  int done = 0, worst_fail = 0;
  double worst = 0;
  while (done < 60) {
    const auto in = oracle::random_instance(g, 3, 4, 4, 8, 6);
    const auto out = oracle::check_instance(in, 1e-6, 1e-4);
    if (!out) continue;
    ++done;
    worst = std::max(worst, out->worst);
    worst_fail += static_cast<int>(out->failed);
  }
  INFO("worst relative error " << worst);
  CHECK(worst_fail == 0);
}

TEST_CASE("explicit disagreement loss") {
  const double a = 0.8;
  const Tensor3 same = tensor({{logits_of({a, 1 - a}), logits_of({a, 1 - a})}});
  const auto r = explicit_ood_div_loss(same, std::vector<std::size_t>{0, 1});
  CHECK(r.value == doctest::Approx(-std::log(2 * a * (1 - a))).epsilon(1e-12));
  CHECK(r.value == r.div_value);

  const Tensor3 apart = tensor({{{30, -30}, {-30, 30}}, {{-30, 30}, {30, -30}}});
  CHECK(explicit_ood_div_loss(apart, std::vector<std::size_t>{0, 1}).value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("selected disagreement loss splits rows") {
  oracle::Gen g(38);
  const auto logits = random_tensor(g, 3, 2, 3, 2);
  const std::vector<std::uint32_t> y = {0, 2, 1};
  const std::vector<std::uint8_t> sel = {1, 0, 0};
  const std::vector<std::size_t> pair = {0, 1};
  const auto r = selected_disagreement_loss(logits, y, sel, pair, 0.5);
  const auto p0 = softmax(logits.at(0, 0)), p1 = softmax(logits.at(0, 1));
  double expect = 0.5 * a2d_pair(p0, p1).value;
  for (std::size_t n = 1; n < 3; ++n) {
    expect += (cross_entropy(logits.at(n, 0), y[n]) + cross_entropy(logits.at(n, 1), y[n])) / 2;
  }
  CHECK(r.value == doctest::Approx(expect / 3).epsilon(1e-12));
}
