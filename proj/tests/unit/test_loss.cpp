#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ciuseq/loss.hpp"
#include "ciuseq/rng.hpp"

using namespace ciuseq;

TEST_CASE("bce_loss at zero logits equals ln 2 for any targets") {
  Rng rng(11);
  const std::vector<double> zeros(kCiuCount, 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> y(kCiuCount);
    for (auto& v : y) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    REQUIRE(bce_loss(zeros, y) == Catch::Approx(std::log(2.0)).epsilon(0).margin(1e-12));
  }
}

TEST_CASE("bce_loss matches the direct definition on moderate logits") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(kCiuCount), y(kCiuCount);
    for (auto& v : s) v = rng.uniform(-8.0, 8.0);
    for (auto& v : y) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    double direct = 0.0;
    for (int k = 0; k < kCiuCount; ++k) {
      const double p = 1.0 / (1.0 + std::exp(-s[static_cast<std::size_t>(k)]));
      direct -= y[static_cast<std::size_t>(k)] * std::log(p) +
                (1.0 - y[static_cast<std::size_t>(k)]) * std::log(1.0 - p);
    }
    direct /= kCiuCount;
    REQUIRE(bce_loss(s, y) == Catch::Approx(direct).epsilon(1e-10));
  }
}

TEST_CASE("bce_loss stays finite for extreme logits") {
  std::vector<double> s(kCiuCount, 1000.0);
  std::vector<double> y(kCiuCount, 0.0);
  REQUIRE(std::isfinite(bce_loss(s, y)));
  for (auto& v : s) v = -1000.0;
  for (auto& v : y) v = 1.0;
  REQUIRE(std::isfinite(bce_loss(s, y)));
}

TEST_CASE("rank_loss hand cases") {
  std::vector<double> s(kCiuCount, 0.0);
  const auto boy = static_cast<std::size_t>(ciu_code(CiuId::Boy));
  const auto cookie = static_cast<std::size_t>(ciu_code(CiuId::Cookie));
  const std::vector<CiuId> order = {CiuId::Boy, CiuId::Cookie};

  s[boy] = 2.0;
  s[cookie] = 0.0;
  REQUIRE(rank_loss(s, order, 1.0) == Catch::Approx(0.0).margin(1e-12));

  s[boy] = 0.0;
  s[cookie] = 2.0;
  REQUIRE(rank_loss(s, order, 1.0) == Catch::Approx(3.0).margin(1e-12));

  // Three items: margin-1 hinges over the 3 pairs.
  const std::vector<CiuId> abc = {CiuId::Boy, CiuId::Girl, CiuId::Woman};
  const auto girl = static_cast<std::size_t>(ciu_code(CiuId::Girl));
  const auto woman = static_cast<std::size_t>(ciu_code(CiuId::Woman));
  s.assign(kCiuCount, 0.0);
  s[boy] = 3.0;
  s[girl] = 2.0;
  s[woman] = 1.0;
  REQUIRE(rank_loss(s, abc, 1.0) == Catch::Approx(0.0).margin(1e-12));
  s[boy] = 1.0;
  s[girl] = 2.0;
  s[woman] = 3.0;
  REQUIRE(rank_loss(s, abc, 1.0) == Catch::Approx(7.0 / 3.0).margin(1e-12));
}

TEST_CASE("rank_loss with fewer than two items is zero") {
  const std::vector<double> s(kCiuCount, 5.0);
  REQUIRE(rank_loss(s, std::vector<CiuId>{}, 1.0) == 0.0);
  REQUIRE(rank_loss(s, std::vector<CiuId>{CiuId::Jar}, 1.0) == 0.0);
}

TEST_CASE("rank_loss is invariant under a common logit shift") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(kCiuCount);
    for (auto& v : s) v = rng.uniform(-3.0, 3.0);
    const std::vector<CiuId> order = {CiuId::Boy, CiuId::Jar, CiuId::Sink, CiuId::Water};
    const double base = rank_loss(s, order, 1.0);
    std::vector<double> shifted = s;
    const double delta = rng.uniform(-10.0, 10.0);
    for (auto& v : shifted) v += delta;
    REQUIRE(rank_loss(shifted, order, 1.0) == Catch::Approx(base).margin(1e-9));
  }
}

TEST_CASE("rank_loss is non-negative and grows with margin") {
  Rng rng(14);
  const std::vector<CiuId> order = {CiuId::Boy, CiuId::Girl, CiuId::Stool};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(kCiuCount);
    for (auto& v : s) v = rng.uniform(-2.0, 2.0);
    const double l0 = rank_loss(s, order, 0.0);
    const double l1 = rank_loss(s, order, 1.0);
    const double l2 = rank_loss(s, order, 2.0);
    REQUIRE(l0 >= 0.0);
    REQUIRE(l1 >= l0);
    REQUIRE(l2 >= l1);
  }
}

TEST_CASE("total_loss mixes the two terms exactly") {
  Rng rng(15);
  for (const double lambda : {0.0, 0.1, 1.0}) {
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> s(kCiuCount), y(kCiuCount, 0.0);
      for (auto& v : s) v = rng.uniform(-4.0, 4.0);
      const std::vector<CiuId> order = {CiuId::Cookie, CiuId::Jar, CiuId::Stool};
      for (CiuId id : order) y[static_cast<std::size_t>(ciu_code(id))] = 1.0;
      const double expected =
          (1.0 - lambda) * bce_loss(s, y) + lambda * rank_loss(s, order, 1.0);
      REQUIRE(total_loss(s, y, order, 1.0, lambda) == Catch::Approx(expected).epsilon(0).margin(1e-15));
    }
  }
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(16);
  const std::vector<CiuId> order = {CiuId::Boy, CiuId::Cookie, CiuId::Window};
  std::vector<double> s(kCiuCount), y(kCiuCount, 0.0);
  for (auto& v : s) v = rng.uniform(-2.0, 2.0);
  for (CiuId id : order) y[static_cast<std::size_t>(ciu_code(id))] = 1.0;

  std::vector<double> grad(kCiuCount, 0.0);
  total_loss_grad(s, y, order, 1.0, 0.1, grad);

  const double h = 1e-6;
  for (int k = 0; k < kCiuCount; ++k) {
    std::vector<double> sp = s, sm = s;
    sp[static_cast<std::size_t>(k)] += h;
    sm[static_cast<std::size_t>(k)] -= h;
    const double fd =
        (total_loss(sp, y, order, 1.0, 0.1) - total_loss(sm, y, order, 1.0, 0.1)) / (2.0 * h);
    REQUIRE(grad[static_cast<std::size_t>(k)] == Catch::Approx(fd).epsilon(0).margin(1e-6));
  }
}

TEST_CASE("multi_hot marks exactly the labeled classes") {
  const std::vector<CiuId> labels = {CiuId::Boy, CiuId::Curtains};
  const std::vector<double> y = multi_hot(labels);
  REQUIRE(y.size() == static_cast<std::size_t>(kCiuCount));
  double sum = 0.0;
  for (double v : y) sum += v;
  REQUIRE(sum == 2.0);
  REQUIRE(y[static_cast<std::size_t>(ciu_code(CiuId::Boy))] == 1.0);
  REQUIRE(y[static_cast<std::size_t>(ciu_code(CiuId::Curtains))] == 1.0);
}
