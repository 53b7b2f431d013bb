#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "grpo_prm/core_types.hpp"
#include "grpo_prm/exact_sum.hpp"
#include "grpo_prm/rng.hpp"

using namespace grpo_prm;

TEST_CASE("reward statistics of the reference group") {
  const Group g = fixtures::reference_group();
  const RewardStats s = reward_stats(g);
  CHECK(s.mean == doctest::Approx(fixtures::oracle::reward_mean).epsilon(1e-15));
  CHECK(s.std == doctest::Approx(fixtures::oracle::sample_std).epsilon(1e-15));
  CHECK_FALSE(s.degenerate());

  const RewardStats pop = reward_stats(g, StdMode::population);
  CHECK(pop.std == doctest::Approx(std::sqrt(102.0 / 864.0)).epsilon(1e-15));
}

TEST_CASE("outcome advantages of the reference group") {
  const auto a = outcome_advantages(fixtures::reference_group(), reward_stats(fixtures::reference_group()));
  REQUIRE(a.size() == 6);
  const double expected[] = {fixtures::oracle::a_shared, fixtures::oracle::a_shared, fixtures::oracle::a_best,
                             fixtures::oracle::a_zero,   fixtures::oracle::a_zero,   fixtures::oracle::a_shared};
  for (std::size_t i = 0; i < 6; ++i) CHECK(a[i] == doctest::Approx(expected[i]).epsilon(1e-14));
}

TEST_CASE("constant rewards give zero advantages") {
  Group g = fixtures::make_group({{1}, {2}, {3}}, {0.7, 0.7, 0.7});
  const RewardStats s = reward_stats(g);
  CHECK(s.degenerate());
  for (double v : outcome_advantages(g, s)) CHECK(v == 0.0);
  CHECK(normalize_reward(5.0, s) == 0.0);
}

TEST_CASE("std below epsilon counts as degenerate") {
  Group g = fixtures::make_group({{1}, {2}}, {1.0, 1.0 + 1e-12});
  CHECK(reward_stats(g, StdMode::sample, 1e-8).degenerate());
  CHECK_FALSE(reward_stats(g, StdMode::sample, 1e-14).degenerate());
}

TEST_CASE("advantage properties over random reward vectors") {
  Engine rng(derive_seed(11, 0));
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = uniform_between(rng, 2, 16);
    Group g;
    for (std::size_t i = 0; i < k; ++i) g.trajectories.push_back(Trajectory{{}, uniform01(rng) * 4 - 2, {}, {}, {}});
    const auto stats = reward_stats(g);
    const auto a = outcome_advantages(g, stats);
    // Zero sum and unit sample variance.
    CHECK(std::abs(exact_sum(a)) < 1e-12);
    double sq = 0.0;
    for (double v : a) sq += v * v;
    CHECK(sq / static_cast<double>(k - 1) == doctest::Approx(1.0).epsilon(1e-12));

    // Positive affine maps of the rewards leave advantages unchanged.
    Group h = g;
    const double scale = 0.5 + uniform01(rng) * 3, shift = uniform01(rng) * 10 - 5;
    for (auto& t : h.trajectories) t.reward = scale * t.reward + shift;
    const auto b = outcome_advantages(h, reward_stats(h));
    for (std::size_t i = 0; i < k; ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-9));

    // Permuting completions permutes advantages.
    std::vector<std::size_t> perm(k);
    for (std::size_t i = 0; i < k; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    Group p;
    for (auto i : perm) p.trajectories.push_back(g.trajectories[i]);
    const auto c = outcome_advantages(p, reward_stats(p));
    for (std::size_t j = 0; j < k; ++j) CHECK(c[j] == a[perm[j]]);
  }
}

TEST_CASE("validation rejects malformed input") {
  CHECK_THROWS_AS(fixtures::make_group({{1}}, {1.0}).validate(), std::invalid_argument);
  Group g = fixtures::make_group({{1, 2}, {3}}, {0, 1});
  g.trajectories[0].logp_new = std::vector<double>{-0.1};
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g.trajectories[0].logp_new = std::vector<double>{-0.1, 0.2};
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g.trajectories[0].logp_new = std::vector<double>{-0.1, -0.2};
  CHECK_NOTHROW(g.validate());
  g.trajectories[1].reward = NAN;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g.trajectories[1].reward = 0;
  g.trajectories[1].tokens = {-3};
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("std mode parsing") {
  CHECK(parse_std_mode("sample") == StdMode::sample);
  CHECK(parse_std_mode("population") == StdMode::population);
  CHECK(to_string(StdMode::population) == "population");
  CHECK_THROWS_AS(parse_std_mode("biased"), std::invalid_argument);
}

TEST_CASE("exact summation is order independent and merges exactly") {
  Engine rng(derive_seed(3, 1));
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> xs;
    const std::size_t n = uniform_between(rng, 1, 300);
    for (std::size_t i = 0; i < n; ++i) {
      xs.push_back((uniform01(rng) - 0.5) * std::ldexp(1.0, static_cast<int>(uniform_below(rng, 80)) - 40));
    }
    const double forward = exact_sum(xs);
    std::shuffle(xs.begin(), xs.end(), rng);
    CHECK(exact_sum(xs) == forward);
    const std::size_t cut = uniform_below(rng, n + 1);
    ExactSum left, right;
    for (std::size_t i = 0; i < cut; ++i) left.add(xs[i]);
    for (std::size_t i = cut; i < n; ++i) right.add(xs[i]);
    left.merge(right);
    CHECK(left.value() == forward);
    CHECK(ExactSum::from_partials(left.partials()).value() == forward);
  }
  // Catastrophic cancellation is exact.
  CHECK(exact_sum(std::vector<double>{1e100, 1.0, -1e100}) == 1.0);
  CHECK(exact_sum(std::vector<double>{0.1, 0.2, -0.3}) == std::ldexp(1.0, -55));
}

TEST_CASE("token value tables follow trajectory lengths") {
  const auto v = make_token_values(fixtures::reference_group(), 2.5);
  REQUIRE(v.size() == 6);
  CHECK(v[4].size() == 8);
  CHECK(v[5] == std::vector<double>{2.5, 2.5});
  CHECK(fixtures::reference_group().total_tokens() == 34);
  CHECK(fixtures::reference_group().max_length() == 8);
}
