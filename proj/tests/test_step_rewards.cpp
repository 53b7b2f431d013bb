#include "doctest.h"
#include "fixtures.hpp"
#include "grpo_prm/equivalence.hpp"
#include "grpo_prm/exact_sum.hpp"
#include "grpo_prm/step_rewards.hpp"

using namespace grpo_prm;

namespace {

const ProcessNode& node_with(const ProcessTree& tree, std::vector<std::size_t> members) {
  for (const auto& n : tree.nodes()) {
    if (n.members == members) return n;
  }
  throw std::logic_error("node not found");
}

}  // namespace

TEST_CASE("step advantages of the reference group") {
  const Group g = fixtures::reference_group();
  const auto tree = build_process_tree(g);
  const auto stats = reward_stats(g);
  CHECK(step_reward(node_with(tree, {2, 3, 4}), g) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(step_advantage(node_with(tree, {2, 3, 4}), g, stats) ==
        doctest::Approx(fixtures::oracle::step_adv_prefix).epsilon(1e-14));
  CHECK(step_advantage(node_with(tree, {3, 4}), g, stats) ==
        doctest::Approx(fixtures::oracle::step_adv_pair).epsilon(1e-14));
  CHECK(step_advantage(node_with(tree, {0, 1}), g, stats) ==
        doctest::Approx(fixtures::oracle::a_shared).epsilon(1e-14));
  // The shared-prefix value rounds to -0.22.
  CHECK(std::abs(step_advantage(node_with(tree, {2, 3, 4}), g, stats) + 0.22) <= 0.005);
}

TEST_CASE("token-level step values follow ownership") {
  const Group g = fixtures::reference_group();
  const auto tree = build_process_tree(g);
  const auto owner = assign_tokens(tree);
  const auto stats = reward_stats(g);
  const auto s = step_advantages(tree, owner, g, stats);
  CHECK(s.token_reward[3][0] == doctest::Approx(1.0 / 3.0));
  CHECK(s.token_reward[3][5] == 0.0);
  CHECK(s.token_advantage[3][4] == doctest::Approx(fixtures::oracle::step_adv_pair).epsilon(1e-14));
  CHECK(s.token_advantage[2][4] == doctest::Approx(fixtures::oracle::a_best).epsilon(1e-14));
  CHECK(s.token_advantage[5][0] == doctest::Approx(fixtures::oracle::a_shared).epsilon(1e-14));
}

TEST_CASE("terminal step values equal outcome values") {
  GenParams p;
  p.seed = 21;
  for (std::uint64_t idx = 0; idx < 200; ++idx) {
    const Group g = generate_random_group(p, idx);
    const auto tree = build_process_tree(g);
    const auto stats = reward_stats(g);
    const auto a = outcome_advantages(g, stats);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto& term = tree.node(tree.terminal(i));
      CHECK(step_reward(term, g) == g.trajectories[i].reward);
      CHECK(step_advantage(term, g, stats) == a[i]);
    }
  }
}

TEST_CASE("a parent's step reward is the size-weighted mean of its children") {
  GenParams p;
  p.seed = 22;
  p.reward_dist = RewardDist::uniform;
  for (std::uint64_t idx = 0; idx < 200; ++idx) {
    const Group g = generate_random_group(p, idx);
    const auto tree = build_process_tree(g);
    for (const auto& n : tree.nodes()) {
      if (n.children.empty()) continue;
      ExactSum mix;
      for (NodeId c : n.children) {
        const auto& child = tree.node(c);
        mix.add(step_reward(child, g) * static_cast<double>(child.size()));
      }
      CHECK(mix.value() / static_cast<double>(n.size()) == doctest::Approx(step_reward(n, g)).epsilon(1e-14));
    }
  }
}

TEST_CASE("trivial trees with an empty root span give A == a") {
  const Group g = fixtures::make_group({{1, 2, 3}, {2, 5}, {3}, {4, 4, 4, 4}}, {1.0, 0.0, 0.25, 0.5});
  const auto tree = build_process_tree(g);
  REQUIRE(is_trivial(tree));
  REQUIRE(tree.root().span_end == 0);
  const auto stats = reward_stats(g);
  const auto a = outcome_advantages(g, stats);
  const auto s = step_advantages(tree, assign_tokens(tree), g, stats);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (double v : s.token_advantage[i]) CHECK(v == a[i]);
  }
}

TEST_CASE("constant rewards give zero step advantages") {
  const Group g = fixtures::make_group({{1, 2}, {1, 3}, {1}}, {0.3, 0.3, 0.3});
  const auto tree = build_process_tree(g);
  const auto s = step_advantages(tree, assign_tokens(tree), g, reward_stats(g));
  for (const auto& row : s.token_advantage) {
    for (double v : row) CHECK(v == 0.0);
  }
}
