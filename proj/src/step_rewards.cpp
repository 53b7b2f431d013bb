#include "grpo_prm/step_rewards.hpp"

#include "grpo_prm/exact_sum.hpp"

namespace grpo_prm {

double step_reward(const ProcessNode& node, const Group& group) {
  if (node.step_reward) return *node.step_reward;
  ExactSum total;
  for (std::size_t m : node.members) total.add(group.trajectories.at(m).reward);
  return total.value() / static_cast<double>(node.members.size());
}

double step_advantage(const ProcessNode& node, const Group& group, const RewardStats& stats) {
  return normalize_reward(step_reward(node, group), stats);
}

StepAdvantages step_advantages(const ProcessTree& tree, const TokenAssignment& assignment,
                               const Group& group, const RewardStats& stats) {
  std::vector<double> node_reward(tree.node_count());
  std::vector<double> node_advantage(tree.node_count());
  for (const auto& n : tree.nodes()) {
    node_reward[n.id] = step_reward(n, group);
    node_advantage[n.id] = normalize_reward(node_reward[n.id], stats);
  }
  StepAdvantages out{make_token_values(group), make_token_values(group)};
  for (std::size_t i = 0; i < group.size(); ++i) {
    for (std::size_t t = 0; t < group.trajectories[i].length(); ++t) {
      const NodeId owner = assignment.at(i, t);
      out.token_reward[i][t] = node_reward[owner];
      out.token_advantage[i][t] = node_advantage[owner];
    }
  }
  return out;
}

}  // namespace grpo_prm
