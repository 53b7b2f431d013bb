#pragma once

#include "grpo_prm/core_types.hpp"
#include "grpo_prm/process_tree.hpp"

namespace grpo_prm {

/// Monte Carlo step reward: mean outcome reward of the node's members.
/// Returns the cached value when the tree was built from this group.
double step_reward(const ProcessNode& node, const Group& group);

/// Group-normalized step reward of a node.
double step_advantage(const ProcessNode& node, const Group& group, const RewardStats& stats);

struct StepAdvantages {
  TokenValues token_reward;     // R_{i,t}
  TokenValues token_advantage;  // A_{i,t}
};

/// Step reward and advantage of every token, taken from its owning node.
/// Normalization uses whole-group statistics, never per-sibling ones.
StepAdvantages step_advantages(const ProcessTree& tree, const TokenAssignment& assignment,
                               const Group& group, const RewardStats& stats);

}  // namespace grpo_prm
