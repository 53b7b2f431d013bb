#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

#include "grpo_prm/core_types.hpp"
#include "grpo_prm/process_tree.hpp"
#include "grpo_prm/step_rewards.hpp"

namespace grpo_prm {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ObjectiveConfig {
  double beta = 0.04;              // KL coefficient on D
  bool assume_unit_ratio = true;   // P == 1 (single update per batch)

  void validate() const;
};

/**
 * Token-mean surrogate objective (to be maximized). value equals the sum of
 * per_token_terms divided by the total token count (0 for an empty group).
 * advantage_total and kl_total are the weighted sums of P*A and D before the
 * beta multiplier.
 */
struct ObjectiveReport {
  double value = 0.0;
  TokenValues per_token_terms;
  double advantage_total = 0.0;
  double kl_total = 0.0;
  std::size_t token_count = 0;

  /// The quantity a trainer minimizes.
  double loss() const noexcept { return -value; }
};

/// P_{i,t} = exp(logp_new - logp_old), or 1 everywhere under assume_unit_ratio.
TokenValues ratio_terms(const Group& group, const ObjectiveConfig& config);

/// k3 divergence estimator for one token.
double kl_k3(double logp_ref, double logp_new) noexcept;

/// D_{i,t} per token; all zero when beta == 0.
TokenValues kl_terms(const Group& group, const ObjectiveConfig& config);

ObjectiveReport objective_grpo(const Group& group, std::span<const double> advantages,
                               const ObjectiveConfig& config);

ObjectiveReport objective_prm(const Group& group, const StepAdvantages& step,
                              const ObjectiveConfig& config);

/// Each token's GRPO term divided by the size of its owning process set.
ObjectiveReport objective_lambda(const Group& group, const ProcessTree& tree,
                                 const TokenAssignment& assignment,
                                 std::span<const double> advantages, const ObjectiveConfig& config);

/// 1 / |lambda^(i,t)| per token.
TokenValues lambda_weights(const ProcessTree& tree, const TokenAssignment& assignment);

}  // namespace grpo_prm
