#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grpo_prm/core_types.hpp"
#include "grpo_prm/process_tree.hpp"

namespace grpo_prm {

using Context = std::vector<TokenId>;
using LogitTable = std::map<Context, std::vector<double>>;

/**
 * Tabular autoregressive policy. The context of a position is the last
 * context_order tokens of the prefix; contexts absent from the table have
 * all-zero logits. Next-token distribution = softmax(logits / temperature).
 */
class ToyPolicy {
 public:
  ToyPolicy(std::size_t vocab_size, std::size_t horizon, double temperature = 1.0,
            std::size_t context_order = 4);

  std::size_t vocab_size() const noexcept { return vocab_; }
  std::size_t horizon() const noexcept { return horizon_; }
  double temperature() const noexcept { return temperature_; }
  std::size_t context_order() const noexcept { return order_; }

  Context context_of(std::span<const TokenId> prefix) const;

  std::vector<double> logits(const Context& ctx) const;
  void set_logits(const Context& ctx, std::vector<double> values);
  const LogitTable& table() const noexcept { return table_; }

  std::vector<double> probabilities(const Context& ctx) const;
  double log_prob(std::span<const TokenId> prefix, TokenId token) const;

  /// logits += scale * gradient, entry-wise; every resulting logit must be finite.
  void apply_update(const LogitTable& gradient, double scale);

 private:
  std::size_t vocab_;
  std::size_t horizon_;
  double temperature_;
  std::size_t order_;
  LogitTable table_;
};

/**
 * Episode rules. A rollout stops after emitting terminal_token (kept in the
 * sequence) or at min(max_len, policy horizon) tokens. Completed sequences
 * missing from reward_table earn default_reward.
 */
struct ToyEnv {
  std::map<std::vector<TokenId>, double> reward_table;
  double default_reward = 0.0;
  std::optional<TokenId> terminal_token;
  std::size_t max_len = 8;

  double reward(std::span<const TokenId> sequence) const;
};

enum class ToyObjective { grpo, lambda };

std::string_view to_string(ToyObjective objective) noexcept;
ToyObjective parse_toy_objective(std::string_view text);

/// Surrogate definition used for gradients; the KL coefficient is fixed to 0.
struct SurrogateSpec {
  ToyObjective objective = ToyObjective::grpo;
  StdMode std_mode = StdMode::sample;
  double epsilon = kDefaultEpsilon;
};

struct SimConfig {
  std::uint64_t seed = 0;
  std::size_t k = 6;
  std::size_t steps = 20;
  double learn_rate = 0.5;
  ToyObjective objective = ToyObjective::grpo;
  StdMode std_mode = StdMode::sample;
  double beta = 0.0;
  double epsilon = kDefaultEpsilon;

  void validate() const;
  SurrogateSpec surrogate() const { return {objective, std_mode, epsilon}; }
};

/// k autoregressive samples; logp_new and logp_old both hold the sampling log-probs.
Group rollout_group(const ToyPolicy& policy, const ToyEnv& env, std::size_t k, std::uint64_t seed);

/// Fills logp_new/logp_old of every trajectory from the policy.
void record_log_probs(const ToyPolicy& policy, Group& group);

/// Probability that a rollout produces exactly this completed sequence.
double sequence_probability(const ToyPolicy& policy, const ToyEnv& env,
                            std::span<const TokenId> sequence);

/// Probability of emitting this token prefix (regardless of what follows).
double prefix_probability(const ToyPolicy& policy, std::span<const TokenId> prefix);

/// Exact expected reward by summing over the reward table.
double expected_reward(const ToyPolicy& policy, const ToyEnv& env);

/**
 * Per-token surrogate weights w_{i,t} * a_i / N, where w = 1 for GRPO and
 * 1 / |lambda^(i,t)| for lambda-GRPO.
 */
TokenValues surrogate_coefficients(const Group& group, const SurrogateSpec& spec);

/**
 * Surrogate objective sum_{i,t} coef_{i,t} * exp(logp(policy) - logp_old).
 * At the rollout policy it equals the token-mean objective with P == 1.
 */
double surrogate_objective(const ToyPolicy& policy, const Group& group, const SurrogateSpec& spec);

struct TokenGradient {
  std::size_t trajectory = 0;
  std::size_t position = 0;
  Context context;
  std::vector<double> gradient;  // d term / d logits[context]
};

/// Score-function contribution of every token: coef * ratio * d log pi / d logits.
std::vector<TokenGradient> token_gradients(const ToyPolicy& policy, const Group& group,
                                           const SurrogateSpec& spec);

/// Sum of token_gradients per context; entries exist only for touched contexts.
LogitTable analytic_gradient(const ToyPolicy& policy, const Group& group, const SurrogateSpec& spec);

struct FiniteDiffResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

/**
 * Central differences on every touched logit against analytic_gradient.
 * Relative error uses the denominator max(|analytic|, 1e-12). Only the
 * perturbed context's share of the objective changes, so each difference is
 * evaluated on that share with perturbed probabilities in difference form.
 */
FiniteDiffResult finite_diff_check(const ToyPolicy& policy, const Group& group,
                                   const SurrogateSpec& spec, double h = 1e-5);

struct StepRecord {
  std::size_t step = 0;
  double expected_reward = 0.0;
  double best_probability = 0.0;
  std::optional<double> objective;  // surrogate of the group sampled for this update
};

/// Row 0 describes the initial policy; row s follows the s-th update.
std::vector<StepRecord> run_experiment(const SimConfig& config, ToyPolicy policy, const ToyEnv& env);

std::string experiment_csv(const std::vector<StepRecord>& records);

/**
 * Hand-built shared-prefix scenario: six completions whose structure is
 * that of the reference example, each followed by terminal token 0, with
 * rewards (0.5, 0.5, 1, 0, 0, 0.5). The single best completion shares the
 * prefix [7, 7, 7, 7] with two reward-0 completions. The policy favours
 * every scenario token; the group's log-probs come from it.
 */
struct ExploitationScenario {
  ToyPolicy policy;
  ToyEnv env;
  Group group;
  std::vector<TokenId> shared_prefix;        // [7, 7, 7, 7]
  std::vector<std::size_t> prefix_members;   // {2, 3, 4}
  std::vector<Context> exclusive_contexts;   // prefix contexts no other member reaches
};

ExploitationScenario exploitation_scenario();

}  // namespace grpo_prm
