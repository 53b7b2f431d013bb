#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace grpo_prm {

using TokenId = std::int64_t;

/// Ragged per-token values, indexed [trajectory][position].
using TokenValues = std::vector<std::vector<double>>;

/**
 * One sampled completion: token ids, its outcome reward, and optional
 * natural-log token probabilities under the current, rollout (old) and
 * reference policies.
 */
struct Trajectory {
  std::vector<TokenId> tokens;
  double reward = 0.0;
  std::optional<std::vector<double>> logp_new;
  std::optional<std::vector<double>> logp_old;
  std::optional<std::vector<double>> logp_ref;

  std::size_t length() const noexcept { return tokens.size(); }

  /// Throws std::invalid_argument on negative tokens, non-finite values,
  /// positive log-probabilities or log-probability length mismatches.
  void validate() const;

  bool operator==(const Trajectory&) const = default;
};

/// The k completions sampled for one query.
struct Group {
  std::string query_id;
  std::optional<std::int64_t> step;  // training step, when the dump has one
  std::vector<Trajectory> trajectories;

  std::size_t size() const noexcept { return trajectories.size(); }
  std::size_t total_tokens() const noexcept;
  std::size_t max_length() const noexcept;

  /// Requires k >= 2 and every trajectory valid.
  void validate() const;

  bool operator==(const Group&) const = default;
};

enum class StdMode { sample, population };

std::string_view to_string(StdMode mode) noexcept;
StdMode parse_std_mode(std::string_view text);

inline constexpr double kDefaultEpsilon = 1e-8;

struct RewardStats {
  double mean = 0.0;
  double std = 0.0;
  StdMode std_mode = StdMode::sample;
  double epsilon = kDefaultEpsilon;

  /// Advantages collapse to zero when the spread is below epsilon.
  bool degenerate() const noexcept { return !(std >= epsilon); }
};

RewardStats reward_stats(const Group& group, StdMode std_mode = StdMode::sample,
                         double epsilon = kDefaultEpsilon);

/// (value - mean) / std, or exactly 0 for degenerate statistics. Shared by
/// outcome and step advantages so that singleton steps match bit for bit.
double normalize_reward(double value, const RewardStats& stats) noexcept;

/// Outcome-level advantages a_i, one per trajectory.
std::vector<double> outcome_advantages(const Group& group, const RewardStats& stats);

TokenValues make_token_values(const Group& group, double fill = 0.0);

}  // namespace grpo_prm
