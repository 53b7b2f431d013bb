#include "grpo_prm/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "grpo_prm/exact_sum.hpp"

namespace grpo_prm {

namespace {

void check_logp(const std::optional<std::vector<double>>& logp, std::size_t length,
                const char* name) {
  if (!logp) return;
  if (logp->size() != length) {
    throw std::invalid_argument(std::string(name) + " has " + std::to_string(logp->size()) +
                                " entries but the trajectory has " + std::to_string(length) +
                                " tokens");
  }
  for (double v : *logp) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(name) + " is not finite");
    if (v > 0.0) throw std::invalid_argument(std::string(name) + " contains a positive log-probability");
  }
}

}  // namespace

void Trajectory::validate() const {
  if (!std::isfinite(reward)) throw std::invalid_argument("reward is not finite");
  for (TokenId t : tokens) {
    if (t < 0) throw std::invalid_argument("negative token id");
  }
  check_logp(logp_new, tokens.size(), "logp");
  check_logp(logp_old, tokens.size(), "logp_old");
  check_logp(logp_ref, tokens.size(), "logp_ref");
}

std::size_t Group::total_tokens() const noexcept {
  std::size_t n = 0;
  for (const auto& g : trajectories) n += g.length();
  return n;
}

std::size_t Group::max_length() const noexcept {
  std::size_t n = 0;
  for (const auto& g : trajectories) n = std::max(n, g.length());
  return n;
}

void Group::validate() const {
  if (trajectories.size() < 2) {
    throw std::invalid_argument("group '" + query_id + "' needs at least 2 trajectories, has " +
                                std::to_string(trajectories.size()));
  }
  for (const auto& g : trajectories) g.validate();
}

std::string_view to_string(StdMode mode) noexcept {
  return mode == StdMode::sample ? "sample" : "population";
}

StdMode parse_std_mode(std::string_view text) {
  if (text == "sample") return StdMode::sample;
  if (text == "population") return StdMode::population;
  throw std::invalid_argument("unknown std mode '" + std::string(text) + "'");
}

RewardStats reward_stats(const Group& group, StdMode std_mode, double epsilon) {
  const std::size_t k = group.size();
  RewardStats stats;
  stats.std_mode = std_mode;
  stats.epsilon = epsilon;
  if (k == 0) return stats;

  ExactSum total;
  for (const auto& g : group.trajectories) total.add(g.reward);
  stats.mean = total.value() / static_cast<double>(k);

  ExactSum squares;
  for (const auto& g : group.trajectories) {
    const double d = g.reward - stats.mean;
    squares.add(d * d);
  }
  const std::size_t divisor = std_mode == StdMode::sample ? k - 1 : k;
  stats.std = divisor == 0 ? 0.0 : std::sqrt(squares.value() / static_cast<double>(divisor));
  return stats;
}

double normalize_reward(double value, const RewardStats& stats) noexcept {
  if (stats.degenerate()) return 0.0;
  return (value - stats.mean) / stats.std;
}

std::vector<double> outcome_advantages(const Group& group, const RewardStats& stats) {
  std::vector<double> a;
  a.reserve(group.size());
  for (const auto& g : group.trajectories) a.push_back(normalize_reward(g.reward, stats));
  return a;
}

TokenValues make_token_values(const Group& group, double fill) {
  TokenValues v;
  v.reserve(group.size());
  for (const auto& g : group.trajectories) v.emplace_back(g.length(), fill);
  return v;
}

}  // namespace grpo_prm
