#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "grpo_prm/core_types.hpp"
#include "grpo_prm/loss_kernels.hpp"

namespace grpo_prm {

enum class RewardDist { bernoulli, uniform, constant };
enum class LogpMode { absent, random_consistent };

RewardDist parse_reward_dist(std::string_view text);

/**
 * Random group generator tuned to produce shared prefixes.
 *
 * Each trajectory after the first is, in order of precedence:
 *   - an exact duplicate of an earlier one (probability degenerate_rate),
 *   - a strict prefix of an earlier one (probability degenerate_rate),
 *   - a fork: an earlier trajectory's prefix (at least one token) followed by
 *     fresh tokens (probability fork_bias),
 *   - fresh tokens.
 * distinct_first_tokens disables all copying and gives trajectory i first
 * token i, which yields a trivial tree (requires vocab_size >= k_max).
 *
 * random_consistent log-probabilities are a hash of the token prefix, so
 * trajectories sharing a prefix share their log-probabilities there.
 */
struct GenParams {
  std::uint64_t seed = 0;
  std::size_t k_min = 2;
  std::size_t k_max = 16;
  std::size_t length_min = 1;
  std::size_t length_max = 64;
  std::size_t vocab_size = 8;
  double fork_bias = 0.5;
  RewardDist reward_dist = RewardDist::bernoulli;
  double constant_reward = 1.0;
  LogpMode logp_mode = LogpMode::absent;
  bool distinct_first_tokens = false;
  double degenerate_rate = 0.05;

  void validate() const;
};

/// Deterministic in (params, index).
Group generate_random_group(const GenParams& params, std::uint64_t index);

/// Fills logp/logp_old/logp_ref from a hash of each token prefix.
void attach_consistent_logp(Group& group, std::uint64_t salt);

/// Hand-built edge cases every suite run includes: duplicates, exact
/// prefixes, empty completions, constant rewards.
std::vector<Group> degenerate_cases();

struct VerifyOptions {
  ObjectiveConfig objective;
  StdMode std_mode = StdMode::sample;
  double epsilon = kDefaultEpsilon;
  double equality_tol = 1e-9;
  double identity_tol = 1e-12;
};

/// Fraction of the mean absolute per-token term used as the gap denominator
/// floor (see relative_gap).
inline constexpr double kGapScaleFloor = 1e-2;

/**
 * |x - y| / max(|x|, |y|, kGapScaleFloor * scale, 1e-30).
 *
 * scale is the magnitude of the summands that produced x and y. Objectives
 * that cancel to (near) zero cannot be resolved below the rounding noise of
 * their summands; the floor measures such gaps against the summand scale.
 */
double relative_gap(double x, double y, double scale) noexcept;

struct GroupTag {
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
};

struct Failure {
  GroupTag tag;
  std::string check;
  double gap = 0.0;
};

struct VerificationReport {
  std::size_t groups_checked = 0;
  std::size_t evaluations = 0;  // (group, configuration) pairs
  std::size_t trivial_count = 0;
  double max_abs_gap = 0.0;      // objective equality gap
  double max_rel_gap = 0.0;      // objective equality gap
  double max_identity_gap = 0.0; // worst relative gap over the proof identities
  std::vector<Failure> failures;

  bool ok() const noexcept { return failures.empty(); }

  /// Associative and order-independent (failures are kept sorted).
  void merge(const VerificationReport& other);

  nlohmann::json to_json() const;
};

/**
 * L_GRPO by token summation over outcome advantages (never touches the
 * tree) against L_PRM by enumerating tree nodes with step advantages (never
 * touches outcome advantages). Gaps above equality_tol become failures.
 */
VerificationReport verify_objective_equality(const Group& group, const VerifyOptions& options,
                                   GroupTag tag = {});

/**
 * Checks, at every node and position:
 *   - per-node sums: sum over members of (P*A - beta*D) and of (P*a - beta*D)
 *     both equal |lambda| * (P^ * A^ - beta * D^);
 *   - partition form: token-sum and X_t-sum evaluations of L_GRPO and L_PRM agree;
 *   - grouped lambda form: L_lambda equals sum_t sum_{X_t} (P^ A^ - beta D^) / N;
 *   - scaling: GRPO token term == |lambda^(i,t)| * lambda-GRPO token term.
 * Gaps above identity_tol become failures.
 */
VerificationReport verify_proof_identities(const Group& group, const VerifyOptions& options,
                                           GroupTag tag = {});

/// Both suites under every option set; counts the group once.
VerificationReport verify_group(const Group& group, std::span<const VerifyOptions> options,
                                GroupTag tag = {});

struct SuiteParams {
  GenParams gen;
  std::size_t groups = 1000;
  std::vector<VerifyOptions> options;  // every group is checked under each
  bool include_degenerate_cases = true;
};

/// The default matrix: beta in {0, beta}, with and without ratio terms.
std::vector<VerifyOptions> standard_option_matrix(double beta, StdMode std_mode, double epsilon,
                                                  double equality_tol);

VerificationReport run_random_suite(const SuiteParams& params);

}  // namespace grpo_prm
