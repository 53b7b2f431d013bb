#include "grpo_prm/equivalence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

#include "grpo_prm/exact_sum.hpp"
#include "grpo_prm/process_tree.hpp"
#include "grpo_prm/rng.hpp"
#include "grpo_prm/step_rewards.hpp"

namespace grpo_prm {

RewardDist parse_reward_dist(std::string_view text) {
  if (text == "bernoulli") return RewardDist::bernoulli;
  if (text == "uniform") return RewardDist::uniform;
  if (text == "constant") return RewardDist::constant;
  throw std::invalid_argument("unknown reward distribution '" + std::string(text) + "'");
}

void GenParams::validate() const {
  if (k_min < 2 || k_min > k_max) throw std::invalid_argument("k range must satisfy 2 <= k_min <= k_max");
  if (length_min > length_max) throw std::invalid_argument("length range is empty");
  if (vocab_size < 2) throw std::invalid_argument("vocab_size must be >= 2");
  if (!(fork_bias >= 0.0 && fork_bias <= 1.0)) throw std::invalid_argument("fork_bias must be in [0, 1]");
  if (!(degenerate_rate >= 0.0 && degenerate_rate <= 0.5)) {
    throw std::invalid_argument("degenerate_rate must be in [0, 0.5]");
  }
  if (distinct_first_tokens && vocab_size < k_max) {
    throw std::invalid_argument("distinct_first_tokens needs vocab_size >= k_max");
  }
  if (distinct_first_tokens && length_min == 0) {
    throw std::invalid_argument("distinct_first_tokens needs length_min >= 1");
  }
}

namespace {

double hash_unit(std::uint64_t h, std::uint64_t salt) {
  return static_cast<double>(splitmix64(h ^ salt) >> 11) * 0x1.0p-53;
}

std::vector<TokenId> fresh_tokens(Engine& rng, std::vector<TokenId> prefix, std::size_t target,
                                  std::size_t vocab) {
  while (prefix.size() < target) prefix.push_back(static_cast<TokenId>(uniform_below(rng, vocab)));
  return prefix;
}

double draw_reward(Engine& rng, const GenParams& p) {
  switch (p.reward_dist) {
    case RewardDist::bernoulli: return bernoulli(rng, 0.5) ? 1.0 : 0.0;
    case RewardDist::uniform: return uniform01(rng);
    case RewardDist::constant: return p.constant_reward;
  }
  return 0.0;
}

}  // namespace

void attach_consistent_logp(Group& group, std::uint64_t salt) {
  const std::uint64_t root = splitmix64(salt ^ 0x5851F42D4C957F2DULL);
  for (auto& g : group.trajectories) {
    std::vector<double> lp_new, lp_old, lp_ref;
    std::uint64_t h = root;
    for (TokenId tok : g.tokens) {
      h = splitmix64(h ^ (static_cast<std::uint64_t>(tok) * 0x9E3779B97F4A7C15ULL + 1));
      const double old_lp = -(0.01 + 3.0 * hash_unit(h, 1));
      lp_old.push_back(old_lp);
      lp_new.push_back(std::min(0.0, old_lp + 0.2 * (hash_unit(h, 2) - 0.5)));
      lp_ref.push_back(std::min(0.0, old_lp + 0.2 * (hash_unit(h, 3) - 0.5)));
    }
    g.logp_new = std::move(lp_new);
    g.logp_old = std::move(lp_old);
    g.logp_ref = std::move(lp_ref);
  }
}

Group generate_random_group(const GenParams& p, std::uint64_t index) {
  p.validate();
  Engine rng(derive_seed(p.seed, index));
  Group group;
  group.query_id = "random-" + std::to_string(p.seed) + "-" + std::to_string(index);
  const std::size_t k = uniform_between(rng, p.k_min, p.k_max);

  for (std::size_t i = 0; i < k; ++i) {
    Trajectory g;
    const bool may_copy = i > 0 && !p.distinct_first_tokens;
    const double u = uniform01(rng);
    if (may_copy && u < p.degenerate_rate) {
      g = group.trajectories[uniform_below(rng, i)];
    } else if (may_copy && u < 2.0 * p.degenerate_rate) {
      const auto& src = group.trajectories[uniform_below(rng, i)].tokens;
      const std::size_t lo = std::max<std::size_t>(1, p.length_min);
      const std::size_t cut = src.size() > lo ? uniform_between(rng, lo, src.size() - 1) : src.size();
      g.tokens.assign(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(cut));
      g.reward = draw_reward(rng, p);
    } else {
      const std::size_t target = uniform_between(rng, p.length_min, p.length_max);
      std::vector<TokenId> prefix;
      if (may_copy && bernoulli(rng, p.fork_bias)) {
        const auto& src = group.trajectories[uniform_below(rng, i)].tokens;
        const std::size_t limit = std::min(src.size(), target);
        if (limit >= 1) {
          const std::size_t fork = uniform_between(rng, 1, limit);
          prefix.assign(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(fork));
        }
      } else if (p.distinct_first_tokens) {
        prefix.push_back(static_cast<TokenId>(i));
      }
      g.tokens = fresh_tokens(rng, std::move(prefix), target, p.vocab_size);
      g.reward = draw_reward(rng, p);
    }
    g.logp_new.reset();
    g.logp_old.reset();
    g.logp_ref.reset();
    group.trajectories.push_back(std::move(g));
  }
  if (p.logp_mode == LogpMode::random_consistent) attach_consistent_logp(group, derive_seed(p.seed, ~index));
  return group;
}

std::vector<Group> degenerate_cases() {
  auto make = [](std::string id, std::vector<std::vector<TokenId>> seqs, std::vector<double> rewards) {
    Group g;
    g.query_id = std::move(id);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      g.trajectories.push_back(Trajectory{std::move(seqs[i]), rewards[i], {}, {}, {}});
    }
    attach_consistent_logp(g, 0xDE9E);
    return g;
  };
  std::vector<Group> out;
  out.push_back(make("duplicate-pair", {{1, 2, 3}, {1, 2, 3}, {4, 5}}, {1, 0, 0.5}));
  out.push_back(make("identical-k2", {{3, 1, 4, 1}, {3, 1, 4, 1}}, {0, 1}));
  out.push_back(make("prefix-k2", {{3, 1, 4, 1}, {3, 1}}, {1, 0}));
  out.push_back(make("exact-prefix", {{1, 2}, {1, 2, 3}, {1, 2, 4}}, {0, 1, 1}));
  out.push_back(make("duplicate-prefix", {{1, 2}, {1, 2}, {1, 2, 3, 4}, {5}}, {1, 0, 0, 1}));
  out.push_back(make("constant-rewards", {{1, 2, 3}, {1, 2, 4}, {1, 5}, {6}}, {0.7, 0.7, 0.7, 0.7}));
  out.push_back(make("empty-completion", {{}, {1}, {1, 2}}, {1, 0, 0}));
  out.push_back(make("all-empty", {{}, {}}, {0, 1}));
  out.push_back(make("all-identical", {{2, 2, 2}, {2, 2, 2}, {2, 2, 2}, {2, 2, 2}}, {1, 0, 0, 1}));
  return out;
}

double relative_gap(double x, double y, double scale) noexcept {
  const double denom = std::max({std::abs(x), std::abs(y), kGapScaleFloor * std::abs(scale), 1e-30});
  return std::abs(x - y) / denom;
}

void VerificationReport::merge(const VerificationReport& other) {
  groups_checked += other.groups_checked;
  evaluations += other.evaluations;
  trivial_count += other.trivial_count;
  max_abs_gap = std::max(max_abs_gap, other.max_abs_gap);
  max_rel_gap = std::max(max_rel_gap, other.max_rel_gap);
  max_identity_gap = std::max(max_identity_gap, other.max_identity_gap);
  failures.insert(failures.end(), other.failures.begin(), other.failures.end());
  std::sort(failures.begin(), failures.end(), [](const Failure& a, const Failure& b) {
    return std::tie(a.tag.seed, a.tag.index, a.check, a.gap) <
           std::tie(b.tag.seed, b.tag.index, b.check, b.gap);
  });
}

nlohmann::json VerificationReport::to_json() const {
  nlohmann::json j;
  j["groups_checked"] = groups_checked;
  j["evaluations"] = evaluations;
  j["trivial_count"] = trivial_count;
  j["max_abs_gap"] = max_abs_gap;
  j["max_rel_gap"] = max_rel_gap;
  j["max_identity_gap"] = max_identity_gap;
  j["failures"] = nlohmann::json::array();
  for (const auto& f : failures) {
    j["failures"].push_back({{"seed", f.tag.seed}, {"group_index", f.tag.index}, {"check", f.check}, {"gap", f.gap}});
  }
  j["ok"] = ok();
  return j;
}

namespace {

struct Terms {
  TokenValues p;
  TokenValues d;
};

Terms terms_for(const Group& group, const ObjectiveConfig& config) {
  return {ratio_terms(group, config), kl_terms(group, config)};
}

void record(VerificationReport& report, GroupTag tag, const std::string& check, double gap, double tol,
            bool identity) {
  if (identity) {
    report.max_identity_gap = std::max(report.max_identity_gap, gap);
  }
  if (!(gap <= tol)) report.failures.push_back({tag, check, gap});
}

}  // namespace

VerificationReport verify_objective_equality(const Group& group, const VerifyOptions& options, GroupTag tag) {
  VerificationReport report;
  report.groups_checked = 1;
  report.evaluations = 1;
  const RewardStats stats = reward_stats(group, options.std_mode, options.epsilon);
  const double beta = options.objective.beta;
  const Terms terms = terms_for(group, options.objective);
  const double n = static_cast<double>(group.total_tokens());

  // GRPO side: token order, outcome advantages.
  const std::vector<double> a = outcome_advantages(group, stats);
  ExactSum grpo_sum, magnitude;
  for (std::size_t i = 0; i < group.size(); ++i) {
    for (std::size_t t = 0; t < group.trajectories[i].length(); ++t) {
      const double pa = terms.p[i][t] * a[i];
      const double bd = beta * terms.d[i][t];
      grpo_sum.add(pa - bd);
      magnitude.add(std::abs(pa) + std::abs(bd));
    }
  }

  // PRM side: node enumeration, step advantages.
  const ProcessTree tree = build_process_tree(group);
  ExactSum prm_sum;
  for (const auto& node : tree.nodes()) {
    const double adv = step_advantage(node, group, stats);
    for (std::size_t t = node.span_start; t < node.span_end; ++t) {
      for (std::size_t m : node.members) prm_sum.add(terms.p[m][t] * adv - beta * terms.d[m][t]);
    }
  }

  const double grpo = n == 0 ? 0.0 : grpo_sum.value() / n;
  const double prm = n == 0 ? 0.0 : prm_sum.value() / n;
  const double scale = n == 0 ? 0.0 : magnitude.value() / n;
  report.max_abs_gap = std::abs(grpo - prm);
  report.max_rel_gap = relative_gap(grpo, prm, scale);
  report.trivial_count = is_trivial(tree) ? 1 : 0;
  record(report, tag, "objective_equality", report.max_rel_gap, options.equality_tol, false);
  return report;
}

VerificationReport verify_proof_identities(const Group& group, const VerifyOptions& options,
                                           GroupTag tag) {
  VerificationReport report;
  report.groups_checked = 1;
  report.evaluations = 1;
  const double tol = options.identity_tol;
  const RewardStats stats = reward_stats(group, options.std_mode, options.epsilon);
  const double beta = options.objective.beta;
  const Terms terms = terms_for(group, options.objective);
  const ProcessTree tree = build_process_tree(group);
  const TokenAssignment owner = assign_tokens(tree);
  const std::vector<double> a = outcome_advantages(group, stats);
  const StepAdvantages step = step_advantages(tree, owner, group, stats);

  const ObjectiveReport grpo = objective_grpo(group, a, options.objective);
  const ObjectiveReport prm = objective_prm(group, step, options.objective);
  const ObjectiveReport lam = objective_lambda(group, tree, owner, a, options.objective);
  report.trivial_count = is_trivial(tree) ? 1 : 0;

  // Per-node sums at every covered position.
  double worst_node = 0.0;
  for (const auto& node : tree.nodes()) {
    if (node.span_length() == 0) continue;
    const double adv = step_advantage(node, group, stats);
    const double size = static_cast<double>(node.size());
    const std::size_t rep = node.members.front();
    for (std::size_t t = node.span_start; t < node.span_end; ++t) {
      ExactSum prm_side, grpo_side, grpo_scale;
      for (std::size_t m : node.members) {
        prm_side.add(prm.per_token_terms[m][t]);
        grpo_side.add(grpo.per_token_terms[m][t]);
        grpo_scale.add(std::abs(terms.p[m][t] * a[m]) + std::abs(beta * terms.d[m][t]));
      }
      const double rep_pa = terms.p[rep][t] * adv;
      const double rep_bd = beta * terms.d[rep][t];
      const double grouped = size * (rep_pa - rep_bd);
      const double grouped_scale = size * (std::abs(rep_pa) + std::abs(rep_bd));
      worst_node = std::max(worst_node, relative_gap(prm_side.value(), grouped, grouped_scale));
      worst_node = std::max(worst_node, relative_gap(grpo_side.value(), grouped, grpo_scale.value()));
    }
  }
  record(report, tag, "per_node_sum", worst_node, tol, true);

  // Partition form of L_GRPO and L_PRM, and the grouped lambda form.
  const std::size_t t_max = tree.max_length();
  const double n = static_cast<double>(group.total_tokens());
  ExactSum grpo_x, prm_x, lam_x, grpo_mag, lam_mag;
  for (std::size_t t = 0; t < t_max; ++t) {
    for (NodeId id : partition_at(tree, t)) {
      const auto& node = tree.node(id);
      const std::size_t rep = node.members.front();
      const double adv = step_advantage(node, group, stats);
      lam_x.add(terms.p[rep][t] * adv - beta * terms.d[rep][t]);
      for (std::size_t m : node.members) {
        grpo_x.add(grpo.per_token_terms[m][t]);
        prm_x.add(prm.per_token_terms[m][t]);
        const double mag = std::abs(terms.p[m][t] * a[m]) + std::abs(beta * terms.d[m][t]);
        grpo_mag.add(mag);
        lam_mag.add(mag / static_cast<double>(node.size()));
      }
    }
  }
  const auto mean_of = [n](const ExactSum& s) { return n == 0 ? 0.0 : s.value() / n; };
  const double partition_gap = std::max(relative_gap(grpo.value, mean_of(grpo_x), mean_of(grpo_mag)),
                                        relative_gap(prm.value, mean_of(prm_x), mean_of(grpo_mag)));
  record(report, tag, "partition_form", partition_gap, tol, true);
  record(report, tag, "lambda_grouped_form",
         relative_gap(lam.value, mean_of(lam_x), mean_of(lam_mag)), tol, true);

  // Token-wise |lambda| scaling between GRPO and lambda-GRPO terms.
  double worst_scaling = 0.0;
  for (std::size_t i = 0; i < group.size(); ++i) {
    for (std::size_t t = 0; t < group.trajectories[i].length(); ++t) {
      const double size = static_cast<double>(tree.node(owner.at(i, t)).size());
      const double mag = std::abs(terms.p[i][t] * a[i]) + std::abs(beta * terms.d[i][t]);
      worst_scaling = std::max(worst_scaling, relative_gap(grpo.per_token_terms[i][t],
                                                           size * lam.per_token_terms[i][t], mag));
    }
  }
  record(report, tag, "lambda_scaling", worst_scaling, tol, true);
  return report;
}

VerificationReport verify_group(const Group& group, std::span<const VerifyOptions> options,
                                GroupTag tag) {
  VerificationReport report;
  for (const auto& opt : options) {
    report.merge(verify_objective_equality(group, opt, tag));
    report.merge(verify_proof_identities(group, opt, tag));
  }
  report.groups_checked = 1;
  report.evaluations = options.size();
  report.trivial_count = is_trivial(build_process_tree(group)) ? 1 : 0;
  return report;
}

std::vector<VerifyOptions> standard_option_matrix(double beta, StdMode std_mode, double epsilon,
                                                  double equality_tol) {
  std::vector<VerifyOptions> out;
  for (double b : {0.0, beta}) {
    for (bool unit : {true, false}) {
      VerifyOptions o;
      o.objective.beta = b;
      o.objective.assume_unit_ratio = unit;
      o.std_mode = std_mode;
      o.epsilon = epsilon;
      o.equality_tol = equality_tol;
      out.push_back(o);
    }
    if (beta == 0.0) break;
  }
  return out;
}

VerificationReport run_random_suite(const SuiteParams& params) {
  params.gen.validate();
  VerificationReport report;
  for (std::size_t idx = 0; idx < params.groups; ++idx) {
    const Group g = generate_random_group(params.gen, idx);
    report.merge(verify_group(g, params.options, {params.gen.seed, idx}));
  }
  if (params.include_degenerate_cases) {
    const auto cases = degenerate_cases();
    for (std::size_t j = 0; j < cases.size(); ++j) {
      report.merge(verify_group(cases[j], params.options, {params.gen.seed, params.groups + j}));
    }
  }
  return report;
}

}  // namespace grpo_prm
