#include "grpo_prm/loss_kernels.hpp"

#include <cmath>

#include "grpo_prm/exact_sum.hpp"

namespace grpo_prm {

void ObjectiveConfig::validate() const {
  if (!std::isfinite(beta) || beta < 0.0) throw ConfigError("beta must be finite and >= 0");
}

TokenValues ratio_terms(const Group& group, const ObjectiveConfig& config) {
  config.validate();
  TokenValues p = make_token_values(group, 1.0);
  if (config.assume_unit_ratio) return p;
  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto& g = group.trajectories[i];
    if (!g.logp_new || !g.logp_old) {
      throw ConfigError("trajectory " + std::to_string(i) +
                        " lacks logp/logp_old needed for ratio terms");
    }
    for (std::size_t t = 0; t < g.length(); ++t) p[i][t] = std::exp((*g.logp_new)[t] - (*g.logp_old)[t]);
  }
  return p;
}

double kl_k3(double logp_ref, double logp_new) noexcept {
  const double log_ratio = logp_ref - logp_new;
  // expm1 keeps the estimator accurate (and >= 0) near log_ratio == 0.
  return std::expm1(log_ratio) - log_ratio;
}

TokenValues kl_terms(const Group& group, const ObjectiveConfig& config) {
  config.validate();
  TokenValues d = make_token_values(group, 0.0);
  if (config.beta == 0.0) return d;
  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto& g = group.trajectories[i];
    if (!g.logp_new || !g.logp_ref) {
      throw ConfigError("trajectory " + std::to_string(i) +
                        " lacks logp/logp_ref needed for the KL term (beta > 0)");
    }
    for (std::size_t t = 0; t < g.length(); ++t) d[i][t] = kl_k3((*g.logp_ref)[t], (*g.logp_new)[t]);
  }
  return d;
}

namespace {

// term = (P*A - beta*D) / divisor, accumulated exactly.
template <typename AdvantageAt, typename DivisorAt>
ObjectiveReport evaluate(const Group& group, const ObjectiveConfig& config, AdvantageAt advantage_at,
                         DivisorAt divisor_at) {
  const TokenValues p = ratio_terms(group, config);
  const TokenValues d = kl_terms(group, config);
  ObjectiveReport report;
  report.per_token_terms = make_token_values(group);
  report.token_count = group.total_tokens();
  ExactSum terms, adv, kl;
  for (std::size_t i = 0; i < group.size(); ++i) {
    for (std::size_t t = 0; t < group.trajectories[i].length(); ++t) {
      const double pa = p[i][t] * advantage_at(i, t);
      const double divisor = divisor_at(i, t);
      const double term = (pa - config.beta * d[i][t]) / divisor;
      report.per_token_terms[i][t] = term;
      terms.add(term);
      adv.add(pa / divisor);
      kl.add(d[i][t] / divisor);
    }
  }
  report.advantage_total = adv.value();
  report.kl_total = kl.value();
  report.value = report.token_count == 0 ? 0.0 : terms.value() / static_cast<double>(report.token_count);
  return report;
}

void check_advantage_count(const Group& group, std::span<const double> advantages) {
  if (advantages.size() != group.size()) {
    throw std::invalid_argument("expected " + std::to_string(group.size()) + " advantages, got " +
                                std::to_string(advantages.size()));
  }
}

}  // namespace

ObjectiveReport objective_grpo(const Group& group, std::span<const double> advantages,
                               const ObjectiveConfig& config) {
  check_advantage_count(group, advantages);
  return evaluate(
      group, config, [&](std::size_t i, std::size_t) { return advantages[i]; },
      [](std::size_t, std::size_t) { return 1.0; });
}

ObjectiveReport objective_prm(const Group& group, const StepAdvantages& step,
                              const ObjectiveConfig& config) {
  return evaluate(
      group, config, [&](std::size_t i, std::size_t t) { return step.token_advantage.at(i).at(t); },
      [](std::size_t, std::size_t) { return 1.0; });
}

ObjectiveReport objective_lambda(const Group& group, const ProcessTree& tree,
                                 const TokenAssignment& assignment,
                                 std::span<const double> advantages, const ObjectiveConfig& config) {
  check_advantage_count(group, advantages);
  return evaluate(
      group, config, [&](std::size_t i, std::size_t) { return advantages[i]; },
      [&](std::size_t i, std::size_t t) {
        return static_cast<double>(tree.node(assignment.at(i, t)).size());
      });
}

TokenValues lambda_weights(const ProcessTree& tree, const TokenAssignment& assignment) {
  TokenValues w;
  w.reserve(assignment.owner.size());
  for (const auto& row : assignment.owner) {
    auto& out = w.emplace_back();
    out.reserve(row.size());
    for (NodeId id : row) out.push_back(1.0 / static_cast<double>(tree.node(id).size()));
  }
  return w;
}

}  // namespace grpo_prm
