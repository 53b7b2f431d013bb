#include "grpo_prm/toy_sim.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "grpo_prm/exact_sum.hpp"
#include "grpo_prm/metrics.hpp"
#include "grpo_prm/rng.hpp"

namespace grpo_prm {

ToyPolicy::ToyPolicy(std::size_t vocab_size, std::size_t horizon, double temperature,
                     std::size_t context_order)
    : vocab_(vocab_size), horizon_(horizon), temperature_(temperature), order_(context_order) {
  if (vocab_ < 2 || vocab_ > 16) throw std::invalid_argument("vocab_size must be in [2, 16]");
  if (horizon_ > 12) throw std::invalid_argument("horizon must be <= 12");
  if (!(temperature_ > 0.0) || !std::isfinite(temperature_)) {
    throw std::invalid_argument("temperature must be finite and > 0");
  }
  if (order_ == 0) throw std::invalid_argument("context_order must be >= 1");
}

Context ToyPolicy::context_of(std::span<const TokenId> prefix) const {
  const std::size_t n = std::min(order_, prefix.size());
  return Context(prefix.end() - static_cast<std::ptrdiff_t>(n), prefix.end());
}

std::vector<double> ToyPolicy::logits(const Context& ctx) const {
  const auto it = table_.find(ctx);
  return it == table_.end() ? std::vector<double>(vocab_, 0.0) : it->second;
}

void ToyPolicy::set_logits(const Context& ctx, std::vector<double> values) {
  if (values.size() != vocab_) throw std::invalid_argument("logit vector size must equal vocab_size");
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("logits must be finite");
  }
  if (ctx.size() > order_) throw std::invalid_argument("context longer than context_order");
  for (TokenId t : ctx) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_) throw std::invalid_argument("context token out of range");
  }
  table_[ctx] = std::move(values);
}

std::vector<double> ToyPolicy::probabilities(const Context& ctx) const {
  std::vector<double> z = logits(ctx);
  double m = -INFINITY;
  for (double& v : z) {
    v /= temperature_;
    m = std::max(m, v);
  }
  ExactSum total;
  for (double& v : z) {
    v = std::exp(v - m);
    total.add(v);
  }
  const double s = total.value();
  for (double& v : z) v /= s;
  return z;
}

double ToyPolicy::log_prob(std::span<const TokenId> prefix, TokenId token) const {
  if (token < 0 || static_cast<std::size_t>(token) >= vocab_) throw std::out_of_range("token out of vocabulary");
  std::vector<double> z = logits(context_of(prefix));
  double m = -INFINITY;
  for (double& v : z) {
    v /= temperature_;
    m = std::max(m, v);
  }
  ExactSum total;
  for (double v : z) total.add(std::exp(v - m));
  return z[static_cast<std::size_t>(token)] - m - std::log(total.value());
}

void ToyPolicy::apply_update(const LogitTable& gradient, double scale) {
  for (const auto& [ctx, g] : gradient) {
    std::vector<double> z = logits(ctx);
    if (g.size() != vocab_) throw std::invalid_argument("gradient row size must equal vocab_size");
    for (std::size_t j = 0; j < vocab_; ++j) z[j] += scale * g[j];
    set_logits(ctx, std::move(z));
  }
}

double ToyEnv::reward(std::span<const TokenId> sequence) const {
  const auto it = reward_table.find(std::vector<TokenId>(sequence.begin(), sequence.end()));
  return it == reward_table.end() ? default_reward : it->second;
}

std::string_view to_string(ToyObjective objective) noexcept {
  return objective == ToyObjective::grpo ? "grpo" : "lambda";
}

ToyObjective parse_toy_objective(std::string_view text) {
  if (text == "grpo") return ToyObjective::grpo;
  if (text == "lambda") return ToyObjective::lambda;
  throw std::invalid_argument("unknown objective '" + std::string(text) + "' (expected grpo|lambda)");
}

void SimConfig::validate() const {
  if (k < 2) throw std::invalid_argument("k must be >= 2");
  if (!std::isfinite(learn_rate)) throw std::invalid_argument("learn_rate must be finite");
  if (beta != 0.0) throw std::invalid_argument("the simulator has no reference policy; beta must be 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
}

namespace {

std::size_t episode_limit(const ToyPolicy& policy, const ToyEnv& env) {
  return std::min(policy.horizon(), env.max_len);
}

}  // namespace

Group rollout_group(const ToyPolicy& policy, const ToyEnv& env, std::size_t k, std::uint64_t seed) {
  Engine rng(derive_seed(seed, 0x70C5));
  Group group;
  group.query_id = "toy-" + std::to_string(seed);
  const std::size_t limit = episode_limit(policy, env);
  for (std::size_t i = 0; i < k; ++i) {
    Trajectory g;
    std::vector<double> lp;
    while (g.tokens.size() < limit) {
      const auto probs = policy.probabilities(policy.context_of(g.tokens));
      const double u = uniform01(rng);
      double cum = 0.0;
      std::size_t pick = probs.size() - 1;
      for (std::size_t j = 0; j < probs.size(); ++j) {
        cum += probs[j];
        if (u < cum) {
          pick = j;
          break;
        }
      }
      lp.push_back(policy.log_prob(g.tokens, static_cast<TokenId>(pick)));
      g.tokens.push_back(static_cast<TokenId>(pick));
      if (env.terminal_token && *env.terminal_token == static_cast<TokenId>(pick)) break;
    }
    g.reward = env.reward(g.tokens);
    g.logp_new = lp;
    g.logp_old = std::move(lp);
    group.trajectories.push_back(std::move(g));
  }
  return group;
}

void record_log_probs(const ToyPolicy& policy, Group& group) {
  for (auto& g : group.trajectories) {
    std::vector<double> lp;
    for (std::size_t t = 0; t < g.length(); ++t) {
      lp.push_back(policy.log_prob(std::span(g.tokens).first(t), g.tokens[t]));
    }
    g.logp_new = lp;
    g.logp_old = std::move(lp);
  }
}

double prefix_probability(const ToyPolicy& policy, std::span<const TokenId> prefix) {
  double lp = 0.0;
  for (std::size_t t = 0; t < prefix.size(); ++t) lp += policy.log_prob(prefix.first(t), prefix[t]);
  return std::exp(lp);
}

double sequence_probability(const ToyPolicy& policy, const ToyEnv& env,
                            std::span<const TokenId> sequence) {
  const std::size_t limit = episode_limit(policy, env);
  if (sequence.size() > limit) return 0.0;
  const auto is_terminal = [&](TokenId t) { return env.terminal_token && *env.terminal_token == t; };
  for (std::size_t t = 0; t + 1 < sequence.size(); ++t) {
    if (is_terminal(sequence[t])) return 0.0;
  }
  const bool ends = sequence.size() == limit || (!sequence.empty() && is_terminal(sequence.back()));
  if (!ends) return 0.0;
  for (TokenId t : sequence) {
    if (t < 0 || static_cast<std::size_t>(t) >= policy.vocab_size()) return 0.0;
  }
  return prefix_probability(policy, sequence);
}

double expected_reward(const ToyPolicy& policy, const ToyEnv& env) {
  ExactSum s;
  s.add(env.default_reward);
  for (const auto& [seq, r] : env.reward_table) {
    s.add(sequence_probability(policy, env, seq) * (r - env.default_reward));
  }
  return s.value();
}

TokenValues surrogate_coefficients(const Group& group, const SurrogateSpec& spec) {
  const RewardStats stats = reward_stats(group, spec.std_mode, spec.epsilon);
  const std::vector<double> a = outcome_advantages(group, stats);
  const ProcessTree tree = build_process_tree(group);
  const TokenAssignment owner = assign_tokens(tree);
  const double n = static_cast<double>(group.total_tokens());
  TokenValues coef = make_token_values(group);
  for (std::size_t i = 0; i < group.size(); ++i) {
    for (std::size_t t = 0; t < group.trajectories[i].length(); ++t) {
      const double w = spec.objective == ToyObjective::grpo
                           ? 1.0
                           : 1.0 / static_cast<double>(tree.node(owner.at(i, t)).size());
      coef[i][t] = a[i] * w / n;
    }
  }
  return coef;
}

namespace {

const std::vector<double>& old_logp(const Trajectory& g, std::size_t i) {
  if (!g.logp_old) {
    throw std::invalid_argument("trajectory " + std::to_string(i) + " lacks logp_old");
  }
  return *g.logp_old;
}

}  // namespace

double surrogate_objective(const ToyPolicy& policy, const Group& group, const SurrogateSpec& spec) {
  const TokenValues coef = surrogate_coefficients(group, spec);
  ExactSum s;
  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto& g = group.trajectories[i];
    const auto& lo = old_logp(g, i);
    for (std::size_t t = 0; t < g.length(); ++t) {
      const double lp = policy.log_prob(std::span(g.tokens).first(t), g.tokens[t]);
      s.add(coef[i][t] * std::exp(lp - lo[t]));
    }
  }
  return s.value();
}

std::vector<TokenGradient> token_gradients(const ToyPolicy& policy, const Group& group,
                                           const SurrogateSpec& spec) {
  const TokenValues coef = surrogate_coefficients(group, spec);
  std::vector<TokenGradient> out;
  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto& g = group.trajectories[i];
    const auto& lo = old_logp(g, i);
    for (std::size_t t = 0; t < g.length(); ++t) {
      TokenGradient tg{i, t, policy.context_of(std::span(g.tokens).first(t)), {}};
      const auto probs = policy.probabilities(tg.context);
      const auto tok = static_cast<std::size_t>(g.tokens[t]);
      const double ratio = std::exp(std::log(probs.at(tok)) - lo[t]);
      const double scale = coef[i][t] * ratio / policy.temperature();
      tg.gradient.resize(probs.size());
      for (std::size_t j = 0; j < probs.size(); ++j) {
        tg.gradient[j] = scale * ((j == tok ? 1.0 : 0.0) - probs[j]);
      }
      out.push_back(std::move(tg));
    }
  }
  return out;
}

LogitTable analytic_gradient(const ToyPolicy& policy, const Group& group, const SurrogateSpec& spec) {
  std::map<Context, std::vector<ExactSum>> acc;
  for (const auto& tg : token_gradients(policy, group, spec)) {
    auto& row = acc[tg.context];
    row.resize(policy.vocab_size());
    for (std::size_t j = 0; j < tg.gradient.size(); ++j) row[j].add(tg.gradient[j]);
  }
  LogitTable out;
  for (const auto& [ctx, row] : acc) {
    auto& g = out[ctx];
    for (const auto& s : row) g.push_back(s.value());
  }
  return out;
}

FiniteDiffResult finite_diff_check(const ToyPolicy& policy, const Group& group,
                                   const SurrogateSpec& spec, double h) {
  if (!(h >= 1e-6 && h <= 1e-3)) throw std::invalid_argument("h must be in [1e-6, 1e-3]");
  const LogitTable analytic = analytic_gradient(policy, group, spec);
  const TokenValues coef = surrogate_coefficients(group, spec);

  // Objective share of context c: sum_b C_b * pi_b(c), C_b = sum coef / p_old.
  std::map<Context, std::vector<ExactSum>> weight;
  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto& g = group.trajectories[i];
    const auto& lo = old_logp(g, i);
    for (std::size_t t = 0; t < g.length(); ++t) {
      auto& row = weight[policy.context_of(std::span(g.tokens).first(t))];
      row.resize(policy.vocab_size());
      row[static_cast<std::size_t>(g.tokens[t])].add(coef[i][t] * std::exp(-lo[t]));
    }
  }

  FiniteDiffResult result;
  const double tau = policy.temperature();
  for (const auto& [ctx, row] : weight) {
    const auto probs = policy.probabilities(ctx);
    std::vector<double> c;
    for (const auto& s : row) c.push_back(s.value());
    const auto& an = analytic.at(ctx);
    for (std::size_t j = 0; j < probs.size(); ++j) {
      double rest = 0.0;
      for (std::size_t b = 0; b < probs.size(); ++b) {
        if (b != j) rest += probs[b];
      }
      // Change of the context share when logit j moves by delta.
      const auto share_change = [&](double delta) {
        const double em = std::expm1(delta / tau);
        const double s = probs[j] * em;
        ExactSum d;
        for (std::size_t b = 0; b < probs.size(); ++b) {
          const double dp = b == j ? probs[j] * em * rest / (1.0 + s) : -probs[b] * s / (1.0 + s);
          d.add(c[b] * dp);
        }
        return d.value();
      };
      const double fd = (share_change(h) - share_change(-h)) / (2.0 * h);
      const double err = std::abs(fd - an[j]) / std::max(std::abs(an[j]), 1e-12);
      result.max_rel_error = std::max(result.max_rel_error, err);
      ++result.coordinates;
    }
  }
  return result;
}

std::vector<StepRecord> run_experiment(const SimConfig& config, ToyPolicy policy, const ToyEnv& env) {
  config.validate();
  const auto best_probability = [&](const ToyPolicy& p) {
    if (env.reward_table.empty()) return 0.0;
    auto best = env.reward_table.begin();
    for (auto it = env.reward_table.begin(); it != env.reward_table.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    return sequence_probability(p, env, best->first);
  };
  std::vector<StepRecord> out;
  out.push_back({0, expected_reward(policy, env), best_probability(policy), std::nullopt});
  const SurrogateSpec spec = config.surrogate();
  for (std::size_t s = 1; s <= config.steps; ++s) {
    const Group group = rollout_group(policy, env, config.k, derive_seed(config.seed, s));
    const double objective = surrogate_objective(policy, group, spec);
    policy.apply_update(analytic_gradient(policy, group, spec), config.learn_rate);
    out.push_back({s, expected_reward(policy, env), best_probability(policy), objective});
  }
  return out;
}

std::string experiment_csv(const std::vector<StepRecord>& records) {
  std::ostringstream out;
  out << "step,expected_reward,best_prob,objective\n";
  for (const auto& r : records) {
    out << r.step << ',' << format_double(r.expected_reward) << ',' << format_double(r.best_probability)
        << ',' << (r.objective ? format_double(*r.objective) : std::string()) << '\n';
  }
  return out.str();
}

ExploitationScenario exploitation_scenario() {
  const std::vector<std::vector<TokenId>> seqs = {
      {5, 5, 5, 1, 1, 1, 0},    {5, 5, 5, 2, 2, 0},          {7, 7, 7, 7, 3, 3, 0},
      {7, 7, 7, 7, 4, 4, 8, 0}, {7, 7, 7, 7, 4, 4, 9, 9, 0}, {6, 6, 0}};
  const std::vector<double> rewards = {0.5, 0.5, 1.0, 0.0, 0.0, 0.5};

  ExploitationScenario sc{ToyPolicy(10, 9, 1.0, 4), ToyEnv{}, Group{}, {7, 7, 7, 7}, {2, 3, 4}, {}};
  for (const auto& seq : seqs) {
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const Context ctx = sc.policy.context_of(std::span(seq).first(t));
      auto z = sc.policy.logits(ctx);
      z[static_cast<std::size_t>(seq[t])] = 3.0;
      sc.policy.set_logits(ctx, std::move(z));
    }
  }
  sc.env.terminal_token = 0;
  sc.env.max_len = 9;
  sc.group.query_id = "exploitation";
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    sc.env.reward_table[seqs[i]] = rewards[i];
    sc.group.trajectories.push_back(Trajectory{seqs[i], rewards[i], {}, {}, {}});
  }
  record_log_probs(sc.policy, sc.group);

  std::set<Context> elsewhere;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const bool member =
        std::find(sc.prefix_members.begin(), sc.prefix_members.end(), i) != sc.prefix_members.end();
    for (std::size_t t = member ? sc.shared_prefix.size() : 0; t < seqs[i].size(); ++t) {
      elsewhere.insert(sc.policy.context_of(std::span(seqs[i]).first(t)));
    }
  }
  for (std::size_t t = 0; t < sc.shared_prefix.size(); ++t) {
    const Context ctx = sc.policy.context_of(std::span(sc.shared_prefix).first(t));
    if (!elsewhere.count(ctx)) sc.exclusive_contexts.push_back(ctx);
  }
  return sc;
}

}  // namespace grpo_prm
