#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "grpo_prm/cli.hpp"
#include "grpo_prm/equivalence.hpp"
#include "grpo_prm/exact_sum.hpp"
#include "grpo_prm/jsonl_io.hpp"
#include "grpo_prm/loss_kernels.hpp"
#include "grpo_prm/metrics.hpp"
#include "grpo_prm/rng.hpp"
#include "grpo_prm/step_rewards.hpp"
#include "grpo_prm/toy_sim.hpp"

using namespace grpo_prm;

namespace {

int failures = 0;

void report(const char* id, bool pass, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  if (!pass) ++failures;
}

// Guards each criterion so one exception does not hide the others.
void criterion(const char* id, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [pass, detail] = body();
    report(id, pass, detail);
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what());
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

bool close(double x, double y, double tol) { return std::abs(x - y) <= tol; }

std::string run_cli_capture(std::vector<std::string> args, int& code) {
  args.insert(args.begin(), "grpo-prm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return out.str();
}

ToyPolicy random_policy(std::uint64_t seed, std::size_t vocab, std::size_t horizon) {
  ToyPolicy p(vocab, horizon, 1.0, 4);
  Engine rng(seed);
  std::vector<Context> ctxs = {{}};
  for (std::size_t a = 0; a < vocab; ++a) {
    ctxs.push_back({static_cast<TokenId>(a)});
    for (std::size_t b = 0; b < vocab; ++b) ctxs.push_back({static_cast<TokenId>(a), static_cast<TokenId>(b)});
  }
  for (const auto& c : ctxs) {
    std::vector<double> z(vocab);
    for (double& v : z) v = (uniform01(rng) * 2 - 1) * 1.5;
    p.set_logits(c, z);
  }
  return p;
}

Group rollout_rewarded(const ToyPolicy& p, std::size_t k, std::uint64_t seed) {
  ToyEnv env;
  env.max_len = p.horizon();
  env.terminal_token = 0;
  Group g = rollout_group(p, env, k, seed);
  for (auto& t : g.trajectories) {
    double r = 0.0;
    for (TokenId tok : t.tokens) r += static_cast<double>(tok == 1);
    t.reward = r / static_cast<double>(std::max<std::size_t>(1, t.length()));
  }
  return g;
}

}  // namespace

int main() {
  criterion("AC1", [] {
    SuiteParams s;
    s.gen.seed = 2024;
    s.gen.logp_mode = LogpMode::random_consistent;
    s.gen.fork_bias = 0.5;
    s.groups = 1000;
    s.options = standard_option_matrix(0.04, StdMode::sample, kDefaultEpsilon, 1e-9);
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_random_suite(s);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = r.ok() && r.max_rel_gap <= 1e-9 && r.groups_checked >= 1000 && secs < 10.0;
    return std::pair{pass, "groups=" + std::to_string(r.groups_checked) + " evaluations=" +
                               std::to_string(r.evaluations) + " max_rel_gap=" + fmt(r.max_rel_gap) +
                               " seconds=" + fmt(secs)};
  });

  criterion("AC2", [] {
    SuiteParams s;
    s.gen.seed = 99;
    s.gen.logp_mode = LogpMode::random_consistent;
    s.groups = 300;
    s.options = standard_option_matrix(0.04, StdMode::sample, kDefaultEpsilon, 1e-9);
    const auto r = run_random_suite(s);
    double worst = r.max_identity_gap;
    bool ok = r.ok();
    for (const auto& g : degenerate_cases()) {
      const auto d = verify_group(g, s.options);
      ok = ok && d.ok();
      worst = std::max(worst, d.max_identity_gap);
    }
    return std::pair{ok && worst <= 1e-12, "max_identity_gap=" + fmt(worst) + " degenerate_cases=" +
                                               std::to_string(degenerate_cases().size())};
  });

  criterion("AC3", [] {
    const Group g = fixtures::reference_group();
    const auto tree = build_process_tree(g);
    const auto stats = reward_stats(g);
    const auto owner = assign_tokens(tree);
    const double adv = step_advantage(tree.node(owner.at(2, 0)), g, stats);
    return std::pair{close(adv, -0.22, 0.005), "shared-prefix step advantage=" + fmt(adv)};
  });

  criterion("AC4", [] {
    const Group g = fixtures::reference_group();
    const auto tree = build_process_tree(g);
    const auto owner = assign_tokens(tree);
    const auto members = [&](std::size_t i, std::size_t t) { return tree.node(owner.at(i, t)).members; };
    const auto m = group_metrics(tree, g);
    const bool pass = members(0, 0) == std::vector<std::size_t>{0, 1} &&
                      members(0, 3) == std::vector<std::size_t>{0} &&
                      members(4, 5) == std::vector<std::size_t>{3, 4} && m.path_depth[3] == 2 &&
                      m.intermediate_proportion[3] == 6.0 / 7.0 && tree.node_count() == 10;
    return std::pair{pass, "nodes=" + std::to_string(tree.node_count()) +
                               " depth(4th)=" + std::to_string(m.path_depth[3]) +
                               " p(4th)=" + fmt(m.intermediate_proportion[3])};
  });

  criterion("AC5", [] {
    namespace o = fixtures::oracle;
    const Group g = fixtures::reference_group();
    ObjectiveConfig cfg;
    cfg.beta = 0.0;
    const auto stats = reward_stats(g);
    const auto a = outcome_advantages(g, stats);
    const auto tree = build_process_tree(g);
    const auto owner = assign_tokens(tree);
    const double grpo_tok = objective_grpo(g, a, cfg).value;
    const double prm_tok = objective_prm(g, step_advantages(tree, owner, g, stats), cfg).value;
    const double lam_tok = objective_lambda(g, tree, owner, a, cfg).value;
    ExactSum prm_nodes, lam_nodes;
    for (const auto& n : tree.nodes()) {
      const double adv = step_advantage(n, g, stats);
      prm_nodes.add(static_cast<double>(n.span_length() * n.size()) * adv);
      lam_nodes.add(static_cast<double>(n.span_length()) * adv);
    }
    const double n_tok = static_cast<double>(g.total_tokens());
    const bool pass = close(stats.mean, o::reward_mean, 1e-6) && close(stats.std, o::sample_std, 1e-6) &&
                      close(a[0], o::a_shared, 1e-6) && close(a[2], o::a_best, 1e-6) &&
                      close(a[3], o::a_zero, 1e-6) && close(grpo_tok, o::objective_grpo, 1e-6) &&
                      close(prm_tok, o::objective_grpo, 1e-6) &&
                      close(prm_nodes.value() / n_tok, o::objective_grpo, 1e-6) &&
                      close(lam_tok, o::objective_lambda, 1e-6) &&
                      close(lam_nodes.value() / n_tok, o::objective_lambda, 1e-6);
    return std::pair{pass, "grpo=" + fmt(grpo_tok) + " prm=" + fmt(prm_tok) + " lambda=" + fmt(lam_tok)};
  });

  criterion("AC6", [] {
    double worst = 0.0, worst_ratio = 0.0;
    std::size_t coords = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const ToyPolicy p = random_policy(500 + seed, 2 + seed % 4, 8);
      const Group g = rollout_rewarded(p, 2 + seed % 7, seed);
      for (auto obj : {ToyObjective::grpo, ToyObjective::lambda}) {
        const auto r = finite_diff_check(p, g, {obj}, 1e-5);
        worst = std::max(worst, r.max_rel_error);
        coords += r.coordinates;
      }
      const auto tree = build_process_tree(g);
      const auto owner = assign_tokens(tree);
      const auto full = token_gradients(p, g, {ToyObjective::grpo});
      const auto scaled = token_gradients(p, g, {ToyObjective::lambda});
      for (std::size_t n = 0; n < full.size(); ++n) {
        const double size = static_cast<double>(tree.node(owner.at(full[n].trajectory, full[n].position)).size());
        for (std::size_t j = 0; j < full[n].gradient.size(); ++j) {
          const double want = size * scaled[n].gradient[j];
          const double denom = std::max(std::abs(want), 1e-300);
          if (want != full[n].gradient[j]) worst_ratio = std::max(worst_ratio, std::abs(full[n].gradient[j] - want) / denom);
        }
      }
    }
    return std::pair{worst <= 1e-4 && worst_ratio <= 1e-12 && coords > 0,
                     "max_fd_rel_error=" + fmt(worst) + " coordinates=" + std::to_string(coords) +
                         " max_set_size_ratio_error=" + fmt(worst_ratio)};
  });

  criterion("AC7", [] {
    const auto sc = exploitation_scenario();
    const auto grpo = analytic_gradient(sc.policy, sc.group, {ToyObjective::grpo});
    const auto lam = analytic_gradient(sc.policy, sc.group, {ToyObjective::lambda});
    bool pushes_down = true;
    for (const auto& ctx : sc.exclusive_contexts) {
      pushes_down = pushes_down && grpo.at(ctx)[7] < 0.0 && lam.at(ctx)[7] < 0.0 &&
                    close(grpo.at(ctx)[7], 3.0 * lam.at(ctx)[7], 1e-12 * std::abs(grpo.at(ctx)[7]));
    }
    const double before = prefix_probability(sc.policy, sc.shared_prefix);
    ToyPolicy after_grpo = sc.policy, after_lambda = sc.policy;
    after_grpo.apply_update(grpo, 1.0);
    after_lambda.apply_update(lam, 1.0);
    const double pg = prefix_probability(after_grpo, sc.shared_prefix);
    const double pl = prefix_probability(after_lambda, sc.shared_prefix);
    const bool pass = !sc.exclusive_contexts.empty() && pushes_down && pg < before && pl < before &&
                      before - pg > before - pl;
    return std::pair{pass, "prefix_prob before=" + fmt(before) + " after_grpo=" + fmt(pg) +
                               " after_lambda=" + fmt(pl)};
  });

  criterion("AC8", [] {
    GenParams p;
    p.seed = 808;
    p.logp_mode = LogpMode::random_consistent;
    p.reward_dist = RewardDist::uniform;
    p.length_min = 0;
    std::string text;
    std::vector<Group> groups;
    for (std::uint64_t idx = 0; idx < 10000; ++idx) {
      Group g = generate_random_group(p, idx);
      g.step = static_cast<std::int64_t>(idx / 100);
      text += serialize_group(g) + "\n";
      groups.push_back(std::move(g));
    }
    std::istringstream in(text);
    GroupReader reader(in, true);
    std::size_t n = 0;
    bool same = true;
    std::string again;
    while (auto g = reader.next()) {
      same = same && n < groups.size() && *g == groups[n];
      again += serialize_group(*g) + "\n";
      ++n;
    }
    const bool roundtrip = same && n == groups.size() && again == text;

    const std::string dir = std::filesystem::temp_directory_path() / "grpo_prm_acceptance";
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/groups.jsonl";
    std::ofstream(path, std::ios::binary) << text.substr(0, text.find('\n', text.size() / 20) + 1);
    bool deterministic = true;
    for (const auto& args : std::vector<std::vector<std::string>>{
             {"analyze", path},
             {"verify", path},
             {"weights", path, "--objective", "lambda"},
             {"tree", path, "--index", "3", "--format", "dot"},
             {"verify", "--random", "100", "--seed", "5"}}) {
      int c1 = 0, c2 = 0;
      const std::string a = run_cli_capture(args, c1);
      const std::string b = run_cli_capture(args, c2);
      deterministic = deterministic && c1 == 0 && c2 == 0 && a == b && !a.empty();
    }
    return std::pair{roundtrip && deterministic, "roundtrip_groups=" + std::to_string(n) +
                                                     " byte_identical=" + (deterministic ? "yes" : "no")};
  });

  criterion("AC9", [] {
    GenParams p;
    p.seed = 909;
    p.fork_bias = 0.0;
    p.vocab_size = 16;
    p.distinct_first_tokens = true;
    p.logp_mode = LogpMode::random_consistent;
    ObjectiveConfig cfg;
    cfg.assume_unit_ratio = false;
    bool identical = true;
    std::size_t checked = 0;
    for (std::uint64_t idx = 0; idx < 200; ++idx) {
      const Group g = generate_random_group(p, idx);
      const auto tree = build_process_tree(g);
      if (!is_trivial(tree)) return std::pair{false, std::string("generator produced a nontrivial tree")};
      const auto stats = reward_stats(g);
      const auto a = outcome_advantages(g, stats);
      const auto owner = assign_tokens(tree);
      const auto step = step_advantages(tree, owner, g, stats);
      for (std::size_t i = 0; i < g.size(); ++i) {
        for (double v : step.token_advantage[i]) identical = identical && v == a[i];
      }
      identical = identical &&
                  objective_grpo(g, a, cfg).per_token_terms == objective_prm(g, step, cfg).per_token_terms;
      ++checked;
    }

    MetricsSummary s;
    GenParams shared;
    shared.seed = 910;
    shared.fork_bias = 1.0;
    shared.length_min = 3;
    std::size_t trivial = 0;
    const std::size_t total = 500;
    for (std::uint64_t idx = 0; idx < total; ++idx) {
      const Group g = idx % 5 == 0 ? generate_random_group(p, idx) : generate_random_group(shared, idx);
      const auto m = group_metrics(build_process_tree(g), g);
      trivial += m.trivial;
      s.add(m);
    }
    const double frac = *s.totals().trivial_fraction();
    const bool fraction_ok = trivial >= total / 5 && frac == static_cast<double>(trivial) / static_cast<double>(total);
    return std::pair{identical && fraction_ok, "trivial_groups_checked=" + std::to_string(checked) +
                                                   " mixed_trivial_fraction=" + fmt(frac)};
  });

  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
