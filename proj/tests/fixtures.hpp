#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "grpo_prm/core_types.hpp"
#include "grpo_prm/process_tree.hpp"

namespace fixtures {

using grpo_prm::Group;
using grpo_prm::TokenId;
using grpo_prm::Trajectory;

// Six completions with shared prefixes; rewards (0.5, 0.5, 1, 0, 0, 0.5).
inline Group reference_group() {
  const std::vector<std::vector<TokenId>> seqs = {{5, 5, 5, 1, 1, 1}, {5, 5, 5, 2, 2},
                                                  {7, 7, 7, 7, 3, 3}, {7, 7, 7, 7, 4, 4, 8},
                                                  {7, 7, 7, 7, 4, 4, 9, 9}, {6, 6}};
  const std::vector<double> rewards = {0.5, 0.5, 1.0, 0.0, 0.0, 0.5};
  Group g;
  g.query_id = "reference";
  for (std::size_t i = 0; i < seqs.size(); ++i) g.trajectories.push_back(Trajectory{seqs[i], rewards[i], {}, {}, {}});
  return g;
}

inline Group make_group(std::vector<std::vector<TokenId>> seqs, std::vector<double> rewards,
                        std::string id = "g") {
  Group g;
  g.query_id = std::move(id);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    g.trajectories.push_back(Trajectory{std::move(seqs[i]), rewards[i], {}, {}, {}});
  }
  return g;
}

// Values from an independent high-precision enumeration.
namespace oracle {
inline constexpr double reward_mean = 0.41666666666666669;
inline constexpr double sample_std = 0.3763863263545405;
inline constexpr double a_shared = 0.22140372138502376;   // completions 1, 2, 6
inline constexpr double a_best = 1.5498260496951666;      // completion 3
inline constexpr double a_zero = -1.107018606925119;      // completions 4, 5
inline constexpr double objective_grpo = -0.13023748316766112;
inline constexpr double objective_lambda = -0.03255937079191531;
inline constexpr double step_adv_prefix = -0.22140372138502393;  // {3,4,5}
inline constexpr double step_adv_pair = -1.107018606925119;      // {4,5}
}  // namespace oracle

struct NodeKey {
  std::set<std::size_t> members;
  std::size_t start = 0;
  std::size_t end = 0;
  auto operator<=>(const NodeKey&) const = default;
};

/**
 * Process sets by brute force: every class of "same first n tokens" for
 * every n, plus every singleton. A set's end is the largest n producing it
 * (its own length for a singleton never produced); its start is the end of
 * the smallest strict superset.
 */
inline std::set<NodeKey> brute_force_nodes(const Group& g) {
  const std::size_t k = g.size();
  std::map<std::set<std::size_t>, std::size_t> end_of;
  for (std::size_t n = 0; n <= g.max_length(); ++n) {
    std::map<std::vector<TokenId>, std::set<std::size_t>> classes;
    for (std::size_t i = 0; i < k; ++i) {
      const auto& tok = g.trajectories[i].tokens;
      if (tok.size() < n) continue;
      classes[std::vector<TokenId>(tok.begin(), tok.begin() + static_cast<std::ptrdiff_t>(n))].insert(i);
    }
    for (const auto& [key, members] : classes) {
      auto& e = end_of[members];
      e = std::max(e, n);
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (!end_of.count({i})) end_of[{i}] = g.trajectories[i].length();
  }
  std::set<NodeKey> out;
  for (const auto& [members, end] : end_of) {
    std::size_t start = 0, best = k + 1;
    for (const auto& [other, other_end] : end_of) {
      if (other.size() > members.size() && other.size() < best &&
          std::includes(other.begin(), other.end(), members.begin(), members.end())) {
        best = other.size();
        start = other_end;
      }
    }
    out.insert({members, start, end});
  }
  return out;
}

inline std::set<NodeKey> tree_nodes(const grpo_prm::ProcessTree& tree) {
  std::set<NodeKey> out;
  for (const auto& n : tree.nodes()) {
    out.insert({std::set<std::size_t>(n.members.begin(), n.members.end()), n.span_start, n.span_end});
  }
  return out;
}

}  // namespace fixtures
