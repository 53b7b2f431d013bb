#include "grpo_prm/process_tree.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>

#include "grpo_prm/exact_sum.hpp"

namespace grpo_prm {

bool ProcessNode::contains(std::size_t trajectory) const noexcept {
  return std::binary_search(members.begin(), members.end(), trajectory);
}

std::size_t ProcessTree::max_length() const noexcept {
  std::size_t n = 0;
  for (std::size_t len : lengths_) n = std::max(n, len);
  return n;
}

std::vector<NodeId> ProcessTree::path(std::size_t i) const {
  std::vector<NodeId> out;
  std::optional<NodeId> cur = terminal(i);
  while (cur) {
    out.push_back(*cur);
    cur = nodes_[*cur].parent;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

void ProcessTree::index_terminals() {
  terminal_.assign(lengths_.size(), 0);
  std::vector<bool> seen(lengths_.size(), false);
  for (const auto& n : nodes_) {
    if (n.children.empty()) {
      if (!n.is_terminal()) throw std::invalid_argument("leaf node is not a singleton");
      const std::size_t i = n.members.front();
      if (seen[i]) throw std::invalid_argument("trajectory has two terminal nodes");
      seen[i] = true;
      terminal_[i] = n.id;
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw std::invalid_argument("trajectory without a terminal node");
  }
}

namespace {

struct Builder {
  const Group& group;
  std::vector<ProcessNode>& nodes;

  const std::vector<TokenId>& tokens(std::size_t i) const {
    return group.trajectories[i].tokens;
  }

  std::size_t common_prefix_end(const std::vector<std::size_t>& members, std::size_t start) const {
    std::size_t end = start;
    const auto& first = tokens(members.front());
    for (;;) {
      if (end >= first.size()) return end;
      const TokenId tok = first[end];
      for (std::size_t m : members) {
        const auto& seq = tokens(m);
        if (end >= seq.size() || seq[end] != tok) return end;
      }
      ++end;
    }
  }

  NodeId add_node(std::vector<std::size_t> members, std::size_t start, std::size_t end,
                  std::optional<NodeId> parent) {
    ProcessNode n;
    n.id = nodes.size();
    n.members = std::move(members);
    n.span_start = start;
    n.span_end = end;
    n.parent = parent;
    ExactSum rewards;
    for (std::size_t m : n.members) rewards.add(group.trajectories[m].reward);
    n.step_reward = rewards.value() / static_cast<double>(n.members.size());
    nodes.push_back(std::move(n));
    if (parent) nodes[*parent].children.push_back(nodes.back().id);
    return nodes.back().id;
  }

  // members ascending; start = parent's span_end.
  void build(std::vector<std::size_t> members, std::size_t start, std::optional<NodeId> parent) {
    if (members.size() == 1) {
      const std::size_t end = std::max(start, tokens(members.front()).size());
      add_node(std::move(members), start, end, parent);
      return;
    }
    const std::size_t end = common_prefix_end(members, start);
    const NodeId self = add_node(members, start, end, parent);

    std::vector<std::size_t> ended;
    std::map<TokenId, std::vector<std::size_t>> by_token;
    for (std::size_t m : members) {
      const auto& seq = tokens(m);
      if (seq.size() == end) {
        ended.push_back(m);
      } else {
        by_token[seq[end]].push_back(m);
      }
    }

    if (ended.size() == members.size()) {
      // Every member stops here (duplicates): only singletons remain below.
      for (std::size_t m : members) add_node({m}, end, end, self);
      return;
    }

    std::vector<std::vector<std::size_t>> classes;
    for (std::size_t m : ended) classes.push_back({m});
    for (auto& [tok, cls] : by_token) classes.push_back(std::move(cls));
    std::sort(classes.begin(), classes.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    for (auto& cls : classes) build(std::move(cls), end, self);
  }
};

}  // namespace

ProcessTree build_process_tree(const Group& group) {
  group.validate();
  ProcessTree tree;
  tree.lengths_.reserve(group.size());
  for (const auto& g : group.trajectories) tree.lengths_.push_back(g.length());

  std::vector<std::size_t> all(group.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Builder{group, tree.nodes_}.build(std::move(all), 0, std::nullopt);
  tree.index_terminals();
  return tree;
}

ProcessTree ProcessTree::from_nodes(std::vector<ProcessNode> nodes,
                                    std::vector<std::size_t> trajectory_lengths) {
  if (nodes.empty()) throw std::invalid_argument("tree has no nodes");
  const std::size_t k = trajectory_lengths.size();
  std::sort(nodes.begin(), nodes.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id != i) throw std::invalid_argument("node ids must be 0..n-1");
    std::sort(nodes[i].members.begin(), nodes[i].members.end());
    if (nodes[i].members.empty()) throw std::invalid_argument("node with no members");
    if (nodes[i].members.back() >= k) throw std::invalid_argument("member index out of range");
    if (nodes[i].span_start > nodes[i].span_end) throw std::invalid_argument("inverted span");
  }
  if (nodes[0].parent || nodes[0].members.size() != k || nodes[0].span_start != 0) {
    throw std::invalid_argument("node 0 must be the root covering every trajectory");
  }
  for (const auto& n : nodes) {
    std::vector<std::size_t> covered;
    for (NodeId c : n.children) {
      if (c >= nodes.size() || nodes[c].parent != n.id) {
        throw std::invalid_argument("inconsistent parent/child links at node " + std::to_string(n.id));
      }
      if (nodes[c].span_start != n.span_end) {
        throw std::invalid_argument("child span does not start at parent span end");
      }
      covered.insert(covered.end(), nodes[c].members.begin(), nodes[c].members.end());
    }
    if (!n.children.empty()) {
      std::sort(covered.begin(), covered.end());
      if (covered != n.members) throw std::invalid_argument("children do not partition their parent");
    }
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (i > 0 && !nodes[i].parent) throw std::invalid_argument("non-root node without a parent");
  }
  ProcessTree tree;
  tree.nodes_ = std::move(nodes);
  tree.lengths_ = std::move(trajectory_lengths);
  tree.index_terminals();
  for (std::size_t i = 0; i < k; ++i) {
    if (tree.nodes_[tree.terminal_[i]].span_end != std::max(tree.lengths_[i], tree.nodes_[tree.terminal_[i]].span_start)) {
      throw std::invalid_argument("terminal span does not end at trajectory length");
    }
  }
  return tree;
}

TokenAssignment assign_tokens(const ProcessTree& tree) {
  TokenAssignment a;
  a.owner.resize(tree.group_size());
  for (std::size_t i = 0; i < tree.group_size(); ++i) {
    auto& row = a.owner[i];
    row.resize(tree.trajectory_length(i));
    for (NodeId id : tree.path(i)) {
      const auto& n = tree.node(id);
      const std::size_t end = std::min(n.span_end, row.size());
      for (std::size_t t = n.span_start; t < end; ++t) row[t] = id;
    }
  }
  return a;
}

std::vector<NodeId> partition_at(const ProcessTree& tree, std::size_t t) {
  if (t >= tree.max_length()) {
    throw std::out_of_range("position " + std::to_string(t) + " is outside [0, " +
                            std::to_string(tree.max_length()) + ")");
  }
  std::vector<NodeId> out;
  for (const auto& n : tree.nodes()) {
    if (n.span_start <= t && t < n.span_end) out.push_back(n.id);
  }
  return out;
}

bool is_trivial(const ProcessTree& tree) {
  return std::all_of(tree.nodes().begin() + 1, tree.nodes().end(),
                     [](const ProcessNode& n) { return n.is_terminal(); });
}

}  // namespace grpo_prm
