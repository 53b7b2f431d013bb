#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "grpo_prm/core_types.hpp"

namespace grpo_prm {

using NodeId = std::size_t;

/**
 * A maximal process set: trajectories sharing a token prefix, together with
 * the step [span_start, span_end) that the set owns. span_end is the length
 * of the members' common prefix, span_start the parent's span_end.
 */
struct ProcessNode {
  NodeId id = 0;
  std::vector<std::size_t> members;  // ascending trajectory indices
  std::size_t span_start = 0;
  std::size_t span_end = 0;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
  std::optional<double> step_reward;  // mean member reward

  std::size_t size() const noexcept { return members.size(); }
  std::size_t span_length() const noexcept { return span_end - span_start; }
  bool is_terminal() const noexcept { return members.size() == 1; }
  bool contains(std::size_t trajectory) const noexcept;
};

/**
 * The tree of process sets of one group. Node 0 is the root (all members,
 * span_start 0); ids follow construction order (pre-order, siblings ordered
 * by smallest member index). Immutable once built.
 */
class ProcessTree {
 public:
  /// Rebuilds a tree from an explicit node list (e.g. a parsed export).
  /// Throws std::invalid_argument if the nodes do not form a valid tree.
  static ProcessTree from_nodes(std::vector<ProcessNode> nodes,
                                std::vector<std::size_t> trajectory_lengths);

  const ProcessNode& root() const { return nodes_.front(); }
  const ProcessNode& node(NodeId id) const { return nodes_.at(id); }
  std::span<const ProcessNode> nodes() const noexcept { return nodes_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return nodes_.empty() ? 0 : nodes_.size() - 1; }

  std::size_t group_size() const noexcept { return lengths_.size(); }
  std::size_t trajectory_length(std::size_t i) const { return lengths_.at(i); }
  std::size_t max_length() const noexcept;

  /// Terminal (singleton) node of trajectory i.
  NodeId terminal(std::size_t i) const { return terminal_.at(i); }

  /// Node ids from the root down to trajectory i's terminal node.
  std::vector<NodeId> path(std::size_t i) const;

 private:
  ProcessTree() = default;
  friend ProcessTree build_process_tree(const Group& group);

  void index_terminals();

  std::vector<ProcessNode> nodes_;
  std::vector<NodeId> terminal_;
  std::vector<std::size_t> lengths_;
};

/// Builds the maximal process sets by recursive radix grouping on the
/// token at each node's common-prefix end. Caches step rewards on nodes.
ProcessTree build_process_tree(const Group& group);

/// Owning node lambda^(i,t) for every token of every trajectory.
struct TokenAssignment {
  std::vector<std::vector<NodeId>> owner;  // [trajectory][position]

  NodeId at(std::size_t i, std::size_t t) const { return owner.at(i).at(t); }
};

TokenAssignment assign_tokens(const ProcessTree& tree);

/// The nodes whose span contains position t, in id order. Their member sets
/// partition the trajectories longer than t. Throws std::out_of_range when
/// t >= the longest trajectory length.
std::vector<NodeId> partition_at(const ProcessTree& tree, std::size_t t);

/// True iff every non-root node is a singleton.
bool is_trivial(const ProcessTree& tree);

}  // namespace grpo_prm
