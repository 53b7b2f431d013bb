#include "grpo_prm/tree_export.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace grpo_prm {

ExportFormat parse_export_format(std::string_view text) {
  if (text == "dot") return ExportFormat::dot;
  if (text == "json") return ExportFormat::json;
  throw std::invalid_argument("unknown export format '" + std::string(text) + "'");
}

namespace {

struct SpanTokens {
  std::vector<TokenId> tokens;
  bool truncated = false;
};

SpanTokens span_tokens(const ProcessNode& n, const Group& group, std::size_t limit) {
  SpanTokens out;
  const auto& seq = group.trajectories.at(n.members.front()).tokens;
  const std::size_t end = std::min(n.span_end, seq.size());
  for (std::size_t t = n.span_start; t < end; ++t) {
    if (out.tokens.size() == limit) {
      out.truncated = true;
      break;
    }
    out.tokens.push_back(seq[t]);
  }
  return out;
}

std::string dot_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::string format_reward(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", r);
  return buf;
}

std::string dot_label(const ProcessNode& n, const Group& group, const ExportOptions& options) {
  std::ostringstream label;
  label << '{';
  for (std::size_t j = 0; j < n.members.size(); ++j) label << (j ? "," : "") << n.members[j];
  label << "}\\n[" << n.span_start << ',' << n.span_end << ')';
  const auto span = span_tokens(n, group, options.max_label_tokens);
  if (!span.tokens.empty()) {
    label << "\\n";
    for (std::size_t j = 0; j < span.tokens.size(); ++j) label << (j ? " " : "") << span.tokens[j];
    if (span.truncated) label << " ...";
  }
  if (n.step_reward) label << "\\nR=" << format_reward(*n.step_reward);
  return label.str();
}

std::string to_dot(const ProcessTree& tree, const Group& group, const ExportOptions& options) {
  std::ostringstream out;
  out << "digraph process_tree {\n";
  out << "  label=\"" << dot_escape(group.query_id) << "\";\n";
  out << "  node [shape=box, style=\"rounded,filled\", fillcolor=white, fontname=\"monospace\"];\n";
  for (const auto& n : tree.nodes()) {
    out << "  n" << n.id << " [label=\"" << dot_label(n, group, options) << '"';
    if (n.id == tree.root().id) {
      out << ", fillcolor=\"#F8CECC\"";
    } else if (n.is_terminal()) {
      out << ", fillcolor=\"#FFF2CC\"";
    }
    out << "];\n";
  }
  for (const auto& n : tree.nodes()) {
    for (NodeId c : n.children) out << "  n" << n.id << " -> n" << c << ";\n";
  }
  out << "}\n";
  return out.str();
}

nlohmann::json node_to_json(const ProcessTree& tree, const ProcessNode& n, const Group& group,
                            const ExportOptions& options) {
  const auto span = span_tokens(n, group, options.max_label_tokens);
  nlohmann::json j;
  j["id"] = n.id;
  j["members"] = n.members;
  j["span"] = {n.span_start, n.span_end};
  j["terminal"] = n.is_terminal();
  j["tokens"] = span.tokens;
  j["truncated"] = span.truncated;
  j["step_reward"] = n.step_reward ? nlohmann::json(*n.step_reward) : nlohmann::json(nullptr);
  j["children"] = nlohmann::json::array();
  for (NodeId c : n.children) j["children"].push_back(node_to_json(tree, tree.node(c), group, options));
  return j;
}

void collect_nodes(const nlohmann::json& j, std::optional<NodeId> parent,
                   std::vector<ProcessNode>& out) {
  ProcessNode n;
  n.id = j.at("id").get<NodeId>();
  n.members = j.at("members").get<std::vector<std::size_t>>();
  const auto& span = j.at("span");
  if (!span.is_array() || span.size() != 2) throw std::invalid_argument("span must be [start, end]");
  n.span_start = span[0].get<std::size_t>();
  n.span_end = span[1].get<std::size_t>();
  n.parent = parent;
  if (j.contains("step_reward") && !j["step_reward"].is_null()) {
    n.step_reward = j["step_reward"].get<double>();
  }
  for (const auto& c : j.at("children")) n.children.push_back(c.at("id").get<NodeId>());
  const NodeId self = n.id;
  out.push_back(std::move(n));
  for (const auto& c : j.at("children")) collect_nodes(c, self, out);
}

}  // namespace

nlohmann::json tree_to_json(const ProcessTree& tree, const Group& group,
                            const ExportOptions& options) {
  nlohmann::json doc;
  doc["query_id"] = group.query_id;
  std::vector<std::size_t> lengths;
  for (std::size_t i = 0; i < tree.group_size(); ++i) lengths.push_back(tree.trajectory_length(i));
  doc["lengths"] = lengths;
  doc["root"] = node_to_json(tree, tree.root(), group, options);
  return doc;
}

ProcessTree tree_from_json(const nlohmann::json& doc) {
  try {
    std::vector<ProcessNode> nodes;
    collect_nodes(doc.at("root"), std::nullopt, nodes);
    return ProcessTree::from_nodes(std::move(nodes), doc.at("lengths").get<std::vector<std::size_t>>());
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed tree document: ") + e.what());
  }
}

std::string export_tree(const ProcessTree& tree, const Group& group, ExportFormat format,
                        const ExportOptions& options) {
  if (format == ExportFormat::dot) return to_dot(tree, group, options);
  return tree_to_json(tree, group, options).dump(2) + "\n";
}

}  // namespace grpo_prm
