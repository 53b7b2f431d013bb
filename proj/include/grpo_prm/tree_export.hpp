#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "json.hpp"

#include "grpo_prm/core_types.hpp"
#include "grpo_prm/process_tree.hpp"

namespace grpo_prm {

enum class ExportFormat { dot, json };

ExportFormat parse_export_format(std::string_view text);

struct ExportOptions {
  // Span token lists longer than this are cut and marked with "...".
  std::size_t max_label_tokens = 8;
};

/**
 * Renders a tree for inspection. A trajectory reads off the root-to-terminal
 * path. In dot output the root is filled #F8CECC and terminal nodes #FFF2CC;
 * every node shows its member indices, span, span tokens and step reward.
 */
std::string export_tree(const ProcessTree& tree, const Group& group, ExportFormat format,
                        const ExportOptions& options = {});

/// Nested json document: {query_id, lengths, root: {id, members, span,
/// terminal, tokens, truncated, step_reward, children: [...]}}.
nlohmann::json tree_to_json(const ProcessTree& tree, const Group& group,
                            const ExportOptions& options = {});

/// Inverse of tree_to_json for structure (members, spans, step rewards).
ProcessTree tree_from_json(const nlohmann::json& doc);

}  // namespace grpo_prm
