#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "grpo_prm/core_types.hpp"
#include "grpo_prm/loss_kernels.hpp"
#include "grpo_prm/metrics.hpp"
#include "grpo_prm/toy_sim.hpp"

namespace grpo_prm {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& message);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Decodes one group record; the line number only labels errors.
Group group_from_json(const nlohmann::json& doc, std::size_t line = 0);
Group parse_group_line(std::string_view text, std::size_t line = 0);

/**
 * Streams groups from JSONL, one record per line; blank lines are skipped.
 * Strict mode throws ParseError on the first bad line. Lenient mode skips
 * bad lines, counting them and keeping their messages.
 */
class GroupReader {
 public:
  explicit GroupReader(std::istream& in, bool strict = true) : in_(in), strict_(strict) {}

  std::optional<Group> next();

  std::size_t line_number() const noexcept { return line_; }
  std::size_t error_count() const noexcept { return errors_.size(); }
  const std::vector<std::string>& errors() const noexcept { return errors_; }

 private:
  std::istream& in_;
  bool strict_;
  std::size_t line_ = 0;
  std::vector<std::string> errors_;
};

/// Compact JSON with doubles in shortest round-trip form (always carrying a
/// '.' or exponent so they read back as doubles, -0.0 included).
std::string dump_json(const nlohmann::ordered_json& doc);

nlohmann::ordered_json group_to_json(const Group& group);

/// One line, no trailing newline.
std::string serialize_group(const Group& group);

struct AnalysisConfig {
  ObjectiveConfig objective;
  StdMode std_mode = StdMode::sample;
  double epsilon = kDefaultEpsilon;
};

/// Weight record for one group; objective_value is null when the objective
/// cannot be evaluated (note gets the reason).
nlohmann::ordered_json weight_record(const Group& group, ToyObjective objective,
                                     const AnalysisConfig& config, std::string* note = nullptr);

std::string analysis_csv_header();

/// One CSV row (with newline). Objective cells are blank when the objective
/// cannot be evaluated; note gets the reason.
std::string analysis_csv_row(const Group& group, const GroupMetrics& metrics,
                             const AnalysisConfig& config, std::string* note = nullptr);

}  // namespace grpo_prm
