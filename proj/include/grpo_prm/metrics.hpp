#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "grpo_prm/core_types.hpp"
#include "grpo_prm/exact_sum.hpp"
#include "grpo_prm/process_tree.hpp"

namespace grpo_prm {

/**
 * Shared-prefix diagnostics of one group.
 *
 * path_depth[i] counts the nodes strictly between the root and trajectory i's
 * terminal node. n_term[i] is the length of the terminal node's span and
 * intermediate_proportion[i] = (len - n_term) / len, defined as 0 for an
 * empty trajectory (such trajectories are counted in zero_length_count).
 */
struct GroupMetrics {
  std::string query_id;
  std::optional<std::int64_t> step;
  std::vector<std::size_t> path_depth;
  std::vector<std::size_t> n_term;
  std::vector<double> intermediate_proportion;
  bool trivial = false;
  std::size_t zero_length_count = 0;

  std::size_t size() const noexcept { return path_depth.size(); }
  double mean_depth() const;
  std::size_t max_depth() const;
  double mean_proportion() const;
};

GroupMetrics group_metrics(const ProcessTree& tree, const Group& group);

/**
 * Mergeable quantile sketch over non-negative values with relative accuracy
 * alpha: every reported quantile is within a factor (1 +/- alpha) of a value
 * whose rank matches. Values below kMinPositive land in an exact zero bucket.
 * Buckets are logarithmic, so merging is exact and insertion order never
 * affects the result.
 */
class QuantileSketch {
 public:
  static constexpr double kAlpha = 0.01;
  static constexpr double kMinPositive = 1e-12;

  void add(double value);
  void merge(const QuantileSketch& other);

  std::uint64_t count() const noexcept { return count_; }

  /// Nearest-rank quantile, q in [0, 1]; empty sketch yields nullopt.
  std::optional<double> quantile(double q) const;

  nlohmann::json to_json() const;
  static QuantileSketch from_json(const nlohmann::json& doc);

  bool operator==(const QuantileSketch&) const = default;

 private:
  static double gamma();
  std::map<std::int32_t, std::uint64_t> buckets_;
  std::uint64_t zero_count_ = 0;
  std::uint64_t count_ = 0;
};

/// Exactly mergeable running totals for one slice of the stream.
struct MetricTotals {
  std::uint64_t groups = 0;
  std::uint64_t trivial_groups = 0;
  std::uint64_t trajectories = 0;
  std::uint64_t zero_length_trajectories = 0;
  std::uint64_t depth_sum = 0;
  std::uint64_t max_depth = 0;
  ExactSum proportion_sum;

  void add(const GroupMetrics& m);
  void merge(const MetricTotals& other);

  std::optional<double> trivial_fraction() const;
  std::optional<double> mean_depth() const;
  std::optional<double> mean_proportion() const;

  nlohmann::json to_json() const;
  static MetricTotals from_json(const nlohmann::json& doc);
};

/**
 * Aggregate over a stream of groups. Counts, means and quantile sketches are
 * exactly mergeable, and the JSON form carries full state so summaries
 * written by separate runs merge to the single-run result.
 */
class MetricsSummary {
 public:
  void add(const GroupMetrics& m);
  void merge(const MetricsSummary& other);

  const MetricTotals& totals() const noexcept { return totals_; }
  const QuantileSketch& depth_sketch() const noexcept { return depth_; }
  const QuantileSketch& proportion_sketch() const noexcept { return proportion_; }
  const std::map<std::int64_t, MetricTotals>& per_step() const noexcept { return per_step_; }

  nlohmann::json to_json() const;
  static MetricsSummary from_json(const nlohmann::json& doc);

  /// Per-step series as CSV: step,groups,trivial_fraction,mean_depth,mean_p.
  std::string steps_csv() const;

 private:
  MetricTotals totals_;
  QuantileSketch depth_;
  QuantileSketch proportion_;
  std::map<std::int64_t, MetricTotals> per_step_;
};

/// Shortest round-trip decimal rendering; used by every CSV writer.
std::string format_double(double value);

}  // namespace grpo_prm
