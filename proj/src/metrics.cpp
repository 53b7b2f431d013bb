#include "grpo_prm/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace grpo_prm {

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double GroupMetrics::mean_depth() const {
  if (path_depth.empty()) return 0.0;
  std::uint64_t s = 0;
  for (auto d : path_depth) s += d;
  return static_cast<double>(s) / static_cast<double>(path_depth.size());
}

std::size_t GroupMetrics::max_depth() const {
  return path_depth.empty() ? 0 : *std::max_element(path_depth.begin(), path_depth.end());
}

double GroupMetrics::mean_proportion() const {
  if (intermediate_proportion.empty()) return 0.0;
  return exact_sum(intermediate_proportion) / static_cast<double>(intermediate_proportion.size());
}

GroupMetrics group_metrics(const ProcessTree& tree, const Group& group) {
  if (tree.group_size() != group.size()) {
    throw std::invalid_argument("tree and group sizes differ");
  }
  GroupMetrics m;
  m.query_id = group.query_id;
  m.step = group.step;
  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto path = tree.path(i);
    m.path_depth.push_back(path.size() >= 2 ? path.size() - 2 : 0);
    const auto& term = tree.node(tree.terminal(i));
    const std::size_t len = group.trajectories[i].length();
    m.n_term.push_back(term.span_length());
    if (len == 0) {
      ++m.zero_length_count;
      m.intermediate_proportion.push_back(0.0);
    } else {
      m.intermediate_proportion.push_back(static_cast<double>(len - term.span_length()) /
                                          static_cast<double>(len));
    }
  }
  m.trivial = is_trivial(tree);
  return m;
}

// --- QuantileSketch -------------------------------------------------------

double QuantileSketch::gamma() { return (1.0 + kAlpha) / (1.0 - kAlpha); }

void QuantileSketch::add(double value) {
  if (!std::isfinite(value) || value < 0.0) {
    throw std::invalid_argument("quantile sketch accepts finite non-negative values only");
  }
  ++count_;
  if (value < kMinPositive) {
    ++zero_count_;
    return;
  }
  const auto idx = static_cast<std::int32_t>(std::ceil(std::log(value) / std::log(gamma())));
  ++buckets_[idx];
}

void QuantileSketch::merge(const QuantileSketch& other) {
  for (const auto& [idx, c] : other.buckets_) buckets_[idx] += c;
  zero_count_ += other.zero_count_;
  count_ += other.count_;
}

std::optional<double> QuantileSketch::quantile(double q) const {
  if (count_ == 0) return std::nullopt;
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile must be in [0, 1]");
  const auto rank = static_cast<std::uint64_t>(std::floor(q * static_cast<double>(count_ - 1)));
  std::uint64_t seen = zero_count_;
  if (rank < seen) return 0.0;
  for (const auto& [idx, c] : buckets_) {
    seen += c;
    if (rank < seen) return 2.0 * std::pow(gamma(), idx) / (gamma() + 1.0);
  }
  return 2.0 * std::pow(gamma(), buckets_.rbegin()->first) / (gamma() + 1.0);
}

nlohmann::json QuantileSketch::to_json() const {
  nlohmann::json buckets = nlohmann::json::array();
  for (const auto& [idx, c] : buckets_) buckets.push_back({idx, c});
  return {{"alpha", kAlpha}, {"zero_count", zero_count_}, {"count", count_}, {"buckets", buckets}};
}

QuantileSketch QuantileSketch::from_json(const nlohmann::json& doc) {
  if (doc.at("alpha").get<double>() != kAlpha) throw std::invalid_argument("sketch alpha mismatch");
  QuantileSketch s;
  s.zero_count_ = doc.at("zero_count").get<std::uint64_t>();
  s.count_ = doc.at("count").get<std::uint64_t>();
  std::uint64_t total = s.zero_count_;
  for (const auto& b : doc.at("buckets")) {
    const auto c = b.at(1).get<std::uint64_t>();
    s.buckets_[b.at(0).get<std::int32_t>()] += c;
    total += c;
  }
  if (total != s.count_) throw std::invalid_argument("sketch bucket counts do not add up");
  return s;
}

// --- MetricTotals ---------------------------------------------------------

void MetricTotals::add(const GroupMetrics& m) {
  ++groups;
  if (m.trivial) ++trivial_groups;
  trajectories += m.size();
  zero_length_trajectories += m.zero_length_count;
  for (auto d : m.path_depth) {
    depth_sum += d;
    max_depth = std::max<std::uint64_t>(max_depth, d);
  }
  for (double p : m.intermediate_proportion) proportion_sum.add(p);
}

void MetricTotals::merge(const MetricTotals& o) {
  groups += o.groups;
  trivial_groups += o.trivial_groups;
  trajectories += o.trajectories;
  zero_length_trajectories += o.zero_length_trajectories;
  depth_sum += o.depth_sum;
  max_depth = std::max(max_depth, o.max_depth);
  proportion_sum.merge(o.proportion_sum);
}

std::optional<double> MetricTotals::trivial_fraction() const {
  if (groups == 0) return std::nullopt;
  return static_cast<double>(trivial_groups) / static_cast<double>(groups);
}

std::optional<double> MetricTotals::mean_depth() const {
  if (trajectories == 0) return std::nullopt;
  return static_cast<double>(depth_sum) / static_cast<double>(trajectories);
}

std::optional<double> MetricTotals::mean_proportion() const {
  if (trajectories == 0) return std::nullopt;
  return proportion_sum.value() / static_cast<double>(trajectories);
}

namespace {

nlohmann::json or_null(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json MetricTotals::to_json() const {
  const auto partials = proportion_sum.partials();
  return {{"groups", groups},
          {"trivial_groups", trivial_groups},
          {"trivial_fraction", or_null(trivial_fraction())},
          {"trajectories", trajectories},
          {"zero_length_trajectories", zero_length_trajectories},
          {"mean_depth", or_null(mean_depth())},
          {"max_depth", max_depth},
          {"mean_p", or_null(mean_proportion())},
          {"depth_sum", depth_sum},
          {"p_sum_partials", std::vector<double>(partials.begin(), partials.end())}};
}

MetricTotals MetricTotals::from_json(const nlohmann::json& doc) {
  MetricTotals t;
  t.groups = doc.at("groups").get<std::uint64_t>();
  t.trivial_groups = doc.at("trivial_groups").get<std::uint64_t>();
  t.trajectories = doc.at("trajectories").get<std::uint64_t>();
  t.zero_length_trajectories = doc.at("zero_length_trajectories").get<std::uint64_t>();
  t.depth_sum = doc.at("depth_sum").get<std::uint64_t>();
  t.max_depth = doc.at("max_depth").get<std::uint64_t>();
  const auto partials = doc.at("p_sum_partials").get<std::vector<double>>();
  t.proportion_sum = ExactSum::from_partials(partials);
  if (t.trivial_groups > t.groups) throw std::invalid_argument("trivial_groups exceeds groups");
  return t;
}

// --- MetricsSummary -------------------------------------------------------

void MetricsSummary::add(const GroupMetrics& m) {
  totals_.add(m);
  for (auto d : m.path_depth) depth_.add(static_cast<double>(d));
  for (double p : m.intermediate_proportion) proportion_.add(p);
  if (m.step) per_step_[*m.step].add(m);
}

void MetricsSummary::merge(const MetricsSummary& other) {
  totals_.merge(other.totals_);
  depth_.merge(other.depth_);
  proportion_.merge(other.proportion_);
  for (const auto& [step, t] : other.per_step_) per_step_[step].merge(t);
}

namespace {

nlohmann::json quantiles(const QuantileSketch& s) {
  return {{"q10", or_null(s.quantile(0.1))}, {"q50", or_null(s.quantile(0.5))},
          {"q90", or_null(s.quantile(0.9))}};
}

}  // namespace

nlohmann::json MetricsSummary::to_json() const {
  nlohmann::json j = totals_.to_json();
  j["depth_quantiles"] = quantiles(depth_);
  j["p_quantiles"] = quantiles(proportion_);
  j["depth_sketch"] = depth_.to_json();
  j["p_sketch"] = proportion_.to_json();
  j["per_step"] = nlohmann::json::array();
  for (const auto& [step, t] : per_step_) {
    auto row = t.to_json();
    row["step"] = step;
    j["per_step"].push_back(std::move(row));
  }
  return j;
}

MetricsSummary MetricsSummary::from_json(const nlohmann::json& doc) {
  MetricsSummary s;
  s.totals_ = MetricTotals::from_json(doc);
  s.depth_ = QuantileSketch::from_json(doc.at("depth_sketch"));
  s.proportion_ = QuantileSketch::from_json(doc.at("p_sketch"));
  for (const auto& row : doc.at("per_step")) {
    s.per_step_[row.at("step").get<std::int64_t>()].merge(MetricTotals::from_json(row));
  }
  return s;
}

std::string MetricsSummary::steps_csv() const {
  std::ostringstream out;
  out << "step,groups,trivial_fraction,mean_depth,mean_p\n";
  const auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& [step, t] : per_step_) {
    out << step << ',' << t.groups << ',' << cell(t.trivial_fraction()) << ',' << cell(t.mean_depth())
        << ',' << cell(t.mean_proportion()) << '\n';
  }
  return out.str();
}

}  // namespace grpo_prm
