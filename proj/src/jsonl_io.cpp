#include "grpo_prm/jsonl_io.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "grpo_prm/process_tree.hpp"
#include "grpo_prm/step_rewards.hpp"

namespace grpo_prm {

ParseError::ParseError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

namespace {

double finite_number(const nlohmann::json& v, std::size_t line, const std::string& what) {
  if (!v.is_number()) throw ParseError(line, what + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ParseError(line, what + " must be finite");
  return d;
}

std::optional<std::vector<double>> number_array(const nlohmann::json& c, const char* key,
                                                std::size_t expected, std::size_t line,
                                                const std::string& where) {
  const auto it = c.find(key);
  if (it == c.end() || it->is_null()) return std::nullopt;
  if (!it->is_array()) throw ParseError(line, where + "." + key + " must be an array");
  if (it->size() != expected) {
    throw ParseError(line, where + "." + key + " has " + std::to_string(it->size()) +
                               " entries but tokens has " + std::to_string(expected));
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& v : *it) out.push_back(finite_number(v, line, where + "." + key + " entry"));
  return out;
}

}  // namespace

Group group_from_json(const nlohmann::json& doc, std::size_t line) {
  if (!doc.is_object()) throw ParseError(line, "record must be a JSON object");
  Group g;
  const auto qid = doc.find("query_id");
  if (qid == doc.end() || !qid->is_string()) throw ParseError(line, "query_id must be a string");
  g.query_id = qid->get<std::string>();
  if (const auto step = doc.find("step"); step != doc.end() && !step->is_null()) {
    if (!step->is_number_integer()) throw ParseError(line, "step must be an integer");
    g.step = step->get<std::int64_t>();
  }
  const auto comps = doc.find("completions");
  if (comps == doc.end() || !comps->is_array()) throw ParseError(line, "completions must be an array");
  for (std::size_t i = 0; i < comps->size(); ++i) {
    const auto& c = (*comps)[i];
    const std::string where = "completions[" + std::to_string(i) + "]";
    if (!c.is_object()) throw ParseError(line, where + " must be an object");
    const auto toks = c.find("tokens");
    if (toks == c.end() || !toks->is_array()) throw ParseError(line, where + ".tokens must be an array");
    Trajectory t;
    t.tokens.reserve(toks->size());
    for (const auto& v : *toks) {
      if (v.is_number_unsigned()) {
        const auto u = v.get<std::uint64_t>();
        if (u > static_cast<std::uint64_t>(std::numeric_limits<TokenId>::max())) {
          throw ParseError(line, where + ".tokens entry out of range");
        }
        t.tokens.push_back(static_cast<TokenId>(u));
      } else if (v.is_number_integer()) {
        throw ParseError(line, where + ".tokens entries must be non-negative");
      } else {
        throw ParseError(line, where + ".tokens entries must be integers");
      }
    }
    const auto reward = c.find("reward");
    if (reward == c.end()) throw ParseError(line, where + ".reward is missing");
    t.reward = finite_number(*reward, line, where + ".reward");
    t.logp_new = number_array(c, "logp", t.tokens.size(), line, where);
    t.logp_old = number_array(c, "logp_old", t.tokens.size(), line, where);
    t.logp_ref = number_array(c, "logp_ref", t.tokens.size(), line, where);
    g.trajectories.push_back(std::move(t));
  }
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(line, e.what());
  }
  return g;
}

Group parse_group_line(std::string_view text, std::size_t line) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line, std::string("malformed JSON: ") + e.what());
  }
  return group_from_json(doc, line);
}

std::optional<Group> GroupReader::next() {
  std::string text;
  while (std::getline(in_, text)) {
    ++line_;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      return parse_group_line(text, line_);
    } catch (const ParseError& e) {
      if (strict_) throw;
      errors_.push_back(e.what());
    }
  }
  return std::nullopt;
}

namespace {

void write_double(std::string& out, double v) {
  if (!std::isfinite(v)) {
    out += "null";
    return;
  }
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  const std::string_view s(buf, static_cast<std::size_t>(res.ptr - buf));
  out += s;
  if (s.find_first_of(".e") == std::string_view::npos) out += ".0";
}

void write_json(std::string& out, const nlohmann::ordered_json& j) {
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      out += '{';
      bool first = true;
      for (const auto& [k, v] : j.items()) {
        if (!first) out += ',';
        first = false;
        out += nlohmann::json(k).dump();
        out += ':';
        write_json(out, v);
      }
      out += '}';
      break;
    }
    case nlohmann::json::value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& v : j) {
        if (!first) out += ',';
        first = false;
        write_json(out, v);
      }
      out += ']';
      break;
    }
    case nlohmann::json::value_t::number_float:
      write_double(out, j.get<double>());
      break;
    default:
      out += j.dump();
  }
}

}  // namespace

std::string dump_json(const nlohmann::ordered_json& doc) {
  std::string out;
  write_json(out, doc);
  return out;
}

nlohmann::ordered_json group_to_json(const Group& group) {
  nlohmann::ordered_json j;
  j["query_id"] = group.query_id;
  if (group.step) j["step"] = *group.step;
  j["completions"] = nlohmann::ordered_json::array();
  for (const auto& t : group.trajectories) {
    nlohmann::ordered_json c;
    c["tokens"] = nlohmann::ordered_json::array();
    for (TokenId tok : t.tokens) c["tokens"].push_back(static_cast<std::uint64_t>(tok));
    c["reward"] = t.reward;
    if (t.logp_new) c["logp"] = *t.logp_new;
    if (t.logp_old) c["logp_old"] = *t.logp_old;
    if (t.logp_ref) c["logp_ref"] = *t.logp_ref;
    j["completions"].push_back(std::move(c));
  }
  return j;
}

std::string serialize_group(const Group& group) { return dump_json(group_to_json(group)); }

nlohmann::ordered_json weight_record(const Group& group, ToyObjective objective,
                                     const AnalysisConfig& config, std::string* note) {
  const RewardStats stats = reward_stats(group, config.std_mode, config.epsilon);
  const std::vector<double> a = outcome_advantages(group, stats);
  const ProcessTree tree = build_process_tree(group);
  const TokenAssignment owner = assign_tokens(tree);
  const StepAdvantages step = step_advantages(tree, owner, group, stats);
  const TokenValues weights = lambda_weights(tree, owner);

  nlohmann::ordered_json j;
  j["query_id"] = group.query_id;
  if (group.step) j["step"] = *group.step;
  j["objective"] = std::string(to_string(objective));
  try {
    const ObjectiveReport r = objective == ToyObjective::grpo
                                  ? objective_grpo(group, a, config.objective)
                                  : objective_lambda(group, tree, owner, a, config.objective);
    j["objective_value"] = r.value;
    j["loss"] = r.loss();
  } catch (const ConfigError& e) {
    j["objective_value"] = nullptr;
    j["loss"] = nullptr;
    if (note) *note = e.what();
  }
  j["completions"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < group.size(); ++i) {
    nlohmann::ordered_json c;
    c["advantage"] = a[i];
    c["token_advantage"] = step.token_advantage[i];
    c["lambda_weight"] = weights[i];
    j["completions"].push_back(std::move(c));
  }
  return j;
}

std::string analysis_csv_header() {
  return "query_id,step,k,trivial,mean_depth,max_depth,mean_p,objective_grpo,objective_lambda\n";
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

std::string analysis_csv_row(const Group& group, const GroupMetrics& metrics,
                             const AnalysisConfig& config, std::string* note) {
  std::string grpo_cell, lambda_cell;
  try {
    const RewardStats stats = reward_stats(group, config.std_mode, config.epsilon);
    const std::vector<double> a = outcome_advantages(group, stats);
    const ProcessTree tree = build_process_tree(group);
    const TokenAssignment owner = assign_tokens(tree);
    grpo_cell = format_double(objective_grpo(group, a, config.objective).value);
    lambda_cell = format_double(objective_lambda(group, tree, owner, a, config.objective).value);
  } catch (const ConfigError& e) {
    grpo_cell.clear();
    lambda_cell.clear();
    if (note) *note = e.what();
  }
  std::string row = csv_field(group.query_id);
  row += ',';
  if (group.step) row += std::to_string(*group.step);
  row += ',' + std::to_string(group.size());
  row += ',' + std::string(metrics.trivial ? "1" : "0");
  row += ',' + format_double(metrics.mean_depth());
  row += ',' + std::to_string(metrics.max_depth());
  row += ',' + format_double(metrics.mean_proportion());
  row += ',' + grpo_cell + ',' + lambda_cell + '\n';
  return row;
}

}  // namespace grpo_prm
