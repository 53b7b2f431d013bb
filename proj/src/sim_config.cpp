#include "grpo_prm/sim_config.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>
#include <utility>
#include <vector>

namespace grpo_prm {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& text, std::size_t line) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (text.empty() || res.ec != std::errc() || res.ptr != end) {
    throw SimConfigError("line " + std::to_string(line) + ": invalid number '" + text + "'");
  }
  return value;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, std::size_t line) {
  std::vector<T> out;
  std::istringstream in(text);
  std::string item;
  while (in >> item) out.push_back(parse_number<T>(item, line));
  return out;
}

std::pair<std::string, std::string> split_colon(const std::string& value, std::size_t line) {
  const auto c = value.find(':');
  if (c == std::string::npos) {
    throw SimConfigError("line " + std::to_string(line) + ": expected '<tokens> : <values>'");
  }
  return {trim(std::string_view(value).substr(0, c)), trim(std::string_view(value).substr(c + 1))};
}

}  // namespace

SimSetup parse_sim_config(std::istream& in) {
  std::map<std::string, std::pair<std::string, std::size_t>> scalars;
  std::vector<std::pair<std::string, std::size_t>> rewards, logits;
  static const std::vector<std::string> known = {
      "seed",  "k",           "steps",   "learn_rate",    "objective",      "std",    "epsilon",
      "scenario", "vocab_size", "horizon", "temperature", "context_order", "terminal_token",
      "max_len", "default_reward"};

  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string text = trim(std::string_view(raw).substr(0, raw.find('#')));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw SimConfigError("line " + std::to_string(line) + ": expected key = value");
    const std::string key = trim(std::string_view(text).substr(0, eq));
    const std::string value = trim(std::string_view(text).substr(eq + 1));
    if (key == "reward") {
      rewards.emplace_back(value, line);
    } else if (key == "logits") {
      logits.emplace_back(value, line);
    } else if (std::find(known.begin(), known.end(), key) != known.end()) {
      if (scalars.count(key)) throw SimConfigError("line " + std::to_string(line) + ": duplicate key '" + key + "'");
      scalars[key] = {value, line};
    } else {
      throw SimConfigError("line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
  }

  const auto get = [&](const std::string& key) -> const std::pair<std::string, std::size_t>* {
    const auto it = scalars.find(key);
    return it == scalars.end() ? nullptr : &it->second;
  };
  const auto wrap = [](std::size_t at, auto&& fn) {
    try {
      return fn();
    } catch (const std::invalid_argument& e) {
      throw SimConfigError("line " + std::to_string(at) + ": " + e.what());
    }
  };

  SimConfig cfg;
  if (auto v = get("seed")) cfg.seed = parse_number<std::uint64_t>(v->first, v->second);
  if (auto v = get("k")) cfg.k = parse_number<std::size_t>(v->first, v->second);
  if (auto v = get("steps")) cfg.steps = parse_number<std::size_t>(v->first, v->second);
  if (auto v = get("learn_rate")) cfg.learn_rate = parse_number<double>(v->first, v->second);
  if (auto v = get("epsilon")) cfg.epsilon = parse_number<double>(v->first, v->second);
  if (auto v = get("objective")) cfg.objective = wrap(v->second, [&] { return parse_toy_objective(v->first); });
  if (auto v = get("std")) cfg.std_mode = wrap(v->second, [&] { return parse_std_mode(v->first); });
  wrap(0, [&] {
    cfg.validate();
    return 0;
  });

  const std::string scenario = get("scenario") ? get("scenario")->first : "custom";
  if (scenario != "custom" && scenario != "exploitation") {
    throw SimConfigError("line " + std::to_string(get("scenario")->second) + ": unknown scenario '" + scenario + "'");
  }

  SimSetup setup{cfg, ToyPolicy(2, 1), ToyEnv{}};
  if (scenario == "exploitation") {
    for (const char* key : {"vocab_size", "horizon", "temperature", "context_order"}) {
      if (get(key)) {
        throw SimConfigError("line " + std::to_string(get(key)->second) + ": '" + key +
                             "' cannot be combined with scenario = exploitation");
      }
    }
    auto sc = exploitation_scenario();
    setup.policy = std::move(sc.policy);
    setup.env = std::move(sc.env);
  } else {
    std::size_t vocab = 4, horizon = 6, order = 4;
    double temperature = 1.0;
    if (auto v = get("vocab_size")) vocab = parse_number<std::size_t>(v->first, v->second);
    if (auto v = get("horizon")) horizon = parse_number<std::size_t>(v->first, v->second);
    if (auto v = get("context_order")) order = parse_number<std::size_t>(v->first, v->second);
    if (auto v = get("temperature")) temperature = parse_number<double>(v->first, v->second);
    setup.policy = wrap(0, [&] { return ToyPolicy(vocab, horizon, temperature, order); });
    setup.env.max_len = horizon;
  }
  if (auto v = get("terminal_token")) setup.env.terminal_token = parse_number<TokenId>(v->first, v->second);
  if (auto v = get("max_len")) setup.env.max_len = parse_number<std::size_t>(v->first, v->second);
  if (auto v = get("default_reward")) setup.env.default_reward = parse_number<double>(v->first, v->second);

  for (const auto& [value, at] : rewards) {
    const auto [toks, val] = split_colon(value, at);
    const auto seq = parse_list<TokenId>(toks, at);
    const auto r = parse_list<double>(val, at);
    if (r.size() != 1) throw SimConfigError("line " + std::to_string(at) + ": reward needs exactly one value");
    setup.env.reward_table[seq] = r.front();
  }
  for (const auto& [value, at] : logits) {
    const auto [toks, val] = split_colon(value, at);
    const auto ctx = parse_list<TokenId>(toks, at);
    auto z = parse_list<double>(val, at);
    wrap(at, [&] {
      setup.policy.set_logits(ctx, std::move(z));
      return 0;
    });
  }
  return setup;
}

}  // namespace grpo_prm
