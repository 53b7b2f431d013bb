#pragma once

#include <istream>
#include <stdexcept>
#include <string>

#include "grpo_prm/toy_sim.hpp"

namespace grpo_prm {

/**
 * Simulation setup read from a flat key = value file. '#' starts a comment.
 *
 *   seed, k, steps, learn_rate, objective (grpo|lambda), std (sample|population),
 *   epsilon, scenario (custom|exploitation), vocab_size, horizon, temperature,
 *   context_order, terminal_token, max_len, default_reward
 *   reward = <tokens> : <value>        (repeatable)
 *   logits = <context tokens> : <vocab_size values>   (repeatable; empty context allowed)
 *
 * scenario = exploitation starts from the hand-built shared-prefix policy and
 * environment; reward and logits lines then apply on top of it.
 */
struct SimSetup {
  SimConfig config;
  ToyPolicy policy;
  ToyEnv env;
};

class SimConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

SimSetup parse_sim_config(std::istream& in);

}  // namespace grpo_prm
