// SPDX-License-Identifier: Apache-2.0
//
// Group-relative policy optimization with binary test rewards: K samples per
// task, rewards from the sandbox, advantages centred on the group mean, and a
// clipped sequence-level surrogate plus a KL penalty to the initial policy.
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "april/errors.hpp"
#include "april/llm_backend.hpp"
#include "april/policy.hpp"
#include "april/run_store.hpp"
#include "april/sandbox.hpp"
#include "april/task_model.hpp"

namespace april {

struct GRPOConfig {
  std::size_t K = 8;
  double clip_epsilon = 0.2;
  double kl_coefficient = 0.01;
  double learning_rate = 5.0;
  int epochs = 200;
  std::size_t minibatch_size = 5;
  int old_policy_refresh_interval = 2;
  int early_stop_window = 20;
  double early_stop_delta = 0.01;
  GenerationParams sampling;           // temperature and top_p
  std::size_t resample_budget = 0;     // extra draws after de-duplication; 0 means K
  bool normalize_by_std = false;
  std::uint64_t seed = 0;
  std::size_t workers = 1;             // tasks sampled and scored concurrently
};

void validate(const GRPOConfig& config);
nlohmann::json grpo_config_to_json(const GRPOConfig& config);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
GRPOConfig grpo_config_from_json(const nlohmann::json& j);

struct Candidate {
  Tokens tokens;
  std::string text;
  std::vector<double> sampling_logprobs;
  bool infra_error = false;  // sandbox infrastructure failure, reward forced to 0
};

struct Group {
  std::string task_id;
  std::vector<Candidate> candidates;
  std::vector<int> rewards;
  std::vector<double> advantages;
  std::size_t size_requested = 0;
  std::size_t size_after_dedup = 0;
  std::size_t draws = 0;

  /// Mean reward over candidates without infrastructure errors.
  double mean_reward() const;
};

class DegenerateGroup : public Error {
 public:
  DegenerateGroup(Group group, const std::string& what)
      : Error(ErrorCode::kDegenerateGroup, "DegenerateGroup: " + what), group_(std::move(group)) {}
  const Group& group() const { return group_; }

 private:
  Group group_;
};

/// Keeps the first candidate of each distinct text.
std::vector<Candidate> deduplicate(std::vector<Candidate> candidates);

/// K seeded draws, de-duplicated, topped up from the resample budget when
/// fewer than two distinct texts remain. Throws DegenerateGroup (carrying the
/// group) when only one survives.
Group sample_group(const Policy& policy, const std::string& task_id, const GRPOConfig& config, std::uint64_t seed);

/// R = 1 iff the sandbox classifies the candidate AllPass. Sandbox
/// infrastructure errors give R = 0 and mark the candidate.
void assign_rewards(Group& group, Sandbox& sandbox, const TaskBundle& task, const RunLogger& log = {});

/// A_i = R_i - mean(R), optionally divided by the group standard deviation.
std::vector<double> compute_advantages(const std::vector<int>& rewards, bool normalize_by_std = false);

struct ObjectiveDiagnostics {
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double kl = 0.0;
  double mean_reward = 0.0;
  double surrogate = 0.0;  // mean over groups of the mean clipped surrogate
};

struct ObjectiveResult {
  double loss = 0.0;
  ObjectiveDiagnostics diagnostics;
  std::vector<double> gradient;  // d loss / d theta
};

/// loss = mean_g(-mean_i min(r A, clip(r, 1-eps, 1+eps) A)) + beta KL(pi || pi_ref)
/// with r = exp(sum log pi - sum log pi_old) and KL averaged over positions
/// and the groups' contexts. Throws NonFiniteLoss.
ObjectiveResult grpo_objective(const Policy& policy, const Policy& old_policy, const std::vector<double>& ref_theta,
                               const std::vector<Group>& groups, const GRPOConfig& config);
ObjectiveResult grpo_objective(const Policy& policy, const Policy& old_policy, const std::vector<double>& ref_theta,
                               const Group& group, const GRPOConfig& config);

struct TrainState {
  std::unique_ptr<Policy> old_policy;
  std::vector<double> ref_theta;  // the initial policy
  int step = 0;

  static TrainState start(const Policy& policy);
};

struct StepResult {
  ObjectiveResult objective;
  bool refreshed_old = false;
  double grad_norm = 0.0;
};

/// Refreshes pi_old every refresh interval (counted from step 0), then takes
/// one plain gradient-descent step.
StepResult train_step(Policy& policy, TrainState& state, const std::vector<Group>& groups, const GRPOConfig& config);

struct TrainReport {
  std::vector<double> reward_curve;  // mean group reward per step
  int steps = 0;
  bool stopped_early = false;
  std::size_t degenerate_groups = 0;
  std::size_t infra_errors = 0;
  std::vector<double> final_theta;
  std::string policy_id;

  /// First 1-based step where the trailing mean over `window` steps exceeds
  /// the threshold.
  std::optional<int> first_step_above(double threshold, int window = 1) const;
  nlohmann::json to_json() const;
};

/// Mini-batches of tasks for up to `epochs` passes, one train_step per
/// mini-batch. Stops early once the mean reward of the last
/// early_stop_window steps differs from the window before it by less than
/// early_stop_delta.
TrainReport train(Policy& policy, const std::vector<TaskBundle>& tasks, Sandbox& sandbox, const GRPOConfig& config,
                  const RunLogger& log = {});

/// Early-stop rule on a reward curve, exposed for tests.
bool should_stop_early(const std::vector<double>& curve, int window, double delta);

/// Checkpoint: {format, policy_id, theta, config, seed, steps}.
nlohmann::json make_checkpoint(const Policy& policy, const GRPOConfig& config, int steps);
std::vector<double> checkpoint_theta(const nlohmann::json& checkpoint);

/// Deterministic seed derivation.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

}  // namespace april
