// SPDX-License-Identifier: Apache-2.0
#include "april/rlvr_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "april/parallel.hpp"

namespace april {

using nlohmann::json;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  return splitmix(splitmix(splitmix(a) ^ b) ^ c);
}

// Config ---------------------------------------------------------------------

void validate(const GRPOConfig& c) {
  if (c.K < 2) throw ValidationError("K must be >= 2");
  if (!(c.clip_epsilon > 0.0)) throw ValidationError("clip_epsilon must be > 0");
  if (!(c.kl_coefficient >= 0.0)) throw ValidationError("kl_coefficient must be >= 0");
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) throw ValidationError("learning_rate must be > 0");
  if (c.epochs < 0) throw ValidationError("epochs must be >= 0");
  if (c.minibatch_size < 1) throw ValidationError("minibatch_size must be >= 1");
  if (c.old_policy_refresh_interval < 1) throw ValidationError("old_policy_refresh_interval must be >= 1");
  if (c.early_stop_window < 1) throw ValidationError("early_stop_window must be >= 1");
  if (!(c.early_stop_delta >= 0.0)) throw ValidationError("early_stop_delta must be >= 0");
  validate(c.sampling);
}

json grpo_config_to_json(const GRPOConfig& c) {
  json delta = std::isinf(c.early_stop_delta) ? json("inf") : json(c.early_stop_delta);
  return {{"K", c.K},
          {"clip_epsilon", c.clip_epsilon},
          {"kl_coefficient", c.kl_coefficient},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"minibatch_size", c.minibatch_size},
          {"old_policy_refresh_interval", c.old_policy_refresh_interval},
          {"early_stop_window", c.early_stop_window},
          {"early_stop_delta", delta},
          {"temperature", c.sampling.temperature},
          {"top_p", c.sampling.top_p},
          {"resample_budget", c.resample_budget},
          {"normalize_by_std", c.normalize_by_std},
          {"seed", c.seed},
          {"workers", c.workers}};
}

GRPOConfig grpo_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("grpo config must be an object");
  static const std::set<std::string> kKeys = {
      "K", "clip_epsilon", "kl_coefficient", "learning_rate", "epochs", "minibatch_size",
      "old_policy_refresh_interval", "early_stop_window", "early_stop_delta", "temperature", "top_p",
      "resample_budget", "normalize_by_std", "seed", "workers"};
  for (const auto& [k, v] : j.items()) {
    if (!kKeys.count(k)) throw ConfigError("unknown grpo key '" + k + "'");
  }
  GRPOConfig c;
  try {
    c.K = j.value("K", c.K);
    c.clip_epsilon = j.value("clip_epsilon", c.clip_epsilon);
    c.kl_coefficient = j.value("kl_coefficient", c.kl_coefficient);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.minibatch_size = j.value("minibatch_size", c.minibatch_size);
    c.old_policy_refresh_interval = j.value("old_policy_refresh_interval", c.old_policy_refresh_interval);
    c.early_stop_window = j.value("early_stop_window", c.early_stop_window);
    if (j.contains("early_stop_delta")) {
      const json& d = j.at("early_stop_delta");
      c.early_stop_delta = d.is_string() && d.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                                           : d.get<double>();
    }
    c.sampling.temperature = j.value("temperature", c.sampling.temperature);
    c.sampling.top_p = j.value("top_p", c.sampling.top_p);
    c.resample_budget = j.value("resample_budget", c.resample_budget);
    c.normalize_by_std = j.value("normalize_by_std", c.normalize_by_std);
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("grpo config: ") + e.what());
  }
  validate(c);
  return c;
}

// Groups ---------------------------------------------------------------------

double Group::mean_reward() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    if (i < candidates.size() && candidates[i].infra_error) continue;
    sum += rewards[i];
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

std::vector<Candidate> deduplicate(std::vector<Candidate> candidates) {
  std::set<std::string> seen;
  std::vector<Candidate> out;
  for (auto& c : candidates) {
    if (seen.insert(c.text).second) out.push_back(std::move(c));
  }
  return out;
}

Group sample_group(const Policy& policy, const std::string& task_id, const GRPOConfig& config, std::uint64_t seed) {
  if (config.K < 2) throw ValidationError("K must be >= 2");
  Group g;
  g.task_id = task_id;
  g.size_requested = config.K;
  auto draw = [&](std::size_t i) {
    PolicySample s = policy.sample(task_id, config.sampling.top_p, mix_seed(seed, i));
    std::string text = policy.decode(s.tokens);
    return Candidate{std::move(s.tokens), std::move(text), std::move(s.logprobs), false};
  };
  std::vector<Candidate> drawn;
  for (std::size_t i = 0; i < config.K; ++i) drawn.push_back(draw(i));
  g.draws = config.K;
  g.candidates = deduplicate(std::move(drawn));

  std::size_t budget = config.resample_budget ? config.resample_budget : config.K;
  for (std::size_t extra = 0; g.candidates.size() < 2 && extra < budget; ++extra) {
    Candidate c = draw(g.draws++);
    bool fresh = std::none_of(g.candidates.begin(), g.candidates.end(),
                              [&](const Candidate& x) { return x.text == c.text; });
    if (fresh) g.candidates.push_back(std::move(c));
  }
  g.size_after_dedup = g.candidates.size();
  if (g.candidates.size() < 2) {
    throw DegenerateGroup(std::move(g), "only one distinct sample for '" + task_id + "' after resampling");
  }
  return g;
}

void assign_rewards(Group& group, Sandbox& sandbox, const TaskBundle& task, const RunLogger& log) {
  group.rewards.assign(group.candidates.size(), 0);
  for (std::size_t i = 0; i < group.candidates.size(); ++i) {
    Candidate& c = group.candidates[i];
    SandboxJob job;
    job.task_id = task.task.id;
    job.candidate_source = c.text;
    job.suite = task.validation;
    job.module_path = task.task.module_path;
    job.library_name = task.task.library_name;
    try {
      group.rewards[i] = reward_of(sandbox.run_candidate(job));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kShimProtocol && e.code() != ErrorCode::kEnvironment) throw;
      c.infra_error = true;
      group.rewards[i] = 0;
      log.log(event_kind::kWarning, {{"task_id", task.task.id}, {"infra_error", e.what()}});
    }
  }
}

std::vector<double> compute_advantages(const std::vector<int>& rewards, bool normalize_by_std) {
  if (rewards.empty()) throw ValidationError("advantages need at least one reward");
  double n = static_cast<double>(rewards.size());
  double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  std::vector<double> a;
  for (int r : rewards) a.push_back(static_cast<double>(r) - mean);
  if (normalize_by_std) {
    double var = 0.0;
    for (double x : a) var += x * x;
    double sd = std::sqrt(var / n);
    if (sd > 0.0) {
      for (double& x : a) x /= sd;
    }
  }
  return a;
}

// Objective ------------------------------------------------------------------

ObjectiveResult grpo_objective(const Policy& policy, const Policy& old_policy, const std::vector<double>& ref_theta,
                               const std::vector<Group>& groups, const GRPOConfig& config) {
  const std::size_t P = policy.parameters().size();
  ObjectiveResult out;
  out.gradient.assign(P, 0.0);
  if (groups.empty()) return out;

  const double eps = config.clip_epsilon;
  const double G = static_cast<double>(groups.size());
  double surrogate = 0.0, ratio_sum = 0.0, reward_sum = 0.0;
  std::size_t clipped = 0, total = 0;
  std::vector<std::string> contexts;

  for (const auto& g : groups) {
    if (g.candidates.empty()) throw ValidationError("group '" + g.task_id + "' has no candidates");
    if (g.advantages.size() != g.candidates.size()) {
      throw ValidationError("group '" + g.task_id + "' lacks advantages");
    }
    contexts.push_back(g.task_id);
    reward_sum += g.mean_reward();
    const double n = static_cast<double>(g.candidates.size());
    double group_sum = 0.0;
    for (std::size_t i = 0; i < g.candidates.size(); ++i) {
      const Candidate& c = g.candidates[i];
      std::vector<double> lp = policy.logprob(g.task_id, c.tokens);
      std::vector<double> lo = old_policy.logprob(g.task_id, c.tokens);
      double r = std::exp(std::accumulate(lp.begin(), lp.end(), 0.0) - std::accumulate(lo.begin(), lo.end(), 0.0));
      double A = g.advantages[i];
      double unclipped = r * A;
      double clipped_term = std::clamp(r, 1.0 - eps, 1.0 + eps) * A;
      group_sum += std::min(unclipped, clipped_term);
      ratio_sum += r;
      ++total;
      if (r < 1.0 - eps || r > 1.0 + eps) ++clipped;
      // The gradient flows only through the unclipped branch.
      if (A != 0.0 && unclipped <= clipped_term) {
        std::vector<double> gl = policy.grad_logprob(g.task_id, c.tokens);
        double w = -A * r / (n * G);
        for (std::size_t k = 0; k < P; ++k) out.gradient[k] += w * gl[k];
      }
    }
    surrogate += group_sum / n;
  }

  double kl = policy.kl(ref_theta, contexts);
  out.diagnostics.surrogate = surrogate / G;
  out.diagnostics.kl = kl;
  out.diagnostics.mean_ratio = ratio_sum / static_cast<double>(total);
  out.diagnostics.clip_fraction = static_cast<double>(clipped) / static_cast<double>(total);
  out.diagnostics.mean_reward = reward_sum / G;
  out.loss = -surrogate / G + config.kl_coefficient * kl;
  if (config.kl_coefficient > 0.0) {
    std::vector<double> gk = policy.kl_gradient(ref_theta, contexts);
    for (std::size_t k = 0; k < P; ++k) out.gradient[k] += config.kl_coefficient * gk[k];
  }

  bool finite = std::isfinite(out.loss) &&
                std::all_of(out.gradient.begin(), out.gradient.end(), [](double x) { return std::isfinite(x); });
  if (!finite) throw NonFiniteLoss("GRPO loss or gradient is not finite");
  return out;
}

ObjectiveResult grpo_objective(const Policy& policy, const Policy& old_policy, const std::vector<double>& ref_theta,
                               const Group& group, const GRPOConfig& config) {
  return grpo_objective(policy, old_policy, ref_theta, std::vector<Group>{group}, config);
}

// Training -------------------------------------------------------------------

TrainState TrainState::start(const Policy& policy) {
  TrainState s;
  s.old_policy = policy.clone();
  s.ref_theta = policy.parameters();
  return s;
}

StepResult train_step(Policy& policy, TrainState& state, const std::vector<Group>& groups, const GRPOConfig& config) {
  StepResult out;
  if (state.step % config.old_policy_refresh_interval == 0) {
    state.old_policy->set_parameters(policy.parameters());
    out.refreshed_old = true;
  }
  out.objective = grpo_objective(policy, *state.old_policy, state.ref_theta, groups, config);
  std::vector<double> theta = policy.parameters();
  double norm = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    theta[k] -= config.learning_rate * out.objective.gradient[k];
    norm += out.objective.gradient[k] * out.objective.gradient[k];
  }
  out.grad_norm = std::sqrt(norm);
  policy.set_parameters(theta);
  ++state.step;
  return out;
}

bool should_stop_early(const std::vector<double>& curve, int window, double delta) {
  std::size_t w = static_cast<std::size_t>(window);
  if (curve.size() < 2 * w) return false;
  auto mean = [&](std::size_t from) {
    return std::accumulate(curve.begin() + static_cast<std::ptrdiff_t>(from),
                           curve.begin() + static_cast<std::ptrdiff_t>(from + w), 0.0) /
           static_cast<double>(w);
  };
  double last = mean(curve.size() - w);
  double previous = mean(curve.size() - 2 * w);
  return std::abs(last - previous) < delta;
}

std::optional<int> TrainReport::first_step_above(double threshold, int window) const {
  std::size_t w = static_cast<std::size_t>(std::max(1, window));
  double sum = 0.0;
  for (std::size_t t = 0; t < reward_curve.size(); ++t) {
    sum += reward_curve[t];
    if (t >= w) sum -= reward_curve[t - w];
    if (t + 1 >= w && sum / static_cast<double>(w) > threshold) return static_cast<int>(t + 1);
  }
  return std::nullopt;
}

json TrainReport::to_json() const {
  return {{"policy_id", policy_id},
          {"steps", steps},
          {"stopped_early", stopped_early},
          {"degenerate_groups", degenerate_groups},
          {"infra_errors", infra_errors},
          {"reward_curve", reward_curve},
          {"final_theta", final_theta}};
}

TrainReport train(Policy& policy, const std::vector<TaskBundle>& tasks, Sandbox& sandbox, const GRPOConfig& config,
                  const RunLogger& log) {
  validate(config);
  if (tasks.empty()) throw ValidationError("training needs at least one task");
  TrainReport report;
  report.policy_id = policy.id();
  TrainState state = TrainState::start(policy);

  struct Sampled {
    Group group;
    bool degenerate = false;
  };

  for (int epoch = 0; epoch < config.epochs && !report.stopped_early; ++epoch) {
    for (std::size_t start = 0; start < tasks.size(); start += config.minibatch_size) {
      std::size_t end = std::min(tasks.size(), start + config.minibatch_size);
      std::vector<Sampled> batch(end - start);
      // Sampling reads the parameters; the update below is the only writer.
      parallel_for(batch.size(), config.workers, [&](std::size_t j) {
        const TaskBundle& task = tasks[start + j];
        Sampled s;
        std::uint64_t seed = mix_seed(config.seed, static_cast<std::uint64_t>(state.step), start + j);
        try {
          s.group = sample_group(policy, task.task.id, config, seed);
        } catch (const DegenerateGroup& d) {
          s.group = d.group();
          s.degenerate = true;
        }
        assign_rewards(s.group, sandbox, task, log);
        std::vector<int> rewards = s.group.rewards;
        s.group.advantages = compute_advantages(rewards, config.normalize_by_std);
        batch[j] = std::move(s);
      });

      std::vector<Group> update;
      double reward_sum = 0.0;
      std::size_t reward_groups = 0;
      for (auto& s : batch) {
        std::size_t infra = 0;
        std::vector<std::string> texts;
        for (const auto& c : s.group.candidates) {
          infra += c.infra_error ? 1 : 0;
          texts.push_back(c.text);
        }
        report.infra_errors += infra;
        if (infra < s.group.candidates.size()) {
          reward_sum += s.group.mean_reward();
          ++reward_groups;
        }
        log.log(event_kind::kGroupSampled, {{"step", state.step},
                                            {"task_id", s.group.task_id},
                                            {"texts", texts},
                                            {"rewards", s.group.rewards},
                                            {"advantages", s.group.advantages},
                                            {"size_requested", s.group.size_requested},
                                            {"size_after_dedup", s.group.size_after_dedup},
                                            {"draws", s.group.draws},
                                            {"degenerate", s.degenerate}});
        if (s.degenerate) {
          ++report.degenerate_groups;
        } else {
          update.push_back(std::move(s.group));
        }
      }

      double step_reward = reward_groups ? reward_sum / static_cast<double>(reward_groups)
                                         : (report.reward_curve.empty() ? 0.0 : report.reward_curve.back());
      int step = state.step;
      StepResult r = train_step(policy, state, update, config);
      report.reward_curve.push_back(step_reward);
      const auto& d = r.objective.diagnostics;
      log.log(event_kind::kTrainStep, {{"step", step},
                                       {"epoch", epoch},
                                       {"loss", r.objective.loss},
                                       {"mean_ratio", d.mean_ratio},
                                       {"clip_fraction", d.clip_fraction},
                                       {"kl", d.kl},
                                       {"mean_reward", step_reward},
                                       {"grad_norm", r.grad_norm},
                                       {"groups_updated", update.size()},
                                       {"refreshed_old", r.refreshed_old}});
      if (should_stop_early(report.reward_curve, config.early_stop_window, config.early_stop_delta)) {
        report.stopped_early = true;
        break;
      }
    }
  }
  report.steps = state.step;
  report.final_theta = policy.parameters();
  return report;
}

json make_checkpoint(const Policy& policy, const GRPOConfig& config, int steps) {
  return {{"format", "april-checkpoint/1"},
          {"policy_id", policy.id()},
          {"theta", policy.parameters()},
          {"config", grpo_config_to_json(config)},
          {"seed", config.seed},
          {"steps", steps}};
}

std::vector<double> checkpoint_theta(const json& checkpoint) {
  if (checkpoint.value("format", std::string{}) != "april-checkpoint/1") {
    throw SchemaError("not an april checkpoint");
  }
  try {
    return checkpoint.at("theta").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("checkpoint theta: ") + e.what());
  }
}

}  // namespace april
