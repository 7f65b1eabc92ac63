// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "april/apo_engine.hpp"
#include "april/bench_harness.hpp"
#include "april/oracle_gen.hpp"
#include "april/rlvr_trainer.hpp"
#include "april/subprocess.hpp"
#include "april/toy_domain.hpp"
#include "test_support.hpp"

using namespace april;
using april::testing::fixture;
using nlohmann::json;

namespace {

struct CheckResult {
  bool pass = false;
  std::string detail;
};

struct Check {
  std::string name;
  double budget_s;
  std::function<CheckResult()> run;
};

// Published-figure reproduction -----------------------------------------------

CheckResult metric_reproduction() {
  json tables = json::parse(read_text_file(fixture("reference_tables.json")));
  std::vector<TaskOutcome> baseline, treatment;
  for (const auto& row : tables.at("synthesis")) {
    std::string b = row.at("benchmark");
    std::int64_t n = row.at("tasks");
    auto add = [&](std::vector<TaskOutcome>& out, const json& side) {
      auto part = outcomes_from_counts(b, n, side.at("executable"), side.at("passed"));
      out.insert(out.end(), part.begin(), part.end());
    };
    add(baseline, row.at("baseline"));
    add(treatment, row.at("treatment"));
  }
  BenchReport t = compute_report(treatment);
  BenchReport base = compute_report(baseline);

  std::ostringstream got;
  bool ok = true;
  const json& printed = tables.at("printed");
  for (const auto& [bench, want] : printed.at("treatment_pass_percent").items()) {
    std::string have;
    if (bench == "Total") {
      have = t.total.passed.percent();
    } else {
      for (const auto& r : t.rows) {
        if (r.benchmark == bench) have = r.passed.percent();
      }
    }
    ok = ok && have == want.get<std::string>();
    got << bench << "=" << have << " ";
  }
  std::string base_total = base.total.passed.percent();
  ok = ok && base_total == printed.at("baseline_pass_percent").at("Total").get<std::string>();
  ok = ok && t.total.passed.count == printed.at("total_passed").at("treatment").get<std::int64_t>();
  ok = ok && base.total.passed.count == printed.at("total_passed").at("baseline").get<std::int64_t>();
  got << "baseline=" << base_total << " ";

  std::int64_t tasks = 0, tests = 0, iterations = 0;
  for (const auto& row : tables.at("oracle")) {
    OracleMetrics m = oracle_metrics_from_counts(row.at("tasks"), row.at("tests"), row.at("iterations"));
    std::string b = row.at("benchmark");
    ok = ok && m.avg_tests_1dp == printed.at("avg_tests").at(b).get<std::string>();
    ok = ok && m.avg_iterations_1dp == printed.at("avg_iterations").at(b).get<std::string>();
    tasks += row.at("tasks").get<std::int64_t>();
    tests += row.at("tests").get<std::int64_t>();
    iterations += row.at("iterations").get<std::int64_t>();
  }
  OracleMetrics total = oracle_metrics_from_counts(tasks, tests, iterations);
  ok = ok && total.avg_tests_1dp == printed.at("avg_tests").at("Total").get<std::string>();
  ok = ok && total.avg_iterations_1dp == printed.at("avg_iterations").at("Total").get<std::string>();
  got << "tests/task=" << total.avg_tests_1dp << " iterations/task=" << total.avg_iterations_1dp;
  return {ok, got.str()};
}

// Gradient check ---------------------------------------------------------------

CheckResult gradient_check() {
  std::mt19937_64 rng(20261017);
  std::uniform_int_distribution<int> vocab_d(2, 8), len_d(1, 4), ctx_d(1, 2), k_d(2, 6);
  std::normal_distribution<double> normal(0.0, 0.6);
  const double h = 1e-5;
  const double eps_choices[] = {0.1, 0.2};
  const double beta_choices[] = {0.0, 0.05};

  int accepted = 0, skipped = 0;
  double worst = 0.0;
  while (accepted < 120) {
    std::size_t V = static_cast<std::size_t>(vocab_d(rng)), L = static_cast<std::size_t>(len_d(rng));
    std::vector<std::string> vocab, contexts;
    for (std::size_t v = 0; v < V; ++v) vocab.push_back(std::string(1, static_cast<char>('a' + v)));
    int C = ctx_d(rng);
    for (int c = 0; c < C; ++c) contexts.push_back("ctx" + std::to_string(c));
    ToySoftmaxPolicy policy(vocab, L, contexts, 0.7);
    std::vector<double> theta = policy.parameters();
    std::vector<double> old_theta(theta.size()), ref_theta(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta[i] = normal(rng);
      old_theta[i] = theta[i] + 0.15 * normal(rng);
      ref_theta[i] = normal(rng);
    }
    policy.set_parameters(theta);
    ToySoftmaxPolicy old_policy = policy;
    old_policy.set_parameters(old_theta);

    GRPOConfig cfg;
    cfg.clip_epsilon = eps_choices[rng() % 2];
    cfg.kl_coefficient = beta_choices[rng() % 2];

    std::vector<Group> groups;
    for (const auto& ctx : contexts) {
      Group g;
      g.task_id = ctx;
      std::size_t K = static_cast<std::size_t>(k_d(rng));
      for (std::size_t i = 0; i < K; ++i) {
        Candidate c;
        for (std::size_t p = 0; p < L; ++p) c.tokens.push_back(static_cast<int>(rng() % V));
        g.candidates.push_back(c);
        g.rewards.push_back(static_cast<int>(rng() % 2));
      }
      g.rewards[0] = 1;
      g.rewards[1] = 0;
      g.advantages = compute_advantages(g.rewards);
      groups.push_back(g);
    }

    // Skip draws that sit within reach of a clip boundary: the objective is
    // not differentiable there and central differences straddle the kink.
    bool near_kink = false;
    for (const auto& g : groups) {
      for (const auto& c : g.candidates) {
        auto lp = policy.logprob(g.task_id, c.tokens), lo = old_policy.logprob(g.task_id, c.tokens);
        double s = 0.0;
        for (std::size_t i = 0; i < lp.size(); ++i) s += lp[i] - lo[i];
        double r = std::exp(s);
        if (std::abs(r - (1.0 - cfg.clip_epsilon)) < 1e-3 || std::abs(r - (1.0 + cfg.clip_epsilon)) < 1e-3) {
          near_kink = true;
        }
      }
    }
    if (near_kink) {
      ++skipped;
      continue;
    }

    ObjectiveResult analytic = grpo_objective(policy, old_policy, ref_theta, groups, cfg);
    double draw_err = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      std::vector<double> tp = theta, tm = theta;
      tp[j] += h;
      tm[j] -= h;
      policy.set_parameters(tp);
      double lp = grpo_objective(policy, old_policy, ref_theta, groups, cfg).loss;
      policy.set_parameters(tm);
      double lm = grpo_objective(policy, old_policy, ref_theta, groups, cfg).loss;
      double fd = (lp - lm) / (2.0 * h);
      double a = analytic.gradient[j];
      double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
      draw_err = std::max(draw_err, std::abs(a - fd) / denom);
    }
    policy.set_parameters(theta);
    worst = std::max(worst, draw_err);
    ++accepted;
  }
  std::ostringstream d;
  d << accepted << " draws (" << skipped << " near a clip boundary skipped), max relative error " << worst;
  return {worst < 1e-4, d.str()};
}

// Identities ---------------------------------------------------------------------

CheckResult identities() {
  std::mt19937_64 rng(7);
  double worst_sum = 0.0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<int> rewards(2 + rng() % 15);
    for (auto& r : rewards) r = static_cast<int>(rng() % 2);
    for (bool norm : {false, true}) {
      auto adv = compute_advantages(rewards, norm);
      double s = 0.0;
      for (double a : adv) s += a;
      worst_sum = std::max(worst_sum, std::abs(s));
    }
  }

  ToySoftmaxPolicy policy = toy_policy();
  std::vector<double> theta = policy.parameters();
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& x : theta) x = normal(rng);
  policy.set_parameters(theta);
  GRPOConfig cfg;
  cfg.kl_coefficient = 0.05;
  std::vector<Group> groups;
  double mean_adv = 0.0;
  for (const auto& target : toy_targets()) {
    Group g;
    g.task_id = target.task_id;
    for (int i = 0; i < 6; ++i) {
      Candidate c;
      for (std::size_t p = 0; p < kToyLength; ++p) c.tokens.push_back(static_cast<int>(rng() % 4));
      g.candidates.push_back(c);
      g.rewards.push_back(i % 3 == 0 ? 1 : 0);
    }
    g.advantages = compute_advantages(g.rewards);
    double m = 0.0;
    for (double a : g.advantages) m += a;
    mean_adv += m / static_cast<double>(g.advantages.size());
    groups.push_back(g);
  }
  mean_adv /= static_cast<double>(groups.size());
  ObjectiveResult same = grpo_objective(policy, policy, theta, groups, cfg);
  std::vector<std::string> contexts;
  for (const auto& t : toy_targets()) contexts.push_back(t.task_id);
  double self_kl = policy.kl(theta, contexts);

  bool ok = worst_sum < 1e-9 && same.diagnostics.clip_fraction == 0.0 &&
            std::abs(same.diagnostics.surrogate - mean_adv) < 1e-12 && std::abs(self_kl) < 1e-12 &&
            std::abs(same.diagnostics.kl) < 1e-12;
  std::ostringstream d;
  d << "max |sum A|=" << worst_sum << " clip_fraction=" << same.diagnostics.clip_fraction
    << " surrogate-mean(A)=" << same.diagnostics.surrogate - mean_adv << " KL(pi,pi)=" << self_kl;
  return {ok, d.str()};
}

// RLVR learning ------------------------------------------------------------------

CheckResult rlvr_learning() {
  json baseline = json::parse(read_text_file(fixture("toy_baseline.json")));
  const double threshold = baseline.at("threshold");
  const int window = baseline.at("window");

  ToySoftmaxPolicy policy = toy_policy();
  auto sandbox = april::testing::stub_sandbox();
  GRPOConfig cfg;
  cfg.seed = 0;
  TrainReport report = train(policy, toy_tasks(), *sandbox, cfg);
  auto crossed = report.first_step_above(threshold, window);
  double initial = 0.0;
  int w = std::min<int>(window, static_cast<int>(report.reward_curve.size()));
  for (int i = 0; i < w; ++i) initial += report.reward_curve[static_cast<std::size_t>(i)];
  initial /= std::max(1, w);

  std::ostringstream d;
  d << "first " << window << "-step mean " << initial << "; ";
  if (crossed) {
    d << window << "-step mean above " << threshold << " from step " << *crossed;
  } else {
    d << "never above " << threshold;
  }
  d << " (reference run: step " << baseline.at("first_step_above").get<int>() << "); " << report.steps
    << " steps run";
  return {crossed && *crossed <= 200 && initial < 0.3, d.str()};
}

// APO beam search ----------------------------------------------------------------

const char* kFixMarker = "Validate every input argument with check_inputs before computing.";

std::vector<TaskBundle> apo_tasks() {
  using april::testing::make_bundle;
  return {make_bundle("apo_a", "alpha", {{"test_returns", "expect_contains return"}}),
          make_bundle("apo_b", "beta", {{"test_returns", "expect_contains return"}}),
          make_bundle("apo_c", "gamma",
                      {{"test_returns", "expect_contains return"}, {"test_checks", "expect_contains check_inputs("}}),
          make_bundle("apo_d", "delta",
                      {{"test_returns", "expect_contains return"}, {"test_checks", "expect_contains check_inputs("}})};
}

std::string revised(const std::string& summary, const std::string& body) {
  return "<revised_prompt summary=\"" + summary + "\">\n" + body + "\n</revised_prompt>\n";
}

struct ApoRun {
  BeamResult result;
  std::size_t edit_calls = 0;
};

ApoRun run_apo() {
  PromptTemplate p0 = initial_prompt();
  std::string fixed = p0.body() + "\n" + kFixMarker + "\n";
  std::string reworded = p0.body() + "\nKeep the implementation short.\n";
  std::string broken = "Implement {api_signature_rlvr_apo} somehow.";
  std::string edit_reply = revised("reword", reworded) + revised("validate inputs", fixed) +
                           revised("drop placeholders", broken) + revised("no change", p0.body());

  MockBackend synthesis({
      {Purpose::kSynthesis, kFixMarker,
       "<output_api_implementations>\ndef f(x):\n    check_inputs(x)\n    return x\n</output_api_implementations>",
       true},
      {Purpose::kSynthesis, "", "<output_api_implementations>\ndef f(x):\n    return x\n</output_api_implementations>",
       true},
  });
  MockBackend critique({{Purpose::kCritique, "", "The implementation never validates its inputs.", true}});
  MockBackend edit({{Purpose::kApoEdit, "", edit_reply, true}});
  auto sandbox = april::testing::stub_sandbox();

  BeamConfig cfg;
  cfg.beam_width = 3;
  cfg.max_depth = 3;
  cfg.proposals_per_candidate = 4;
  ApoRun run;
  run.result = beam_search(p0, apo_tasks(), cfg, {synthesis, critique, edit}, *sandbox);
  run.edit_calls = edit.calls();
  return run;
}

CheckResult apo_beam() {
  ApoRun first = run_apo();
  ApoRun second = run_apo();
  const BeamResult& r = first.result;

  double max_ds = 0.0;
  bool exact = true;
  for (const auto& c : r.scored) {
    max_ds = std::max(max_ds, c.ds.value_or(-1.0));
    exact = exact && c.n > 0 && c.ds && *c.ds == 1.0 - static_cast<double>(c.failures) / static_cast<double>(c.n);
  }
  bool monotone = std::is_sorted(r.best_ds_per_level.begin(), r.best_ds_per_level.end());
  bool fixed = r.best.prompt.body().find(kFixMarker) != std::string::npos;
  bool deterministic = search_trace_jsonl(first.result) == search_trace_jsonl(second.result);
  bool ok = r.best.ds == max_ds && max_ds == 1.0 && monotone && exact && fixed && deterministic &&
            r.best_ds_per_level.front() == 0.5;

  std::ostringstream d;
  d << "best " << r.best.id << " ds=" << *r.best.ds << ", best ds per level [";
  for (std::size_t i = 0; i < r.best_ds_per_level.size(); ++i) d << (i ? " " : "") << r.best_ds_per_level[i];
  d << "], " << r.scored.size() << " candidates scored, ds exact=" << (exact ? "yes" : "no")
    << ", repeat run identical=" << (deterministic ? "yes" : "no");
  return {ok, d.str()};
}

// Oracle generation loop ---------------------------------------------------------

OracleGenInput oracle_input() {
  SynthesisTask task = parse_task_file(read_text_file(fixture("oracle/task.json")));
  OracleGenInput in;
  in.task_id = task.id;
  in.docstrings = "Clamp every element of a into [lo, hi].";
  in.reference_impl = read_text_file(fixture("oracle/reference.py"));
  in.module_path = task.module_path;
  in.library_name = task.library_name;
  return in;
}

std::size_t occurrences(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

CheckResult oracle_loop() {
  OracleGenInput in = oracle_input();
  auto agent = MockBackend::load(fixture("oracle/mock_two_iterations.json"));
  auto sandbox = april::testing::stub_sandbox();
  OracleGenResult res = generate_validation_tests(in, {*agent, *agent}, *sandbox);

  const std::string failed = "The previous suite failed against the reference implementation";
  const std::string reviewer = "A reviewer judged the previous suite insufficient";
  bool two = res.iterations_used == 2 && res.converged && res.history.size() == 2;
  bool first_clean = two && occurrences(res.history[0].agent_prompt, failed) == 0 &&
                     occurrences(res.history[0].agent_prompt, reviewer) == 0;
  bool second_fed = two && occurrences(res.history[1].agent_prompt, failed) == 1 &&
                    occurrences(res.history[1].agent_prompt, reviewer) == 1 &&
                    res.history[1].agent_prompt.find("np.minimum(") != std::string::npos;

  // Three-iteration script: the third prompt must carry only the second
  // iteration's feedback.
  MockBackend three({
      {Purpose::kOracleGen, "", "<output_tests><test name=\"t\">expect_contains FIRST_MISSING</test></output_tests>"},
      {Purpose::kOracleGen, "", "<output_tests><test name=\"t\">expect_contains SECOND_MISSING</test></output_tests>"},
      {Purpose::kOracleGen, "", "<output_tests><test name=\"t\">expect_contains np.clip(</test></output_tests>"},
      {Purpose::kQualityEval, "", "comprehensiveness: 2/5\ncoverage_breadth: 2/5\ncritique: FIRST_CRITIQUE"},
      {Purpose::kQualityEval, "", "comprehensiveness: 2/5\ncoverage_breadth: 2/5\ncritique: SECOND_CRITIQUE"},
      {Purpose::kQualityEval, "", "comprehensiveness: 5/5\ncoverage_breadth: 4/5\ncritique: fine"},
  });
  OracleGenResult res3 = generate_validation_tests(in, {three, three}, *sandbox);
  const std::string& p3 = res3.history.at(2).agent_prompt;
  bool overwrite = res3.iterations_used == 3 && p3.find("SECOND_MISSING") != std::string::npos &&
                   p3.find("SECOND_CRITIQUE") != std::string::npos && p3.find("FIRST_MISSING") == std::string::npos &&
                   p3.find("FIRST_CRITIQUE") == std::string::npos && occurrences(p3, failed) == 1;

  // Independent re-check through the out-of-process shim.
  ShimConfig shim;
  shim.command = {april::testing::stub_shim_path()};
  shim.workers = 1;
  ShimSandbox recheck_box(shim);
  SandboxJob job{in.task_id, in.reference_impl, res.suite, in.module_path, in.library_name};
  SandboxResult recheck = recheck_box.run_candidate(job);
  bool rechecked = recheck.classification == Classification::kAllPass && recheck.passed() == res.suite.cases.size();

  std::ostringstream d;
  d << "iterations=" << res.iterations_used << " tests=" << res.suite.cases.size()
    << " feedback overwrite=" << (overwrite && first_clean && second_fed ? "yes" : "no")
    << " re-check=" << to_string(recheck.classification);
  return {two && first_clean && second_fed && overwrite && rechecked, d.str()};
}

// End-to-end determinism ---------------------------------------------------------

CheckResult bench_determinism() {
  april::testing::TempDir dir;
  std::vector<std::string> outputs;
  for (int i = 0; i < 2; ++i) {
    std::string out = (dir / ("report" + std::to_string(i) + ".json")).string();
    ProcessOutcome p =
        run_process({april::testing::cli_path(), "--config", fixture("bench/config.json").string(), "--runs-dir",
                     (dir / "runs").string(), "--seed", "11", "--workers", "3", "bench", "--out", out},
                    dir.path(), {}, "", std::chrono::seconds(60));
    if (p.exit_code != 0) return {false, "bench exited with " + std::to_string(p.exit_code) + ": " + p.err};
    outputs.push_back(read_text_file(out));
  }
  bool same = outputs[0] == outputs[1] && !outputs[0].empty();
  json report = json::parse(outputs[0]);
  std::ostringstream d;
  d << outputs[0].size() << " bytes, " << report.at("outcomes").size() << " outcomes, identical="
    << (same ? "yes" : "no");
  return {same, d.str()};
}

}  // namespace

int main() {
  std::vector<Check> checks = {
      {"metric-reproduction", 1.0, metric_reproduction},
      {"grpo-gradient", 60.0, gradient_check},
      {"advantage-clip-kl-identities", 10.0, identities},
      {"rlvr-toy-learning", 300.0, rlvr_learning},
      {"apo-beam-search", 30.0, apo_beam},
      {"oracle-gen-loop", 30.0, oracle_loop},
      {"bench-determinism", 60.0, bench_determinism},
  };
  int failed = 0;
  for (const auto& c : checks) {
    auto start = std::chrono::steady_clock::now();
    CheckResult v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_s) {
      v.pass = false;
      v.detail += "; exceeded time budget";
    }
    std::ostringstream t;
    t.precision(3);
    t << std::fixed << secs;
    std::cout << (v.pass ? "PASS " : "FAIL ") << c.name << " (" << t.str() << "s): " << v.detail << std::endl;
    if (!v.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
