// SPDX-License-Identifier: Apache-2.0
#include "april/bench_harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "april/errors.hpp"
#include "april/parallel.hpp"
#include "april/rlvr_trainer.hpp"
#include "april/rounding.hpp"

namespace april {

using nlohmann::json;

std::string BackendSynthesizer::synthesize(const PromptTemplate& prompt, const SynthesisTask& task,
                                           std::uint64_t seed) {
  GenerationParams p = params_;
  if (!p.seed) p.seed = seed;
  return backend_.complete(ChatRequest::user(render(prompt, task), Purpose::kSynthesis, p)).content;
}

std::string PolicySynthesizer::synthesize(const PromptTemplate&, const SynthesisTask& task, std::uint64_t seed) {
  PolicySample s = policy_.sample(task.id, top_p_, seed);
  return wrap_in_tags(policy_.decode(s.tokens));
}

bool is_executable(Classification c) { return c == Classification::kSomeTestsFail || c == Classification::kAllPass; }

json outcome_to_json(const TaskOutcome& o, bool with_timing) {
  json j = {{"task_id", o.task_id},
            {"benchmark", o.benchmark},
            {"executable", o.executable},
            {"all_tests_passed", o.all_tests_passed},
            {"classification", o.classification ? json(std::string(to_string(*o.classification))) : json(nullptr)},
            {"attempts", o.attempts},
            {"passed_any_attempt", o.passed_any_attempt},
            {"tests_passed", o.tests_passed},
            {"tests_total", o.tests_total},
            {"error", o.error}};
  if (with_timing) j["duration_ms"] = o.duration_ms;
  return j;
}

TaskOutcome outcome_from_json(const json& j) {
  try {
    TaskOutcome o;
    o.task_id = j.at("task_id").get<std::string>();
    o.benchmark = j.at("benchmark").get<std::string>();
    o.executable = j.at("executable").get<bool>();
    o.all_tests_passed = j.at("all_tests_passed").get<bool>();
    if (!j.at("classification").is_null()) {
      o.classification = classification_from_string(j.at("classification").get<std::string>());
    }
    o.attempts = j.value("attempts", 1);
    o.passed_any_attempt = j.value("passed_any_attempt", o.all_tests_passed);
    o.tests_passed = j.value("tests_passed", std::size_t{0});
    o.tests_total = j.value("tests_total", std::size_t{0});
    o.duration_ms = j.value("duration_ms", 0.0);
    o.error = j.value("error", std::string{});
    if (o.all_tests_passed && !o.executable) throw SchemaError("outcome passes without being executable");
    return o;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("task outcome: ") + e.what());
  }
}

namespace {

struct Attempt {
  std::optional<Classification> classification;
  std::size_t passed = 0;
  std::size_t total = 0;
  std::string error;
};

Attempt attempt_once(const TaskBundle& bundle, const PromptTemplate& prompt, Synthesizer& synthesizer,
                     Sandbox& sandbox, std::uint64_t seed, const RunLogger& log) {
  Attempt a;
  a.total = bundle.validation.cases.size();
  try {
    std::string reply = synthesizer.synthesize(prompt, bundle.task, seed);
    std::string source = extract_tagged_output(reply);
    SandboxJob job;
    job.task_id = bundle.task.id;
    job.candidate_source = source;
    job.suite = bundle.validation;
    job.module_path = bundle.task.module_path;
    job.library_name = bundle.task.library_name;
    SandboxResult r = sandbox.run_candidate(job);
    log.log(event_kind::kSandboxResult, {{"task_id", bundle.task.id}, {"purpose", "bench"},
                                         {"candidate_blob", log.blob(source)},
                                         {"result", result_to_json(r)}});
    a.classification = r.classification;
    a.passed = r.passed();
  } catch (const Error& e) {
    a.error = e.what();
  }
  return a;
}

}  // namespace

std::vector<TaskOutcome> run_benchmark(const std::vector<TaskBundle>& tasks, const PromptTemplate& prompt,
                                       Synthesizer& synthesizer, Sandbox& sandbox, const BenchOptions& options,
                                       const RunLogger& log) {
  if (tasks.empty()) throw EmptyBenchmark("no tasks to run");
  if (options.attempts < 1) throw ValidationError("attempts must be >= 1");
  std::vector<TaskOutcome> outcomes(tasks.size());
  parallel_for(tasks.size(), options.workers, [&](std::size_t i) {
    const TaskBundle& bundle = tasks[i];
    auto started = std::chrono::steady_clock::now();
    TaskOutcome o;
    o.task_id = bundle.task.id;
    o.benchmark = bundle.task.library_name;
    o.attempts = options.attempts;
    for (int k = 0; k < options.attempts; ++k) {
      Attempt a = attempt_once(bundle, prompt, synthesizer, sandbox, mix_seed(options.seed, i, k), log);
      bool pass = a.classification == Classification::kAllPass;
      if (k == 0) {
        o.classification = a.classification;
        o.executable = a.classification && is_executable(*a.classification);
        o.all_tests_passed = pass;
        o.tests_passed = a.passed;
        o.tests_total = a.total;
        o.error = a.error;
      }
      o.passed_any_attempt = o.passed_any_attempt || pass;
      if (pass) break;  // later attempts cannot change either figure
    }
    o.duration_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    outcomes[i] = std::move(o);
  });
  for (const auto& o : outcomes) log.log(event_kind::kOutcome, outcome_to_json(o, true));
  return outcomes;
}

// Report ---------------------------------------------------------------------

std::string CountCell::percent() const { return percent_1dp(count, total); }
std::string CountCell::text() const { return std::to_string(count) + "(" + percent() + "%)"; }

namespace {

ReportRow make_row(const std::string& name, const std::vector<const TaskOutcome*>& outcomes, int attempts) {
  ReportRow row;
  row.benchmark = name;
  row.tasks = static_cast<std::int64_t>(outcomes.size());
  row.executable.total = row.passed.total = row.tasks;
  CountCell best{0, row.tasks};
  for (const auto* o : outcomes) {
    row.executable.count += o->executable ? 1 : 0;
    row.passed.count += o->all_tests_passed ? 1 : 0;
    best.count += o->passed_any_attempt ? 1 : 0;
  }
  if (attempts > 1) row.passed_best_of_n = best;
  return row;
}

json cell_json(const CountCell& c) { return {{"count", c.count}, {"percent", c.percent()}, {"text", c.text()}}; }

json row_json(const ReportRow& r) {
  json j = {{"benchmark", r.benchmark},
            {"tasks", r.tasks},
            {"executable", cell_json(r.executable)},
            {"passed", cell_json(r.passed)}};
  if (r.passed_best_of_n) j["passed_best_of_n"] = cell_json(*r.passed_best_of_n);
  return j;
}

std::vector<std::string> benchmark_order(const std::vector<TaskOutcome>& outcomes) {
  std::vector<std::string> order;
  for (const auto& o : outcomes) {
    if (std::find(order.begin(), order.end(), o.benchmark) == order.end()) order.push_back(o.benchmark);
  }
  return order;
}

std::string pad(const std::string& s, std::size_t width, bool right) {
  if (s.size() >= width) return s;
  std::string fill(width - s.size(), ' ');
  return right ? fill + s : s + fill;
}

std::string render_rows(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& body,
                        std::size_t total_from) {
  std::vector<std::size_t> width(header.size(), 0);
  auto widen = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  };
  widen(header);
  for (const auto& r : body) widen(r);
  auto line = [&](const std::vector<std::string>& r) {
    std::string out;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += " | ";
      out += pad(r[i], width[i], i > 0);
    }
    // Trailing blanks would make the output depend on padding of the last column.
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::size_t total_width = 0;
  for (std::size_t w : width) total_width += w;
  total_width += 3 * (width.size() - 1);
  std::string rule(total_width, '-');
  std::string out = line(header) + rule + "\n";
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (i == total_from) out += rule + "\n";
    out += line(body[i]);
  }
  return out;
}

}  // namespace

BenchReport compute_report(const std::vector<TaskOutcome>& outcomes, const json& fingerprint) {
  if (outcomes.empty()) throw EmptyBenchmark("no outcomes to report");
  std::set<std::string> ids;
  for (const auto& o : outcomes) {
    if (!ids.insert(o.task_id).second) throw ValidationError("duplicate outcome for task '" + o.task_id + "'");
    if (o.all_tests_passed && !o.executable) {
      throw ValidationError("outcome for '" + o.task_id + "' passes without being executable");
    }
  }
  BenchReport report;
  report.outcomes = outcomes;
  report.fingerprint = fingerprint.is_null() ? json::object() : fingerprint;
  report.attempts = 1;
  for (const auto& o : outcomes) report.attempts = std::max(report.attempts, o.attempts);

  std::vector<const TaskOutcome*> all;
  for (const auto& o : outcomes) all.push_back(&o);
  for (const auto& name : benchmark_order(outcomes)) {
    std::vector<const TaskOutcome*> group;
    for (const auto* o : all) {
      if (o->benchmark == name) group.push_back(o);
    }
    report.rows.push_back(make_row(name, group, report.attempts));
  }
  report.total = make_row("Total", all, report.attempts);
  return report;
}

json report_to_json(const BenchReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) rows.push_back(row_json(r));
  json outcomes = json::array();
  for (const auto& o : report.outcomes) outcomes.push_back(outcome_to_json(o));
  return {{"format", "april-bench-report/1"},
          {"fingerprint", report.fingerprint},
          {"attempts", report.attempts},
          {"rows", rows},
          {"total", row_json(report.total)},
          {"outcomes", outcomes}};
}

BenchReport report_from_json(const json& j) {
  if (j.value("format", std::string{}) != "april-bench-report/1") throw SchemaError("not a bench report");
  std::vector<TaskOutcome> outcomes;
  try {
    for (const auto& o : j.at("outcomes")) outcomes.push_back(outcome_from_json(o));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bench report: ") + e.what());
  }
  // Figures are recomputed from the outcomes, never trusted from the file.
  return compute_report(outcomes, j.value("fingerprint", json::object()));
}

std::string render_table(const BenchReport& report) {
  std::vector<std::string> header = {"Benchmark", "#Tasks", "Executability", "Test Pass Rate"};
  bool best = report.attempts > 1;
  if (best) header.push_back("Best of " + std::to_string(report.attempts) + " (not single-shot)");
  std::vector<std::vector<std::string>> body;
  auto add = [&](const ReportRow& r) {
    std::vector<std::string> line = {r.benchmark, std::to_string(r.tasks), r.executable.text(), r.passed.text()};
    if (best) line.push_back(r.passed_best_of_n ? r.passed_best_of_n->text() : "");
    body.push_back(line);
  };
  for (const auto& r : report.rows) add(r);
  add(report.total);
  return render_rows(header, body, report.rows.size());
}

// Comparison -----------------------------------------------------------------

std::string signed_pp_delta(std::int64_t treatment, std::int64_t baseline, std::int64_t total) {
  if (total <= 0) throw ValidationError("total must be positive");
  std::int64_t diff = treatment - baseline;
  std::int64_t tenths = tenths_half_up(diff < 0 ? -diff : diff, total, 100);
  std::string sign = diff < 0 && tenths > 0 ? "-" : "+";
  return sign + format_tenths(tenths);
}

namespace {

std::string ratio_text(const CountCell& treatment, const CountCell& baseline) {
  if (baseline.count == 0) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", static_cast<double>(treatment.count) / static_cast<double>(baseline.count));
  return buf;
}

ComparisonRow compare_row(const ReportRow& b, const ReportRow& t) {
  ComparisonRow row;
  row.benchmark = b.benchmark;
  row.tasks = b.tasks;
  row.baseline = b.passed;
  row.treatment = t.passed;
  row.delta_pp = signed_pp_delta(t.passed.count, b.passed.count, b.tasks);
  row.ratio = ratio_text(t.passed, b.passed);
  return row;
}

json comparison_row_json(const ComparisonRow& r) {
  return {{"benchmark", r.benchmark},
          {"tasks", r.tasks},
          {"baseline", cell_json(r.baseline)},
          {"treatment", cell_json(r.treatment)},
          {"delta_pp", r.delta_pp},
          {"ratio", r.ratio}};
}

}  // namespace

Comparison compare_outcomes(const std::vector<TaskOutcome>& baseline, const std::vector<TaskOutcome>& treatment) {
  std::map<std::string, std::string> b_ids, t_ids;
  for (const auto& o : baseline) b_ids[o.task_id] = o.benchmark;
  for (const auto& o : treatment) t_ids[o.task_id] = o.benchmark;
  if (b_ids != t_ids || b_ids.size() != baseline.size() || t_ids.size() != treatment.size()) {
    throw MismatchedTaskSets("baseline and treatment cover different tasks");
  }
  BenchReport b = compute_report(baseline);
  // Align the treatment to the baseline's task order so rows line up.
  std::map<std::string, const TaskOutcome*> by_id;
  for (const auto& o : treatment) by_id[o.task_id] = &o;
  std::vector<TaskOutcome> aligned;
  for (const auto& o : baseline) aligned.push_back(*by_id.at(o.task_id));
  BenchReport t = compute_report(aligned);

  Comparison c;
  for (std::size_t i = 0; i < b.rows.size(); ++i) c.rows.push_back(compare_row(b.rows[i], t.rows[i]));
  c.total = compare_row(b.total, t.total);
  return c;
}

json comparison_to_json(const Comparison& comparison) {
  json rows = json::array();
  for (const auto& r : comparison.rows) rows.push_back(comparison_row_json(r));
  return {{"rows", rows}, {"total", comparison_row_json(comparison.total)}};
}

std::string render_comparison(const Comparison& comparison) {
  std::vector<std::vector<std::string>> body;
  auto add = [&](const ComparisonRow& r) {
    body.push_back({r.benchmark, std::to_string(r.tasks), r.baseline.text(), r.treatment.text(), r.delta_pp, r.ratio});
  };
  for (const auto& r : comparison.rows) add(r);
  add(comparison.total);
  return render_rows({"Benchmark", "#Tasks", "Success Rate: Baseline", "Success Rate: Treatment", "Delta (pp)", "Ratio"},
                     body, comparison.rows.size());
}

std::vector<TaskOutcome> outcomes_from_events(const std::vector<Event>& events) {
  std::vector<TaskOutcome> out;
  for (const auto& e : events) {
    if (e.kind == event_kind::kOutcome) out.push_back(outcome_from_json(e.payload));
  }
  return out;
}

std::vector<TaskOutcome> outcomes_from_counts(const std::string& benchmark, std::int64_t tasks,
                                              std::int64_t executable, std::int64_t passed) {
  if (tasks < 0 || executable < 0 || passed < 0 || executable > tasks || passed > executable) {
    throw ValidationError("counts must satisfy passed <= executable <= tasks");
  }
  std::vector<TaskOutcome> out;
  for (std::int64_t i = 0; i < tasks; ++i) {
    TaskOutcome o;
    o.task_id = benchmark + "/" + std::to_string(i + 1);
    o.benchmark = benchmark;
    o.executable = i < executable;
    o.all_tests_passed = i < passed;
    o.passed_any_attempt = o.all_tests_passed;
    o.classification = o.all_tests_passed ? Classification::kAllPass
                       : o.executable     ? Classification::kSomeTestsFail
                                          : Classification::kBuildError;
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace april
