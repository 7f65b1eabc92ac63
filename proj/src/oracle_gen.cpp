// SPDX-License-Identifier: Apache-2.0
#include "april/oracle_gen.hpp"

#include <regex>
#include <set>
#include <tuple>

#include "april/prompt_engine.hpp"
#include "april/rounding.hpp"

namespace april {

using nlohmann::json;

void validate(const OracleGenInput& input) {
  if (trim(input.reference_impl).empty()) throw ValidationError("reference implementation is empty");
}

std::string build_agent_prompt(const OracleGenInput& input, const OracleGenState& state) {
  std::string feedback;
  if (state.feedback_t) {
    feedback += "\nThe previous suite failed against the reference implementation:\n" + *state.feedback_t + "\n";
  }
  if (state.feedback_c) {
    feedback += "\nA reviewer judged the previous suite insufficient:\n" + *state.feedback_c + "\n";
  }
  return render_with(oracle_agent_template(), {{"library_name", input.library_name},
                                               {"module_path", input.module_path},
                                               {"docstrings", input.docstrings},
                                               {"reference_impl", input.reference_impl},
                                               {"feedback", feedback}});
}

TestSuite parse_generated_tests(const std::string& task_id, std::string_view reply) {
  std::string body = extract_tagged(reply, kTestsTag).payload;
  TestSuite suite;
  suite.task_id = task_id;
  std::set<std::string> ids;
  for (const auto& block : find_tagged_blocks(body, "test")) {
    if (block.payload.empty()) continue;
    std::string base = tag_attribute(block.attributes, "name").value_or("");
    if (!is_identifier(base)) base = "test_" + std::to_string(suite.cases.size() + 1);
    std::string id = base;
    for (int n = 2; !ids.insert(id).second; ++n) id = base + "_" + std::to_string(n);
    suite.cases.push_back({id, block.payload, std::nullopt});
  }
  if (suite.cases.empty()) throw ParseError("agent reply contains no <test> elements");
  return suite;
}

TestSuite gen_tests(const OracleGenInput& input, const OracleGenState& state, ChatBackend& agent,
                    const GenerationParams& params) {
  ChatResponse r = agent.complete(ChatRequest::user(build_agent_prompt(input, state), Purpose::kOracleGen, params));
  return parse_generated_tests(input.task_id, r.content);
}

QualityVerdict parse_quality_reply(std::string_view reply, int threshold) {
  std::string text(reply);
  int comp = -1, cov = -1;  // -1: not found
  std::string critique;

  std::string stripped = trim(text);
  if (!stripped.empty() && stripped.front() == '{') {
    try {
      json j = json::parse(stripped);
      comp = j.at("comprehensiveness").get<int>();
      cov = j.at("coverage_breadth").get<int>();
      critique = j.value("critique", std::string{});
    } catch (const json::exception&) {
      comp = cov = -1;
    }
  }
  if (comp < 0 || cov < 0) {
    static const std::regex comp_re(R"(comprehensiveness\s*[:=]?\s*(\d+)\s*(/\s*5)?)", std::regex::icase);
    static const std::regex cov_re(R"(coverage(?:[_ ]breadth)?\s*[:=]?\s*(\d+)\s*(/\s*5)?)", std::regex::icase);
    static const std::regex crit_re(R"(critique\s*:\s*([\s\S]*))", std::regex::icase);
    std::smatch m;
    if (std::regex_search(text, m, comp_re)) comp = std::stoi(m[1].str());
    if (std::regex_search(text, m, cov_re)) cov = std::stoi(m[1].str());
    if (std::regex_search(text, m, crit_re)) critique = trim(m[1].str());
  }
  if (comp < 0 || cov < 0) {
    static const std::regex pair_re(R"((\d+)\s*/\s*5)");
    std::vector<int> scores;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), pair_re); it != std::sregex_iterator(); ++it) {
      scores.push_back(std::stoi((*it)[1].str()));
    }
    if (scores.size() == 2) {
      comp = scores[0];
      cov = scores[1];
      if (critique.empty()) critique = stripped;
    }
  }
  if (comp < 0 || cov < 0) throw EvaluatorParseError("evaluator reply carries no rubric scores");
  if (comp < 1 || comp > 5 || cov < 1 || cov > 5) throw EvaluatorParseError("rubric score outside 1..5");

  QualityVerdict v;
  v.comprehensiveness = comp;
  v.coverage_breadth = cov;
  v.critique = critique;
  v.is_good = comp >= threshold && cov >= threshold;
  return v;
}

QualityVerdict evaluate_quality(const OracleGenInput& input, const TestSuite& suite, ChatBackend& evaluator,
                                const OracleGenConfig& config) {
  if (suite.cases.empty()) throw ValidationError("cannot evaluate an empty suite");
  std::string tests;
  for (const auto& c : suite.cases) tests += "# " + c.id + "\n" + c.source_code + "\n\n";
  std::string prompt = render_with(quality_eval_template(), {{"docstrings", input.docstrings},
                                                             {"reference_impl", input.reference_impl},
                                                             {"tests", tests}});
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    ChatResponse r = evaluator.complete(ChatRequest::user(prompt, Purpose::kQualityEval, config.params));
    try {
      return parse_quality_reply(r.content, config.quality_threshold);
    } catch (const EvaluatorParseError& e) {
      last_error = e.what();
    }
  }
  throw EvaluatorParseError("evaluator reply unparseable twice; last: " + last_error);
}

namespace {

using Rank = std::tuple<bool, bool, int, std::size_t>;

json verdict_json(const std::optional<QualityVerdict>& q) {
  if (!q) return nullptr;
  return {{"is_good", q->is_good},
          {"comprehensiveness", q->comprehensiveness},
          {"coverage_breadth", q->coverage_breadth},
          {"critique", q->critique}};
}

}  // namespace

OracleGenResult generate_validation_tests(const OracleGenInput& input, OracleBackends backends, Sandbox& sandbox,
                                          const OracleGenConfig& config, const RunLogger& log) {
  validate(input);
  if (config.max_iterations < 1) throw ValidationError("max_iterations must be >= 1");

  OracleGenState state;
  std::vector<OracleIteration> history;
  std::optional<std::pair<Rank, TestSuite>> best;

  for (int k = 0; k < config.max_iterations; ++k) {
    state.iteration = k;
    OracleIteration record;
    record.iteration = k;
    record.agent_prompt = build_agent_prompt(input, state);

    TestSuite suite;
    try {
      suite = gen_tests(input, state, backends.agent, config.params);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kParse && e.code() != ErrorCode::kMissingTag &&
          e.code() != ErrorCode::kEmptyPayload) {
        throw;
      }
      log.log(event_kind::kOracleIteration, {{"iteration", k}, {"parse_error", e.what()}});
      history.push_back(record);
      state.feedback_t = std::string("The previous reply could not be parsed: ") + e.what();
      state.feedback_c.reset();
      continue;
    }

    SandboxJob job;
    job.task_id = input.task_id;
    job.candidate_source = input.reference_impl;
    job.suite = suite;
    job.module_path = input.module_path;
    job.library_name = input.library_name;
    SandboxResult result = sandbox.run_candidate(job);
    log.log(event_kind::kSandboxResult, {{"task_id", input.task_id}, {"purpose", "oracle_check"},
                                         {"result", result_to_json(result)}});
    bool pass = result.classification == Classification::kAllPass;
    QualityVerdict quality = evaluate_quality(input, suite, backends.evaluator, config);

    record.test_count = suite.cases.size();
    record.classification = result.classification;
    record.tests_pass = pass;
    record.quality = quality;
    history.push_back(record);
    log.log(event_kind::kOracleIteration, {{"iteration", k},
                                           {"tests", suite.cases.size()},
                                           {"classification", std::string(to_string(result.classification))},
                                           {"quality", verdict_json(quality)}});

    Rank rank{pass, quality.is_good, quality.comprehensiveness + quality.coverage_breadth, result.passed()};
    if (!best || rank > best->first) best.emplace(rank, suite);

    if (pass && quality.is_good) {
      suite.generation_meta = GenerationMeta{k + 1, config.generator, true};
      state.current_suite = suite;
      return {suite, k + 1, true, state, std::move(history)};
    }
    // Overwrite, never accumulate: the next prompt sees only this iteration.
    state.feedback_t = pass ? std::nullopt : std::optional<std::string>(failure_summary(result));
    state.feedback_c = quality.is_good ? std::nullopt : std::optional<std::string>(quality.critique);
    state.current_suite = suite;
  }

  OracleGenResult out;
  if (best) out.suite = best->second;
  out.suite.task_id = input.task_id;
  out.suite.generation_meta = GenerationMeta{config.max_iterations, config.generator, false};
  out.iterations_used = config.max_iterations;
  out.converged = false;
  out.state = state;
  out.history = std::move(history);
  throw NonConverged(std::move(out), "no acceptable suite after " + std::to_string(config.max_iterations) +
                                         " iterations for '" + input.task_id + "'");
}

OracleMetrics oracle_metrics_from_counts(std::int64_t runs, std::int64_t total_tests, std::int64_t total_iterations) {
  if (runs <= 0) throw ValidationError("oracle metrics need at least one run");
  OracleMetrics m;
  m.total_tests = total_tests;
  m.total_iterations = total_iterations;
  m.avg_tests = static_cast<double>(total_tests) / static_cast<double>(runs);
  m.avg_iterations = static_cast<double>(total_iterations) / static_cast<double>(runs);
  m.avg_tests_1dp = mean_1dp(total_tests, runs);
  m.avg_iterations_1dp = mean_1dp(total_iterations, runs);
  return m;
}

OracleMetrics oracle_metrics(const std::vector<std::pair<TestSuite, int>>& runs) {
  std::int64_t tests = 0, iterations = 0;
  for (const auto& [suite, used] : runs) {
    tests += static_cast<std::int64_t>(suite.cases.size());
    iterations += used;
  }
  return oracle_metrics_from_counts(static_cast<std::int64_t>(runs.size()), tests, iterations);
}

}  // namespace april
