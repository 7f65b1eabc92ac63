// SPDX-License-Identifier: Apache-2.0
#include "april/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <memory>
#include <optional>

#include "april/apo_engine.hpp"
#include "april/bench_harness.hpp"
#include "april/config.hpp"
#include "april/digest.hpp"
#include "april/errors.hpp"
#include "april/oracle_gen.hpp"
#include "april/prompt_engine.hpp"
#include "april/rlvr_trainer.hpp"
#include "april/run_store.hpp"
#include "april/toy_domain.hpp"

namespace april {

using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::string runs_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  bool dry_run = false;
  bool keep_workspaces = false;
};

struct OracleArgs {
  std::string task, ref_impl, out, docstrings;
  int max_iter = 0;
};

struct SynthArgs {
  std::string task, prompt = "builtin", backend, out;
};

struct ApoArgs {
  std::string tasks, train_ids, init_prompt = "builtin", out, trace;
  std::size_t beam = 0, proposals = 0;
  int depth = 0;
};

struct TrainArgs {
  std::string tasks, policy, out;
};

struct BenchArgs {
  std::string tasks, prompt = "builtin", backend, policy, checkpoint, out;
  int attempts = 1;
};

struct ReportArgs {
  std::vector<std::string> files;
  std::vector<std::string> compare;
  bool json_out = false;
};

struct ReplayArgs {
  std::string run_id, kind;
  bool report = false;
  bool trace = false;
};

AppConfig resolve_config(const Globals& g) {
  std::optional<std::filesystem::path> file;
  if (!g.config.empty()) file = g.config;
  AppConfig cfg = load_app_config(file);
  apply_env_overrides(cfg, process_env());
  if (!g.runs_dir.empty()) cfg.runs_dir = g.runs_dir;
  if (g.seed) cfg.seed = *g.seed;
  if (g.seed || !cfg.grpo.seed) cfg.grpo.seed = cfg.seed;
  if (g.workers) {
    cfg.sandbox.workers = *g.workers;
    cfg.grpo.workers = *g.workers;
  }
  cfg.sandbox.keep_workspaces = g.keep_workspaces;
  return cfg;
}

/// Opens one run for the invocation and closes it on every exit path.
class RunSession {
 public:
  RunSession(const AppConfig& cfg, bool dry_run, const std::string& command, json args, std::ostream& err) {
    if (dry_run) return;
    store_ = std::make_unique<RunStore>(cfg.runs_dir);
    json snapshot = {{"command", command}, {"args", std::move(args)}, {"config", cfg.redacted()}};
    run_id_ = store_->open_run(snapshot);
    err << "run: " << run_id_ << "\n";
  }
  ~RunSession() {
    try {
      close();
    } catch (...) {
    }
  }
  RunLogger logger() const { return store_ ? RunLogger(store_.get(), run_id_) : RunLogger(); }
  void fail(const std::exception& e) const { logger().log(event_kind::kWarning, {{"error", e.what()}}); }
  void close() {
    if (store_ && !closed_) {
      closed_ = true;
      store_->close_run(run_id_);
    }
  }

 private:
  std::unique_ptr<RunStore> store_;
  std::string run_id_;
  bool closed_ = false;
};

PromptTemplate load_prompt(const std::string& spec) {
  if (spec.empty() || spec == "builtin") return initial_prompt();
  PromptTemplate t = parse_template_file(read_text_file(spec));
  validate_synthesis_template(t);
  return t;
}

std::vector<TaskBundle> load_tasks(const std::string& flag, const AppConfig& cfg, const RunLogger& log) {
  std::filesystem::path dir = flag.empty() ? cfg.tasks_dir : std::filesystem::path(flag);
  if (dir.empty()) throw ConfigError("no tasks directory: pass --tasks or set paths.tasks");
  if (!std::filesystem::is_directory(dir)) throw ConfigError("tasks directory '" + dir.string() + "' does not exist");
  std::vector<TaskBundle> tasks = load_task_dir(dir);
  for (const auto& b : tasks) {
    log.log(event_kind::kTaskLoaded, {{"task_id", b.task.id}, {"library", b.task.library_name},
                                      {"validation_cases", b.validation.cases.size()}});
  }
  return tasks;
}

std::string default_docstrings(const SynthesisTask& task) {
  std::string out = task.signature.display() + "\n";
  for (const auto& e : task.examples) {
    out += "\nExample " + e.id + (e.description ? ": " + *e.description : std::string{}) + "\n" + e.source_code + "\n";
  }
  return out;
}

// Subcommands ----------------------------------------------------------------

int cmd_gen_oracle(const Globals& g, const OracleArgs& a, std::ostream& out, std::ostream& err) {
  AppConfig cfg = resolve_config(g);
  SynthesisTask task = parse_task_file(read_text_file(a.task));
  OracleGenInput input;
  input.task_id = task.id;
  input.reference_impl = read_text_file(a.ref_impl);
  input.docstrings = a.docstrings.empty() ? default_docstrings(task) : read_text_file(a.docstrings);
  input.module_path = task.module_path;
  input.library_name = task.library_name;
  validate(input);
  OracleGenConfig oc = cfg.oracle;
  if (a.max_iter > 0) oc.max_iterations = a.max_iter;
  oc.params = cfg.generation;
  BackendSet backends(cfg);
  ChatBackend& agent = backends.get(BackendRole::kOracleAgent);
  ChatBackend& evaluator = backends.get(BackendRole::kQualityEvaluator);
  std::unique_ptr<Sandbox> sandbox = make_sandbox(cfg.sandbox);
  if (g.dry_run) {
    out << "dry run: configuration valid\n";
    return kExitOk;
  }

  RunSession session(cfg, false, "gen-oracle", {{"task", a.task}, {"ref_impl", a.ref_impl}, {"out", a.out}}, err);
  RunLogger log = session.logger();
  try {
    OracleGenResult result;
    try {
      result = generate_validation_tests(input, {agent, evaluator}, *sandbox, oc, log);
    } catch (const NonConverged& e) {
      write_text_file(a.out, serialize_suite(e.best().suite));
      err << "best suite written to " << a.out << " (not converged)\n";
      throw;
    }
    // Independent re-check of the accepted suite against the reference.
    SandboxJob job;
    job.task_id = task.id;
    job.candidate_source = input.reference_impl;
    job.suite = result.suite;
    job.module_path = task.module_path;
    job.library_name = task.library_name;
    SandboxResult check = sandbox->run_candidate(job);
    log.log(event_kind::kSandboxResult, {{"task_id", task.id}, {"purpose", "oracle_recheck"},
                                         {"result", result_to_json(check)}});
    if (check.classification != Classification::kAllPass) {
      throw ValidationError("accepted suite fails the independent re-check: " + failure_summary(check));
    }
    write_text_file(a.out, serialize_suite(result.suite));
    log.log(event_kind::kOutcome, {{"task_id", task.id},
                                   {"tests", result.suite.cases.size()},
                                   {"iterations_used", result.iterations_used},
                                   {"converged", true}});
    out << task.id << ": " << result.suite.cases.size() << " tests in " << result.iterations_used
        << " iteration(s) -> " << a.out << "\n";
  } catch (const std::exception& e) {
    session.fail(e);
    throw;
  }
  return kExitOk;
}

int cmd_synth(const Globals& g, const SynthArgs& a, std::ostream& out, std::ostream& err) {
  AppConfig cfg = resolve_config(g);
  TaskBundle bundle = load_task_bundle(a.task);
  PromptTemplate prompt = load_prompt(a.prompt);
  BackendSet backends(cfg);
  if (!a.backend.empty()) backends.override_role(BackendRole::kSynthesis, load_backend_file(a.backend));
  ChatBackend& backend = backends.get(BackendRole::kSynthesis);
  std::unique_ptr<Sandbox> sandbox = make_sandbox(cfg.sandbox);
  if (g.dry_run) {
    out << "dry run: configuration valid\n";
    return kExitOk;
  }

  RunSession session(cfg, false, "synth", {{"task", a.task}, {"prompt", a.prompt}, {"backend", a.backend}}, err);
  RunLogger log = session.logger();
  try {
    log.log(event_kind::kTaskLoaded, {{"task_id", bundle.task.id}, {"library", bundle.task.library_name}});
    GenerationParams params = cfg.generation;
    if (!params.seed) params.seed = cfg.seed;
    ChatResponse reply = backend.complete(ChatRequest::user(render(prompt, bundle.task), Purpose::kSynthesis, params));
    log.log(event_kind::kLlmCall, {{"purpose", "synthesis"}, {"task_id", bundle.task.id},
                                   {"reply_blob", log.blob(reply.content)}});
    TaskOutcome o;
    o.task_id = bundle.task.id;
    o.benchmark = bundle.task.library_name;
    o.tests_total = bundle.validation.cases.size();
    std::string source;
    try {
      source = extract_tagged_output(reply.content);
      SandboxJob job;
      job.task_id = bundle.task.id;
      job.candidate_source = source;
      job.suite = bundle.validation;
      job.module_path = bundle.task.module_path;
      job.library_name = bundle.task.library_name;
      SandboxResult r = sandbox->run_candidate(job);
      log.log(event_kind::kSandboxResult, {{"task_id", bundle.task.id}, {"purpose", "synth"},
                                           {"result", result_to_json(r)}});
      o.classification = r.classification;
      o.executable = is_executable(r.classification);
      o.all_tests_passed = r.classification == Classification::kAllPass;
      o.passed_any_attempt = o.all_tests_passed;
      o.tests_passed = r.passed();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kMissingTag && e.code() != ErrorCode::kEmptyPayload) throw;
      o.error = e.what();
    }
    log.log(event_kind::kOutcome, outcome_to_json(o));
    if (!a.out.empty() && !source.empty()) write_text_file(a.out, source + "\n");
    if (a.out.empty() && !source.empty()) out << source << "\n";
    out << bundle.task.id << ": "
        << (o.classification ? std::string(to_string(*o.classification)) : std::string("no tagged output")) << " ("
        << o.tests_passed << "/" << o.tests_total << " tests)\n";
  } catch (const std::exception& e) {
    session.fail(e);
    throw;
  }
  return kExitOk;
}

int cmd_apo(const Globals& g, const ApoArgs& a, std::ostream& out, std::ostream& err) {
  AppConfig cfg = resolve_config(g);
  BeamConfig bc = cfg.apo;
  if (a.beam) bc.beam_width = a.beam;
  if (a.depth) bc.max_depth = a.depth;
  if (a.proposals) bc.proposals_per_candidate = a.proposals;
  bc.params = cfg.generation;
  if (!a.train_ids.empty()) {
    std::set<std::string> ids = parse_id_list(read_text_file(a.train_ids));
    bc.train_task_ids.assign(ids.begin(), ids.end());
  }
  validate(bc);
  PromptTemplate p0 = load_prompt(a.init_prompt);
  BackendSet backends(cfg);
  ChatBackend& synthesis = backends.get(BackendRole::kSynthesis);
  ChatBackend& critique = backends.get(BackendRole::kCritique);
  ChatBackend& edit = backends.get(BackendRole::kEdit);
  std::unique_ptr<Sandbox> sandbox = make_sandbox(cfg.sandbox);
  std::string trace_path = a.trace.empty() ? a.out + ".trace.jsonl" : a.trace;
  if (g.dry_run) {
    load_tasks(a.tasks, cfg, {});
    out << "dry run: configuration valid\n";
    return kExitOk;
  }

  RunSession session(cfg, false, "apo", {{"tasks", a.tasks}, {"train_ids", a.train_ids}, {"out", a.out}}, err);
  RunLogger log = session.logger();
  try {
    std::vector<TaskBundle> tasks = load_tasks(a.tasks, cfg, log);
    BeamResult result = beam_search(p0, tasks, bc, {synthesis, critique, edit}, *sandbox, log);
    PromptTemplate best = result.best.prompt.with_body("p_star", result.best.prompt.body());
    write_text_file(a.out, serialize_template(best));
    write_text_file(trace_path, search_trace_jsonl(result));
    // Which split was used: tasks scored during search versus the rest of the directory.
    std::vector<std::string> trained = bc.train_task_ids, held_out;
    if (trained.empty()) {
      for (const auto& t : tasks) trained.push_back(t.task.id);
    }
    for (const auto& t : tasks) {
      if (std::find(trained.begin(), trained.end(), t.task.id) == trained.end()) held_out.push_back(t.task.id);
    }
    log.log(event_kind::kOutcome, {{"best", result.best.id},
                                   {"train_task_ids", trained},
                                   {"held_out_task_ids", held_out},
                                   {"ds", *result.best.ds},
                                   {"best_ds_per_level", result.best_ds_per_level},
                                   {"scored", result.scored.size()}});
    out << "best prompt " << result.best.id << " ds=" << *result.best.ds << " after " << result.levels_expanded
        << " level(s); " << result.scored.size() << " candidates scored on " << trained.size()
        << " training task(s), " << held_out.size() << " held out -> " << a.out << "\n";
  } catch (const std::exception& e) {
    session.fail(e);
    throw;
  }
  return kExitOk;
}

int cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out, std::ostream& err) {
  AppConfig cfg = resolve_config(g);
  if (!a.policy.empty()) cfg.policy.kind = a.policy;
  if (cfg.policy.kind != "toy" && cfg.policy.kind != "external") throw ConfigError("--policy must be toy or external");
  validate(cfg.grpo);
  if (a.out.empty()) throw ConfigError("--out is required");

  bool builtin = a.tasks.empty() && cfg.tasks_dir.empty();
  std::unique_ptr<Sandbox> sandbox;
  if (builtin) {
    // The built-in toy domain is checked by the stub test language.
    SandboxSpec stub = cfg.sandbox;
    stub.kind = "stub";
    sandbox = make_sandbox(stub);
  } else {
    sandbox = make_sandbox(cfg.sandbox);
  }
  if (g.dry_run) {
    if (!builtin) load_tasks(a.tasks, cfg, {});
    out << "dry run: configuration valid\n";
    return kExitOk;
  }

  RunSession session(cfg, false, "train", {{"tasks", a.tasks}, {"policy", cfg.policy.kind}, {"out", a.out}}, err);
  RunLogger log = session.logger();
  try {
    std::vector<TaskBundle> tasks = builtin ? toy_tasks() : load_tasks(a.tasks, cfg, log);
    std::vector<std::string> contexts;
    for (const auto& t : tasks) contexts.push_back(t.task.id);
    std::unique_ptr<Policy> policy = make_policy(cfg.policy, contexts, cfg.grpo.sampling.temperature);
    TrainReport report = train(*policy, tasks, *sandbox, cfg.grpo, log);

    std::filesystem::path dir(a.out);
    std::filesystem::create_directories(dir);
    json report_json = report.to_json();
    report_json["config"] = grpo_config_to_json(cfg.grpo);
    write_text_file(dir / "report.json", report_json.dump(2) + "\n");
    json checkpoint = make_checkpoint(*policy, cfg.grpo, report.steps);
    if (auto* toy = dynamic_cast<ToySoftmaxPolicy*>(policy.get())) checkpoint["policy"] = toy->to_json();
    write_text_file(dir / "checkpoint.json", checkpoint.dump(2) + "\n");
    log.log(event_kind::kOutcome, {{"steps", report.steps},
                                   {"stopped_early", report.stopped_early},
                                   {"final_reward", report.reward_curve.empty() ? 0.0 : report.reward_curve.back()}});
    auto crossed = report.first_step_above(0.9, 10);
    out << "trained " << report.steps << " step(s)" << (report.stopped_early ? " (early stop)" : "")
        << "; final mean reward "
        << (report.reward_curve.empty() ? 0.0 : report.reward_curve.back());
    if (crossed) out << "; 10-step mean above 0.9 from step " << *crossed;
    out << " -> " << dir.string() << "\n";
  } catch (const std::exception& e) {
    session.fail(e);
    throw;
  }
  return kExitOk;
}

int cmd_bench(const Globals& g, const BenchArgs& a, std::ostream& out, std::ostream& err) {
  AppConfig cfg = resolve_config(g);
  PromptTemplate prompt = load_prompt(a.prompt);
  if (a.attempts < 1) throw ConfigError("--attempts must be >= 1");
  BackendSet backends(cfg);
  if (!a.backend.empty()) backends.override_role(BackendRole::kSynthesis, load_backend_file(a.backend));
  std::unique_ptr<Sandbox> sandbox = make_sandbox(cfg.sandbox);
  if (a.out.empty()) throw ConfigError("--out is required");
  if (g.dry_run) {
    load_tasks(a.tasks, cfg, {});
    out << "dry run: configuration valid\n";
    return kExitOk;
  }

  RunSession session(cfg, false, "bench", {{"tasks", a.tasks}, {"prompt", a.prompt}, {"out", a.out}}, err);
  RunLogger log = session.logger();
  try {
    std::vector<TaskBundle> tasks = load_tasks(a.tasks, cfg, log);
    std::unique_ptr<Policy> policy;
    std::unique_ptr<Synthesizer> synth;
    if (!a.policy.empty()) {
      PolicySpec spec = cfg.policy;
      spec.kind = a.policy;
      std::vector<std::string> contexts;
      for (const auto& t : tasks) contexts.push_back(t.task.id);
      policy = make_policy(spec, contexts, cfg.grpo.sampling.temperature);
      if (!a.checkpoint.empty()) policy->set_parameters(checkpoint_theta(json::parse(read_text_file(a.checkpoint))));
      synth = std::make_unique<PolicySynthesizer>(*policy, cfg.grpo.sampling.top_p);
    } else {
      GenerationParams params = cfg.generation;
      synth = std::make_unique<BackendSynthesizer>(backends.get(BackendRole::kSynthesis), params);
    }
    BenchOptions opts;
    opts.attempts = a.attempts;
    opts.workers = cfg.sandbox.workers;
    opts.seed = cfg.seed;
    std::vector<TaskOutcome> outcomes = run_benchmark(tasks, prompt, *synth, *sandbox, opts, log);
    json fingerprint = {{"prompt_hash", sha256_hex(serialize_template(prompt))},
                        {"synthesizer", synth->id()},
                        {"seed", cfg.seed},
                        {"attempts", a.attempts}};
    BenchReport report = compute_report(outcomes, fingerprint);
    write_text_file(a.out, report_to_json(report).dump(2) + "\n");
    out << render_table(report);
  } catch (const std::exception& e) {
    session.fail(e);
    throw;
  }
  return kExitOk;
}

int cmd_report(const Globals& g, const ReportArgs& a, std::ostream& out, std::ostream& err) {
  AppConfig cfg = resolve_config(g);
  auto load = [](const std::string& file) {
    try {
      return report_from_json(json::parse(read_text_file(file)));
    } catch (const json::parse_error& e) {
      throw SchemaError("report " + file + ": " + e.what());
    }
  };
  if (a.compare.empty() && a.files.empty()) throw ConfigError("report needs a report file or --compare a b");
  std::vector<BenchReport> reports;
  for (const auto& f : a.files) reports.push_back(load(f));
  std::optional<Comparison> comparison;
  if (!a.compare.empty()) comparison = compare_outcomes(load(a.compare.at(0)).outcomes, load(a.compare.at(1)).outcomes);
  if (g.dry_run) {
    out << "dry run: configuration valid\n";
    return kExitOk;
  }

  RunSession session(cfg, false, "report", {{"files", a.files}, {"compare", a.compare}}, err);
  for (const auto& r : reports) out << (a.json_out ? report_to_json(r).dump(2) + "\n" : render_table(r));
  if (comparison) out << (a.json_out ? comparison_to_json(*comparison).dump(2) + "\n" : render_comparison(*comparison));
  return kExitOk;
}

int cmd_replay(const Globals& g, const ReplayArgs& a, std::ostream& out, std::ostream& err) {
  AppConfig cfg = resolve_config(g);
  RunStore store(cfg.runs_dir);
  RunRecord record = store.load(a.run_id);
  if (g.dry_run) {
    out << "dry run: configuration valid\n";
    return kExitOk;
  }

  RunSession session(cfg, false, "replay", {{"run_id", a.run_id}, {"kind", a.kind}}, err);
  if (a.report) {
    json fingerprint = json::object();
    std::vector<TaskOutcome> outcomes = outcomes_from_events(record.events);
    out << report_to_json(compute_report(outcomes, fingerprint)).dump(2) << "\n";
  } else if (a.trace) {
    out << search_trace_from_events(record.events);
  } else {
    for (const auto& e : record.events) {
      if (!a.kind.empty() && e.kind != a.kind) continue;
      out << json{{"seq", e.seq}, {"timestamp", e.timestamp}, {"kind", e.kind}, {"payload", e.payload}}.dump() << "\n";
    }
  }
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"LLM-driven API synthesis: oracle generation, prompt optimization, GRPO training, benchmarking",
               args.empty() ? "april" : args.front()};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "Configuration file (JSON)");
  app.add_option("--runs-dir", g.runs_dir, "Directory holding run records");
  app.add_option("--seed", g.seed, "Seed for sampling and synthesis");
  app.add_option("--workers", g.workers, "Concurrent sandbox jobs");
  app.add_flag("--dry-run", g.dry_run, "Validate configuration and inputs, write nothing");
  app.add_flag("--keep-workspaces", g.keep_workspaces, "Keep sandbox workspaces after each job");

  OracleArgs oracle;
  auto* gen = app.add_subcommand("gen-oracle", "Generate a validation suite with the agent/evaluator loop");
  gen->add_option("--task", oracle.task, "Task file")->required();
  gen->add_option("--ref-impl", oracle.ref_impl, "Reference implementation source")->required();
  gen->add_option("--max-iter", oracle.max_iter, "Iteration bound (default 6)");
  gen->add_option("--docstrings", oracle.docstrings, "Docstring text file (default: from the task)");
  gen->add_option("--out", oracle.out, "Suite file to write")->required();

  SynthArgs synth;
  auto* syn = app.add_subcommand("synth", "Synthesize one task and run its validation suite");
  syn->add_option("--task", synth.task, "Task file")->required();
  syn->add_option("--prompt", synth.prompt, "Prompt template file or 'builtin'");
  syn->add_option("--backend", synth.backend, "Backend file (mock script or HTTP spec)");
  syn->add_option("--out", synth.out, "Write the extracted implementation here");

  ApoArgs apo;
  auto* ap = app.add_subcommand("apo", "Optimize the synthesis prompt by beam search");
  ap->add_option("--tasks", apo.tasks, "Task directory");
  ap->add_option("--train-ids", apo.train_ids, "File listing training task ids");
  ap->add_option("--init-prompt", apo.init_prompt, "Initial template file or 'builtin'");
  ap->add_option("--beam", apo.beam, "Beam width");
  ap->add_option("--depth", apo.depth, "Search depth");
  ap->add_option("--proposals", apo.proposals, "Edits requested per beam member");
  ap->add_option("--out", apo.out, "Best prompt template file")->required();
  ap->add_option("--trace", apo.trace, "Search trace JSONL (default <out>.trace.jsonl)");

  TrainArgs tr;
  auto* trn = app.add_subcommand("train", "GRPO training of a toy or external policy");
  trn->add_option("--tasks", tr.tasks, "Task directory (default: built-in toy domain)");
  trn->add_option("--policy", tr.policy, "toy or external")->check(CLI::IsMember({"toy", "external"}));
  trn->add_option("--out", tr.out, "Directory for report.json and checkpoint.json")->required();

  BenchArgs bench;
  auto* bn = app.add_subcommand("bench", "Run a benchmark and compute its report");
  bn->add_option("--tasks", bench.tasks, "Task directory");
  bn->add_option("--prompt", bench.prompt, "Prompt template file or 'builtin'");
  bn->add_option("--backend", bench.backend, "Backend file (mock script or HTTP spec)");
  bn->add_option("--policy", bench.policy, "Synthesize with a policy instead of a backend")
      ->check(CLI::IsMember({"toy", "external"}));
  bn->add_option("--checkpoint", bench.checkpoint, "Policy checkpoint to load");
  bn->add_option("--attempts", bench.attempts, "Attempts per task; > 1 adds a best-of-N column");
  bn->add_option("--out", bench.out, "Report JSON file")->required();

  ReportArgs report;
  auto* rp = app.add_subcommand("report", "Render bench reports as tables");
  rp->add_option("files", report.files, "Report files");
  rp->add_option("--compare", report.compare, "Baseline and treatment reports")->expected(2);
  rp->add_flag("--json", report.json_out, "Print JSON instead of tables");

  ReplayArgs replay;
  auto* rl = app.add_subcommand("replay", "Print or rebuild results from a recorded run");
  rl->add_option("run_id", replay.run_id, "Run id")->required();
  rl->add_option("--kind", replay.kind, "Only events of this kind");
  rl->add_flag("--report", replay.report, "Rebuild the bench report from outcome events");
  rl->add_flag("--trace", replay.trace, "Rebuild the APO search trace from candidate_scored events");

  std::vector<std::string> argv_strings = args.empty() ? std::vector<std::string>{"april"} : args;
  std::vector<char*> argv;
  for (auto& s : argv_strings) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (const auto* sub : app.get_subcommands()) target = sub;
    out << target->help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* target = &app;
    for (const auto* sub : app.get_subcommands()) target = sub;
    err << target->help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_oracle(g, oracle, out, err);
    if (syn->parsed()) return cmd_synth(g, synth, out, err);
    if (ap->parsed()) return cmd_apo(g, apo, out, err);
    if (trn->parsed()) return cmd_train(g, tr, out, err);
    if (bn->parsed()) return cmd_bench(g, bench, out, err);
    if (rp->parsed()) return cmd_report(g, report, out, err);
    if (rl->parsed()) return cmd_replay(g, replay, out, err);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kExitDomainError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomainError;
  }
  return kExitUsage;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace april
