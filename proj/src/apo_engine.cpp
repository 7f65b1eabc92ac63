// SPDX-License-Identifier: Apache-2.0
#include "april/apo_engine.hpp"

#include <algorithm>
#include <sstream>

#include "april/digest.hpp"
#include "april/errors.hpp"

namespace april {

using nlohmann::json;

PromptCandidate root_candidate(PromptTemplate prompt) {
  PromptCandidate c;
  c.id = "p0";
  c.prompt = std::move(prompt);
  return c;
}

TextGradient make_gradient(const PromptCandidate& candidate, int iteration) {
  TextGradient g;
  g.iteration = iteration;
  g.source_task_ids = candidate.failed_task_ids;
  for (std::size_t i = 0; i < candidate.critiques.size(); ++i) {
    if (!g.concatenated_critiques.empty()) g.concatenated_critiques += "\n\n";
    std::string label = i < candidate.failed_task_ids.size() ? " (" + candidate.failed_task_ids[i] + ")" : "";
    g.concatenated_critiques += std::to_string(i + 1) + "." + label + " " + candidate.critiques[i];
  }
  return g;
}

void validate(const BeamConfig& config) {
  if (config.beam_width < 1) throw ValidationError("beam_width must be >= 1");
  if (config.max_depth < 1) throw ValidationError("max_depth must be >= 1");
  if (config.proposals_per_candidate < 1) throw ValidationError("proposals_per_candidate must be >= 1");
}

std::vector<std::string> ScoreResult::critiques() const {
  std::vector<std::string> out;
  for (const auto& t : per_task) {
    if (t.penalty == 1) out.push_back(t.critique);
  }
  return out;
}

namespace {

std::string request_critique(ChatBackend& backend, const std::string& rendered, const std::string& solution,
                             const std::string& failure, const GenerationParams& params) {
  std::string prompt = render_with(critique_template(), {{"prompt", rendered}, {"solution", solution},
                                                         {"failure", failure}});
  return trim(backend.complete(ChatRequest::user(prompt, Purpose::kCritique, params)).content);
}

}  // namespace

ScoreResult score_prompt(const PromptTemplate& prompt, const std::vector<TaskBundle>& train, ApoBackends backends,
                         Sandbox& sandbox, const GenerationParams& params, const RunLogger& log) {
  if (train.empty()) throw ValidationError("scoring needs at least one training task");
  ScoreResult out;
  out.n = train.size();
  for (const auto& bundle : train) {
    const SynthesisTask& task = bundle.task;
    std::string rendered = render(prompt, task);
    ChatResponse reply = backends.synthesis.complete(ChatRequest::user(rendered, Purpose::kSynthesis, params));

    TaskScore score;
    score.task_id = task.id;
    TaggedPayload extracted;
    try {
      extracted = extract_tagged(reply.content, kOutputTag);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kMissingTag && e.code() != ErrorCode::kEmptyPayload) throw;
      score.critique = "unparseable output";
      out.per_task.push_back(std::move(score));
      continue;
    }
    if (extracted.multiple_pairs) {
      log.log(event_kind::kWarning, {{"task_id", task.id}, {"warning", "multiple output tag pairs; used the first"}});
    }

    SandboxJob job;
    job.task_id = task.id;
    job.candidate_source = extracted.payload;
    job.suite = bundle.validation;
    job.module_path = task.module_path;
    job.library_name = task.library_name;
    SandboxResult result = sandbox.run_candidate(job);
    log.log(event_kind::kSandboxResult, {{"task_id", task.id}, {"purpose", "apo_score"},
                                         {"result", result_to_json(result)}});
    score.classification = result.classification;
    score.penalty = penalty_of(result);
    if (score.penalty == 1) {
      score.critique = request_critique(backends.critique, rendered, extracted.payload, failure_summary(result), params);
    }
    out.per_task.push_back(std::move(score));
  }
  for (const auto& t : out.per_task) out.failures += static_cast<std::size_t>(t.penalty);
  out.ds = 1.0 - static_cast<double>(out.failures) / static_cast<double>(out.n);
  return out;
}

void score_candidate(PromptCandidate& candidate, const std::vector<TaskBundle>& train, ApoBackends backends,
                     Sandbox& sandbox, const GenerationParams& params, const RunLogger& log) {
  ScoreResult s = score_prompt(candidate.prompt, train, backends, sandbox, params, log);
  candidate.ds = s.ds;
  candidate.failures = s.failures;
  candidate.n = s.n;
  candidate.critiques.clear();
  candidate.failed_task_ids.clear();
  for (const auto& t : s.per_task) {
    if (t.penalty == 1) {
      candidate.critiques.push_back(t.critique);
      candidate.failed_task_ids.push_back(t.task_id);
    }
  }
  json per_task = json::array();
  for (const auto& t : s.per_task) per_task.push_back({{"task_id", t.task_id}, {"penalty", t.penalty}});
  json payload = trace_entry(candidate);
  payload["failures"] = candidate.failures;
  payload["n"] = candidate.n;
  payload["per_task"] = per_task;
  payload["edit_summary"] = candidate.edit_summary;
  payload["prompt_blob"] = log.blob(serialize_template(candidate.prompt));
  log.log(event_kind::kCandidateScored, std::move(payload));
}

std::vector<EditProposal> parse_edit_reply(std::string_view reply) {
  std::vector<EditProposal> out;
  for (const auto& block : find_tagged_blocks(reply, "revised_prompt")) {
    out.push_back({block.payload, tag_attribute(block.attributes, "summary").value_or("")});
  }
  return out;
}

std::vector<PromptCandidate> propose_edits(const PromptCandidate& candidate, const TextGradient& gradient,
                                           ChatBackend& edit, std::size_t k, const std::set<std::string>& excluded,
                                           CandidateCounter& ids, const GenerationParams& params,
                                           const RunLogger& log) {
  if (k < 1) throw ValidationError("k must be >= 1");
  std::string prompt = render_with(apo_edit_template(), {{"prompt", candidate.prompt.body()},
                                                         {"critiques", gradient.concatenated_critiques},
                                                         {"count", std::to_string(k)}});
  ChatResponse reply = edit.complete(ChatRequest::user(prompt, Purpose::kApoEdit, params));

  std::set<std::string> seen = excluded;
  seen.insert(normalize_prompt_text(candidate.prompt.body()));
  const auto& required = candidate.prompt.required_placeholders();

  std::vector<PromptCandidate> children;
  std::size_t rejected = 0;
  for (auto& proposal : parse_edit_reply(reply.content)) {
    if (children.size() == k) break;
    std::string norm = normalize_prompt_text(proposal.body);
    if (seen.count(norm)) {
      ++rejected;
      continue;
    }
    std::optional<PromptTemplate> tmpl;
    try {
      std::vector<std::string> names = scan_placeholders(proposal.body);
      bool bound = std::all_of(names.begin(), names.end(), [&](const std::string& n) { return required.count(n); });
      if (bound) tmpl = candidate.prompt.with_body("", proposal.body);
    } catch (const ValidationError&) {
    }
    if (!tmpl) {
      ++rejected;
      continue;
    }
    seen.insert(norm);
    std::uint64_t creation = ids.take();
    PromptCandidate child;
    child.id = "p" + std::to_string(creation);
    child.prompt = candidate.prompt.with_body(child.id, proposal.body);
    child.parent_id = candidate.id;
    child.edit_summary = proposal.summary;
    child.depth = candidate.depth + 1;
    child.creation = creation;
    children.push_back(std::move(child));
  }
  if (rejected > 0) {
    log.log(event_kind::kWarning, {{"candidate", candidate.id}, {"rejected_proposals", rejected}});
  }
  if (children.empty()) {
    throw NoAdmissibleChildren("edit reply for '" + candidate.id + "' yielded no admissible prompt");
  }
  return children;
}

bool beam_order(const PromptCandidate& a, const PromptCandidate& b) {
  double da = a.ds.value_or(-1.0), db = b.ds.value_or(-1.0);
  if (da != db) return da > db;
  if (a.depth != b.depth) return a.depth < b.depth;
  return a.creation < b.creation;
}

json trace_entry(const PromptCandidate& candidate) {
  return {{"id", candidate.id},
          {"parent", candidate.parent_id.empty() ? json(nullptr) : json(candidate.parent_id)},
          {"depth", candidate.depth},
          {"ds", candidate.ds ? json(*candidate.ds) : json(nullptr)},
          {"prompt_hash", sha256_hex(candidate.prompt.body())}};
}

namespace {

std::vector<TaskBundle> select_train(const std::vector<TaskBundle>& tasks, const std::vector<std::string>& ids) {
  if (ids.empty()) return tasks;
  std::vector<TaskBundle> out;
  for (const auto& id : ids) {
    auto it = std::find_if(tasks.begin(), tasks.end(), [&](const TaskBundle& b) { return b.task.id == id; });
    if (it == tasks.end()) throw UnknownTaskId("training task '" + id + "' is not in the task set");
    out.push_back(*it);
  }
  return out;
}

}  // namespace

BeamResult beam_search(const PromptTemplate& p0, const std::vector<TaskBundle>& tasks, const BeamConfig& config,
                       ApoBackends backends, Sandbox& sandbox, const RunLogger& log) {
  validate(config);
  std::vector<TaskBundle> train = select_train(tasks, config.train_task_ids);
  if (train.empty()) throw ValidationError("APO needs at least one training task");

  BeamResult result;
  std::map<std::string, PromptCandidate> by_id;
  CandidateCounter ids(1);

  PromptCandidate root = root_candidate(p0);
  score_candidate(root, train, backends, sandbox, config.params, log);
  result.scored.push_back(root);
  by_id[root.id] = root;

  std::vector<PromptCandidate> beam{root};
  auto record_level = [&](int level) {
    std::vector<std::string> members;
    for (const auto& m : beam) members.push_back(m.id);
    result.beams.push_back(members);
    result.best_ds_per_level.push_back(*beam.front().ds);
    log.log(event_kind::kBeamLevel, {{"level", level}, {"members", members}, {"best_ds", *beam.front().ds}});
  };
  record_level(0);

  for (int level = 1; level <= config.max_depth; ++level) {
    std::vector<PromptCandidate> children;
    for (const auto& member : beam) {
      TextGradient gradient = make_gradient(member, level);
      if (gradient.empty()) continue;  // nothing to fix
      std::set<std::string> ancestors;
      for (std::string a = member.parent_id; !a.empty(); a = by_id.at(a).parent_id) {
        ancestors.insert(normalize_prompt_text(by_id.at(a).prompt.body()));
      }
      try {
        auto kids = propose_edits(member, gradient, backends.edit, config.proposals_per_candidate, ancestors, ids,
                                  config.params, log);
        for (auto& k : kids) children.push_back(std::move(k));
      } catch (const NoAdmissibleChildren& e) {
        log.log(event_kind::kWarning, {{"candidate", member.id}, {"warning", e.what()}});
      }
    }
    if (children.empty()) break;

    for (auto& child : children) {
      score_candidate(child, train, backends, sandbox, config.params, log);
      result.scored.push_back(child);
      by_id[child.id] = child;
    }
    // Parents compete with their children, so the best ds never drops.
    std::vector<PromptCandidate> pool = beam;
    pool.insert(pool.end(), children.begin(), children.end());
    std::sort(pool.begin(), pool.end(), beam_order);
    if (pool.size() > config.beam_width) pool.resize(config.beam_width);
    beam = std::move(pool);
    result.levels_expanded = level;
    record_level(level);
  }
  result.best = beam.front();
  return result;
}

std::string search_trace_jsonl(const BeamResult& result) {
  std::string out;
  for (const auto& c : result.scored) out += trace_entry(c).dump() + "\n";
  return out;
}

std::string search_trace_from_events(const std::vector<Event>& events) {
  std::string out;
  for (const auto& e : events) {
    if (e.kind != event_kind::kCandidateScored) continue;
    json entry;
    for (const char* key : {"id", "parent", "depth", "ds", "prompt_hash"}) entry[key] = e.payload.at(key);
    out += entry.dump() + "\n";
  }
  return out;
}

}  // namespace april
