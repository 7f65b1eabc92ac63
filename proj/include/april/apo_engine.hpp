// SPDX-License-Identifier: Apache-2.0
//
// Automatic prompt optimization: score prompts by the fraction of training
// tasks they solve, collect critiques of the failures, ask an edit LLM for
// revised prompts and beam-search over the revisions.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "april/llm_backend.hpp"
#include "april/prompt_engine.hpp"
#include "april/run_store.hpp"
#include "april/sandbox.hpp"
#include "april/task_model.hpp"

namespace april {

struct PromptCandidate {
  std::string id;
  PromptTemplate prompt;
  std::optional<double> ds;
  std::size_t failures = 0;  // of the scoring run that set ds
  std::size_t n = 0;
  std::vector<std::string> critiques;
  std::vector<std::string> failed_task_ids;
  std::string parent_id;  // empty for the root
  std::string edit_summary;
  int depth = 0;
  std::uint64_t creation = 0;
};

PromptCandidate root_candidate(PromptTemplate prompt);

struct TextGradient {
  std::string concatenated_critiques;
  std::vector<std::string> source_task_ids;
  int iteration = 0;

  bool empty() const { return concatenated_critiques.empty(); }
};

/// Critiques of a scored candidate, numbered in task order.
TextGradient make_gradient(const PromptCandidate& candidate, int iteration);

struct BeamConfig {
  std::size_t beam_width = 4;
  int max_depth = 3;
  std::size_t proposals_per_candidate = 4;
  std::vector<std::string> train_task_ids;  // empty: every task handed in
  GenerationParams params;
};

void validate(const BeamConfig& config);

struct ApoBackends {
  ChatBackend& synthesis;
  ChatBackend& critique;
  ChatBackend& edit;
};

struct TaskScore {
  std::string task_id;
  int penalty = 1;
  std::optional<Classification> classification;  // unset when the output had no tag
  std::string critique;
};

struct ScoreResult {
  double ds = 0.0;
  std::size_t failures = 0;
  std::size_t n = 0;
  std::vector<TaskScore> per_task;

  std::vector<std::string> critiques() const;
};

/// ds = 1 - failures / n with one synthesis sample per task. A reply without
/// the output tag counts as a failure with the critique "unparseable output".
ScoreResult score_prompt(const PromptTemplate& prompt, const std::vector<TaskBundle>& train, ApoBackends backends,
                         Sandbox& sandbox, const GenerationParams& params = {}, const RunLogger& log = {});
/// Scores the candidate in place.
void score_candidate(PromptCandidate& candidate, const std::vector<TaskBundle>& train, ApoBackends backends,
                     Sandbox& sandbox, const GenerationParams& params = {}, const RunLogger& log = {});

struct EditProposal {
  std::string body;
  std::string summary;
};

/// Every <revised_prompt summary="..."> block of an edit reply.
std::vector<EditProposal> parse_edit_reply(std::string_view reply);

/// Ids and creation order for new candidates.
class CandidateCounter {
 public:
  explicit CandidateCounter(std::uint64_t next = 1) : next_(next) {}
  std::uint64_t take() { return next_++; }

 private:
  std::uint64_t next_;
};

/// Children admitted from one edit call, at most k. A proposal is dropped when
/// it breaks the parent's placeholder set or its normalized text matches an
/// ancestor (`excluded`) or an earlier sibling. Throws NoAdmissibleChildren.
std::vector<PromptCandidate> propose_edits(const PromptCandidate& candidate, const TextGradient& gradient,
                                           ChatBackend& edit, std::size_t k, const std::set<std::string>& excluded,
                                           CandidateCounter& ids, const GenerationParams& params = {},
                                           const RunLogger& log = {});

/// Sort order within a level: ds descending, depth ascending, creation
/// ascending.
bool beam_order(const PromptCandidate& a, const PromptCandidate& b);

struct BeamResult {
  PromptCandidate best;
  std::vector<PromptCandidate> scored;                // every scored candidate, creation order
  std::vector<std::vector<std::string>> beams;        // member ids per level
  std::vector<double> best_ds_per_level;
  int levels_expanded = 0;
};

/// Level 0 scores p0. Each later level expands every beam member, scores
/// the children and keeps the best beam_width of parents plus children. A
/// level without admissible children ends the search early.
BeamResult beam_search(const PromptTemplate& p0, const std::vector<TaskBundle>& tasks, const BeamConfig& config,
                       ApoBackends backends, Sandbox& sandbox, const RunLogger& log = {});

/// One {id, parent, depth, ds, prompt_hash} object per scored candidate.
nlohmann::json trace_entry(const PromptCandidate& candidate);
std::string search_trace_jsonl(const BeamResult& result);
/// The same trace rebuilt from candidate_scored events.
std::string search_trace_from_events(const std::vector<Event>& events);

}  // namespace april
