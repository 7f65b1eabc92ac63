// SPDX-License-Identifier: Apache-2.0
//
// Prompt templates with `{name}` placeholders (braces escaped by doubling),
// the built-in initial synthesis prompt, and few-shot exemplar handling.
#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "april/task_model.hpp"

namespace april {

struct FewShotExemplar {
  std::string signature;
  std::string module;
  std::string library;
  std::string tests;
  std::string output;

  bool operator==(const FewShotExemplar&) const = default;
};

/// Reserved line marking where exemplars are rendered. Not a placeholder: it
/// renders to nothing when the template carries no exemplars.
inline constexpr std::string_view kExemplarSlot = "[[exemplars]]";

namespace placeholders {
inline constexpr std::string_view kSignature = "api_signature_rlvr_apo";
inline constexpr std::string_view kModule = "module_rlvr_apo";
inline constexpr std::string_view kLibrary = "library_rlvr_apo";
inline constexpr std::string_view kTests = "tests_rlvr_apo";
}  // namespace placeholders

const std::set<std::string>& synthesis_placeholders();

class PromptTemplate {
 public:
  /// An empty template with no placeholders; use create() for real ones.
  PromptTemplate() = default;

  /// Throws ValidationError unless every required placeholder occurs in the
  /// body exactly once and the placeholder syntax is well formed.
  static PromptTemplate create(std::string id, std::string body, std::set<std::string> required,
                               std::vector<FewShotExemplar> exemplars = {});

  const std::string& id() const { return id_; }
  const std::string& body() const { return body_; }
  const std::set<std::string>& required_placeholders() const { return required_; }
  const std::vector<FewShotExemplar>& exemplars() const { return exemplars_; }

  PromptTemplate with_body(std::string id, std::string body) const;
  PromptTemplate with_exemplars(std::vector<FewShotExemplar> exemplars) const;

  bool operator==(const PromptTemplate&) const = default;

 private:
  std::string id_;
  std::string body_;
  std::set<std::string> required_;
  std::vector<FewShotExemplar> exemplars_;
};

/// Placeholder names in order of appearance (duplicates kept).
/// Throws ValidationError on malformed brace syntax.
std::vector<std::string> scan_placeholders(std::string_view body);

/// Synthesis templates must require exactly the four synthesis placeholders.
void validate_synthesis_template(const PromptTemplate& tmpl);

std::string render_with(const PromptTemplate& tmpl, const std::map<std::string, std::string>& values);
/// Fills the synthesis placeholders from the task. The tests placeholder gets
/// the task's examples, never its validation suite.
std::string render(const PromptTemplate& tmpl, const SynthesisTask& task);

std::string render_exemplars(const std::vector<FewShotExemplar>& exemplars);
std::string render_tests(const std::vector<TestCase>& cases);

/// Escapes literal braces so the text survives as a template body.
std::string escape_braces(std::string_view text);
/// Whitespace-collapsed, trimmed form used for prompt de-duplication.
std::string normalize_prompt_text(std::string_view text);

PromptTemplate initial_prompt();
std::vector<FewShotExemplar> default_exemplars();

// Templates for the auxiliary LLM roles.
PromptTemplate oracle_agent_template();
PromptTemplate quality_eval_template();
PromptTemplate critique_template();
PromptTemplate apo_edit_template();

/// Front matter `---` block with `id`, `required_placeholders: [a, b]` and
/// optional `exemplars: builtin|none`, followed by the body.
PromptTemplate parse_template_file(std::string_view content);
std::string serialize_template(const PromptTemplate& tmpl);

}  // namespace april
