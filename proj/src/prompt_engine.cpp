// SPDX-License-Identifier: Apache-2.0
#include "april/prompt_engine.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include <json.hpp>

#include "april/errors.hpp"
#include "april/llm_backend.hpp"

namespace april {

namespace {

enum class PieceKind { kText, kPlaceholder };

struct Piece {
  PieceKind kind;
  std::string text;  // literal text (unescaped) or placeholder name
};

std::vector<Piece> tokenize(std::string_view body) {
  std::vector<Piece> pieces;
  std::string literal;
  auto flush = [&] {
    if (!literal.empty()) pieces.push_back({PieceKind::kText, std::move(literal)});
    literal.clear();
  };
  for (std::size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (c == '{') {
      if (i + 1 < body.size() && body[i + 1] == '{') {
        literal += '{';
        ++i;
        continue;
      }
      std::size_t close = body.find('}', i + 1);
      if (close == std::string_view::npos) throw ValidationError("unterminated '{' in template body");
      std::string_view name = body.substr(i + 1, close - i - 1);
      if (!is_identifier(name)) {
        throw ValidationError("malformed placeholder '{" + std::string(name) + "}'; escape literal braces as {{ }}");
      }
      flush();
      pieces.push_back({PieceKind::kPlaceholder, std::string(name)});
      i = close;
    } else if (c == '}') {
      if (i + 1 < body.size() && body[i + 1] == '}') {
        literal += '}';
        ++i;
        continue;
      }
      throw ValidationError("stray '}' in template body; escape as }}");
    } else {
      literal += c;
    }
  }
  flush();
  return pieces;
}

std::string expand_exemplar_slot(const std::string& text, const std::vector<FewShotExemplar>& exemplars) {
  std::size_t pos = text.find(kExemplarSlot);
  if (pos == std::string::npos) return text;
  std::string replacement = render_exemplars(exemplars);
  std::size_t end = pos + kExemplarSlot.size();
  // The slot owns its line; with no exemplars the whole line disappears.
  if (replacement.empty() && end < text.size() && text[end] == '\n') ++end;
  return text.substr(0, pos) + replacement + expand_exemplar_slot(text.substr(end), exemplars);
}

}  // namespace

const std::set<std::string>& synthesis_placeholders() {
  static const std::set<std::string> names{std::string(placeholders::kSignature), std::string(placeholders::kModule),
                                           std::string(placeholders::kLibrary), std::string(placeholders::kTests)};
  return names;
}

std::vector<std::string> scan_placeholders(std::string_view body) {
  std::vector<std::string> names;
  for (auto& p : tokenize(body)) {
    if (p.kind == PieceKind::kPlaceholder) names.push_back(std::move(p.text));
  }
  return names;
}

PromptTemplate PromptTemplate::create(std::string id, std::string body, std::set<std::string> required,
                                      std::vector<FewShotExemplar> exemplars) {
  std::vector<std::string> names = scan_placeholders(body);
  for (const auto& r : required) {
    auto n = std::count(names.begin(), names.end(), r);
    if (n != 1) {
      throw ValidationError("template '" + id + "': placeholder {" + r + "} occurs " + std::to_string(n) +
                            " times, expected exactly once");
    }
  }
  PromptTemplate t;
  t.id_ = std::move(id);
  t.body_ = std::move(body);
  t.required_ = std::move(required);
  t.exemplars_ = std::move(exemplars);
  return t;
}

PromptTemplate PromptTemplate::with_body(std::string id, std::string body) const {
  return create(std::move(id), std::move(body), required_, exemplars_);
}

PromptTemplate PromptTemplate::with_exemplars(std::vector<FewShotExemplar> exemplars) const {
  PromptTemplate t = *this;
  t.exemplars_ = std::move(exemplars);
  return t;
}

void validate_synthesis_template(const PromptTemplate& tmpl) {
  if (tmpl.required_placeholders() != synthesis_placeholders()) {
    throw ValidationError("template '" + tmpl.id() +
                          "' must require exactly {api_signature_rlvr_apo}, {module_rlvr_apo}, "
                          "{library_rlvr_apo} and {tests_rlvr_apo}");
  }
}

std::string render_with(const PromptTemplate& tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  for (const auto& piece : tokenize(tmpl.body())) {
    if (piece.kind == PieceKind::kText) {
      out += expand_exemplar_slot(piece.text, tmpl.exemplars());
      continue;
    }
    if (!tmpl.required_placeholders().count(piece.text)) {
      throw UnboundPlaceholder("template '" + tmpl.id() + "' uses {" + piece.text +
                               "} which is not a required placeholder");
    }
    auto it = values.find(piece.text);
    if (it == values.end()) throw MissingPlaceholderValue("no value for {" + piece.text + "}");
    out += it->second;
  }
  return out;
}

std::string render_tests(const std::vector<TestCase>& cases) {
  std::string out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (i) out += "\n\n";
    out += cases[i].source_code;
  }
  return out;
}

std::string render(const PromptTemplate& tmpl, const SynthesisTask& task) {
  if (task.examples.empty()) throw MissingPlaceholderValue("task '" + task.id + "' has no examples for {tests_rlvr_apo}");
  return render_with(tmpl, {{std::string(placeholders::kSignature), task.signature.display()},
                            {std::string(placeholders::kModule), task.module_path},
                            {std::string(placeholders::kLibrary), task.library_name},
                            {std::string(placeholders::kTests), render_tests(task.examples)}});
}

std::string render_exemplars(const std::vector<FewShotExemplar>& exemplars) {
  if (exemplars.empty()) return {};
  std::string out = "**Here are some examples:**\n";
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    const auto& e = exemplars[i];
    if (i) out += "\n";
    out += "Method signature: " + e.signature + "\n";
    out += "Module: " + e.module + "\n";
    out += "Library: " + e.library + "\n";
    out += "Test cases: " + e.tests + "\n";
    out += "Output:\n" + wrap_in_tags(e.output) + "\n";
  }
  return out;
}

std::string escape_braces(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    out += c;
    if (c == '{' || c == '}') out += c;
  }
  return out;
}

std::string normalize_prompt_text(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

std::vector<FewShotExemplar> default_exemplars() {
  return {
      FewShotExemplar{
          "def clip_norm(x, max_norm)",
          "mathkit.vector",
          "mathkit",
          "assert clip_norm([3.0, 4.0], 1.0) == [0.6, 0.8]",
          "def clip_norm(x, max_norm):\n"
          "    norm = sum(v * v for v in x) ** 0.5\n"
          "    if norm <= max_norm:\n"
          "        return list(x)\n"
          "    return [v * max_norm / norm for v in x]",
      },
      FewShotExemplar{
          "def running_mean(values)",
          "mathkit.stats",
          "mathkit",
          "assert running_mean([2, 4, 6]) == [2.0, 3.0, 4.0]",
          "def running_mean(values):\n"
          "    out, total = [], 0.0\n"
          "    for i, v in enumerate(values, start=1):\n"
          "        total += v\n"
          "        out.append(total / i)\n"
          "    return out",
      },
  };
}

PromptTemplate initial_prompt() {
  static const char* kBody =
      "### Implement a python method inside a python module. \n"
      "\n"
      "**Task:**\n"
      "\n"
      "Imagine you are a Python developer specialized in machine learning and scientific libraries. You will be "
      "given a python method signature, the module it belongs to, the library it belongs to, and a set of test "
      "cases. The method can be a instance method of a class or a module method. Your task is to implement the "
      "method using the dependencies from the module and the library to pass the test cases.\n"
      "\n"
      "**Output Format:**\n"
      "\n"
      "Put your ouput inside the <output_api_implementations> xml element, and output only the implemented "
      "method.\n"
      "<output_api_implementations> [your method implementation here] </output_api_implementations>\n"
      "\n"
      "**Crucial Information:**\n"
      "\n"
      "Carefully analyze the provided test cases. Each test case represents a specific input and the expected "
      "output of the method you are implementing. Your implementation *must* satisfy all given test cases. "
      "Consider these test cases as concrete examples of how the method should behave. Aim to re-use functions "
      "from the specified library wherever possible.\n"
      "\n"
      "[[exemplars]]\n"
      "\n"
      "Method signature: {api_signature_rlvr_apo}\n"
      "Module: {module_rlvr_apo}\n"
      "Library: {library_rlvr_apo}\n"
      "Test cases: {tests_rlvr_apo}\n"
      "Output:\n";
  return PromptTemplate::create("p0", kBody, synthesis_placeholders(), default_exemplars());
}

PromptTemplate oracle_agent_template() {
  static const char* kBody =
      "You are a test engineer writing a validation suite for a Python API in the library {library_name}, "
      "module {module_path}.\n"
      "\n"
      "Docstrings:\n{docstrings}\n"
      "\n"
      "Reference implementation (assumed correct):\n{reference_impl}\n"
      "\n"
      "Write a comprehensive suite: cover typical inputs, boundary values, degenerate shapes and error "
      "behaviour. Every test must pass against the reference implementation.\n"
      "{feedback}"
      "\n"
      "Put the suite inside <output_tests></output_tests>, one test per <test name=\"...\"></test> element.\n";
  return PromptTemplate::create("oracle_agent", kBody,
                                {"library_name", "module_path", "docstrings", "reference_impl", "feedback"});
}

PromptTemplate quality_eval_template() {
  static const char* kBody =
      "You review validation test suites for Python APIs.\n"
      "\n"
      "Docstrings:\n{docstrings}\n"
      "\n"
      "Reference implementation:\n{reference_impl}\n"
      "\n"
      "Candidate test suite:\n{tests}\n"
      "\n"
      "Score the suite from 1 to 5 on comprehensiveness and on coverage breadth (variety of input scenarios "
      "and exercised behaviours). Reply exactly in this form:\n"
      "comprehensiveness: <1-5>/5\n"
      "coverage_breadth: <1-5>/5\n"
      "critique: <what is missing>\n";
  return PromptTemplate::create("quality_eval", kBody, {"docstrings", "reference_impl", "tests"});
}

PromptTemplate critique_template() {
  static const char* kBody =
      "A prompt was used to make an LLM implement a Python API. The implementation failed its validation "
      "tests.\n"
      "\n"
      "Prompt:\n{prompt}\n"
      "\n"
      "Generated implementation:\n{solution}\n"
      "\n"
      "Test outcome:\n{failure}\n"
      "\n"
      "Describe the observed errors and what in the prompt could have led to them. Be concise.\n";
  return PromptTemplate::create("critique", kBody, {"prompt", "solution", "failure"});
}

PromptTemplate apo_edit_template() {
  static const char* kBody =
      "You improve prompts that make an LLM implement Python APIs.\n"
      "\n"
      "Current prompt template:\n<current_prompt>\n{prompt}\n</current_prompt>\n"
      "\n"
      "Critiques of generations produced with it:\n{critiques}\n"
      "\n"
      "Propose {count} revised prompt templates that address the critiques. Keep every placeholder of the "
      "form {{name}} exactly once and leave the exemplar slot line unchanged. Put each revision inside "
      "<revised_prompt summary=\"one-line summary of the edit\"></revised_prompt>.\n";
  return PromptTemplate::create("apo_edit", kBody, {"prompt", "critiques", "count"});
}

// Template files -------------------------------------------------------------

namespace {

std::string exemplars_to_field(const std::vector<FewShotExemplar>& exemplars) {
  if (exemplars.empty()) return "none";
  if (exemplars == default_exemplars()) return "builtin";
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : exemplars) {
    arr.push_back({{"signature", e.signature},
                   {"module", e.module},
                   {"library", e.library},
                   {"tests", e.tests},
                   {"output", e.output}});
  }
  return arr.dump();
}

std::vector<FewShotExemplar> exemplars_from_field(const std::string& value) {
  if (value == "none" || value.empty()) return {};
  if (value == "builtin") return default_exemplars();
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(value);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("exemplars field: ") + e.what());
  }
  std::vector<FewShotExemplar> out;
  for (const auto& e : arr) {
    out.push_back({e.value("signature", ""), e.value("module", ""), e.value("library", ""), e.value("tests", ""),
                   e.value("output", "")});
  }
  return out;
}

}  // namespace

PromptTemplate parse_template_file(std::string_view content) {
  std::istringstream in{std::string(content)};
  std::string line;
  if (!std::getline(in, line) || trim(line) != "---") throw SchemaError("template file must start with '---'");
  std::map<std::string, std::string> fields;
  bool closed = false;
  while (std::getline(in, line)) {
    if (trim(line) == "---") {
      closed = true;
      break;
    }
    auto colon = line.find(':');
    if (colon == std::string::npos) throw SchemaError("bad front matter line '" + line + "'");
    fields[trim(line.substr(0, colon))] = trim(line.substr(colon + 1));
  }
  if (!closed) throw SchemaError("unterminated front matter");
  for (const auto& [k, v] : fields) {
    if (k != "id" && k != "required_placeholders" && k != "exemplars") {
      throw SchemaError("unknown front matter key '" + k + "'");
    }
  }
  if (!fields.count("id")) throw SchemaError("front matter lacks 'id'");
  if (!fields.count("required_placeholders")) throw SchemaError("front matter lacks 'required_placeholders'");

  std::string list = fields["required_placeholders"];
  if (list.size() < 2 || list.front() != '[' || list.back() != ']') {
    throw SchemaError("required_placeholders must be a [a, b] list");
  }
  std::set<std::string> required;
  std::istringstream items(list.substr(1, list.size() - 2));
  std::string item;
  while (std::getline(items, item, ',')) {
    if (auto t = trim(item); !t.empty()) required.insert(t);
  }

  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return PromptTemplate::create(fields["id"], std::move(body), std::move(required),
                                exemplars_from_field(fields.count("exemplars") ? fields["exemplars"] : "none"));
}

std::string serialize_template(const PromptTemplate& tmpl) {
  std::string out = "---\nid: " + tmpl.id() + "\nrequired_placeholders: [";
  bool first = true;
  for (const auto& r : tmpl.required_placeholders()) {
    if (!first) out += ", ";
    first = false;
    out += r;
  }
  out += "]\nexemplars: " + exemplars_to_field(tmpl.exemplars()) + "\n---\n";
  out += tmpl.body();
  return out;
}

}  // namespace april
