// SPDX-License-Identifier: Apache-2.0
#include "april/llm_backend.hpp"

#include <cmath>

#include "april/errors.hpp"
#include "april/task_model.hpp"

namespace april {

using nlohmann::json;

void validate(const GenerationParams& params) {
  if (!(params.temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
  if (!(params.top_p > 0.0 && params.top_p <= 1.0)) throw ValidationError("top_p must be in (0, 1]");
  if (params.max_input_tokens == 0 || params.max_output_tokens == 0) {
    throw ValidationError("token windows must be positive");
  }
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

std::string_view to_string(Purpose purpose) {
  switch (purpose) {
    case Purpose::kSynthesis: return "synthesis";
    case Purpose::kApoEdit: return "apo_edit";
    case Purpose::kCritique: return "critique";
    case Purpose::kOracleGen: return "oracle_gen";
    case Purpose::kQualityEval: return "quality_eval";
  }
  return "synthesis";
}

Purpose purpose_from_string(std::string_view text) {
  for (Purpose p : {Purpose::kSynthesis, Purpose::kApoEdit, Purpose::kCritique, Purpose::kOracleGen,
                    Purpose::kQualityEval}) {
    if (to_string(p) == text) return p;
  }
  throw SchemaError("unknown purpose tag '" + std::string(text) + "'");
}

ChatRequest ChatRequest::user(std::string content, Purpose purpose, GenerationParams params) {
  ChatRequest r;
  r.messages.push_back({Role::kUser, std::move(content)});
  r.params = params;
  r.purpose = purpose;
  return r;
}

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

std::size_t estimate_tokens(const std::vector<Message>& messages) {
  std::size_t chars = 0;
  for (const auto& m : messages) chars += m.content.size();
  return (chars + 3) / 4;
}

ChatBackend::ChatBackend(std::ptrdiff_t max_in_flight) : in_flight_(std::max<std::ptrdiff_t>(1, max_in_flight)) {}

ChatResponse ChatBackend::complete(const ChatRequest& request) {
  if (request.messages.empty()) throw ValidationError("chat request has no messages");
  validate(request.params);
  std::size_t estimate = estimate_tokens(request.messages);
  if (estimate > request.params.max_input_tokens) {
    throw BudgetExceeded("input estimated at " + std::to_string(estimate) + " tokens exceeds window of " +
                         std::to_string(request.params.max_input_tokens));
  }

  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  ChatResponse response = do_complete(request);
  std::size_t max_chars = request.params.max_output_tokens * 4;
  if (response.content.size() > max_chars) response.content.resize(max_chars);
  if (!response.token_usage) {
    response.token_usage = TokenUsage{estimate, estimate_tokens(response.content)};
  }
  return response;
}

// Mock ---------------------------------------------------------------------

std::vector<MockEntry> parse_mock_script(const json& script) {
  const json* entries = &script;
  if (script.is_object()) {
    if (!script.contains("entries")) throw SchemaError("mock script needs an 'entries' array");
    entries = &script.at("entries");
  }
  if (!entries->is_array()) throw SchemaError("mock script entries must be an array");
  std::vector<MockEntry> out;
  for (const auto& e : *entries) {
    if (!e.is_object() || !e.contains("reply")) throw SchemaError("mock entry without 'reply'");
    MockEntry m;
    if (e.contains("match")) {
      const json& match = e.at("match");
      if (match.contains("purpose")) m.purpose = purpose_from_string(match.at("purpose").get<std::string>());
      m.contains = match.value("contains", std::string{});
    }
    m.reply = e.at("reply").get<std::string>();
    m.repeat = e.value("repeat", false);
    out.push_back(std::move(m));
  }
  return out;
}

MockBackend::MockBackend(std::vector<MockEntry> script)
    : ChatBackend(1 << 16), script_(std::move(script)), consumed_(script_.size(), false) {}

MockBackend MockBackend::from_json(const json& script) { return MockBackend(parse_mock_script(script)); }

std::unique_ptr<MockBackend> MockBackend::load(const std::filesystem::path& script_file) {
  json j;
  try {
    j = json::parse(read_text_file(script_file));
  } catch (const json::parse_error& e) {
    throw SchemaError("mock script " + script_file.string() + ": " + e.what());
  }
  return std::make_unique<MockBackend>(parse_mock_script(j));
}

std::size_t MockBackend::calls() const {
  std::lock_guard lock(mu_);
  return history_.size();
}

ChatResponse MockBackend::do_complete(const ChatRequest& request) {
  std::lock_guard lock(mu_);
  history_.push_back(request);
  std::string joined;
  for (const auto& m : request.messages) joined += m.content;
  for (std::size_t i = 0; i < script_.size(); ++i) {
    const MockEntry& e = script_[i];
    if (consumed_[i]) continue;
    if (e.purpose && *e.purpose != request.purpose) continue;
    if (!e.contains.empty() && joined.find(e.contains) == std::string::npos) continue;
    if (!e.repeat) consumed_[i] = true;
    if (trim(e.reply).empty()) throw BackendRefusal("scripted reply is empty");
    return ChatResponse{e.reply, "mock", std::chrono::milliseconds{0}, std::nullopt};
  }
  throw BackendRefusal("no scripted reply for purpose '" + std::string(to_string(request.purpose)) + "'");
}

// Retry --------------------------------------------------------------------

std::chrono::milliseconds RetryPolicy::delay_before_retry(int retry_index) const {
  double ms = static_cast<double>(initial_delay.count()) * std::pow(backoff_factor, retry_index);
  return std::chrono::milliseconds(static_cast<long long>(std::llround(ms)));
}

// Observation ---------------------------------------------------------------

ObservedBackend::ObservedBackend(ChatBackend& inner, Observer observer)
    : ChatBackend(1 << 16), inner_(inner), observer_(std::move(observer)) {}

ChatResponse ObservedBackend::do_complete(const ChatRequest& request) {
  try {
    ChatResponse r = inner_.complete(request);
    if (observer_) observer_(request, &r, nullptr);
    return r;
  } catch (const std::exception& e) {
    if (observer_) observer_(request, nullptr, &e);
    throw;
  }
}

// Tags ---------------------------------------------------------------------

std::string trim(std::string_view text) {
  auto b = text.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(b, e - b + 1));
}

namespace {

// Finds "<tag" followed by '>' or whitespace, starting at pos.
std::size_t find_open(std::string_view content, std::string_view tag, std::size_t pos, std::size_t* body_begin,
                      std::string* attributes) {
  std::string open = "<" + std::string(tag);
  while ((pos = content.find(open, pos)) != std::string_view::npos) {
    std::size_t after = pos + open.size();
    if (after < content.size() && (content[after] == '>' || content[after] == ' ' || content[after] == '\n' ||
                                   content[after] == '\t')) {
      std::size_t close = content.find('>', after);
      if (close == std::string_view::npos) return std::string_view::npos;
      if (attributes) *attributes = std::string(content.substr(after, close - after));
      *body_begin = close + 1;
      return pos;
    }
    pos = after;
  }
  return std::string_view::npos;
}

}  // namespace

std::vector<TaggedBlock> find_tagged_blocks(std::string_view content, std::string_view tag) {
  std::vector<TaggedBlock> blocks;
  std::string close = "</" + std::string(tag) + ">";
  std::size_t pos = 0;
  while (true) {
    std::size_t body = 0;
    std::string attrs;
    if (find_open(content, tag, pos, &body, &attrs) == std::string_view::npos) break;
    std::size_t end = content.find(close, body);
    if (end == std::string_view::npos) break;
    blocks.push_back({trim(attrs), trim(content.substr(body, end - body))});
    pos = end + close.size();
  }
  return blocks;
}

TaggedPayload extract_tagged(std::string_view content, std::string_view tag) {
  std::string close = "</" + std::string(tag) + ">";
  std::size_t body = 0;
  if (find_open(content, tag, 0, &body, nullptr) == std::string_view::npos) {
    throw MissingTag("no <" + std::string(tag) + "> element in reply");
  }
  std::size_t end = content.find(close, body);
  if (end == std::string_view::npos) throw MissingTag("unterminated <" + std::string(tag) + "> element");
  TaggedPayload out;
  out.payload = trim(content.substr(body, end - body));
  if (out.payload.empty()) throw EmptyPayload("<" + std::string(tag) + "> encloses only whitespace");
  std::size_t next = 0;
  out.multiple_pairs = find_open(content, tag, end + close.size(), &next, nullptr) != std::string_view::npos;
  return out;
}

std::string extract_tagged_output(std::string_view content) { return extract_tagged(content, kOutputTag).payload; }

std::string wrap_in_tags(std::string_view payload, std::string_view tag) {
  return "<" + std::string(tag) + ">\n" + std::string(payload) + "\n</" + std::string(tag) + ">";
}

std::optional<std::string> tag_attribute(std::string_view attributes, std::string_view name) {
  std::string key = std::string(name) + "=\"";
  std::size_t pos = 0;
  while ((pos = attributes.find(key, pos)) != std::string_view::npos) {
    if (pos == 0 || attributes[pos - 1] == ' ' || attributes[pos - 1] == '\t') {
      std::size_t start = pos + key.size();
      std::size_t end = attributes.find('"', start);
      if (end == std::string_view::npos) return std::nullopt;
      return std::string(attributes.substr(start, end - start));
    }
    pos += key.size();
  }
  return std::nullopt;
}

}  // namespace april
