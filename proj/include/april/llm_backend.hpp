// SPDX-License-Identifier: Apache-2.0
//
// Chat-completion interface over pluggable backends: a remote HTTP endpoint
// and a deterministic script-driven mock.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace april {

struct GenerationParams {
  double temperature = 0.7;
  double top_p = 1.0;
  std::size_t max_input_tokens = 32000;
  std::size_t max_output_tokens = 8000;
  std::optional<std::uint64_t> seed;
};

void validate(const GenerationParams& params);

enum class Role { kSystem, kUser, kAssistant };
enum class Purpose { kSynthesis, kApoEdit, kCritique, kOracleGen, kQualityEval };

std::string_view to_string(Role role);
std::string_view to_string(Purpose purpose);
Purpose purpose_from_string(std::string_view text);

struct Message {
  Role role = Role::kUser;
  std::string content;
};

struct ChatRequest {
  std::vector<Message> messages;
  GenerationParams params;
  Purpose purpose = Purpose::kSynthesis;

  static ChatRequest user(std::string content, Purpose purpose, GenerationParams params = {});
};

struct TokenUsage {
  std::size_t input = 0;
  std::size_t output = 0;
};

struct ChatResponse {
  std::string content;
  std::string backend_id;
  std::chrono::milliseconds latency{0};
  std::optional<TokenUsage> token_usage;
};

/// Token estimate used for budget checks: ceil(characters / 4).
std::size_t estimate_tokens(std::string_view text);
std::size_t estimate_tokens(const std::vector<Message>& messages);

class ChatBackend {
 public:
  explicit ChatBackend(std::ptrdiff_t max_in_flight = 4);
  virtual ~ChatBackend() = default;

  ChatBackend(const ChatBackend&) = delete;
  ChatBackend& operator=(const ChatBackend&) = delete;

  /// Checks the input budget, caps in-flight calls, and truncates replies to
  /// the output budget.
  ChatResponse complete(const ChatRequest& request);

  virtual std::string id() const = 0;

 protected:
  virtual ChatResponse do_complete(const ChatRequest& request) = 0;

 private:
  std::counting_semaphore<> in_flight_;
};

// Mock backend -------------------------------------------------------------

struct MockEntry {
  std::optional<Purpose> purpose;  // unset matches every purpose
  std::string contains;            // empty matches every request
  std::string reply;
  bool repeat = false;             // sticky entries are never consumed
};

/// Replies from an ordered script. A request takes the first unconsumed entry
/// whose matcher accepts it; non-repeating entries are consumed on use.
class MockBackend final : public ChatBackend {
 public:
  explicit MockBackend(std::vector<MockEntry> script);

  static MockBackend from_json(const nlohmann::json& script);
  static std::unique_ptr<MockBackend> load(const std::filesystem::path& script_file);

  std::string id() const override { return "mock"; }
  std::size_t calls() const;
  const std::vector<ChatRequest>& history() const { return history_; }

 protected:
  ChatResponse do_complete(const ChatRequest& request) override;

 private:
  mutable std::mutex mu_;
  std::vector<MockEntry> script_;
  std::vector<bool> consumed_;
  std::vector<ChatRequest> history_;
};

std::vector<MockEntry> parse_mock_script(const nlohmann::json& script);

// Remote backend -----------------------------------------------------------

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_delay{1000};
  double backoff_factor = 2.0;

  std::chrono::milliseconds delay_before_retry(int retry_index) const;  // 0-based
};

struct HttpBackendConfig {
  std::string url;  // full endpoint, e.g. https://host/v1/chat/completions
  std::string model;
  std::string api_key;
  RetryPolicy retry;
  std::chrono::seconds timeout{120};
  std::ptrdiff_t max_in_flight = 4;
};

/// POSTs {model, messages, temperature, top_p, max_tokens} and reads
/// choices[0].message.content. 5xx, 429 and connection failures are retried
/// with exponential backoff; other statuses fail immediately.
class HttpBackend final : public ChatBackend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpBackend(HttpBackendConfig config, Sleeper sleeper = {});

  std::string id() const override { return "http:" + config_.model; }
  static nlohmann::json request_body(const HttpBackendConfig& config, const ChatRequest& request);

 protected:
  ChatResponse do_complete(const ChatRequest& request) override;

 private:
  HttpBackendConfig config_;
  Sleeper sleeper_;
};

// Observation --------------------------------------------------------------

/// Forwards to another backend and reports every call to an observer.
class ObservedBackend final : public ChatBackend {
 public:
  using Observer = std::function<void(const ChatRequest&, const ChatResponse*, const std::exception*)>;

  ObservedBackend(ChatBackend& inner, Observer observer);
  std::string id() const override { return inner_.id(); }

 protected:
  ChatResponse do_complete(const ChatRequest& request) override;

 private:
  ChatBackend& inner_;
  Observer observer_;
};

// Tagged output ------------------------------------------------------------

inline constexpr std::string_view kOutputTag = "output_api_implementations";

struct TaggedPayload {
  std::string payload;
  bool multiple_pairs = false;
};

/// Trimmed text between the first `<tag ...>` / `</tag>` pair.
/// Throws MissingTag or EmptyPayload.
TaggedPayload extract_tagged(std::string_view content, std::string_view tag);
std::string extract_tagged_output(std::string_view content);
std::string wrap_in_tags(std::string_view payload, std::string_view tag = kOutputTag);

struct TaggedBlock {
  std::string attributes;  // raw text between the tag name and '>'
  std::string payload;     // trimmed
};

/// Every `<tag ...>payload</tag>` block in order; empty when none.
std::vector<TaggedBlock> find_tagged_blocks(std::string_view content, std::string_view tag);
/// Value of `name="..."` inside a block's attribute text.
std::optional<std::string> tag_attribute(std::string_view attributes, std::string_view name);

std::string trim(std::string_view text);

}  // namespace april
