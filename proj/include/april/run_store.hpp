// SPDX-License-Identifier: Apache-2.0
//
// Append-only event log of pipeline runs.
//
//   runs/<run_id>/run.json      {run_id, started_at, config, closed}
//   runs/<run_id>/events.jsonl  one {seq, timestamp, kind, payload} per line
//   runs/<run_id>/blobs/<hash>  content-addressed artifacts (SHA-256)
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace april {

namespace event_kind {
inline constexpr std::string_view kTaskLoaded = "task_loaded";
inline constexpr std::string_view kLlmCall = "llm_call";
inline constexpr std::string_view kSandboxResult = "sandbox_result";
inline constexpr std::string_view kCandidateScored = "candidate_scored";
inline constexpr std::string_view kBeamLevel = "beam_level";
inline constexpr std::string_view kGroupSampled = "group_sampled";
inline constexpr std::string_view kTrainStep = "train_step";
inline constexpr std::string_view kOutcome = "outcome";
inline constexpr std::string_view kWarning = "warning";
inline constexpr std::string_view kOracleIteration = "oracle_iteration";
}  // namespace event_kind

struct Event {
  std::uint64_t seq = 0;
  std::string timestamp;
  std::string kind;
  nlohmann::json payload;
};

struct RunRecord {
  std::string run_id;
  std::string started_at;
  nlohmann::json config;
  bool closed = false;
  std::vector<Event> events;
};

class RunStore {
 public:
  /// `durable` makes every append fdatasync before returning.
  explicit RunStore(std::filesystem::path root, bool durable = true);
  ~RunStore();

  RunStore(const RunStore&) = delete;
  RunStore& operator=(const RunStore&) = delete;

  /// Creates runs/<id>. An empty id generates one from the clock.
  std::string open_run(const nlohmann::json& config_snapshot, std::string run_id = {});
  /// Returns the event's sequence number (1-based, strictly increasing).
  std::uint64_t append(const std::string& run_id, std::string_view kind, nlohmann::json payload);
  /// Stores the bytes under their SHA-256 and returns the hash.
  std::string put_blob(const std::string& run_id, std::string_view content);
  std::string read_blob(const std::string& run_id, const std::string& hash) const;
  void close_run(const std::string& run_id);

  /// Events in seq order; with a kind, only that kind (relative order kept).
  /// Concurrent readers see a prefix of the log.
  std::vector<Event> replay(const std::string& run_id, std::optional<std::string> kind = std::nullopt) const;
  RunRecord load(const std::string& run_id) const;
  std::vector<std::string> list_runs() const;

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path run_dir(const std::string& run_id) const { return root_ / run_id; }

 private:
  struct OpenRun;

  std::filesystem::path root_;
  bool durable_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<OpenRun>> open_;
};

/// Nullable handle passed to pipeline stages; logging is a no-op without a
/// store.
class RunLogger {
 public:
  RunLogger() = default;
  RunLogger(RunStore* store, std::string run_id) : store_(store), run_id_(std::move(run_id)) {}

  explicit operator bool() const { return store_ != nullptr; }
  std::uint64_t log(std::string_view kind, nlohmann::json payload) const;
  /// Blob hash, or an empty string without a store.
  std::string blob(std::string_view content) const;

  RunStore* store() const { return store_; }
  const std::string& run_id() const { return run_id_; }

 private:
  RunStore* store_ = nullptr;
  std::string run_id_;
};

std::string utc_timestamp();

}  // namespace april
