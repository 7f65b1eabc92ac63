// SPDX-License-Identifier: Apache-2.0
#include "april/run_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include "april/digest.hpp"
#include "april/errors.hpp"
#include "april/task_model.hpp"

namespace april {

using nlohmann::json;

struct RunStore::OpenRun {
  std::mutex mu;
  int fd = -1;
  std::uint64_t next_seq = 1;
  bool closed = false;

  ~OpenRun() {
    if (fd >= 0) ::close(fd);
  }
};

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  ::gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

namespace {

std::string generate_run_id() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  ::gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%S", &tm);
  std::random_device rd;
  char suffix[16];
  std::snprintf(suffix, sizeof suffix, "%06x", rd() & 0xffffff);
  return std::string(buf) + "-" + suffix;
}

void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw StorageError(std::string("write failed: ") + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

void write_meta(const std::filesystem::path& dir, const json& meta) {
  std::filesystem::path tmp = dir / "run.json.tmp";
  write_text_file(tmp, meta.dump(2) + "\n");
  std::filesystem::rename(tmp, dir / "run.json");
}

json read_meta(const std::filesystem::path& dir) {
  try {
    return json::parse(read_text_file(dir / "run.json"));
  } catch (const json::parse_error& e) {
    throw StorageError("corrupt run.json in " + dir.string() + ": " + e.what());
  }
}

}  // namespace

RunStore::RunStore(std::filesystem::path root, bool durable) : root_(std::move(root)), durable_(durable) {}

RunStore::~RunStore() = default;

std::string RunStore::open_run(const json& config_snapshot, std::string run_id) {
  if (run_id.empty()) run_id = generate_run_id();
  std::filesystem::path dir = run_dir(run_id);
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (!std::filesystem::create_directory(dir, ec)) {
    throw StorageError("cannot create run directory " + dir.string() + (ec ? ": " + ec.message() : " (exists)"));
  }
  std::filesystem::create_directories(dir / "blobs");
  write_meta(dir, {{"run_id", run_id}, {"started_at", utc_timestamp()}, {"config", config_snapshot}, {"closed", false}});

  auto run = std::make_shared<OpenRun>();
  run->fd = ::open((dir / "events.jsonl").c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (run->fd < 0) throw StorageError("cannot open event log: " + std::string(std::strerror(errno)));
  std::lock_guard lock(mu_);
  open_[run_id] = std::move(run);
  return run_id;
}

std::uint64_t RunStore::append(const std::string& run_id, std::string_view kind, json payload) {
  std::shared_ptr<OpenRun> run;
  {
    std::lock_guard lock(mu_);
    auto it = open_.find(run_id);
    if (it == open_.end()) {
      if (std::filesystem::exists(run_dir(run_id) / "run.json")) throw RunClosed("run '" + run_id + "' is not open");
      throw UnknownRun("no run '" + run_id + "'");
    }
    run = it->second;
  }
  std::lock_guard lock(run->mu);
  if (run->closed) throw RunClosed("run '" + run_id + "' is closed");
  Event e{run->next_seq, utc_timestamp(), std::string(kind), std::move(payload)};
  json line = {{"seq", e.seq}, {"timestamp", e.timestamp}, {"kind", e.kind}, {"payload", e.payload}};
  write_all(run->fd, line.dump() + "\n");
  if (durable_ && ::fdatasync(run->fd) != 0) throw StorageError("fdatasync failed");
  return run->next_seq++;
}

std::string RunStore::put_blob(const std::string& run_id, std::string_view content) {
  std::filesystem::path dir = run_dir(run_id);
  if (!std::filesystem::exists(dir)) throw UnknownRun("no run '" + run_id + "'");
  std::string hash = sha256_hex(content);
  std::filesystem::path path = dir / "blobs" / hash;
  if (!std::filesystem::exists(path)) {
    std::filesystem::path tmp = path;
    static std::atomic<unsigned> counter{0};
    tmp += ".tmp" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
    write_text_file(tmp, content);
    std::filesystem::rename(tmp, path);
  }
  return hash;
}

std::string RunStore::read_blob(const std::string& run_id, const std::string& hash) const {
  std::filesystem::path path = run_dir(run_id) / "blobs" / hash;
  if (!std::filesystem::exists(path)) throw StorageError("no blob " + hash + " in run " + run_id);
  return read_text_file(path);
}

void RunStore::close_run(const std::string& run_id) {
  std::shared_ptr<OpenRun> run;
  {
    std::lock_guard lock(mu_);
    auto it = open_.find(run_id);
    if (it == open_.end()) throw UnknownRun("run '" + run_id + "' is not open");
    run = it->second;
    open_.erase(it);
  }
  std::lock_guard lock(run->mu);
  run->closed = true;
  if (run->fd >= 0) {
    ::fsync(run->fd);
    ::close(run->fd);
    run->fd = -1;
  }
  json meta = read_meta(run_dir(run_id));
  meta["closed"] = true;
  meta["closed_at"] = utc_timestamp();
  write_meta(run_dir(run_id), meta);
}

std::vector<Event> RunStore::replay(const std::string& run_id, std::optional<std::string> kind) const {
  std::filesystem::path dir = run_dir(run_id);
  if (!std::filesystem::exists(dir / "run.json")) throw UnknownRun("no run '" + run_id + "'");
  std::vector<Event> events;
  std::ifstream in(dir / "events.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      break;  // a torn trailing line from a concurrent writer
    }
    std::string k = j.at("kind").get<std::string>();
    if (kind && k != *kind) continue;
    events.push_back({j.at("seq").get<std::uint64_t>(), j.at("timestamp").get<std::string>(), std::move(k),
                      j.at("payload")});
  }
  return events;
}

RunRecord RunStore::load(const std::string& run_id) const {
  std::filesystem::path dir = run_dir(run_id);
  if (!std::filesystem::exists(dir / "run.json")) throw UnknownRun("no run '" + run_id + "'");
  json meta = read_meta(dir);
  RunRecord r;
  r.run_id = run_id;
  r.started_at = meta.value("started_at", std::string{});
  r.config = meta.value("config", json::object());
  r.closed = meta.value("closed", false);
  r.events = replay(run_id);
  return r;
}

std::vector<std::string> RunStore::list_runs() const {
  std::vector<std::string> ids;
  if (!std::filesystem::exists(root_)) return ids;
  for (const auto& entry : std::filesystem::directory_iterator(root_)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "run.json")) {
      ids.push_back(entry.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::uint64_t RunLogger::log(std::string_view kind, json payload) const {
  if (!store_) return 0;
  return store_->append(run_id_, kind, std::move(payload));
}

std::string RunLogger::blob(std::string_view content) const {
  if (!store_) return {};
  return store_->put_blob(run_id_, content);
}

}  // namespace april
