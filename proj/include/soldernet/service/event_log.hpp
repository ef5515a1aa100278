#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "soldernet/config.hpp"
#include "soldernet/service/errors.hpp"

namespace soldernet::service {

enum class EventKind { ingested, scored, triaged, explained, verdict, reworked, failed };

std::string_view to_string(EventKind k);
EventKind event_kind_from_string(std::string_view s);

struct Event {
  std::uint64_t seq = 0;
  std::string timestamp;  // UTC, ISO 8601 with milliseconds
  std::string case_id;
  EventKind kind = EventKind::ingested;
  nlohmann::json payload = nlohmann::json::object();

  bool operator==(const Event&) const = default;
};

nlohmann::json to_json(const Event& e);
Event event_from_json(const nlohmann::json& j);

std::string utc_timestamp();

struct LogContents {
  std::vector<Event> events;
  // Bytes after the last newline. A line only counts once its newline is on
  // disk, so these belong to an append that never finished.
  std::size_t torn_bytes = 0;
  std::size_t committed_bytes = 0;
};

// Reads every committed line. Throws IntegrityError on a committed line that is
// not a valid event or on a seq that does not strictly increase. A missing
// file reads as empty.
LogContents read_log(const std::filesystem::path& path);

// Append-only, line-delimited JSON log with a single writer. Opening drops any
// torn tail and continues numbering after the last committed seq.
class EventLog {
 public:
  explicit EventLog(std::filesystem::path path, FsyncPolicy fsync = FsyncPolicy::every_event);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  // Fills in seq (and the timestamp when empty), writes the line and returns
  // the seq. On a failed write the file is cut back to its previous length and
  // StorageError is thrown.
  std::uint64_t append(Event& event);

  std::uint64_t last_seq() const;
  const std::filesystem::path& path() const { return path_; }
  std::size_t recovered_torn_bytes() const { return torn_bytes_; }

 private:
  std::filesystem::path path_;
  FsyncPolicy fsync_;
  int fd_ = -1;
  std::uint64_t last_seq_ = 0;
  std::size_t size_ = 0;
  std::size_t torn_bytes_ = 0;
  mutable std::mutex mu_;
};

}  // namespace soldernet::service
