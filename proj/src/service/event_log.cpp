#include "soldernet/service/event_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

namespace soldernet::service {
namespace {

constexpr EventKind kAllKinds[] = {EventKind::ingested, EventKind::scored,   EventKind::triaged, EventKind::explained,
                                   EventKind::verdict,  EventKind::reworked, EventKind::failed};

std::string errno_text() { return std::strerror(errno); }

}  // namespace

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::ingested: return "ingested";
    case EventKind::scored: return "scored";
    case EventKind::triaged: return "triaged";
    case EventKind::explained: return "explained";
    case EventKind::verdict: return "verdict";
    case EventKind::reworked: return "reworked";
    case EventKind::failed: return "failed";
  }
  return "?";
}

EventKind event_kind_from_string(std::string_view s) {
  for (auto k : kAllKinds)
    if (to_string(k) == s) return k;
  throw IntegrityError("unknown event kind '" + std::string(s) + "'");
}

nlohmann::json to_json(const Event& e) {
  return {{"seq", e.seq}, {"ts", e.timestamp}, {"case_id", e.case_id}, {"kind", to_string(e.kind)},
          {"payload", e.payload}};
}

Event event_from_json(const nlohmann::json& j) {
  Event e;
  try {
    e.seq = j.at("seq").get<std::uint64_t>();
    e.timestamp = j.at("ts").get<std::string>();
    e.case_id = j.at("case_id").get<std::string>();
    e.kind = event_kind_from_string(j.at("kind").get<std::string>());
    e.payload = j.at("payload");
  } catch (const nlohmann::json::exception& ex) {
    throw IntegrityError(std::string("malformed event: ") + ex.what());
  }
  return e;
}

std::string utc_timestamp() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t t = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  const std::size_t len = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  std::snprintf(buf + len, sizeof buf - len, ".%03dZ", static_cast<int>(ms));
  return buf;
}

LogContents read_log(const std::filesystem::path& path) {
  LogContents out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  const std::size_t last_nl = data.rfind('\n');
  out.committed_bytes = last_nl == std::string::npos ? 0 : last_nl + 1;
  out.torn_bytes = data.size() - out.committed_bytes;

  std::size_t pos = 0, line_no = 0;
  while (pos < out.committed_bytes) {
    const std::size_t nl = data.find('\n', pos);
    const std::string_view line(data.data() + pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw IntegrityError(path.string() + ":" + std::to_string(line_no) + ": corrupt event line");
    }
    Event e = event_from_json(j);
    if (!out.events.empty() && e.seq <= out.events.back().seq) {
      throw IntegrityError(path.string() + ":" + std::to_string(line_no) + ": seq " + std::to_string(e.seq) +
                           " after " + std::to_string(out.events.back().seq));
    }
    if (e.seq == 0) throw IntegrityError(path.string() + ":" + std::to_string(line_no) + ": seq must start at 1");
    out.events.push_back(std::move(e));
  }
  return out;
}

EventLog::EventLog(std::filesystem::path path, FsyncPolicy fsync) : path_(std::move(path)), fsync_(fsync) {
  const LogContents existing = read_log(path_);
  last_seq_ = existing.events.empty() ? 0 : existing.events.back().seq;
  torn_bytes_ = existing.torn_bytes;
  size_ = existing.committed_bytes;
  if (!path_.parent_path().empty()) std::filesystem::create_directories(path_.parent_path());
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw StorageError("cannot open event log " + path_.string() + ": " + errno_text());
  if (torn_bytes_ > 0 && ::ftruncate(fd_, static_cast<off_t>(size_)) != 0) {
    throw StorageError("cannot drop torn tail of " + path_.string() + ": " + errno_text());
  }
}

EventLog::~EventLog() {
  if (fd_ >= 0) ::close(fd_);
}

std::uint64_t EventLog::append(Event& event) {
  std::lock_guard lock(mu_);
  event.seq = last_seq_ + 1;
  if (event.timestamp.empty()) event.timestamp = utc_timestamp();
  const std::string line = to_json(event).dump() + '\n';

  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      const std::string why = errno_text();
      if (::ftruncate(fd_, static_cast<off_t>(size_)) != 0) {
        throw StorageError("append failed (" + why + ") and the partial line could not be removed");
      }
      throw StorageError("append to " + path_.string() + " failed: " + why);
    }
    written += static_cast<std::size_t>(n);
  }
  if (fsync_ == FsyncPolicy::every_event && ::fsync(fd_) != 0) {
    throw StorageError("fsync of " + path_.string() + " failed: " + errno_text());
  }
  size_ += line.size();
  last_seq_ = event.seq;
  return event.seq;
}

std::uint64_t EventLog::last_seq() const {
  std::lock_guard lock(mu_);
  return last_seq_;
}

}  // namespace soldernet::service
