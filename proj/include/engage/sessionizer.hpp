#pragma once

#include <optional>
#include <string>
#include <vector>

#include "engage/ingest.hpp"

namespace engage {

struct SessionizerConfig {
  // A gap of gap_minutes or more starts a new session; a gap of zero keeps
  // events together.
  int gap_minutes = 30;
};

struct Session {
  std::string user_id;
  int session_index = 0;  // 0-based, time order within the user
  std::vector<AnnotationEvent> events;
  UtcSeconds start = 0;
  UtcSeconds end = 0;
};

// Splits one user's time-sorted events into maximal runs whose internal gaps
// are all below the threshold. Unsorted input or mixed user ids throw
// std::invalid_argument.
std::vector<Session> sessionize(const std::vector<AnnotationEvent>& user_events,
                                const SessionizerConfig& config);

// Whole-log convenience: sessions for every user, users in log order.
std::vector<Session> sessionize_log(const ValidatedLog& log, const SessionizerConfig& config);

struct SessionStats {
  std::string user_id;
  std::vector<std::size_t> counts;                 // annotations per session
  std::vector<std::optional<double>> mean_gaps;    // seconds; nullopt for 1-event sessions
  std::size_t session_count() const { return counts.size(); }
};

SessionStats session_stats(const std::vector<Session>& user_sessions);

}  // namespace engage
