#include "engage/sessionizer.hpp"

#include <stdexcept>

namespace engage {

std::vector<Session> sessionize(const std::vector<AnnotationEvent>& user_events,
                                const SessionizerConfig& config) {
  if (config.gap_minutes <= 0) throw std::invalid_argument("gap_minutes must be positive");
  std::vector<Session> sessions;
  if (user_events.empty()) return sessions;

  const UtcSeconds threshold = static_cast<UtcSeconds>(config.gap_minutes) * 60;
  const std::string& uid = user_events.front().user_id;

  Session current;
  current.user_id = uid;
  current.session_index = 0;
  for (std::size_t i = 0; i < user_events.size(); ++i) {
    const auto& ev = user_events[i];
    if (ev.user_id != uid) throw std::invalid_argument("sessionize: mixed user ids");
    if (i > 0) {
      const UtcSeconds gap = ev.timestamp - user_events[i - 1].timestamp;
      if (gap < 0) throw std::invalid_argument("sessionize: events not sorted by timestamp");
      if (gap >= threshold) {
        current.start = current.events.front().timestamp;
        current.end = current.events.back().timestamp;
        sessions.push_back(std::move(current));
        current = Session{};
        current.user_id = uid;
        current.session_index = static_cast<int>(sessions.size());
      }
    }
    current.events.push_back(ev);
  }
  current.start = current.events.front().timestamp;
  current.end = current.events.back().timestamp;
  sessions.push_back(std::move(current));
  return sessions;
}

std::vector<Session> sessionize_log(const ValidatedLog& log, const SessionizerConfig& config) {
  std::vector<Session> all;
  for (const auto& user : log.users) {
    auto sessions = sessionize(user.events, config);
    for (auto& s : sessions) all.push_back(std::move(s));
  }
  return all;
}

SessionStats session_stats(const std::vector<Session>& user_sessions) {
  SessionStats st;
  if (!user_sessions.empty()) st.user_id = user_sessions.front().user_id;
  for (const auto& s : user_sessions) {
    st.counts.push_back(s.events.size());
    if (s.events.size() < 2) {
      st.mean_gaps.push_back(std::nullopt);
    } else {
      const double span = static_cast<double>(s.end - s.start);
      st.mean_gaps.push_back(span / static_cast<double>(s.events.size() - 1));
    }
  }
  return st;
}

}  // namespace engage
