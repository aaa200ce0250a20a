#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "engage/errors.hpp"

namespace engage {

// Seconds since the Unix epoch, UTC, second resolution.
using UtcSeconds = std::int64_t;

// Accepts "YYYY-MM-DD HH:MM:SS" with 'T' or ' ' as the separator and an
// optional "Z" or " UTC" suffix. Anything else throws std::invalid_argument.
UtcSeconds parse_timestamp(std::string_view text);
std::string format_timestamp(UtcSeconds t);  // ISO-8601, trailing Z

struct AnnotationEvent {
  std::string user_id;
  bool logged_in = false;
  UtcSeconds timestamp = 0;
  std::string annotation_id;  // opaque, may be empty

  friend bool operator==(const AnnotationEvent&, const AnnotationEvent&) = default;
};

struct UserSeries {
  std::string user_id;
  std::vector<AnnotationEvent> events;  // sorted by timestamp
};

struct ValidatedLog {
  std::vector<UserSeries> users;  // sorted by user_id
  std::size_t event_count = 0;

  std::size_t user_count() const { return users.size(); }
};

// Native event-log CSV. Header "user_id,logged_in,timestamp,annotation_id"
// is mandatory; logged_in must be 0 or 1. Parse failures throw ParseError
// with the 1-based line number; a header-only file throws EmptyLogError.
std::vector<AnnotationEvent> parse_event_log(std::string_view csv_text);

std::string write_event_log(const std::vector<AnnotationEvent>& events);

// Zooniverse classification export. Needs user_name, user_id and created_at
// columns (anything else is carried along but ignored). A user_name starting
// with "not-logged-in-" marks an anonymous session-hash user; the full
// user_name becomes the user id in that case.
std::vector<AnnotationEvent> parse_zooniverse_export(std::string_view csv_text);

// Groups by user, sorts each user by timestamp (stable), and drops exact
// (user_id, timestamp, annotation_id) duplicates.
ValidatedLog validate_log(std::vector<AnnotationEvent> events);

struct LogSummary {
  std::size_t total_annotations = 0;
  std::size_t total_users = 0;
  double top_k_share = 0.0;
  // A user belongs to the logged-in group if any of their events carries the
  // flag. NaN marks an undefined statistic (empty group, or a group with
  // fewer than two users for the t-test).
  double mean_annotations_logged_in = 0.0;
  double mean_annotations_anonymous = 0.0;
  double welch_t = 0.0;
  double welch_p = 0.0;
};

// k = how many top users the concentration share is computed over.
// k > total_users throws std::invalid_argument.
LogSummary descriptive_stats(const ValidatedLog& log, std::size_t k);

// I_x(a, b); needed for the Student-t tail. Exposed for direct testing.
double regularized_incomplete_beta(double a, double b, double x);

// Two-sided p for a t statistic with the given degrees of freedom.
double student_t_two_tailed_p(double t, double dof);

}  // namespace engage
