#include "engage/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <utility>

#include "engage/csv.hpp"

namespace engage {

namespace {

// civil-date <-> day-count conversions (Howard Hinnant's algorithms)
std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y = static_cast<int>(yy) + (m <= 2);
}

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

int to_int(std::string_view s) {
  int v = 0;
  for (char c : s) v = v * 10 + (c - '0');
  return v;
}

unsigned days_in_month(int y, unsigned m) {
  static const unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2) {
    const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    return leap ? 29 : 28;
  }
  return kDays[m - 1];
}

}  // namespace

UtcSeconds parse_timestamp(std::string_view text) {
  // strip an optional suffix first
  if (text.size() >= 4 && text.substr(text.size() - 4) == " UTC") {
    text.remove_suffix(4);
  } else if (!text.empty() && text.back() == 'Z') {
    text.remove_suffix(1);
  }
  if (text.size() != 19) throw std::invalid_argument("bad timestamp: wrong length");
  if (text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
      text[13] != ':' || text[16] != ':') {
    throw std::invalid_argument("bad timestamp: wrong separators");
  }
  const auto ys = text.substr(0, 4), mos = text.substr(5, 2), ds = text.substr(8, 2);
  const auto hs = text.substr(11, 2), mis = text.substr(14, 2), ss = text.substr(17, 2);
  for (auto part : {ys, mos, ds, hs, mis, ss}) {
    if (!all_digits(part)) throw std::invalid_argument("bad timestamp: non-digit");
  }
  const int y = to_int(ys);
  const unsigned mo = static_cast<unsigned>(to_int(mos));
  const unsigned d = static_cast<unsigned>(to_int(ds));
  const int h = to_int(hs), mi = to_int(mis), s = to_int(ss);
  if (mo < 1 || mo > 12 || d < 1 || d > days_in_month(y, mo) || h > 23 || mi > 59 || s > 59) {
    throw std::invalid_argument("bad timestamp: out of range");
  }
  return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_timestamp(UtcSeconds t) {
  std::int64_t days = t / 86400;
  std::int64_t rem = t % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  int y;
  unsigned mo, d;
  civil_from_days(days, y, mo, d);
  char buf[24];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", y, mo, d,
                static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                static_cast<long long>(rem % 60));
  return buf;
}

namespace {

std::string strip_bom(std::string s) {
  if (s.size() >= 3 && s[0] == '\xef' && s[1] == '\xbb' && s[2] == '\xbf') return s.substr(3);
  return s;
}

}  // namespace

std::vector<AnnotationEvent> parse_event_log(std::string_view csv_text) {
  const auto rows = csv::parse(csv_text);
  if (rows.empty()) throw EmptyLogError("empty log: no header row");
  const auto& header = rows[0].fields;
  const std::vector<std::string> expected = {"user_id", "logged_in", "timestamp",
                                             "annotation_id"};
  std::vector<std::string> got;
  for (const auto& f : header) got.push_back(strip_bom(f));
  if (got != expected) {
    throw ParseError("bad header, expected user_id,logged_in,timestamp,annotation_id",
                     rows[0].line);
  }
  if (rows.size() == 1) throw EmptyLogError("empty log: header only");

  std::vector<AnnotationEvent> events;
  events.reserve(rows.size() - 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.fields.size() != 4) throw ParseError("expected 4 fields", r.line);
    AnnotationEvent ev;
    ev.user_id = r.fields[0];
    if (ev.user_id.empty()) throw ParseError("empty user_id", r.line);
    if (r.fields[1] == "0") {
      ev.logged_in = false;
    } else if (r.fields[1] == "1") {
      ev.logged_in = true;
    } else {
      throw ParseError("logged_in must be 0 or 1, got '" + r.fields[1] + "'", r.line);
    }
    try {
      ev.timestamp = parse_timestamp(r.fields[2]);
    } catch (const std::invalid_argument& e) {
      throw ParseError(std::string(e.what()) + " '" + r.fields[2] + "'", r.line);
    }
    ev.annotation_id = r.fields[3];
    events.push_back(std::move(ev));
  }
  return events;
}

std::string write_event_log(const std::vector<AnnotationEvent>& events) {
  std::string out = "user_id,logged_in,timestamp,annotation_id\n";
  for (const auto& ev : events) {
    csv::append_row(out, {ev.user_id, ev.logged_in ? "1" : "0", format_timestamp(ev.timestamp),
                          ev.annotation_id});
  }
  return out;
}

std::vector<AnnotationEvent> parse_zooniverse_export(std::string_view csv_text) {
  static constexpr std::string_view kAnonPrefix = "not-logged-in-";
  const auto rows = csv::parse(csv_text);
  if (rows.empty()) throw EmptyLogError("empty log: no header row");
  const auto& header = rows[0].fields;
  auto find_col = [&](std::string_view name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (strip_bom(header[i]) == name) return i;
    }
    throw SchemaError("missing required column '" + std::string(name) + "'");
  };
  const std::size_t c_user_name = find_col("user_name");
  const std::size_t c_user_id = find_col("user_id");
  const std::size_t c_created = find_col("created_at");
  std::size_t c_classification = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (strip_bom(header[i]) == "classification_id") c_classification = i;
  }
  if (rows.size() == 1) throw EmptyLogError("empty log: header only");

  std::vector<AnnotationEvent> events;
  events.reserve(rows.size() - 1);
  const std::size_t need = std::max({c_user_name, c_user_id, c_created}) + 1;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.fields.size() < need) throw ParseError("row too short", r.line);
    AnnotationEvent ev;
    const std::string& name = r.fields[c_user_name];
    if (name.rfind(kAnonPrefix, 0) == 0) {
      ev.logged_in = false;
      ev.user_id = name;
    } else {
      ev.logged_in = true;
      ev.user_id = r.fields[c_user_id];
      if (ev.user_id.empty()) throw ParseError("empty user_id for logged-in user", r.line);
    }
    try {
      ev.timestamp = parse_timestamp(r.fields[c_created]);
    } catch (const std::invalid_argument& e) {
      throw ParseError(std::string(e.what()) + " '" + r.fields[c_created] + "'", r.line);
    }
    if (c_classification < r.fields.size()) ev.annotation_id = r.fields[c_classification];
    events.push_back(std::move(ev));
  }
  return events;
}

ValidatedLog validate_log(std::vector<AnnotationEvent> events) {
  std::map<std::string, std::vector<AnnotationEvent>> by_user;
  for (auto& ev : events) by_user[ev.user_id].push_back(std::move(ev));

  ValidatedLog log;
  log.users.reserve(by_user.size());
  for (auto& [uid, evs] : by_user) {
    std::stable_sort(evs.begin(), evs.end(),
                     [](const AnnotationEvent& a, const AnnotationEvent& b) {
                       return a.timestamp < b.timestamp;
                     });
    UserSeries series;
    series.user_id = uid;
    std::set<std::pair<UtcSeconds, std::string>> seen;
    for (auto& ev : evs) {
      if (seen.emplace(ev.timestamp, ev.annotation_id).second) {
        series.events.push_back(std::move(ev));
      }
    }
    log.event_count += series.events.size();
    log.users.push_back(std::move(series));
  }
  return log;
}

namespace {

double sample_mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v, double mean) {
  double s = 0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  // modified Lentz continued fraction
  auto betacf = [](double a_, double b_, double x_) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kFpMin = 1e-300;
    const double qab = a_ + b_, qap = a_ + 1.0, qam = a_ - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x_ / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
      const int m2 = 2 * m;
      double aa = m * (b_ - m) * x_ / ((qam + m2) * (a_ + m2));
      d = 1.0 + aa * d;
      if (std::fabs(d) < kFpMin) d = kFpMin;
      c = 1.0 + aa / c;
      if (std::fabs(c) < kFpMin) c = kFpMin;
      d = 1.0 / d;
      h *= d * c;
      aa = -(a_ + m) * (qab + m) * x_ / ((a_ + m2) * (qap + m2));
      d = 1.0 + aa * d;
      if (std::fabs(d) < kFpMin) d = kFpMin;
      c = 1.0 + aa / c;
      if (std::fabs(c) < kFpMin) c = kFpMin;
      d = 1.0 / d;
      const double del = d * c;
      h *= del;
      if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
  };
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log1p(-x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_tailed_p(double t, double dof) {
  if (std::isnan(t) || std::isnan(dof)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  return regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

LogSummary descriptive_stats(const ValidatedLog& log, std::size_t k) {
  if (log.users.empty()) throw EmptyLogError("empty log: no users");
  if (k > log.users.size()) {
    throw std::invalid_argument("top-k of " + std::to_string(k) + " exceeds user count " +
                                std::to_string(log.users.size()));
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  LogSummary s;
  s.total_users = log.users.size();

  std::vector<double> counts;
  std::vector<double> logged_in_counts, anon_counts;
  counts.reserve(log.users.size());
  for (const auto& u : log.users) {
    const double c = static_cast<double>(u.events.size());
    counts.push_back(c);
    s.total_annotations += u.events.size();
    const bool logged_in = std::any_of(u.events.begin(), u.events.end(),
                                       [](const AnnotationEvent& e) { return e.logged_in; });
    (logged_in ? logged_in_counts : anon_counts).push_back(c);
  }

  std::sort(counts.begin(), counts.end(), std::greater<>());
  double top = 0;
  for (std::size_t i = 0; i < k; ++i) top += counts[i];
  s.top_k_share = s.total_annotations ? top / static_cast<double>(s.total_annotations) : 0.0;

  s.mean_annotations_logged_in = logged_in_counts.empty() ? nan : sample_mean(logged_in_counts);
  s.mean_annotations_anonymous = anon_counts.empty() ? nan : sample_mean(anon_counts);

  if (logged_in_counts.size() < 2 || anon_counts.size() < 2) {
    s.welch_t = nan;
    s.welch_p = nan;
    return s;
  }
  const double m1 = s.mean_annotations_logged_in, m2 = s.mean_annotations_anonymous;
  const double v1 = sample_variance(logged_in_counts, m1);
  const double v2 = sample_variance(anon_counts, m2);
  const double n1 = static_cast<double>(logged_in_counts.size());
  const double n2 = static_cast<double>(anon_counts.size());
  const double se2 = v1 / n1 + v2 / n2;
  const double diff = m1 - m2;
  if (se2 == 0.0) {
    s.welch_t = diff == 0.0 ? 0.0
                            : std::copysign(std::numeric_limits<double>::infinity(), diff);
    s.welch_p = diff == 0.0 ? 1.0 : 0.0;
    return s;
  }
  s.welch_t = diff / std::sqrt(se2);
  const double dof = se2 * se2 /
                     ((v1 / n1) * (v1 / n1) / (n1 - 1) + (v2 / n2) * (v2 / n2) / (n2 - 1));
  s.welch_p = student_t_two_tailed_p(s.welch_t, dof);
  return s;
}

}  // namespace engage
