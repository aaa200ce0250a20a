#include "engage/featurizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

#include "engage/csv.hpp"
#include "json.hpp"

namespace engage {

std::string emit_policy_name(EmitPolicy p) {
  return p == EmitPolicy::require_full_window ? "full" : "pad";
}

EmitPolicy emit_policy_from(std::string_view name) {
  if (name == "full" || name == "require_full_window") return EmitPolicy::require_full_window;
  if (name == "pad" || name == "pad_short_windows") return EmitPolicy::pad_short_windows;
  throw std::invalid_argument("unknown emit policy '" + std::string(name) +
                              "' (valid: full, pad)");
}

namespace {

void check_config(const FeaturizerConfig& c) {
  if (c.M < 1) throw std::invalid_argument("M must be >= 1");
  if (c.gamma < 1) throw std::invalid_argument("gamma must be >= 1");
}

}  // namespace

Features compute_features(const std::vector<Session>& user_sessions, int session_index,
                          int position, int M) {
  if (M < 1) throw std::invalid_argument("M must be >= 1");
  if (session_index < 0 || session_index >= static_cast<int>(user_sessions.size())) {
    throw std::out_of_range("session_index out of range");
  }
  const Session& cur = user_sessions[session_index];
  if (position < 0 || position >= static_cast<int>(cur.events.size())) {
    throw std::out_of_range("position out of range");
  }

  Features f;

  // past-session aggregates
  double count_sum = 0;
  std::vector<double> past_counts;
  double gap_sum = 0;
  double gap_count = 0;
  std::size_t total_before = 0;
  for (int s = 0; s < session_index; ++s) {
    const auto& events = user_sessions[s].events;
    past_counts.push_back(static_cast<double>(events.size()));
    count_sum += static_cast<double>(events.size());
    for (std::size_t i = 1; i < events.size(); ++i) {
      gap_sum += static_cast<double>(events[i].timestamp - events[i - 1].timestamp);
      gap_count += 1;
    }
    total_before += events.size();
  }

  auto& eng = f.engineered;
  if (!past_counts.empty()) {
    eng[0] = count_sum / static_cast<double>(past_counts.size());
    const std::size_t take = std::min<std::size_t>(5, past_counts.size());
    double recent = 0;
    for (std::size_t i = past_counts.size() - take; i < past_counts.size(); ++i) {
      recent += past_counts[i];
    }
    eng[1] = recent / static_cast<double>(take);
  }
  if (gap_count > 0) eng[2] = gap_sum / gap_count;
  if (position > 0) {
    eng[3] = static_cast<double>(cur.events[position].timestamp - cur.events[0].timestamp) /
             static_cast<double>(position);
  }
  eng[4] = static_cast<double>(total_before) + position + 1;
  eng[5] = position + 1;
  eng[6] = cur.events[position].logged_in ? 1.0 : 0.0;

  // delta window over the user's flat history
  std::vector<UtcSeconds> history;
  for (int s = 0; s <= session_index; ++s) {
    const auto& events = user_sessions[s].events;
    const int last = s == session_index ? position : static_cast<int>(events.size()) - 1;
    for (int i = 0; i <= last; ++i) history.push_back(events[i].timestamp);
  }
  f.deltas.assign(M, 0.0);
  const long long h = static_cast<long long>(history.size()) - 1;
  for (int j = 0; j < M; ++j) {
    const long long hi = h - (M - 1 - j);  // newer end of gap j, oldest first
    if (hi >= 1) f.deltas[j] = static_cast<double>(history[hi] - history[hi - 1]);
  }
  return f;
}

Label label_item(const Session& session, int position, int gamma) {
  if (position < 0 || position >= static_cast<int>(session.events.size())) {
    throw std::out_of_range("position out of range");
  }
  Label l;
  l.raw_y = static_cast<int>(session.events.size()) - 1 - position;
  l.label = l.raw_y > gamma ? 1 : 0;
  return l;
}

Dataset build_dataset(const ValidatedLog& log, const SessionizerConfig& session_config,
                      const FeaturizerConfig& config) {
  check_config(config);
  const int M = config.M;

  Dataset ds;
  ds.config = config;

  struct SortKey {
    UtcSeconds ts;
    const std::string* uid;
    int session_index;
    int position;
  };
  std::vector<SortKey> keys;

  for (const auto& user : log.users) {
    const auto sessions = sessionize(user.events, session_config);

    std::vector<UtcSeconds> flat;
    flat.reserve(user.events.size());
    for (const auto& ev : user.events) flat.push_back(ev.timestamp);

    double count_sum = 0;
    std::vector<double> counts;
    double gap_sum = 0, gap_count = 0;
    std::size_t base = 0;

    for (const auto& session : sessions) {
      const int len = static_cast<int>(session.events.size());
      for (int p = 0; p < len; ++p) {
        const std::size_t h = base + p;
        if (config.emit_policy == EmitPolicy::require_full_window &&
            h < static_cast<std::size_t>(M)) {
          continue;
        }
        DatasetItem item;
        item.user_id = user.user_id;
        item.timestamp = session.events[p].timestamp;
        item.session_index = session.session_index;
        const Label lab = label_item(session, p, config.gamma);
        item.raw_y = lab.raw_y;
        item.label = lab.label;

        item.deltas.assign(M, 0.0);
        for (int j = 0; j < M; ++j) {
          const long long hi = static_cast<long long>(h) - (M - 1 - j);
          if (hi >= 1) {
            item.deltas[j] = static_cast<double>(flat[hi] - flat[hi - 1]);
          }
        }

        auto& eng = item.engineered;
        if (!counts.empty()) {
          eng[0] = count_sum / static_cast<double>(counts.size());
          const std::size_t take = std::min<std::size_t>(5, counts.size());
          double recent = 0;
          for (std::size_t i = counts.size() - take; i < counts.size(); ++i) recent += counts[i];
          eng[1] = recent / static_cast<double>(take);
        }
        if (gap_count > 0) eng[2] = gap_sum / gap_count;
        if (p > 0) {
          eng[3] = static_cast<double>(session.events[p].timestamp - session.start) /
                   static_cast<double>(p);
        }
        eng[4] = static_cast<double>(h) + 1;
        eng[5] = p + 1;
        eng[6] = session.events[p].logged_in ? 1.0 : 0.0;

        keys.push_back({item.timestamp, &user.user_id, session.session_index, p});
        ds.items.push_back(std::move(item));
      }
      counts.push_back(static_cast<double>(len));
      count_sum += static_cast<double>(len);
      gap_sum += static_cast<double>(session.end - session.start);  // telescoped pooled gaps
      gap_count += len - 1;
      base += len;
    }
  }

  std::vector<std::size_t> order(ds.items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ka = keys[a];
    const auto& kb = keys[b];
    if (ka.ts != kb.ts) return ka.ts < kb.ts;
    if (*ka.uid != *kb.uid) return *ka.uid < *kb.uid;
    if (ka.session_index != kb.session_index) return ka.session_index < kb.session_index;
    return ka.position < kb.position;
  });
  std::vector<DatasetItem> sorted;
  sorted.reserve(ds.items.size());
  for (std::size_t i : order) sorted.push_back(std::move(ds.items[i]));
  ds.items = std::move(sorted);
  return ds;
}

// ---- normalizer ------------------------------------------------------------

namespace {

bool is_log_dim(int dim, int M) { return dim < M || dim == M + 2 || dim == M + 3; }

double raw_dim(const DatasetItem& item, int dim, int M) {
  return dim < M ? item.deltas[dim] : item.engineered[dim - M];
}

}  // namespace

Normalizer Normalizer::fit(std::span<const DatasetItem> fit_slice, int M) {
  if (fit_slice.empty()) throw std::invalid_argument("normalizer fit slice is empty");
  const int dims = M + 7;
  Normalizer n;
  n.M_ = M;
  n.mean_.assign(dims, 0.0);
  n.stddev_.assign(dims, 0.0);
  const double cnt = static_cast<double>(fit_slice.size());
  for (int d = 0; d < dims; ++d) {
    double sum = 0;
    for (const auto& item : fit_slice) {
      double v = raw_dim(item, d, M);
      if (is_log_dim(d, M)) v = std::log1p(v);
      sum += v;
    }
    const double mean = sum / cnt;
    n.mean_[d] = mean;
    if (fit_slice.size() > 1) {
      double sq = 0;
      for (const auto& item : fit_slice) {
        double v = raw_dim(item, d, M);
        if (is_log_dim(d, M)) v = std::log1p(v);
        sq += (v - mean) * (v - mean);
      }
      n.stddev_[d] = std::sqrt(sq / (cnt - 1.0));
    }
  }
  return n;
}

std::vector<double> Normalizer::apply(const DatasetItem& item) const {
  if (static_cast<int>(item.deltas.size()) != M_) {
    throw std::invalid_argument("item delta width " + std::to_string(item.deltas.size()) +
                                " does not match normalizer window " + std::to_string(M_));
  }
  std::vector<double> out(mean_.size());
  for (int d = 0; d < static_cast<int>(mean_.size()); ++d) {
    double v = raw_dim(item, d, M_);
    if (is_log_dim(d, M_)) v = std::log1p(v);
    out[d] = stddev_[d] > 0.0 ? (v - mean_[d]) / stddev_[d] : v;
  }
  return out;
}

Normalizer Normalizer::from_moments(int M, std::vector<double> mean, std::vector<double> stddev) {
  if (mean.size() != stddev.size() || static_cast<int>(mean.size()) != M + 7) {
    throw std::invalid_argument("normalizer moment arrays must have M + 7 entries");
  }
  Normalizer n;
  n.M_ = M;
  n.mean_ = std::move(mean);
  n.stddev_ = std::move(stddev);
  return n;
}

// ---- persistence -----------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || s.empty()) {
    throw ParseError("bad real number '" + s + "'", line);
  }
  return v;
}

long long parse_int(const std::string& s, std::size_t line) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("bad integer '" + s + "'", line);
  }
}

}  // namespace

std::string write_dataset_csv(const Dataset& dataset) {
  const int M = dataset.config.M;
  std::string out = "user_id,timestamp,session_index,raw_y,label";
  for (int j = 0; j < M; ++j) out += ",delta_" + std::to_string(j);
  for (int j = 1; j <= 7; ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (const auto& item : dataset.items) {
    std::vector<std::string> fields = {item.user_id, format_timestamp(item.timestamp),
                                       std::to_string(item.session_index),
                                       std::to_string(item.raw_y), std::to_string(item.label)};
    for (double d : item.deltas) fields.push_back(fmt_double(d));
    for (double f : item.engineered) fields.push_back(fmt_double(f));
    csv::append_row(out, fields);
  }
  return out;
}

Dataset read_dataset_csv(std::string_view csv_text, const FeaturizerConfig& config) {
  check_config(config);
  const int M = config.M;
  const auto rows = csv::parse(csv_text);
  if (rows.empty()) throw EmptyLogError("empty dataset file");
  const std::size_t expected_fields = 5 + M + 7;
  if (rows[0].fields.size() != expected_fields) {
    throw ParseError("dataset header has " + std::to_string(rows[0].fields.size()) +
                         " columns, expected " + std::to_string(expected_fields) + " for M=" +
                         std::to_string(M),
                     rows[0].line);
  }
  Dataset ds;
  ds.config = config;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.fields.size() != expected_fields) throw ParseError("wrong field count", r.line);
    DatasetItem item;
    item.user_id = r.fields[0];
    try {
      item.timestamp = parse_timestamp(r.fields[1]);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), r.line);
    }
    item.session_index = static_cast<int>(parse_int(r.fields[2], r.line));
    item.raw_y = static_cast<int>(parse_int(r.fields[3], r.line));
    item.label = static_cast<int>(parse_int(r.fields[4], r.line));
    item.deltas.resize(M);
    for (int j = 0; j < M; ++j) item.deltas[j] = parse_double(r.fields[5 + j], r.line);
    for (int j = 0; j < 7; ++j) item.engineered[j] = parse_double(r.fields[5 + M + j], r.line);
    ds.items.push_back(std::move(item));
  }
  return ds;
}

std::string write_dataset_sidecar(const FeaturizerConfig& config) {
  nlohmann::json j;
  j["M"] = config.M;
  j["gamma"] = config.gamma;
  j["emit_policy"] = emit_policy_name(config.emit_policy);
  return j.dump(2) + "\n";
}

FeaturizerConfig read_dataset_sidecar(std::string_view json_text) {
  const auto j = nlohmann::json::parse(json_text);
  FeaturizerConfig c;
  c.M = j.at("M").get<int>();
  c.gamma = j.at("gamma").get<int>();
  c.emit_policy = emit_policy_from(j.at("emit_policy").get<std::string>());
  check_config(c);
  return c;
}

}  // namespace engage
