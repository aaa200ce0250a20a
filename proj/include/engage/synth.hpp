#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "engage/ingest.hpp"

namespace engage {

// Generator calibrated to the reference corpus statistics: skewed per-user
// totals (log-normal), a logged-in cohort contributing ~2x the anonymous mean,
// sessions from a two-component geometric mixture, and an optional planted
// signal that ties session endings to the recent gap trend.
struct SynthConfig {
  int user_count = 1000;
  double logged_in_fraction = 0.63;

  // Per-user expected annotation totals: log-normal with this mean for the
  // anonymous cohort and mean * multiplier for the logged-in cohort.
  double activity_mean = 10.53;
  double activity_sigma = 1.45;
  double logged_in_multiplier = 1.9934;

  // Session arrival: a 30-minute floor plus an exponential draw.
  double intersession_gap_hours = 12.0;

  // Session length: geometric with mean session_base_mean, switching to
  // long_session_mean with probability long_session_prob. A positive
  // session_length_user_sigma additionally scales both means per user by a
  // log-normal factor.
  double session_base_mean = 8.0;
  double long_session_prob = 0.01;
  double long_session_mean = 80.0;
  double session_length_user_sigma = 0.0;

  // Within-session gaps: log-normal seconds, capped below the session split
  // threshold so sessions never fracture.
  double within_gap_median_s = 25.0;
  double within_gap_sigma = 0.9;
  double within_gap_cap_s = 1740.0;

  // 0: session lengths are exactly the geometric mixture and gaps carry no
  // label information. Positive values plant two coupled patterns: each
  // session draws a tempo factor exp(signal * tempo_sigma * z) that scales its
  // gap level and raises the ending hazard by tempo^tempo_hazard_slope, and
  // every per-annotation hazard is further multiplied by
  // exp(signal * (last_gap / running_mean_gap - 1)).
  double signal_strength = 0.5;
  double tempo_sigma = 1.5;
  double tempo_hazard_slope = 2.5;

  UtcSeconds start = 1569888000;     // 2019-10-01T00:00:00Z
  double start_spread_days = 600.0;  // first sessions spread uniformly over this window

  std::uint64_t seed = 0;
};

// Throws std::invalid_argument on out-of-range fields.
void validate_config(const SynthConfig& config);

// Deterministic for a fixed config; users draw from independent derived
// streams. Events come back globally time-ordered.
std::vector<AnnotationEvent> generate_log(const SynthConfig& config);

// Resolved-config JSON (written next to generated logs).
std::string synth_config_json(const SynthConfig& config);

}  // namespace engage
