#include "engage/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "engage/rng.hpp"
#include "json.hpp"

namespace engage {

void validate_config(const SynthConfig& c) {
  if (c.user_count < 1) throw std::invalid_argument("user_count must be >= 1");
  if (c.logged_in_fraction < 0 || c.logged_in_fraction > 1) {
    throw std::invalid_argument("logged_in_fraction must be in [0,1]");
  }
  if (c.signal_strength < 0 || c.signal_strength > 1) {
    throw std::invalid_argument("signal_strength must be in [0,1]");
  }
  if (c.long_session_prob < 0 || c.long_session_prob > 1) {
    throw std::invalid_argument("long_session_prob must be in [0,1]");
  }
  if (c.activity_mean <= 0 || c.activity_sigma <= 0 || c.logged_in_multiplier <= 0 ||
      c.intersession_gap_hours <= 0 || c.session_base_mean <= 0 || c.long_session_mean <= 0 ||
      c.within_gap_median_s <= 0 || c.within_gap_sigma <= 0 || c.within_gap_cap_s <= 0) {
    throw std::invalid_argument("rates and means must be positive");
  }
  if (c.session_length_user_sigma < 0) {
    throw std::invalid_argument("session_length_user_sigma must be >= 0");
  }
  if (c.tempo_sigma < 0 || c.tempo_hazard_slope < 0) {
    throw std::invalid_argument("tempo parameters must be >= 0");
  }
  if (c.start_spread_days < 0) throw std::invalid_argument("start_spread_days must be >= 0");
}

namespace {
constexpr double kHazardFloor = 0.001;
constexpr double kHazardCap = 0.98;
constexpr UtcSeconds kSplitFloorS = 1800;  // 30-minute sessionizer threshold
}  // namespace

std::vector<AnnotationEvent> generate_log(const SynthConfig& config) {
  validate_config(config);
  std::vector<AnnotationEvent> events;
  for (int u = 0; u < config.user_count; ++u) {
    Rng rng(derive_seed(config.seed, "user/" + std::to_string(u)));
    char uid[24];
    std::snprintf(uid, sizeof(uid), "u%05d", u);

    const bool logged_in = rng.uniform() < config.logged_in_fraction;
    const double mean_count =
        config.activity_mean * (logged_in ? config.logged_in_multiplier : 1.0);
    const double mu = std::log(mean_count) - 0.5 * config.activity_sigma * config.activity_sigma;
    const long long target =
        std::max(1LL, std::llround(rng.log_normal(mu, config.activity_sigma)));
    const double len_scale = config.session_length_user_sigma > 0
                                 ? std::exp(rng.normal() * config.session_length_user_sigma)
                                 : 1.0;

    UtcSeconds t = config.start +
                   static_cast<UtcSeconds>(rng.uniform() * config.start_spread_days * 86400.0);
    long long emitted = 0;
    while (emitted < target) {
      const bool long_session = rng.uniform() < config.long_session_prob;
      const double mean_len =
          (long_session ? config.long_session_mean : config.session_base_mean) * len_scale;
      const double p_base = std::min(1.0, 1.0 / std::max(1.0, mean_len));
      // Session tempo: slow sessions (longer gaps) also end sooner. Inert at
      // signal 0, where the tempo factor collapses to 1.
      const double tempo =
          std::exp(config.signal_strength * config.tempo_sigma * rng.normal());
      const double hazard_base = p_base * std::pow(tempo, config.tempo_hazard_slope);
      double gap_sum = 0, last_gap = 0;
      long long gap_count = 0;
      for (;;) {
        AnnotationEvent e;
        e.user_id = uid;
        e.logged_in = logged_in;
        e.timestamp = t;
        e.annotation_id = std::string(uid) + "-a" + std::to_string(emitted);
        events.push_back(std::move(e));
        ++emitted;
        if (emitted >= target) break;
        // End-of-session hazard, decided after every emitted annotation. An
        // unusually long last gap raises it when a signal is planted.
        double hazard = p_base;
        if (config.signal_strength > 0) {
          double mult = 1.0;
          if (gap_count > 0) {
            const double r = last_gap / (gap_sum / static_cast<double>(gap_count));
            mult = std::exp(config.signal_strength * (r - 1.0));
          }
          hazard = std::clamp(hazard_base * mult, kHazardFloor, kHazardCap);
        }
        if (rng.uniform() < hazard) break;
        const double draw = rng.log_normal(
            std::log(config.within_gap_median_s * tempo), config.within_gap_sigma);
        const double gap = std::min(config.within_gap_cap_s, std::max(1.0, std::round(draw)));
        last_gap = gap;
        gap_sum += gap;
        ++gap_count;
        t += static_cast<UtcSeconds>(gap);
      }
      t += kSplitFloorS +
           static_cast<UtcSeconds>(std::llround(rng.exponential(config.intersession_gap_hours *
                                                                3600.0)));
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const AnnotationEvent& a, const AnnotationEvent& b) {
                     return a.timestamp < b.timestamp;
                   });
  return events;
}

std::string synth_config_json(const SynthConfig& c) {
  nlohmann::json j;
  j["user_count"] = c.user_count;
  j["logged_in_fraction"] = c.logged_in_fraction;
  j["activity_mean"] = c.activity_mean;
  j["activity_sigma"] = c.activity_sigma;
  j["logged_in_multiplier"] = c.logged_in_multiplier;
  j["intersession_gap_hours"] = c.intersession_gap_hours;
  j["session_base_mean"] = c.session_base_mean;
  j["long_session_prob"] = c.long_session_prob;
  j["long_session_mean"] = c.long_session_mean;
  j["session_length_user_sigma"] = c.session_length_user_sigma;
  j["within_gap_median_s"] = c.within_gap_median_s;
  j["within_gap_sigma"] = c.within_gap_sigma;
  j["within_gap_cap_s"] = c.within_gap_cap_s;
  j["signal_strength"] = c.signal_strength;
  j["tempo_sigma"] = c.tempo_sigma;
  j["tempo_hazard_slope"] = c.tempo_hazard_slope;
  j["start"] = format_timestamp(c.start);
  j["start_spread_days"] = c.start_spread_days;
  j["seed"] = c.seed;
  return j.dump(2) + "\n";
}

}  // namespace engage
