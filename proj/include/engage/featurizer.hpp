#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "engage/sessionizer.hpp"

namespace engage {

enum class EmitPolicy {
  // Emit an item only when the user already has M earlier annotations, so the
  // delta window is fully real.
  require_full_window,
  // Emit for every annotation; missing deltas are zero-padded on the old end.
  pad_short_windows,
};

std::string emit_policy_name(EmitPolicy p);
EmitPolicy emit_policy_from(std::string_view name);  // throws std::invalid_argument

struct FeaturizerConfig {
  int M = 5;      // delta window width, >= 1
  int gamma = 5;  // engagement threshold, >= 1; label = 1 iff raw_y > gamma
  EmitPolicy emit_policy = EmitPolicy::require_full_window;
};

// Engineered feature order. Gaps are in seconds; history means the user's
// sessions strictly before the current one.
//   [0] f1  mean annotation count over all past sessions
//   [1] f2  mean annotation count over the (up to) five most recent past sessions
//   [2] f3  mean inter-annotation gap pooled over all past sessions
//   [3] f4  mean gap among the annotations already made in the current session
//   [4] f5  total annotations up to and including the current one
//   [5] f6  1-based position of the current annotation in its session
//   [6] f7  logged-in flag of the current annotation
// f1..f4 fall back to 0 when there is no history to average over.
using EngineeredFeatures = std::array<double, 7>;

struct Features {
  std::vector<double> deltas;  // length M, oldest first, each >= 0
  EngineeredFeatures engineered{};
};

// Direct-from-definition computation for one annotation, identified by its
// session index and position within the user's session list. The delta window
// covers the M+1 most recent annotations of the user's full history and may
// cross session boundaries; when the history is shorter than M the missing
// deltas are zero on the old end (emission policy is build_dataset's call).
// Kept deliberately naive; build_dataset uses an incremental path and the two
// are checked against each other.
Features compute_features(const std::vector<Session>& user_sessions, int session_index,
                          int position, int M);

// raw_y = annotations remaining in the session after this one; label = raw_y > gamma.
struct Label {
  int raw_y = 0;
  int label = 0;
};
Label label_item(const Session& session, int position, int gamma);

struct DatasetItem {
  std::string user_id;
  UtcSeconds timestamp = 0;
  int session_index = 0;
  int raw_y = 0;
  int label = 0;
  std::vector<double> deltas;
  EngineeredFeatures engineered{};
};

struct Dataset {
  std::vector<DatasetItem> items;  // global time order
  FeaturizerConfig config;
};

// Items ordered by (timestamp, user_id, session_index, position).
Dataset build_dataset(const ValidatedLog& log, const SessionizerConfig& session_config,
                      const FeaturizerConfig& config);

// Per-dimension standardization fitted on a slice: log1p on the deltas and the
// two gap features (f3, f4) first, then (x - mean) / std with the sample std
// of the transformed fit slice. Zero-std dimensions pass through after log1p.
class Normalizer {
 public:
  static Normalizer fit(std::span<const DatasetItem> fit_slice, int M);

  std::vector<double> apply(const DatasetItem& item) const;  // length M + 7
  int dims() const { return static_cast<int>(mean_.size()); }
  int window() const { return M_; }

  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return stddev_; }  // 0 marks pass-through

  static Normalizer from_moments(int M, std::vector<double> mean, std::vector<double> stddev);

 private:
  int M_ = 0;
  std::vector<double> mean_;
  std::vector<double> stddev_;
};

// Columnar persistence. Doubles are written with 17 significant digits, so a
// write/parse round trip is bit exact.
std::string write_dataset_csv(const Dataset& dataset);
Dataset read_dataset_csv(std::string_view csv_text, const FeaturizerConfig& config);

std::string write_dataset_sidecar(const FeaturizerConfig& config);     // JSON
FeaturizerConfig read_dataset_sidecar(std::string_view json_text);

}  // namespace engage
