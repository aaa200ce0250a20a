#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "engage/featurizer.hpp"
#include "engage/models.hpp"

namespace engage {

// Expanding trains each fold on every earlier part; sliding (train on the
// single most recent part) is kept behind a flag as the stricter variant.
enum class ChainMode { expanding, sliding };

std::string chain_mode_name(ChainMode m);
ChainMode chain_mode_from(std::string_view name);  // throws std::invalid_argument

struct Fold {
  std::size_t train_begin = 0;  // [train_begin, train_end)
  std::size_t train_end = 0;
  std::size_t test_begin = 0;  // [test_begin, test_end)
  std::size_t test_end = 0;
};

struct FoldPlan {
  int part_count = 5;
  std::vector<std::size_t> part_sizes;  // first (n mod parts) parts get one extra
  std::vector<Fold> folds;              // part_count - 1 entries
};

// Splits [0, item_count) into part_count time-ordered parts; fold k trains on
// parts 1..k (expanding) or part k alone (sliding) and tests on part k+1.
// item_count < part_count is an error.
FoldPlan forward_chain_split(std::size_t item_count, int part_count = 5,
                             ChainMode mode = ChainMode::expanding);

// Mann-Whitney rank AUC with midrank tie handling: (wins + 0.5 * ties) /
// (n_pos * n_neg), computed with one sort. Single-class labels throw
// DegenerateAucError.
double auc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double fpr = 0;
  double tpr = 0;
  double threshold = 0;
};

// Threshold sweep over distinct scores descending, from (0,0) at a threshold
// above every score to (1,1). Trapezoidal area equals auc() within 1e-12.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);
double trapezoid_area(std::span<const RocPoint> curve);

// Positive prediction rule: score >= threshold.
std::vector<int> predict_at(std::span<const double> scores, double threshold);

struct ThresholdMetrics {
  double threshold = 0;
  double precision = 0;  // 0 when nothing is predicted positive
  double recall = 0;
  double specificity = 0;
};

ThresholdMetrics metrics_at_threshold(std::span<const double> scores, std::span<const int> labels,
                                      double threshold);
std::vector<ThresholdMetrics> threshold_sweep(std::span<const double> scores,
                                              std::span<const int> labels);
std::vector<ThresholdMetrics> threshold_sweep(const TrainedModel& model,
                                              std::span<const DatasetItem> test);

struct EvalCell {
  Variant variant = Variant::dnn_net;
  int M = 0;
  int gamma = 0;
  std::vector<double> fold_aucs;          // NaN marks a degenerate fold
  std::vector<int> degenerate_folds;      // 1-based folds with single-class test labels
  std::vector<std::uint64_t> fold_seeds;  // derived per-fold model seeds
  double mean_auc = std::numeric_limits<double>::quiet_NaN();  // over valid folds
  double std_auc = std::numeric_limits<double>::quiet_NaN();   // population std over valid folds
  std::vector<std::vector<RocPoint>> roc;  // one curve per valid fold when requested
};

struct DatasetSummary {
  int M = 0;
  std::size_t item_count = 0;
  std::vector<std::size_t> part_sizes;
};

struct EvalOptions {
  SessionizerConfig session;
  EmitPolicy emit_policy = EmitPolicy::require_full_window;
  ChainMode chain = ChainMode::expanding;
  int part_count = 5;
  int jobs = 1;  // concurrent (M, gamma) tasks
  std::uint64_t seed = 0;
  ModelConfig model;  // shared knobs; variant, M and seed are set per cell
  std::string save_models_dir;  // empty: do not save fold models
  bool emit_roc = false;
};

// Test seam: replaces model training for one fold. The returned scorer must be
// safe to call repeatedly on test items. fold is 1-based.
using Scorer = std::function<double(const DatasetItem&)>;
using ScorerFactory = std::function<Scorer(Variant variant, int M, int gamma, int fold,
                                           std::span<const DatasetItem> train,
                                           std::uint64_t seed)>;

struct EvalResult {
  std::vector<EvalCell> cells;          // ordered by (M asc, gamma asc, variant order)
  std::vector<DatasetSummary> datasets; // one per M, ascending
};

// Builds one dataset per M, relabels per gamma, and runs every variant on
// identical folds with a per-fold train-only normalizer (inside train_model).
// Fully deterministic for a fixed seed, independent of opts.jobs.
EvalResult evaluate_matrix(const ValidatedLog& log, std::vector<int> gammas, std::vector<int> Ms,
                           std::vector<Variant> variants, const EvalOptions& opts,
                           const ScorerFactory& factory = {});

// One table per M: rows gamma ascending, columns variants in caller order,
// cells "mean±std", row leaders (within 5e-4 of the row max) in bold.
std::string render_report_markdown(const EvalResult& result, int M,
                                   std::span<const Variant> variants, const EvalOptions& opts);

// Full-detail mirror of the tables: per-fold AUCs, derived seeds, degenerate
// flags, dataset summaries and the resolved options. Carries no timestamps,
// so reruns are byte-identical.
std::string render_report_json(const EvalResult& result, std::span<const Variant> variants,
                               const EvalOptions& opts);

}  // namespace engage
