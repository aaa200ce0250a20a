#include "engage/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <thread>

#include "engage/rng.hpp"
#include "engage/version.hpp"
#include "json.hpp"

namespace engage {

std::string chain_mode_name(ChainMode m) {
  return m == ChainMode::expanding ? "expanding" : "sliding";
}

ChainMode chain_mode_from(std::string_view name) {
  if (name == "expanding") return ChainMode::expanding;
  if (name == "sliding") return ChainMode::sliding;
  throw std::invalid_argument("unknown chain mode '" + std::string(name) +
                              "' (valid: expanding, sliding)");
}

FoldPlan forward_chain_split(std::size_t item_count, int part_count, ChainMode mode) {
  if (part_count < 2) throw std::invalid_argument("part_count must be >= 2");
  if (item_count < static_cast<std::size_t>(part_count)) {
    throw std::invalid_argument("forward chaining needs at least " + std::to_string(part_count) +
                                " items, got " + std::to_string(item_count));
  }
  FoldPlan plan;
  plan.part_count = part_count;
  const std::size_t base = item_count / part_count;
  const std::size_t extra = item_count % part_count;
  std::vector<std::size_t> boundary(part_count + 1, 0);
  for (int p = 0; p < part_count; ++p) {
    plan.part_sizes.push_back(base + (static_cast<std::size_t>(p) < extra ? 1 : 0));
    boundary[p + 1] = boundary[p] + plan.part_sizes.back();
  }
  for (int k = 1; k < part_count; ++k) {
    Fold f;
    f.train_begin = mode == ChainMode::expanding ? 0 : boundary[k - 1];
    f.train_end = boundary[k];
    f.test_begin = boundary[k];
    f.test_end = boundary[k + 1];
    plan.folds.push_back(f);
  }
  return plan;
}

namespace {

void check_scored(std::span<const double> scores, std::span<const int> labels, std::size_t& pos,
                  std::size_t& neg) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores/labels size mismatch");
  if (scores.empty()) throw std::invalid_argument("empty score list");
  pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("labels must be 0 or 1");
    pos += static_cast<std::size_t>(l);
  }
  neg = scores.size() - pos;
  if (pos == 0 || neg == 0) {
    throw DegenerateAucError("AUC undefined: all labels are " + std::to_string(labels[0]));
  }
}

std::vector<std::size_t> order_by_score(std::span<const double> scores, bool ascending) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return ascending ? scores[a] < scores[b] : scores[a] > scores[b];
  });
  return idx;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  std::size_t pos = 0, neg = 0;
  check_scored(scores, labels, pos, neg);
  const auto idx = order_by_score(scores, true);
  const std::size_t n = scores.size();
  // Midranks make the numerator exactly wins + 0.5 * ties; the only division
  // is the final one.
  double rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    std::size_t run_pos = 0;
    for (std::size_t k = i; k < j; ++k) run_pos += static_cast<std::size_t>(labels[idx[k]]);
    rank_sum_pos += midrank * static_cast<double>(run_pos);
    i = j;
  }
  const double numerator =
      rank_sum_pos - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
  return numerator / (static_cast<double>(pos) * static_cast<double>(neg));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  std::size_t pos = 0, neg = 0;
  check_scored(scores, labels, pos, neg);
  const auto idx = order_by_score(scores, false);
  std::vector<RocPoint> curve;
  curve.push_back({0.0, 0.0, scores[idx[0]] + 1.0});
  std::size_t tp = 0, fp = 0, i = 0;
  const std::size_t n = scores.size();
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) {
      tp += static_cast<std::size_t>(labels[idx[k]]);
      fp += static_cast<std::size_t>(1 - labels[idx[k]]);
    }
    curve.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                     static_cast<double>(tp) / static_cast<double>(pos), scores[idx[i]]});
    i = j;
  }
  return curve;
}

double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * 0.5 * (curve[i].tpr + curve[i - 1].tpr);
  }
  return area;
}

std::vector<int> predict_at(std::span<const double> scores, double threshold) {
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= threshold ? 1 : 0;
  return out;
}

ThresholdMetrics metrics_at_threshold(std::span<const double> scores, std::span<const int> labels,
                                      double threshold) {
  std::size_t pos = 0, neg = 0;
  check_scored(scores, labels, pos, neg);
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (pred && labels[i] == 1) ++tp;
    else if (pred) ++fp;
    else if (labels[i] == 1) ++fn;
    else ++tn;
  }
  ThresholdMetrics m;
  m.threshold = threshold;
  m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = static_cast<double>(tp) / static_cast<double>(pos);
  m.specificity = static_cast<double>(tn) / static_cast<double>(neg);
  return m;
}

std::vector<ThresholdMetrics> threshold_sweep(std::span<const double> scores,
                                              std::span<const int> labels) {
  std::size_t pos = 0, neg = 0;
  check_scored(scores, labels, pos, neg);
  std::vector<double> thresholds(scores.begin(), scores.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::vector<ThresholdMetrics> table;
  table.reserve(thresholds.size());
  for (double t : thresholds) table.push_back(metrics_at_threshold(scores, labels, t));
  return table;
}

std::vector<ThresholdMetrics> threshold_sweep(const TrainedModel& model,
                                              std::span<const DatasetItem> test) {
  std::vector<double> scores;
  scores.reserve(test.size());
  std::vector<int> labels;
  labels.reserve(test.size());
  for (const auto& item : test) {
    scores.push_back(model.predict_proba(item));
    labels.push_back(item.label);
  }
  return threshold_sweep(scores, labels);
}

namespace {

void aggregate_cell(EvalCell& c) {
  std::vector<double> valid;
  for (double a : c.fold_aucs) {
    if (std::isfinite(a)) valid.push_back(a);
  }
  if (valid.empty()) return;  // mean/std stay NaN
  double sum = 0;
  for (double a : valid) sum += a;
  const double mean = sum / static_cast<double>(valid.size());
  double sq = 0;
  for (double a : valid) sq += (a - mean) * (a - mean);
  c.mean_auc = mean;
  c.std_auc = std::sqrt(sq / static_cast<double>(valid.size()));
}

std::string cell_stream_name(int M, int gamma, int fold, Variant v) {
  return "M" + std::to_string(M) + "/g" + std::to_string(gamma) + "/fold" + std::to_string(fold) +
         "/" + variant_name(v);
}

}  // namespace

EvalResult evaluate_matrix(const ValidatedLog& log, std::vector<int> gammas, std::vector<int> Ms,
                           std::vector<Variant> variants, const EvalOptions& opts,
                           const ScorerFactory& factory) {
  if (gammas.empty() || Ms.empty() || variants.empty()) {
    throw std::invalid_argument("empty evaluation grid");
  }
  std::sort(gammas.begin(), gammas.end());
  gammas.erase(std::unique(gammas.begin(), gammas.end()), gammas.end());
  std::sort(Ms.begin(), Ms.end());
  Ms.erase(std::unique(Ms.begin(), Ms.end()), Ms.end());
  {
    std::vector<Variant> seen;
    for (Variant v : variants) {
      if (std::find(seen.begin(), seen.end(), v) == seen.end()) seen.push_back(v);
    }
    variants = std::move(seen);
  }
  for (int g : gammas) {
    if (g < 1) throw std::invalid_argument("gamma must be >= 1");
  }

  EvalResult result;
  std::vector<Dataset> base;
  base.reserve(Ms.size());
  for (int M : Ms) {
    Dataset ds = build_dataset(log, opts.session, FeaturizerConfig{M, gammas.front(),
                                                                   opts.emit_policy});
    const FoldPlan plan = forward_chain_split(ds.items.size(), opts.part_count, opts.chain);
    result.datasets.push_back({M, ds.items.size(), plan.part_sizes});
    base.push_back(std::move(ds));
  }
  if (!opts.save_models_dir.empty()) {
    std::filesystem::create_directories(opts.save_models_dir);
  }

  struct Task {
    std::size_t mi, gi;
  };
  std::vector<Task> tasks;
  for (std::size_t mi = 0; mi < Ms.size(); ++mi) {
    for (std::size_t gi = 0; gi < gammas.size(); ++gi) tasks.push_back({mi, gi});
  }
  const std::size_t V = variants.size();
  result.cells.assign(tasks.size() * V, EvalCell{});
  std::vector<std::exception_ptr> task_errors(tasks.size());

  auto run_task = [&](std::size_t ti) {
    const int M = Ms[tasks[ti].mi];
    const int gamma = gammas[tasks[ti].gi];
    std::vector<DatasetItem> items = base[tasks[ti].mi].items;
    for (auto& item : items) item.label = item.raw_y > gamma ? 1 : 0;
    const FoldPlan plan = forward_chain_split(items.size(), opts.part_count, opts.chain);
    const std::size_t nf = plan.folds.size();
    EvalCell* cell0 = &result.cells[ti * V];
    for (std::size_t vi = 0; vi < V; ++vi) {
      EvalCell& c = cell0[vi];
      c.variant = variants[vi];
      c.M = M;
      c.gamma = gamma;
      c.fold_aucs.assign(nf, std::numeric_limits<double>::quiet_NaN());
      c.fold_seeds.assign(nf, 0);
      if (opts.emit_roc) c.roc.assign(nf, {});
    }
    for (std::size_t k = 0; k < nf; ++k) {
      const Fold& f = plan.folds[k];
      const std::span<const DatasetItem> train(items.data() + f.train_begin,
                                               f.train_end - f.train_begin);
      const std::span<const DatasetItem> test(items.data() + f.test_begin,
                                              f.test_end - f.test_begin);
      std::vector<int> test_labels;
      test_labels.reserve(test.size());
      for (const auto& item : test) test_labels.push_back(item.label);
      const bool degenerate =
          std::all_of(test_labels.begin(), test_labels.end(), [](int l) { return l == 1; }) ||
          std::all_of(test_labels.begin(), test_labels.end(), [](int l) { return l == 0; });
      for (std::size_t vi = 0; vi < V; ++vi) {
        EvalCell& c = cell0[vi];
        const std::uint64_t cell_seed =
            derive_seed(opts.seed, cell_stream_name(M, gamma, static_cast<int>(k + 1), c.variant));
        c.fold_seeds[k] = cell_seed;
        if (degenerate) {
          c.degenerate_folds.push_back(static_cast<int>(k + 1));
          continue;
        }
        Scorer scorer;
        if (factory) {
          scorer = factory(c.variant, M, gamma, static_cast<int>(k + 1), train, cell_seed);
        } else {
          ModelConfig mc = opts.model;
          mc.variant = c.variant;
          mc.M = M;
          mc.seed = cell_seed;
          auto model = std::make_shared<TrainedModel>(train_model(train, mc));
          if (!opts.save_models_dir.empty()) {
            const auto path = std::filesystem::path(opts.save_models_dir) /
                              model_filename(c.variant, M, gamma, static_cast<int>(k + 1));
            std::ofstream out(path, std::ios::binary);
            out << model->to_json();
            if (!out) throw std::runtime_error("cannot write " + path.string());
          }
          scorer = [model](const DatasetItem& item) { return model->predict_proba(item); };
        }
        std::vector<double> scores;
        scores.reserve(test.size());
        for (const auto& item : test) scores.push_back(scorer(item));
        c.fold_aucs[k] = auc(scores, test_labels);
        if (opts.emit_roc) c.roc[k] = roc_curve(scores, test_labels);
      }
    }
    for (std::size_t vi = 0; vi < V; ++vi) aggregate_cell(cell0[vi]);
  };

  const int jobs = std::max(1, opts.jobs);
  if (jobs == 1 || tasks.size() < 2) {
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) run_task(ti);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        const std::size_t ti = next.fetch_add(1);
        if (ti >= tasks.size()) return;
        try {
          run_task(ti);
        } catch (...) {
          task_errors[ti] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(jobs), tasks.size());
    pool.reserve(w);
    for (std::size_t i = 0; i < w; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (const auto& err : task_errors) {
      if (err) std::rethrow_exception(err);
    }
  }
  return result;
}

// ---- reports -------------------------------------------------------------

namespace {

std::string format_mean_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f±%.3f", mean, std);
  return buf;
}

const EvalCell* find_cell(const EvalResult& result, int M, int gamma, Variant v) {
  for (const auto& c : result.cells) {
    if (c.M == M && c.gamma == gamma && c.variant == v) return &c;
  }
  return nullptr;
}

std::string join_folds(const std::vector<int>& folds) {
  std::string out;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(folds[i]);
  }
  return out;
}

}  // namespace

std::string render_report_markdown(const EvalResult& result, int M,
                                   std::span<const Variant> variants, const EvalOptions& opts) {
  std::vector<int> gammas;
  for (const auto& c : result.cells) {
    if (c.M == M && std::find(gammas.begin(), gammas.end(), c.gamma) == gammas.end()) {
      gammas.push_back(c.gamma);
    }
  }
  std::sort(gammas.begin(), gammas.end());

  std::string doc;
  doc += "# AUC results, " + std::to_string(std::max(opts.part_count - 1, 1)) +
         "-fold forward chaining. For M = " + std::to_string(M) + ".\n\n";
  doc += "Chaining: " + chain_mode_name(opts.chain) + " window over " +
         std::to_string(opts.part_count) + " time parts. Cells show mean±std of the fold AUCs\n";
  doc += "(population std). Bold marks every cell within 5e-4 of its row maximum.\n\n";

  doc += "| gamma |";
  for (Variant v : variants) doc += " " + variant_name(v) + " |";
  doc += "\n|---:|";
  for (std::size_t i = 0; i < variants.size(); ++i) doc += "---|";
  doc += "\n";

  std::vector<std::string> footnotes;
  for (int gamma : gammas) {
    double row_max = -1;
    for (Variant v : variants) {
      const EvalCell* c = find_cell(result, M, gamma, v);
      if (c && std::isfinite(c->mean_auc)) row_max = std::max(row_max, c->mean_auc);
    }
    doc += "| " + std::to_string(gamma) + " |";
    for (Variant v : variants) {
      const EvalCell* c = find_cell(result, M, gamma, v);
      std::string text;
      if (!c || !std::isfinite(c->mean_auc)) {
        text = "degenerate";
      } else {
        text = format_mean_std(c->mean_auc, c->std_auc);
        if (row_max >= 0 && c->mean_auc >= row_max - 5e-4) text = "**" + text + "**";
      }
      if (c && !c->degenerate_folds.empty()) {
        text += " [*]";
        footnotes.push_back("gamma=" + std::to_string(gamma) + " " + variant_name(v) +
                            ": fold " + join_folds(c->degenerate_folds) +
                            " degenerate (single-class test part)");
      }
      doc += " " + text + " |";
    }
    doc += "\n";
  }
  if (!footnotes.empty()) {
    doc += "\n";
    for (const auto& note : footnotes) doc += "[*] " + note + "\n";
  }
  return doc;
}

std::string render_report_json(const EvalResult& result, std::span<const Variant> variants,
                               const EvalOptions& opts) {
  nlohmann::json j;
  j["tool_version"] = kVersion;
  j["seed"] = opts.seed;
  j["chain_mode"] = chain_mode_name(opts.chain);
  j["part_count"] = opts.part_count;
  j["fold_count"] = opts.part_count - 1;
  j["std_kind"] = "population";
  j["gap_minutes"] = opts.session.gap_minutes;
  j["emit_policy"] = emit_policy_name(opts.emit_policy);
  {
    nlohmann::json names = nlohmann::json::array();
    for (Variant v : variants) names.push_back(variant_name(v));
    j["models"] = std::move(names);
  }
  j["model_config"] = {{"epochs", opts.model.epochs},
                       {"batch_size", opts.model.batch_size},
                       {"adam", {{"lr", opts.model.adam.lr},
                                 {"beta1", opts.model.adam.beta1},
                                 {"beta2", opts.model.adam.beta2},
                                 {"epsilon", opts.model.adam.epsilon}}},
                       {"lstm_hidden", opts.model.lstm_hidden},
                       {"feature_dense", opts.model.feature_dense},
                       {"head", opts.model.head},
                       {"dnn_layers", opts.model.dnn_layers},
                       {"tree_count", opts.model.tree_count},
                       {"max_depth", opts.model.max_depth},
                       {"min_leaf", opts.model.min_leaf},
                       {"l2_lambda", opts.model.l2_lambda},
                       {"lr_epochs", opts.model.lr_epochs}};
  {
    nlohmann::json datasets = nlohmann::json::array();
    for (const auto& d : result.datasets) {
      datasets.push_back(
          {{"M", d.M}, {"items", d.item_count}, {"part_sizes", d.part_sizes}});
    }
    j["datasets"] = std::move(datasets);
  }
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : result.cells) {
    nlohmann::json cj;
    cj["model"] = variant_name(c.variant);
    cj["M"] = c.M;
    cj["gamma"] = c.gamma;
    cj["fold_aucs"] = c.fold_aucs;  // NaN serializes as null
    cj["degenerate_folds"] = c.degenerate_folds;
    cj["fold_seeds"] = c.fold_seeds;
    cj["mean_auc"] = c.mean_auc;
    cj["std_auc"] = c.std_auc;
    if (!c.roc.empty()) {
      nlohmann::json folds = nlohmann::json::array();
      for (const auto& curve : c.roc) {
        nlohmann::json points = nlohmann::json::array();
        for (const auto& p : curve) points.push_back({p.fpr, p.tpr, p.threshold});
        folds.push_back(std::move(points));
      }
      cj["roc"] = std::move(folds);
    }
    cells.push_back(std::move(cj));
  }
  j["cells"] = std::move(cells);
  return j.dump(2) + "\n";
}

}  // namespace engage
