#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "engage/errors.hpp"
#include "engage/evaluation.hpp"
#include "engage/featurizer.hpp"
#include "engage/ingest.hpp"
#include "engage/manifest.hpp"
#include "engage/models.hpp"
#include "engage/nn.hpp"
#include "engage/rng.hpp"
#include "engage/sessionizer.hpp"
#include "engage/synth.hpp"
#include "engage/version.hpp"
#include "json.hpp"

namespace {

using namespace engage;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

ValidatedLog load_log(const std::string& path, bool zooniverse) {
  const std::string text = read_file(path);
  auto events = zooniverse ? parse_zooniverse_export(text) : parse_event_log(text);
  return validate_log(std::move(events));
}

double json_safe(double x) { return x; }  // NaN serializes as null, which is intended

nlohmann::json summary_json(const LogSummary& s, std::size_t top_k, int gap_minutes) {
  nlohmann::json j;
  j["total_annotations"] = s.total_annotations;
  j["total_users"] = s.total_users;
  j["top_k"] = top_k;
  j["top_k_share"] = json_safe(s.top_k_share);
  j["mean_annotations_logged_in"] = json_safe(s.mean_annotations_logged_in);
  j["mean_annotations_anonymous"] = json_safe(s.mean_annotations_anonymous);
  j["welch_t"] = json_safe(s.welch_t);
  j["welch_p"] = json_safe(s.welch_p);
  j["gap_minutes"] = gap_minutes;
  return j;
}

int parse_jobs_default() {
  const char* env = std::getenv("ENGAGE_JOBS");
  if (!env) return 1;
  try {
    const int jobs = std::stoi(env);
    return jobs >= 1 ? jobs : 1;
  } catch (const std::exception&) {
    return 1;
  }
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(part, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string("bad ") + what + " value '" + part + "'");
    }
    if (used != part.size()) {
      throw std::invalid_argument(std::string("bad ") + what + " value '" + part + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument(std::string("empty ") + what + " list");
  return out;
}

// ---- subcommand bodies ---------------------------------------------------

struct StatsArgs {
  std::string log;
  bool zooniverse = false;
  std::size_t top_k = 20;
  int gap_minutes = 30;
  std::string out;
};

int cmd_stats(const StatsArgs& a) {
  const ValidatedLog log = load_log(a.log, a.zooniverse);
  const LogSummary s = descriptive_stats(log, a.top_k);
  const nlohmann::json j = summary_json(s, a.top_k, a.gap_minutes);
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!a.out.empty()) {
    write_file(a.out, text);
    nlohmann::json config{{"log", a.log},
                          {"zooniverse", a.zooniverse},
                          {"top_k", a.top_k}};
    const auto manifest = run_manifest("stats", 0, config, {a.log}, {a.out});
    write_file(a.out + ".manifest.json", manifest.dump(2) + "\n");
  }
  return kExitOk;
}

struct SessionizeArgs {
  std::string log;
  bool zooniverse = false;
  int gap_minutes = 30;
  bool stats = false;
  std::string out;
};

int cmd_sessionize(const SessionizeArgs& a) {
  const ValidatedLog log = load_log(a.log, a.zooniverse);
  const SessionizerConfig sc{a.gap_minutes};
  const auto sessions = sessionize_log(log, sc);

  nlohmann::json j;
  j["gap_minutes"] = a.gap_minutes;
  j["session_count"] = sessions.size();
  nlohmann::json users = nlohmann::json::array();
  std::map<std::size_t, std::size_t> size_histogram;
  for (const auto& user : log.users) {
    std::vector<Session> mine;
    for (const auto& s : sessions) {
      if (s.user_id == user.user_id) mine.push_back(s);
    }
    const SessionStats st = session_stats(mine);
    for (std::size_t c : st.counts) ++size_histogram[c];
    if (a.stats) {
      nlohmann::json uj;
      uj["user_id"] = st.user_id;
      uj["session_count"] = st.session_count();
      uj["session_sizes"] = st.counts;
      nlohmann::json gaps = nlohmann::json::array();
      for (const auto& g : st.mean_gaps) {
        if (g) gaps.push_back(*g);
        else gaps.push_back(nullptr);
      }
      uj["mean_gaps_s"] = std::move(gaps);
      users.push_back(std::move(uj));
    }
  }
  {
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [size, count] : size_histogram) hist[std::to_string(size)] = count;
    j["size_histogram"] = std::move(hist);
  }
  if (a.stats) j["users"] = std::move(users);
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!a.out.empty()) {
    write_file(a.out, text);
    nlohmann::json config{{"log", a.log},
                          {"zooniverse", a.zooniverse},
                          {"gap_minutes", a.gap_minutes},
                          {"stats", a.stats}};
    const auto manifest = run_manifest("sessionize", 0, config, {a.log}, {a.out});
    write_file(a.out + ".manifest.json", manifest.dump(2) + "\n");
  }
  return kExitOk;
}

struct BuildArgs {
  std::string log;
  bool zooniverse = false;
  int M = 5;
  int gamma = 5;
  int gap_minutes = 30;
  std::string emit_policy = "full";
  std::string out_dir;
};

int cmd_build(const BuildArgs& a) {
  const FeaturizerConfig fc{a.M, a.gamma, emit_policy_from(a.emit_policy)};
  Dataset dataset;
  dataset.config = fc;
  bool empty_log = false;
  try {
    const ValidatedLog log = load_log(a.log, a.zooniverse);
    dataset = build_dataset(log, SessionizerConfig{a.gap_minutes}, fc);
  } catch (const EmptyLogError&) {
    empty_log = true;
  }
  if (empty_log) {
    std::cerr << "warning: " << a.log << " holds no events; writing an empty dataset\n";
  }
  std::filesystem::create_directories(a.out_dir);
  const auto dir = std::filesystem::path(a.out_dir);
  const std::string csv_path = (dir / "dataset.csv").string();
  const std::string sidecar_path = (dir / "dataset.json").string();
  write_file(csv_path, write_dataset_csv(dataset));
  write_file(sidecar_path, write_dataset_sidecar(fc));
  nlohmann::json config{{"log", a.log},
                        {"zooniverse", a.zooniverse},
                        {"M", a.M},
                        {"gamma", a.gamma},
                        {"gap_minutes", a.gap_minutes},
                        {"emit_policy", emit_policy_name(fc.emit_policy)},
                        {"items", dataset.items.size()}};
  const auto manifest =
      run_manifest("build", 0, config, {a.log}, {csv_path, sidecar_path});
  write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  return kExitOk;
}

struct EvalArgs {
  std::string log;
  bool zooniverse = false;
  std::string gammas = "2,5,8,10,15,20,25,50,75";
  std::string Ms = "5,10";
  std::string models = "lstm,dnn,rf,lr";
  std::uint64_t seed = 0;
  int gap_minutes = 30;
  std::string emit_policy = "full";
  std::string chain = "expanding";
  int jobs = 1;
  int epochs = 10;
  bool save_models = false;
  bool emit_roc = false;
  std::string out_dir;
};

int cmd_eval(const EvalArgs& a) {
  const std::vector<int> gammas = parse_int_list(a.gammas, "gamma");
  const std::vector<int> Ms = parse_int_list(a.Ms, "M");
  std::vector<Variant> variants;
  {
    std::stringstream ss(a.models);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (!part.empty()) variants.push_back(variant_from(part));
    }
    if (variants.empty()) throw std::invalid_argument("empty model list");
  }

  EvalOptions opts;
  opts.session.gap_minutes = a.gap_minutes;
  opts.emit_policy = emit_policy_from(a.emit_policy);
  opts.chain = chain_mode_from(a.chain);
  opts.jobs = a.jobs;
  opts.seed = a.seed;
  opts.model.epochs = a.epochs;
  opts.emit_roc = a.emit_roc;
  std::filesystem::create_directories(a.out_dir);
  const auto dir = std::filesystem::path(a.out_dir);
  if (a.save_models) opts.save_models_dir = (dir / "models").string();

  const ValidatedLog log = load_log(a.log, a.zooniverse);
  const EvalResult result = evaluate_matrix(log, gammas, Ms, variants, opts);

  std::vector<std::string> outputs;
  for (const auto& ds : result.datasets) {
    const std::string path = (dir / ("report_M" + std::to_string(ds.M) + ".md")).string();
    write_file(path, render_report_markdown(result, ds.M, variants, opts));
    outputs.push_back(path);
  }
  const std::string json_path = (dir / "report.json").string();
  write_file(json_path, render_report_json(result, variants, opts));
  outputs.push_back(json_path);

  nlohmann::json config{{"log", a.log},
                        {"zooniverse", a.zooniverse},
                        {"gammas", gammas},
                        {"Ms", Ms},
                        {"models", a.models},
                        {"gap_minutes", a.gap_minutes},
                        {"emit_policy", emit_policy_name(opts.emit_policy)},
                        {"chain", chain_mode_name(opts.chain)},
                        {"jobs", a.jobs},
                        {"epochs", a.epochs},
                        {"save_models", a.save_models},
                        {"emit_roc", a.emit_roc}};
  const auto manifest = run_manifest("eval", a.seed, config, {a.log}, outputs);
  write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  return kExitOk;
}

struct SynthArgs {
  SynthConfig config;
  bool emit_config = false;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  const auto events = generate_log(a.config);
  write_file(a.out, write_event_log(events));
  std::vector<std::string> outputs{a.out};
  if (a.emit_config) {
    const std::string cfg_path = a.out + ".config.json";
    write_file(cfg_path, synth_config_json(a.config));
    outputs.push_back(cfg_path);
  }
  const auto manifest = run_manifest("synth", a.config.seed,
                                     nlohmann::json::parse(synth_config_json(a.config)), {},
                                     outputs);
  write_file(a.out + ".manifest.json", manifest.dump(2) + "\n");
  return kExitOk;
}

struct GradcheckArgs {
  std::string model = "dnn";
  std::uint64_t seed = 0;
  int M = 5;
  int batch = 8;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  const double err = nn::gradcheck_probe(a.model, a.seed, a.M, 7, a.batch);
  std::cout << "model " << a.model << " seed " << a.seed << " max relative gradient error "
            << err << "\n";
  if (!(err < 1e-4)) {
    std::cerr << "gradient check failed: " << err << " >= 1e-4\n";
    return kExitNumeric;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"volunteer engagement prediction pipeline"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "descriptive statistics of an event log");
  stats_cmd->add_option("--log", stats.log, "event-log CSV")->required();
  stats_cmd->add_flag("--zooniverse", stats.zooniverse, "input is a classification export");
  stats_cmd->add_option("--top-k", stats.top_k, "top-user share size (default 20)");
  stats_cmd->add_option("--out", stats.out, "also write the JSON here (with a manifest)");

  SessionizeArgs sess;
  auto* sess_cmd = app.add_subcommand("sessionize", "split a log into sessions");
  sess_cmd->add_option("--log", sess.log, "event-log CSV")->required();
  sess_cmd->add_flag("--zooniverse", sess.zooniverse, "input is a classification export");
  sess_cmd->add_option("--gap-min", sess.gap_minutes, "session split threshold, minutes");
  sess_cmd->add_flag("--stats", sess.stats, "include per-user session stats");
  sess_cmd->add_option("--out", sess.out, "also write the JSON here (with a manifest)");

  BuildArgs build;
  auto* build_cmd = app.add_subcommand("build", "featurize a log into a dataset");
  build_cmd->add_option("--log", build.log, "event-log CSV")->required();
  build_cmd->add_flag("--zooniverse", build.zooniverse, "input is a classification export");
  build_cmd->add_option("--M", build.M, "delta window width");
  build_cmd->add_option("--gamma", build.gamma, "engagement threshold");
  build_cmd->add_option("--gap-min", build.gap_minutes, "session split threshold, minutes");
  build_cmd->add_option("--emit-policy", build.emit_policy, "full or pad");
  build_cmd->add_option("--out", build.out_dir, "output directory")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "forward-chaining evaluation matrix");
  eval_cmd->add_option("--dataset-log,--log", eval.log, "event-log CSV")->required();
  eval_cmd->add_flag("--zooniverse", eval.zooniverse, "input is a classification export");
  eval_cmd->add_option("--gammas", eval.gammas, "comma-separated thresholds");
  eval_cmd->add_option("--Ms", eval.Ms, "comma-separated window widths");
  eval_cmd->add_option("--models", eval.models, "comma-separated: lstm,dnn,rf,lr");
  eval_cmd->add_option("--seed", eval.seed, "master seed");
  eval_cmd->add_option("--gap-min", eval.gap_minutes, "session split threshold, minutes");
  eval_cmd->add_option("--emit-policy", eval.emit_policy, "full or pad");
  eval_cmd->add_option("--chain", eval.chain, "expanding or sliding");
  eval_cmd->add_option("--jobs", eval.jobs, "concurrent grid tasks (env ENGAGE_JOBS)")
      ->default_val(parse_jobs_default());
  eval_cmd->add_option("--epochs", eval.epochs, "training epochs for the nets");
  eval_cmd->add_flag("--save-models", eval.save_models, "write per-fold model files");
  eval_cmd->add_flag("--emit-roc", eval.emit_roc, "embed ROC points in report.json");
  eval_cmd->add_option("--out", eval.out_dir, "output directory")->required();

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic event log");
  synth_cmd->add_option("--users", synth.config.user_count, "user count")->required();
  synth_cmd->add_option("--seed", synth.config.seed, "generator seed");
  synth_cmd->add_option("--signal", synth.config.signal_strength,
                        "planted signal strength in [0,1]");
  synth_cmd->add_option("--logged-in-fraction", synth.config.logged_in_fraction,
                        "logged-in cohort fraction");
  synth_cmd->add_option("--activity-mean", synth.config.activity_mean,
                        "anonymous mean annotations per user");
  synth_cmd->add_option("--multiplier", synth.config.logged_in_multiplier,
                        "logged-in activity multiplier");
  synth_cmd->add_option("--long-session-prob", synth.config.long_session_prob,
                        "long-session mixture weight");
  synth_cmd->add_option("--long-session-mean", synth.config.long_session_mean,
                        "long-session geometric mean");
  synth_cmd->add_flag("--emit-config", synth.emit_config, "write the resolved config JSON");
  synth_cmd->add_option("--out", synth.out, "output CSV path")->required();

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  grad_cmd->add_option("--model", grad.model, "dnn or lstm")->required();
  grad_cmd->add_option("--seed", grad.seed, "check seed");
  grad_cmd->add_option("--M", grad.M, "delta window width");
  grad_cmd->add_option("--batch", grad.batch, "batch size of the probe");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*stats_cmd) return cmd_stats(stats);
    if (*sess_cmd) return cmd_sessionize(sess);
    if (*build_cmd) return cmd_build(build);
    if (*eval_cmd) return cmd_eval(eval);
    if (*synth_cmd) return cmd_synth(synth);
    if (*grad_cmd) return cmd_gradcheck(grad);
    std::cerr << "no subcommand\n";
    return kExitInput;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
}
