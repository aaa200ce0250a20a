// End-to-end tests of the engage binary. Each case shells out to the real
// executable (path in ENGAGE_CLI, set by the test harness) with stdout and
// stderr captured to files, then inspects exit codes and produced artifacts.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "engage/manifest.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string& cli_path() {
  static const std::string path = [] {
    const char* env = std::getenv("ENGAGE_CLI");
    REQUIRE_MESSAGE(env != nullptr, "ENGAGE_CLI must point at the engage binary");
    REQUIRE_MESSAGE(fs::exists(env), "ENGAGE_CLI points at a missing file");
    return std::string(env);
  }();
  return path;
}

const fs::path& scratch_root() {
  static const fs::path root = [] {
    std::string tmpl = (fs::temp_directory_path() / "engage_cli_XXXXXX").string();
    char* made = mkdtemp(tmpl.data());
    REQUIRE(made != nullptr);
    return fs::path(made);
  }();
  return root;
}

fs::path fresh_dir(const std::string& name) {
  static int counter = 0;
  const fs::path dir = scratch_root() / (name + "_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path cap = scratch_root() / ("cap_" + std::to_string(counter++));
  fs::create_directories(cap);
  const fs::path out_file = cap / "stdout.txt";
  const fs::path err_file = cap / "stderr.txt";
  const std::string cmd = cli_path() + " " + args + " > " + out_file.string() + " 2> " +
                          err_file.string();
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  RunResult r;
  r.exit_code = WEXITSTATUS(status);
  r.out = engage::read_file(out_file.string());
  r.err = engage::read_file(err_file.string());
  return r;
}

// A tiny native log: two logged-in users and one anonymous, sorted by user then time.
// "ada" has two sessions (gap 3600 s), the others one each.
const char* kSmallLog =
    "user_id,logged_in,timestamp,annotation_id\n"
    "ada,1,2020-01-01T00:00:00Z,a1\n"
    "ada,1,2020-01-01T00:01:00Z,a2\n"
    "ada,1,2020-01-01T01:01:00Z,a3\n"
    "anon-1,0,2020-01-01T00:00:30Z,n1\n"
    "bob,1,2020-01-02T00:00:00Z,b1\n"
    "bob,1,2020-01-02T00:00:40Z,b2\n";

fs::path write_small_log(const fs::path& dir) {
  const fs::path path = dir / "small.csv";
  engage::write_file(path.string(), kSmallLog);
  return path;
}

fs::path make_synth_log(const fs::path& dir, int users, int seed, double signal) {
  const fs::path path = dir / "log.csv";
  std::ostringstream cmd;
  cmd << "synth --users " << users << " --seed " << seed << " --signal " << signal
      << " --out " << path.string();
  const RunResult r = run_cli(cmd.str());
  REQUIRE(r.exit_code == 0);
  REQUIRE(fs::exists(path));
  return path;
}

}  // namespace

TEST_CASE("cli: help and usage errors exit with the right codes") {
  const RunResult help = run_cli("--help");
  CHECK(help.exit_code == 0);
  CHECK(help.out.find("volunteer engagement") != std::string::npos);
  CHECK(help.out.find("eval") != std::string::npos);

  CHECK(run_cli("").exit_code == 2);            // a subcommand is required
  CHECK(run_cli("frobnicate").exit_code == 2);  // unknown subcommand
  CHECK(run_cli("stats").exit_code == 2);       // missing --log
  CHECK(run_cli("build --log x.csv").exit_code == 2);  // missing --out

  const RunResult missing = run_cli("stats --log /nonexistent/path.csv");
  CHECK(missing.exit_code == 2);
  CHECK(missing.err.find("error") != std::string::npos);
}

TEST_CASE("cli: stats prints summary JSON and honors --out") {
  const fs::path dir = fresh_dir("stats");
  const fs::path log = write_small_log(dir);

  const RunResult r = run_cli("stats --log " + log.string() + " --top-k 2");
  REQUIRE(r.exit_code == 0);
  const json j = json::parse(r.out);
  CHECK(j.at("total_annotations").get<int>() == 6);
  CHECK(j.at("total_users").get<int>() == 3);
  CHECK(j.at("top_k").get<int>() == 2);
  // ada(3) + bob(2) out of 6 events.
  CHECK(j.at("top_k_share").get<double>() == doctest::Approx(5.0 / 6.0));
  CHECK(j.at("mean_annotations_logged_in").get<double>() == doctest::Approx(2.5));
  CHECK(j.at("mean_annotations_anonymous").get<double>() == doctest::Approx(1.0));
  // A single anonymous user gives Welch nothing to work with.
  CHECK(j.at("welch_t").is_null());
  CHECK(j.at("welch_p").is_null());

  const fs::path out = dir / "stats.json";
  const RunResult rw =
      run_cli("stats --log " + log.string() + " --top-k 2 --out " + out.string());
  REQUIRE(rw.exit_code == 0);
  CHECK(engage::read_file(out.string()) == rw.out);

  const json manifest = json::parse(engage::read_file(out.string() + ".manifest.json"));
  CHECK(manifest.at("subcommand").get<std::string>() == "stats");
  REQUIRE(manifest.at("inputs").size() == 1);
  CHECK(manifest.at("inputs")[0].at("path").get<std::string>() == log.string());
  CHECK(manifest.at("inputs")[0].at("fnv1a64").get<std::string>() ==
        engage::fnv1a64_hex(engage::fnv1a64_file(log.string())));
  CHECK(manifest.dump().find("time") == std::string::npos);

  CHECK(run_cli("stats --log " + log.string() + " --top-k 99").exit_code == 2);
  CHECK(run_cli("stats --log " + log.string() + " --zooniverse").exit_code == 2);
}

TEST_CASE("cli: sessionize reports session structure") {
  const fs::path dir = fresh_dir("sessionize");
  const fs::path log = write_small_log(dir);

  const RunResult r = run_cli("sessionize --log " + log.string() + " --stats");
  REQUIRE(r.exit_code == 0);
  const json j = json::parse(r.out);
  CHECK(j.at("gap_minutes").get<int>() == 30);
  CHECK(j.at("session_count").get<int>() == 4);
  // Sizes: ada [2,1], anon-1 [1], bob [2] -> histogram {1:2, 2:2}.
  CHECK(j.at("size_histogram").at("1").get<int>() == 2);
  CHECK(j.at("size_histogram").at("2").get<int>() == 2);
  REQUIRE(j.at("users").size() == 3);
  CHECK(j.at("users")[0].at("user_id").get<std::string>() == "ada");
  CHECK(j.at("users")[0].at("session_count").get<int>() == 2);

  // A one-hour threshold merges ada's two sessions.
  const RunResult wide = run_cli("sessionize --log " + log.string() + " --gap-min 61");
  REQUIRE(wide.exit_code == 0);
  CHECK(json::parse(wide.out).at("session_count").get<int>() == 3);

  CHECK(run_cli("sessionize --log " + log.string() + " --gap-min 0").exit_code == 2);
}

TEST_CASE("cli: synth is seed-deterministic and validates its knobs") {
  const fs::path dir = fresh_dir("synth");
  const fs::path log = dir / "log.csv";
  const std::string cmd = "synth --users 12 --seed 5 --signal 0.4 --emit-config --out " +
                          log.string();

  REQUIRE(run_cli(cmd).exit_code == 0);
  const std::string log1 = engage::read_file(log.string());
  const std::string cfg1 = engage::read_file(log.string() + ".config.json");
  const std::string man1 = engage::read_file(log.string() + ".manifest.json");

  // Same command again: every artifact byte-identical.
  REQUIRE(run_cli(cmd).exit_code == 0);
  CHECK(engage::read_file(log.string()) == log1);
  CHECK(engage::read_file(log.string() + ".config.json") == cfg1);
  CHECK(engage::read_file(log.string() + ".manifest.json") == man1);

  const json cfg = json::parse(cfg1);
  CHECK(cfg.at("user_count").get<int>() == 12);
  CHECK(cfg.at("seed").get<int>() == 5);
  CHECK(cfg.at("signal_strength").get<double>() == doctest::Approx(0.4));
  CHECK(cfg.at("logged_in_fraction").get<double>() == doctest::Approx(0.63));

  const json man = json::parse(man1);
  CHECK(man.at("subcommand").get<std::string>() == "synth");
  CHECK(man.at("seed").get<int>() == 5);
  CHECK(man.at("inputs").empty());
  CHECK(man.at("outputs").size() == 2);

  // A different seed changes the log.
  const fs::path other = dir / "other.csv";
  REQUIRE(run_cli("synth --users 12 --seed 6 --signal 0.4 --out " + other.string())
              .exit_code == 0);
  CHECK(engage::read_file(other.string()) != log1);

  CHECK(run_cli("synth --users 0 --out " + (dir / "x.csv").string()).exit_code == 2);
  CHECK(run_cli("synth --users 5 --signal 1.5 --out " + (dir / "y.csv").string())
            .exit_code == 2);
}

TEST_CASE("cli: build writes a reproducible dataset bundle") {
  const fs::path dir = fresh_dir("build");
  const fs::path log = make_synth_log(dir, 10, 3, 0.5);

  const fs::path out_a = dir / "a";
  const std::string base = "build --log " + log.string() +
                           " --M 3 --gamma 2 --emit-policy pad --out ";
  REQUIRE(run_cli(base + out_a.string()).exit_code == 0);

  const std::string csv = engage::read_file((out_a / "dataset.csv").string());
  const std::string header = csv.substr(0, csv.find('\n'));
  CHECK(header ==
        "user_id,timestamp,session_index,raw_y,label,delta_0,delta_1,delta_2,"
        "f1,f2,f3,f4,f5,f6,f7");

  const json sidecar = json::parse(engage::read_file((out_a / "dataset.json").string()));
  CHECK(sidecar.at("M").get<int>() == 3);
  CHECK(sidecar.at("gamma").get<int>() == 2);
  CHECK(sidecar.at("emit_policy").get<std::string>() == "pad");

  const json manifest = json::parse(engage::read_file((out_a / "manifest.json").string()));
  CHECK(manifest.at("subcommand").get<std::string>() == "build");
  CHECK(manifest.at("inputs")[0].at("fnv1a64").get<std::string>() ==
        engage::fnv1a64_hex(engage::fnv1a64_file(log.string())));
  const std::size_t rows = static_cast<std::size_t>(
      std::count(csv.begin(), csv.end(), '\n')) - 1;
  CHECK(manifest.at("config").at("items").get<std::size_t>() == rows);
  CHECK(rows > 0);

  // Second run, different directory: identical dataset bytes.
  const fs::path out_b = dir / "b";
  REQUIRE(run_cli(base + out_b.string()).exit_code == 0);
  CHECK(engage::read_file((out_b / "dataset.csv").string()) == csv);

  CHECK(run_cli("build --log " + log.string() + " --gamma 0 --out " +
                (dir / "g0").string())
            .exit_code == 2);
  CHECK(run_cli("build --log " + log.string() + " --M 0 --out " + (dir / "m0").string())
            .exit_code == 2);
  CHECK(run_cli("build --log " + log.string() + " --emit-policy bogus --out " +
                (dir / "ep").string())
            .exit_code == 2);
}

TEST_CASE("cli: build on a header-only log warns and emits an empty dataset") {
  const fs::path dir = fresh_dir("build_empty");
  const fs::path log = dir / "empty.csv";
  engage::write_file(log.string(), "user_id,logged_in,timestamp,annotation_id\n");

  const fs::path out = dir / "out";
  const RunResult r =
      run_cli("build --log " + log.string() + " --M 2 --gamma 1 --out " + out.string());
  REQUIRE(r.exit_code == 0);
  CHECK(r.err.find("warning") != std::string::npos);
  const std::string csv = engage::read_file((out / "dataset.csv").string());
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1);  // header only
}

TEST_CASE("cli: eval emits reports, reruns byte-identically, saves models") {
  const fs::path dir = fresh_dir("eval");
  const fs::path log = make_synth_log(dir, 40, 11, 0.8);

  const fs::path out_a = dir / "a";
  const std::string base = "eval --log " + log.string() +
                           " --gammas 2 --Ms 2 --models lr --seed 5 --epochs 2 "
                           "--emit-policy pad --save-models --out ";
  REQUIRE(run_cli(base + out_a.string()).exit_code == 0);

  const std::string md = engage::read_file((out_a / "report_M2.md").string());
  CHECK(md.find("# AUC results, 4-fold forward chaining. For M = 2.") == 0);
  CHECK(md.find("| gamma | lstm | dnn | rf | lr |") == std::string::npos);
  CHECK(md.find("| gamma | lr |") != std::string::npos);

  const std::string js = engage::read_file((out_a / "report.json").string());
  const json report = json::parse(js);
  CHECK(report.at("seed").get<int>() == 5);
  CHECK(report.at("models") == json::array({"lr"}));
  REQUIRE(report.at("cells").size() == 1);
  CHECK(report.at("cells")[0].at("M").get<int>() == 2);
  CHECK(report.at("cells")[0].at("gamma").get<int>() == 2);
  CHECK(report.at("cells")[0].at("fold_aucs").size() == 4);

  for (int fold = 1; fold <= 4; ++fold) {
    const fs::path model =
        out_a / "models" / ("lr_M2_g2_fold" + std::to_string(fold) + ".model.json");
    CHECK_MESSAGE(fs::exists(model), model.string());
  }

  // Rerun with identical flags into another directory: report.json byte-identical.
  const fs::path out_b = dir / "b";
  REQUIRE(run_cli(base + out_b.string()).exit_code == 0);
  CHECK(engage::read_file((out_b / "report.json").string()) == js);

  const RunResult bad_model = run_cli(
      "eval --log " + log.string() + " --models lr,xgb --out " + (dir / "bad").string());
  CHECK(bad_model.exit_code == 2);
  CHECK(bad_model.err.find("lstm") != std::string::npos);
  CHECK(bad_model.err.find("lr") != std::string::npos);

  CHECK(run_cli("eval --log " + log.string() + " --gammas 2 --Ms 2 --models lr --chain "
                "zigzag --out " +
                (dir / "chain").string())
            .exit_code == 2);
}

TEST_CASE("cli: eval rejects a log too small to chain") {
  const fs::path dir = fresh_dir("eval_tiny");
  const fs::path log = dir / "tiny.csv";
  engage::write_file(log.string(),
                     "user_id,logged_in,timestamp,annotation_id\n"
                     "u,1,2020-01-01T00:00:00Z,e1\n"
                     "u,1,2020-01-01T00:00:30Z,e2\n"
                     "u,1,2020-01-01T00:01:00Z,e3\n");
  CHECK(run_cli("eval --log " + log.string() +
                " --gammas 1 --Ms 1 --models lr --emit-policy pad --out " +
                (dir / "out").string())
            .exit_code == 2);
}

TEST_CASE("cli: gradcheck reports the max relative error on stdout") {
  const RunResult dnn = run_cli("gradcheck --model dnn --seed 7");
  REQUIRE(dnn.exit_code == 0);
  const std::string prefix = "model dnn seed 7 max relative gradient error ";
  REQUIRE(dnn.out.rfind(prefix, 0) == 0);
  CHECK(std::stod(dnn.out.substr(prefix.size())) < 1e-4);

  const RunResult lstm = run_cli("gradcheck --model lstm --seed 3 --M 3 --batch 4");
  REQUIRE(lstm.exit_code == 0);
  REQUIRE(lstm.out.rfind("model lstm seed 3", 0) == 0);

  CHECK(run_cli("gradcheck --model rf").exit_code == 2);
  CHECK(run_cli("gradcheck --model dnn --batch 0").exit_code == 2);
}
