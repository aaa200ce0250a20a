#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "engage/evaluation.hpp"
#include "engage/featurizer.hpp"
#include "engage/ingest.hpp"
#include "engage/models.hpp"
#include "engage/nn.hpp"
#include "engage/rng.hpp"
#include "engage/sessionizer.hpp"
#include "engage/synth.hpp"
#include "engage/version.hpp"

namespace py = pybind11;
using namespace engage;

namespace {

ValidatedLog log_from_csv(const std::string& csv, bool zooniverse) {
  auto events = zooniverse ? parse_zooniverse_export(csv) : parse_event_log(csv);
  return validate_log(std::move(events));
}

}  // namespace

PYBIND11_MODULE(_engage, m) {
  m.doc() = "volunteer engagement prediction pipeline (C++ core)";

  m.def("version", [] { return std::string(kVersion); });

  m.def(
      "generate_log_csv",
      [](int users, std::uint64_t seed, double signal) {
        SynthConfig config;
        config.user_count = users;
        config.seed = seed;
        config.signal_strength = signal;
        return write_event_log(generate_log(config));
      },
      py::arg("users"), py::arg("seed") = 0, py::arg("signal") = 0.5,
      "Seeded synthetic event log as native CSV text.");

  m.def(
      "log_stats",
      [](const std::string& csv, std::size_t top_k, bool zooniverse) {
        const auto log = log_from_csv(csv, zooniverse);
        const LogSummary s = descriptive_stats(log, top_k);
        py::dict d;
        d["total_annotations"] = s.total_annotations;
        d["total_users"] = s.total_users;
        d["top_k_share"] = s.top_k_share;
        d["mean_annotations_logged_in"] = s.mean_annotations_logged_in;
        d["mean_annotations_anonymous"] = s.mean_annotations_anonymous;
        d["welch_t"] = s.welch_t;
        d["welch_p"] = s.welch_p;
        return d;
      },
      py::arg("csv"), py::arg("top_k") = 20, py::arg("zooniverse") = false,
      "Descriptive statistics of an event log given as CSV text.");

  m.def(
      "session_sizes",
      [](const std::string& csv, int gap_minutes, bool zooniverse) {
        const auto log = log_from_csv(csv, zooniverse);
        const auto sessions = sessionize_log(log, SessionizerConfig{gap_minutes});
        py::dict d;
        for (const auto& user : log.users) {
          py::list sizes;
          for (const auto& s : sessions) {
            if (s.user_id == user.user_id) sizes.append(s.events.size());
          }
          d[py::str(user.user_id)] = sizes;
        }
        return d;
      },
      py::arg("csv"), py::arg("gap_minutes") = 30, py::arg("zooniverse") = false,
      "Annotations per session, keyed by user.");

  m.def(
      "build_dataset_csv",
      [](const std::string& csv, int M, int gamma, int gap_minutes, const std::string& policy,
         bool zooniverse) {
        const auto log = log_from_csv(csv, zooniverse);
        const FeaturizerConfig fc{M, gamma, emit_policy_from(policy)};
        return write_dataset_csv(build_dataset(log, SessionizerConfig{gap_minutes}, fc));
      },
      py::arg("csv"), py::arg("M") = 5, py::arg("gamma") = 5, py::arg("gap_minutes") = 30,
      py::arg("emit_policy") = "full", py::arg("zooniverse") = false,
      "Featurized dataset as CSV text.");

  m.def(
      "auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        return auc(std::span<const double>(scores), std::span<const int>(labels));
      },
      py::arg("scores"), py::arg("labels"),
      "Mann-Whitney rank AUC with midrank tie handling.");

  m.def(
      "gradcheck",
      [](const std::string& model, std::uint64_t seed) {
        return nn::gradcheck_probe(model, seed, 5, 7, 8);
      },
      py::arg("model"), py::arg("seed") = 0,
      "Max relative error of analytic gradients vs central finite differences.");

  m.def(
      "evaluate_json",
      [](const std::string& csv, std::vector<int> gammas, std::vector<int> Ms,
         const std::vector<std::string>& models, std::uint64_t seed, int epochs, int jobs,
         int gap_minutes, const std::string& emit_policy, bool zooniverse) {
        const auto log = log_from_csv(csv, zooniverse);
        std::vector<Variant> variants;
        for (const auto& name : models) variants.push_back(variant_from(name));
        EvalOptions opts;
        opts.session.gap_minutes = gap_minutes;
        opts.emit_policy = emit_policy_from(emit_policy);
        opts.seed = seed;
        opts.jobs = jobs;
        opts.model.epochs = epochs;
        const EvalResult result = evaluate_matrix(log, std::move(gammas), std::move(Ms),
                                                  variants, opts);
        return render_report_json(result, variants, opts);
      },
      py::arg("csv"), py::arg("gammas"), py::arg("Ms"), py::arg("models"), py::arg("seed") = 0,
      py::arg("epochs") = 10, py::arg("jobs") = 1, py::arg("gap_minutes") = 30,
      py::arg("emit_policy") = "full", py::arg("zooniverse") = false,
      "Full forward-chaining evaluation; returns the report JSON text.");
}
