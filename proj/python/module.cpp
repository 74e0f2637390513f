#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "itd/metrics.hpp"
#include "itd/pipeline.hpp"
#include "itd/preprocess.hpp"

namespace py = pybind11;
using namespace itd;

namespace {

pipeline::PipelineConfig make_config(const std::string& config_path,
                                     const std::vector<std::string>& overrides) {
  return pipeline::load_config(config_path, overrides);
}

py::dict run(int code, const std::ostringstream& log) {
  py::dict out;
  out["exit_code"] = code;
  out["log"] = log.str();
  return out;
}

std::vector<metrics::ScoredSequence> to_scored(
    const std::vector<double>& y_m, const std::vector<bool>& abnormal) {
  if (y_m.size() != abnormal.size())
    throw ConfigError("y_m and abnormal must have the same length");
  std::vector<metrics::ScoredSequence> scored;
  for (std::size_t i = 0; i < y_m.size(); ++i)
    scored.push_back({std::to_string(i), y_m[i], abnormal[i]});
  return scored;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "insider-threat detection over activity logs";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);

  m.def("version", [] { return "1.0.0"; });
  m.attr("N_CODES") = 192;

  m.def("encode_code", &prep::encode_code, py::arg("type_id"), py::arg("hour"),
        "Activity code: type_id * 24 + hour_of_day.");

  m.def(
      "default_config",
      [] { return pipeline::config_to_json_text(pipeline::PipelineConfig{}); },
      "Full default configuration as JSON text.");

  m.def(
      "config_hash",
      [](const std::string& config_path,
         const std::vector<std::string>& overrides) {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(pipeline::config_hash(
                          make_config(config_path, overrides))));
        return std::string(buf);
      },
      py::arg("config_path") = "",
      py::arg("overrides") = std::vector<std::string>{});

  // pipeline commands; each returns {"exit_code": int, "log": str}
  m.def(
      "synth",
      [](const std::string& config_path,
         const std::vector<std::string>& overrides) {
        std::ostringstream log;
        return run(pipeline::cmd_synth(make_config(config_path, overrides), log),
                   log);
      },
      py::arg("config_path") = "",
      py::arg("overrides") = std::vector<std::string>{},
      "Generate a seeded synthetic log set under out_dir/dataset.");

  m.def(
      "prepare",
      [](const std::string& config_path,
         const std::vector<std::string>& overrides) {
        std::ostringstream log;
        return run(
            pipeline::cmd_prepare(make_config(config_path, overrides), log),
            log);
      },
      py::arg("config_path") = "",
      py::arg("overrides") = std::vector<std::string>{},
      "Parse logs, build features, cache the corpus under out_dir.");

  m.def(
      "train",
      [](const std::string& config_path,
         const std::vector<std::string>& overrides) {
        std::ostringstream log;
        return run(pipeline::cmd_train(make_config(config_path, overrides), log),
                   log);
      },
      py::arg("config_path") = "",
      py::arg("overrides") = std::vector<std::string>{},
      "Fit the model on a prepared corpus; writes out_dir/checkpoint.bin.");

  m.def(
      "evaluate",
      [](const std::string& checkpoint, const std::string& config_path,
         const std::vector<std::string>& overrides) {
        std::ostringstream log;
        return run(pipeline::cmd_eval(make_config(config_path, overrides),
                                      checkpoint, log),
                   log);
      },
      py::arg("checkpoint"), py::arg("config_path") = "",
      py::arg("overrides") = std::vector<std::string>{},
      "Score the prepared corpus; writes roc.csv and report.json.");

  m.def(
      "detect",
      [](const std::string& checkpoint, const std::string& logs_dir,
         const std::string& config_path,
         const std::vector<std::string>& overrides) {
        std::ostringstream log;
        return run(pipeline::cmd_detect(make_config(config_path, overrides),
                                        checkpoint, logs_dir, log),
                   log);
      },
      py::arg("checkpoint"), py::arg("logs_dir"), py::arg("config_path") = "",
      py::arg("overrides") = std::vector<std::string>{},
      "Flag anomalous sequences in new logs at the configured threshold.");

  // detection arithmetic on plain lists, for notebooks and smoke tests
  m.def(
      "select_threshold",
      [](const std::vector<double>& y_m, const std::vector<bool>& abnormal,
         double fpr_target) {
        return metrics::select_threshold(to_scored(y_m, abnormal), fpr_target);
      },
      py::arg("y_m"), py::arg("abnormal"), py::arg("fpr_target") = 0.05,
      "Largest threshold whose false-positive rate stays within the target.");

  m.def(
      "auc",
      [](const std::vector<double>& y_m,
         const std::vector<bool>& abnormal) -> py::object {
        auto rep = metrics::roc_and_auc(to_scored(y_m, abnormal), 0.5);
        if (!rep.auc) return py::none();
        return py::float_(*rep.auc);
      },
      py::arg("y_m"), py::arg("abnormal"),
      "Area under the ROC curve of anomaly scores 1 - y_m; None if only one "
      "class is present.");
}
