#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "svae/config.hpp"
#include "svae/experiment.hpp"
#include "svae/losses.hpp"
#include "svae/reweight.hpp"

namespace py = pybind11;
using namespace svae;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> to_array(const Tensor& t) {
  const auto values = t.to_vector();
  py::array_t<double> out(t.shape());
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

py::dict batch_weights_dict(const reweight::BatchWeights& w) {
  py::dict d;
  d["main_loss"] = w.main_loss;
  d["svae_loss"] = w.svae_loss;
  d["rescaled_main"] = w.rescaled_main;
  d["rescaled_svae"] = w.rescaled_svae;
  d["gap"] = w.gap;
  d["weight"] = w.weight;
  d["max_gap"] = w.max_gap;
  d["alpha"] = w.alpha;
  return d;
}

py::dict dataset_dict(const Dataset& ds) {
  const auto& x = ds.data;
  const std::size_t n = x.size();
  py::dict d;
  d["task"] = to_string(x.task);
  std::vector<std::size_t> in_shape{n, x.features};
  std::vector<std::size_t> label_shape{n, x.labels_per_sample()};
  if (x.task == Task::segmentation) in_shape = {n, x.height, x.width, x.features};
  if (x.task == Task::segmentation) label_shape = {n, x.height, x.width};
  py::array_t<double> inputs(in_shape);
  std::copy(x.inputs.begin(), x.inputs.end(), inputs.mutable_data());
  py::array_t<std::int32_t> labels(label_shape);
  std::copy(x.labels.begin(), x.labels.end(), labels.mutable_data());
  d["inputs"] = inputs;
  d["labels"] = labels;
  d["ids"] = x.ids;
  d["noisy"] = std::vector<bool>(ds.noisy.begin(), ds.noisy.end());
  d["classes"] = x.classes;
  return d;
}

std::string get_setting(const ExperimentConfig& c, const std::string& key) {
  std::istringstream in(serialize(c));
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto k = line.substr(0, eq);
    k.erase(k.find_last_not_of(' ') + 1);
    if (k == key) {
      auto v = line.substr(eq + 1);
      v.erase(0, v.find_first_not_of(' '));
      return v;
    }
  }
  throw py::key_error(key);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Label-noise robust training with an SVAE side branch and batch reweighting";

  py::enum_<Task>(m, "Task").value("multilabel", Task::multilabel).value("segmentation", Task::segmentation);
  py::enum_<Method>(m, "Method")
      .value("cel_baseline", Method::cel_baseline)
      .value("focal_baseline", Method::focal_baseline)
      .value("svae_reweight", Method::svae_reweight);
  py::enum_<loss::KlSign>(m, "KlSign")
      .value("standard", loss::KlSign::standard)
      .value("literal", loss::KlSign::literal);

  // reweighting
  m.def("minmax_rescale", [](const std::vector<double>& v) { return reweight::minmax_rescale(v); });
  m.def("loss_gap", [](const std::vector<double>& a, const std::vector<double>& b) { return reweight::loss_gap(a, b); },
        py::arg("main_loss"), py::arg("svae_loss"));
  m.def("importance_weights",
        [](const std::vector<double>& gap, double alpha) { return reweight::importance_weights(gap, alpha); },
        py::arg("gap"), py::arg("alpha"));
  m.def("batch_weights",
        [](const std::vector<double>& a, const std::vector<double>& b, double alpha) {
          return batch_weights_dict(reweight::compute_batch_weights(a, b, alpha));
        },
        py::arg("main_loss"), py::arg("svae_loss"), py::arg("alpha"));
  m.def("alpha_at",
        [](double epoch, std::size_t total_epochs, double floor) {
          return reweight::AlphaSchedule{floor, total_epochs}.at(epoch);
        },
        py::arg("epoch"), py::arg("total_epochs"), py::arg("floor") = 0.01);

  // per-sample losses
  m.def("bce_multilabel", [](const Array& l, const Array& y) { return to_array(loss::bce_multilabel(to_tensor(l), to_tensor(y))); },
        py::arg("logits"), py::arg("targets"));
  m.def("focal_multilabel",
        [](const Array& l, const Array& y, double gamma) {
          return to_array(loss::focal_multilabel(to_tensor(l), to_tensor(y), gamma));
        },
        py::arg("logits"), py::arg("targets"), py::arg("gamma") = 2.0);
  m.def("ce_pixelwise",
        [](const Array& l, const std::vector<std::int32_t>& targets) {
          return to_array(loss::ce_pixelwise(to_tensor(l), targets));
        },
        py::arg("logits"), py::arg("targets"));
  m.def("mse_features", [](const Array& r, const Array& f) { return to_array(loss::mse_features(to_tensor(r), to_tensor(f))); },
        py::arg("reconstruction"), py::arg("target"));
  m.def("kl_gaussian",
        [](const Array& mu, const Array& logvar, loss::KlSign sign) {
          return to_array(loss::kl_gaussian(to_tensor(mu), to_tensor(logvar), sign));
        },
        py::arg("mu"), py::arg("logvar"), py::arg("sign") = loss::KlSign::standard);

  // config
  py::class_<ExperimentConfig>(m, "Config")
      .def(py::init([](Task task) { return default_config(task); }), py::arg("task") = Task::multilabel)
      .def_readwrite("task", &ExperimentConfig::task)
      .def_readwrite("method", &ExperimentConfig::method)
      .def_readwrite("noise_ratio", &ExperimentConfig::noise_ratio)
      .def_readwrite("seed", &ExperimentConfig::seed)
      .def_readwrite("samples", &ExperimentConfig::samples)
      .def_readwrite("epochs", &ExperimentConfig::epochs)
      .def_readwrite("batch_size", &ExperimentConfig::batch_size)
      .def_readwrite("lr", &ExperimentConfig::lr)
      .def_readwrite("audit", &ExperimentConfig::audit)
      .def("set", [](ExperimentConfig& c, const std::string& k, const std::string& v) { apply_setting(c, k, v); })
      .def("get", &get_setting)
      .def("to_text", [](const ExperimentConfig& c) { return serialize(c); })
      .def("with_task", [](const ExperimentConfig& c, Task t) { return with_task(c, t); })
      .def("__eq__", [](const ExperimentConfig& a, const ExperimentConfig& b) { return a == b; })
      .def("__repr__", [](const ExperimentConfig& c) {
        return "<Config " + to_string(c.task) + " " + to_string(c.method) + " rho=" + format_double(c.noise_ratio) +
               " seed=" + std::to_string(c.seed) + ">";
      });
  m.def("parse_config",
        [](const std::string& text, const std::map<std::string, std::string>& overrides) {
          return parse_config(text, {overrides.begin(), overrides.end()});
        },
        py::arg("text"), py::arg("overrides") = std::map<std::string, std::string>{});
  m.def("load_config", [](const std::filesystem::path& p) { return load_config(p); });
  m.def("save_config", &save_config);

  // data
  m.def("prepare_splits", [](const ExperimentConfig& c) {
    const auto s = prepare_splits(c);
    py::dict d;
    d["train"] = dataset_dict(s.train);
    d["validation"] = dataset_dict(s.validation);
    d["test"] = dataset_dict(s.test);
    return d;
  });

  // experiments
  py::class_<ResultRow>(m, "ResultRow")
      .def_property_readonly("task", [](const ResultRow& r) { return to_string(r.task); })
      .def_property_readonly("method", [](const ResultRow& r) { return to_string(r.method); })
      .def_readonly("ratio", &ResultRow::ratio)
      .def_readonly("seed", &ResultRow::seed)
      .def_readonly("status", &ResultRow::status)
      .def_readonly("metric", &ResultRow::metric)
      .def_readonly("mean_weight_noisy", &ResultRow::mean_weight_noisy)
      .def_readonly("mean_weight_clean", &ResultRow::mean_weight_clean)
      .def_readonly("runtime_seconds", &ResultRow::runtime_seconds)
      .def_readonly("run_dir", &ResultRow::run_dir)
      .def_readonly("error", &ResultRow::error)
      .def("same_result", &ResultRow::same_result)
      .def("__repr__", [](const ResultRow& r) { return "<ResultRow " + format_row(r) + ">"; });

  m.def("run_experiment", &run_experiment, py::arg("config"), py::arg("run_dir") = std::filesystem::path{},
        py::call_guard<py::gil_scoped_release>());
  m.def("run_sweep",
        [](const ExperimentConfig& base, std::vector<Task> tasks, std::vector<Method> methods,
           std::vector<double> ratios, std::vector<std::uint64_t> seeds, std::size_t jobs,
           const std::filesystem::path& out_dir) {
          py::gil_scoped_release release;
          return run_sweep(base, SweepSpec{std::move(tasks), std::move(methods), std::move(ratios), std::move(seeds), jobs},
                           out_dir);
        },
        py::arg("base"), py::arg("tasks"), py::arg("methods"), py::arg("ratios"), py::arg("seeds"),
        py::arg("jobs") = 1, py::arg("out_dir") = std::filesystem::path{});
  m.def("read_rows", &read_rows);
  m.def("write_rows", &write_rows);

  m.def("audit_run",
        [](const std::filesystem::path& dir, std::size_t k) {
          const auto r = audit_run(dir, k);
          py::dict d;
          d["epochs"] = r.epochs;
          d["flagged"] = r.flagged;
          d["precision"] = r.precision;
          py::list ranking;
          for (const auto& e : r.ranking) {
            ranking.append(py::make_tuple(e.id, e.mean_weight, e.observations, e.noisy));
          }
          d["ranking"] = ranking;
          return d;
        },
        py::arg("run_dir"), py::arg("k") = 10);

  m.def("summarize", [](const std::vector<ResultRow>& rows) {
    py::list out;
    for (const auto& s : summarize(rows)) {
      py::dict d;
      d["task"] = to_string(s.task);
      d["method"] = to_string(s.method);
      d["ratio"] = s.ratio;
      d["runs"] = s.runs;
      d["mean"] = s.mean;
      d["std"] = s.stddev;
      out.append(d);
    }
    return out;
  });

  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
}
