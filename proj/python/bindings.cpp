#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tnt/checkpoint.hpp"
#include "tnt/checks.hpp"
#include "tnt/complexity.hpp"
#include "tnt/introspection.hpp"
#include "tnt/model.hpp"
#include "tnt/training.hpp"

namespace py = pybind11;
using namespace tnt;

namespace {

// JSON crosses the boundary as text; Python's json module does the rest.
py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::handle& obj) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::array_t<double> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor::from_data(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

TntConfig make_config(const std::string& preset_name, const py::dict& overrides) {
  TntConfig cfg = preset(preset_name);
  if (!overrides.empty()) cfg = config_from_json(from_py(overrides), cfg);
  cfg.validate();
  return cfg;
}

ToyDataset dataset_from(const py::array_t<double>& images, const std::vector<int>& labels, std::int64_t classes) {
  ToyDataset d;
  d.images = from_numpy(images);
  d.labels = labels;
  d.num_classes = classes;
  d.descriptor = "python";
  return d;
}

py::dict export_to_py(const Export& e) {
  py::dict out;
  out["meta"] = to_py(e.meta);
  out["data"] = to_numpy(e.data);
  return out;
}

py::list grad_entries(const std::vector<checks::GradCheckEntry>& entries) {
  py::list out;
  for (const auto& e : entries) {
    py::dict d;
    d["name"] = e.name;
    d["checked"] = e.checked;
    d["rel_err"] = e.rel_err;
    d["max_abs_err"] = e.max_abs_err;
    d["passed"] = e.passed;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Transformer-in-Transformer reference implementation (float64, CPU)";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<IntrospectionError>(m, "IntrospectionError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("preset_names", &preset_names);
  m.def(
      "preset", [](const std::string& name) { return to_py(config_to_json(preset(name))); }, py::arg("name"),
      "Preset configuration as a dict.");

  py::class_<Model>(m, "Model")
      .def(py::init([](const std::string& preset_name, std::uint64_t seed, const py::dict& overrides) {
             return build(make_config(preset_name, overrides), seed);
           }),
           py::arg("preset") = "tnt-micro", py::arg("seed") = 0, py::arg("overrides") = py::dict())
      .def_property_readonly("config", [](const Model& self) { return to_py(config_to_json(self.config)); })
      .def("parameter_count", &Model::parameter_count)
      .def("checksum", [](const Model& self) { return parameter_checksum(self); })
      .def("parameters",
           [](const Model& self) {
             py::dict out;
             for (const auto& p : self.parameters()) out[py::str(p.name)] = to_numpy(p.tensor);
             return out;
           })
      .def(
          "forward",
          [](const Model& self, const py::array_t<double>& images) {
            const Tensor x = from_numpy(images);
            Tensor logits;
            {
              py::gil_scoped_release release;
              NoGradGuard guard;
              logits = forward(self, x);
            }
            return to_numpy(logits);
          },
          py::arg("images"), "Raw [H, W, 3] or [B, H, W, 3] intensities in 0..255 -> logits.")
      .def("interpolate", &interpolate_position_encodings, py::arg("height"), py::arg("width"))
      .def("save", [](const Model& self, const std::string& path) { save_checkpoint(path, self); })
      .def_static("load", [](const std::string& path) { return load_checkpoint(path).model; });

  m.def(
      "make_subpatch_task",
      [](std::uint64_t seed, std::int64_t n) {
        const ToyDataset d = make_subpatch_task(seed, n);
        return py::make_tuple(to_numpy(d.images), d.labels);
      },
      py::arg("seed"), py::arg("n_samples"));

  m.def(
      "train",
      [](Model& model, const py::array_t<double>& images, const std::vector<int>& labels, std::int64_t steps,
         std::int64_t batch_size, double lr, std::uint64_t seed) {
        const ToyDataset d = dataset_from(images, labels, model.config.num_classes);
        TrainOptions o;
        o.steps = steps;
        o.batch_size = batch_size;
        o.adamw.lr = lr;
        o.seed = seed;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(model, d, o);
        }
        py::list log;
        for (const auto& s : r.log) log.append(to_py(step_record_to_json(s)));
        return log;
      },
      py::arg("model"), py::arg("images"), py::arg("labels"), py::arg("steps") = 100, py::arg("batch_size") = 32,
      py::arg("lr") = 1e-3, py::arg("seed") = 0, "Trains the model in place; returns the per-step log.");

  m.def(
      "evaluate",
      [](const Model& model, const py::array_t<double>& images, const std::vector<int>& labels) {
        const ToyDataset d = dataset_from(images, labels, model.config.num_classes);
        py::gil_scoped_release release;
        return evaluate(model, d);
      },
      py::arg("model"), py::arg("images"), py::arg("labels"));

  auto cx = m.def_submodule("complexity");
  cx.def("flops_standard_block", &complexity::flops_standard_block, py::arg("n"), py::arg("d"));
  cx.def("flops_tnt_block", &complexity::flops_tnt_block, py::arg("n"), py::arg("m"), py::arg("c"), py::arg("d"));
  cx.def("params_standard_block", &complexity::params_standard_block, py::arg("d"));
  cx.def("params_tnt_block", &complexity::params_tnt_block, py::arg("m"), py::arg("c"), py::arg("d"));
  cx.def("format_ratio", &complexity::format_ratio);
  cx.def(
      "report",
      [](const std::string& preset_name, const py::dict& overrides) {
        return to_py(complexity::report_to_json(complexity::model_report(make_config(preset_name, overrides))));
      },
      py::arg("preset") = "tnt-s", py::arg("overrides") = py::dict());

  auto io = m.def_submodule("introspect");
  io.def(
      "inner_attention",
      [](const Model& model, const py::array_t<double>& image, int layer, std::int64_t sentence, std::int64_t head) {
        return export_to_py(export_inner_attention(model, from_numpy(image), layer, sentence, head));
      },
      py::arg("model"), py::arg("image"), py::arg("layer"), py::arg("sentence"), py::arg("head") = kMeanHead);
  io.def(
      "outer_attention",
      [](const Model& model, const py::array_t<double>& image, int layer, std::int64_t head) {
        return export_to_py(export_outer_attention(model, from_numpy(image), layer, head));
      },
      py::arg("model"), py::arg("image"), py::arg("layer"), py::arg("head") = kMeanHead);
  io.def(
      "class_attention",
      [](const Model& model, const py::array_t<double>& image, int layer) {
        return export_to_py(export_class_attention(model, from_numpy(image), layer));
      },
      py::arg("model"), py::arg("image"), py::arg("layer"));
  io.def(
      "word_feature_maps",
      [](const Model& model, const py::array_t<double>& image, int layer) {
        return export_to_py(export_word_feature_maps(model, from_numpy(image), layer));
      },
      py::arg("model"), py::arg("image"), py::arg("layer"));
  io.attr("MEAN_HEAD") = kMeanHead;
  io.attr("ALL_HEADS") = kAllHeads;

  auto ck = m.def_submodule("checks");
  ck.def(
      "op_gradients",
      [](std::int64_t max_entries) {
        checks::GradCheckOptions o;
        o.max_entries = max_entries;
        return grad_entries(checks::op_gradient_suite(o));
      },
      py::arg("max_entries") = 32);
  ck.def(
      "model_gradients",
      [](const std::string& preset_name, std::int64_t max_entries) {
        checks::GradCheckOptions o;
        o.max_entries = max_entries;
        return grad_entries(checks::model_gradient_suite(preset(preset_name), o));
      },
      py::arg("preset") = "tnt-micro", py::arg("max_entries") = 32);
  ck.def(
      "attention_oracle",
      [](std::uint64_t seed) {
        double worst = 0.0;
        bool ok = true;
        for (const auto& e : checks::attention_oracle_suite(seed)) {
          worst = std::max(worst, e.max_abs_diff);
          ok = ok && e.passed;
        }
        return py::make_tuple(ok, worst);
      },
      py::arg("seed") = 0);
}
