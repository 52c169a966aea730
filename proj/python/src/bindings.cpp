// Python bindings. Configs and reports cross the boundary as plain dicts
// (JSON round trip); images and maps as numpy arrays.

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "gammasense/axis.hpp"
#include "gammasense/build_info.hpp"
#include "gammasense/dataio.hpp"
#include "gammasense/errors.hpp"
#include "gammasense/evaluation.hpp"
#include "gammasense/geometry.hpp"
#include "gammasense/scenegen.hpp"
#include "gammasense/selftest.hpp"
#include "gammasense/training.hpp"

namespace py = pybind11;
namespace gs = gammasense;
using json = nlohmann::json;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::handle& obj) {
  return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

// Keys in `overrides` replace those of `defaults`; unknown keys are rejected.
json merged(json defaults, const py::object& overrides, const char* what) {
  if (overrides.is_none()) return defaults;
  const json given = from_py(overrides);
  for (const auto& [k, v] : given.items()) {
    if (!defaults.contains(k)) throw gs::ConfigError(std::string(what) + ": unknown key '" + k + "'");
    defaults[k] = v;
  }
  return defaults;
}

template <typename T>
py::array_t<T> to_array(const gs::Array2D<T>& a) {
  py::array_t<T> out({a.rows(), a.cols()});
  std::memcpy(out.mutable_data(), a.data(), a.size() * sizeof(T));
  return out;
}

template <typename T>
gs::Array2D<T> from_array(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw gs::ContractViolation("expected a 2-D array");
  gs::Array2D<T> out(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::memcpy(out.data(), a.data(), out.size() * sizeof(T));
  return out;
}

py::array_t<std::uint8_t> to_array(const gs::Image& img) {
  py::array_t<std::uint8_t> out({img.height(), img.width(), img.channels()});
  std::memcpy(out.mutable_data(), img.pixels().data(), img.pixels().size());
  return out;
}

py::dict sample_dict(const gs::StereoSample& s) {
  py::dict d;
  d["sample_id"] = s.sample_id;
  d["left"] = to_array(s.left);
  d["right"] = to_array(s.right);
  d["depth"] = to_array(s.depth);
  d["mask"] = to_array(s.mask);
  py::array_t<double> pts({static_cast<py::ssize_t>(s.axis.points.size()), py::ssize_t{2}});
  for (std::size_t i = 0; i < s.axis.points.size(); ++i) {
    pts.mutable_at(i, 0) = s.axis.points[i].u;
    pts.mutable_at(i, 1) = s.axis.points[i].v;
  }
  d["axis_points"] = pts;
  d["label"] = to_py(gs::label_to_json(s));
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "gammasense core";

  auto base = py::register_exception<gs::Error>(m, "Error");
  py::register_exception<gs::ContractViolation>(m, "ContractViolation", base);
  py::register_exception<gs::BoundsError>(m, "BoundsError", base);
  py::register_exception<gs::MissingDepthError>(m, "MissingDepthError", base);
  py::register_exception<gs::NoIntersectionError>(m, "NoIntersectionError", base);
  py::register_exception<gs::InvalidMaskError>(m, "InvalidMaskError", base);
  py::register_exception<gs::AmbiguousAxisError>(m, "AmbiguousAxisError", base);
  py::register_exception<gs::GenerationFailure>(m, "GenerationFailure", base);
  py::register_exception<gs::ConfigError>(m, "ConfigError", base);
  py::register_exception<gs::FormatError>(m, "FormatError", base);
  py::register_exception<gs::ValidationError>(m, "ValidationError", base);
  py::register_exception<gs::NumericError>(m, "NumericError", base);

  py::class_<gs::CameraRig>(m, "CameraRig")
      .def(py::init<>())
      .def_readwrite("focal_px", &gs::CameraRig::focal_px)
      .def_readwrite("baseline_mm", &gs::CameraRig::baseline_mm)
      .def_readwrite("alpha", &gs::CameraRig::alpha)
      .def_readwrite("beta", &gs::CameraRig::beta)
      .def_readwrite("cx", &gs::CameraRig::cx)
      .def_readwrite("cy", &gs::CameraRig::cy)
      .def_readwrite("height", &gs::CameraRig::height)
      .def_readwrite("width", &gs::CameraRig::width)
      .def("validate", &gs::CameraRig::validate)
      .def("to_dict", [](const gs::CameraRig& r) { return to_py(gs::rig_to_json(r)); })
      .def("__repr__", [](const gs::CameraRig& r) { return "CameraRig(" + gs::rig_to_json(r).dump() + ")"; });

  m.def(
      "project",
      [](std::array<double, 3> q, const gs::CameraRig& rig) {
        const auto p = gs::project({q[0], q[1], q[2]}, rig);
        return std::array<double, 2>{p.u, p.v};
      },
      py::arg("point"), py::arg("rig"), "Camera-frame point (mm) to pixel (u, v).");
  m.def(
      "back_project",
      [](std::array<double, 2> p, double depth_mm, const gs::CameraRig& rig) {
        const auto q = gs::back_project({p[0], p[1]}, depth_mm, rig);
        return std::array<double, 3>{q.x, q.y, q.z};
      },
      py::arg("pixel"), py::arg("depth_mm"), py::arg("rig"));
  m.def(
      "disparity_to_depth",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& d, const gs::CameraRig& rig) {
        return to_array(gs::disparity_to_depth(from_array<float>(d), rig));
      },
      py::arg("disparity"), py::arg("rig"));
  m.def(
      "error_2d", [](std::array<double, 2> a, std::array<double, 2> b) { return gs::error_2d({a[0], a[1]}, {b[0], b[1]}); },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "error_3d",
      [](std::array<double, 3> a, std::array<double, 3> b) {
        return gs::error_3d({a[0], a[1], a[2]}, {b[0], b[1], b[2]});
      },
      py::arg("pred"), py::arg("gt"));

  m.def(
      "extract_axis",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& mask) {
        const auto a = gs::extract_axis(from_array<std::uint8_t>(mask));
        py::dict d;
        d["centroid"] = std::array<double, 2>{a.centroid.u, a.centroid.v};
        d["direction"] = std::array<double, 2>{a.direction.u, a.direction.v};
        d["major_variance"] = a.major_variance;
        d["minor_variance"] = a.minor_variance;
        return d;
      },
      py::arg("mask"), "First principal axis of a binary mask.");

  m.def("default_scene_spec", [] { return to_py(gs::SceneSpec{}.to_json()); });
  m.def("default_model_config", [] { return to_py(gs::ModelConfig{}.to_json()); });
  m.def("default_train_config", [] { return to_py(gs::TrainConfig{}.to_json()); });

  m.def(
      "generate_dataset",
      [](const std::filesystem::path& out, int train, int val, int test, std::uint64_t seed, const py::object& spec) {
        const auto s = gs::SceneSpec::from_json(merged(gs::SceneSpec{}.to_json(), spec, "scene spec"));
        json manifest;
        {
          py::gil_scoped_release release;
          manifest = gs::generate_dataset(s, {train, val, test}, out, seed).to_json();
        }
        return to_py(manifest);
      },
      py::arg("out"), py::arg("train") = 8, py::arg("val") = 2, py::arg("test") = 2, py::arg("seed") = 0,
      py::arg("spec") = py::none());
  m.def(
      "load_sample", [](const std::filesystem::path& dir) { return sample_dict(gs::load_sample(dir)); },
      py::arg("dir"));

  m.def(
      "train",
      [](const std::filesystem::path& data, const std::filesystem::path& out, const py::object& model,
         const py::object& config, std::optional<std::filesystem::path> resume, std::optional<int> stop_after) {
        const auto mc = gs::ModelConfig::from_json(merged(gs::ModelConfig{}.to_json(), model, "model config"));
        const auto tc = gs::TrainConfig::from_json(merged(gs::TrainConfig{}.to_json(), config, "train config"));
        gs::TrainOptions options;
        options.resume = resume;
        options.stop_after_epochs = stop_after;
        gs::TrainResult r;
        {
          py::gil_scoped_release release;
          r = gs::train(mc, tc, data, out, options);
        }
        py::list log;
        for (const auto& e : r.log) log.append(to_py(e.to_json()));
        py::dict d;
        d["log"] = log;
        d["best_checkpoint"] = r.best_checkpoint;
        d["last_checkpoint"] = r.last_checkpoint;
        d["best_val_2d"] = r.best_val_2d;
        return d;
      },
      py::arg("data"), py::arg("out"), py::arg("model") = py::none(), py::arg("config") = py::none(),
      py::arg("resume") = py::none(), py::arg("stop_after") = py::none());

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& data, const std::string& split,
         std::optional<std::filesystem::path> report_dir, int batch_size) {
        gs::EvaluateOptions o;
        o.batch_size = batch_size;
        o.report_dir = report_dir;
        json j;
        {
          py::gil_scoped_release release;
          j = gs::evaluate(checkpoint, data, split, o).to_json();
        }
        return to_py(j);
      },
      py::arg("checkpoint"), py::arg("data"), py::arg("split") = "test", py::arg("report_dir") = py::none(),
      py::arg("batch_size") = 8);

  m.def(
      "compare_reports",
      [](const py::object& a, const py::object& b) {
        py::list out;
        for (const auto& d :
             gs::compare_reports(gs::EvalReport::from_json(from_py(a)), gs::EvalReport::from_json(from_py(b)))) {
          py::dict row;
          row["metric"] = d.metric;
          row["a"] = d.a;
          row["b"] = d.b;
          row["change_pct"] = d.change_pct;
          out.append(row);
        }
        return out;
      },
      py::arg("a"), py::arg("b"));
  m.def("percentage_change", &gs::percentage_change, py::arg("a"), py::arg("b"));

  m.def("selftest", [] {
    py::list out;
    for (const auto& r : gs::run_selftests()) {
      py::dict d;
      d["name"] = r.name;
      d["passed"] = r.passed;
      d["detail"] = r.detail;
      d["seconds"] = r.seconds;
      out.append(d);
    }
    return out;
  });
  m.def("build_info", [] { return to_py(gs::build_info()); });
}
