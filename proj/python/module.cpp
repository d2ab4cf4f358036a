#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sconv/eval.hpp"
#include "sconv/interpolation.hpp"
#include "sconv/scale_layers.hpp"

namespace py = pybind11;
using namespace sconv;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data(), t.data() + t.size(), out.mutable_data());
    return out;
}

Resample parse_resample(const std::string& kind) {
    if (kind == "cubic") return Resample::Cubic;
    if (kind == "linear") return Resample::Linear;
    if (kind == "nearest") return Resample::Nearest;
    throw std::invalid_argument("unknown resampling kind '" + kind + "' (cubic, linear, nearest)");
}

PoolKind parse_pool(const std::string& kind) {
    if (kind == "pixel") return PoolKind::Pixel;
    if (kind == "slice") return PoolKind::Slice;
    if (kind == "energy") return PoolKind::Energy;
    throw std::invalid_argument("unknown pooling kind '" + kind + "' (pixel, slice, energy)");
}

py::dict table_dict(const AccuracyTable& t) {
    py::dict scales;
    for (const auto& r : t.rows) scales[py::int_(r.scale)] = r.accuracy;
    py::dict d;
    d["per_scale"] = scales;
    d["mean"] = t.mean;
    d["samples"] = t.samples;
    d["loss"] = t.loss;
    return d;
}

py::dict metrics_dict(const RunMetrics& m) {
    py::list epochs;
    for (const auto& e : m.epochs) {
        py::dict d;
        d["epoch"] = e.epoch;
        d["train_loss"] = e.train_loss;
        d["train_accuracy"] = e.train_accuracy;
        d["val_loss"] = e.val_loss;
        d["val_accuracy"] = e.val_accuracy;
        d["seconds"] = e.seconds;
        epochs.append(d);
    }
    py::dict d;
    d["run_id"] = m.run_id;
    d["config_hash"] = m.config_hash;
    d["dataset"] = m.dataset;
    d["best_epoch"] = m.best_epoch;
    d["best_val_accuracy"] = m.best_val_accuracy;
    d["stopped_early"] = m.stopped_early;
    d["epochs"] = epochs;
    d["test"] = table_dict(m.test);
    return d;
}

ScenarioSpec scenario_for(const std::string& name, const StirSplit& split) {
    const auto scales = split.scales();
    if (scales.empty()) throw std::invalid_argument("empty split");
    return make_scenario(parse_scenario(name), scales.front(), scales.back());
}

}  // namespace

PYBIND11_MODULE(_sconv, m) {
    m.doc() = "Scale-equivariant convolution toolkit";

    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

    // ---- layers and resampling
    m.def("num_scales", &num_scales, py::arg("n"), py::arg("k"));
    m.def("pyramid_sizes", [](std::size_t n, std::size_t k) { return pyramid_sizes(n, k); }, py::arg("n"),
          py::arg("k"));
    m.def(
        "resize",
        [](const Array& a, std::size_t h, std::size_t w, const std::string& kind) {
            return to_array(resize(to_tensor(a), h, w, parse_resample(kind)));
        },
        py::arg("image"), py::arg("height"), py::arg("width"), py::arg("kind") = "cubic");
    m.def(
        "sconv2d",
        [](const Array& image, const Array& kernel) {
            const Tensor k = to_tensor(kernel);
            const Tensor x = to_tensor(image);
            const KernelPyramid pyramid(k, x.dim(1));
            const ScaleFeatureStack st = sconv2d_forward(x, pyramid);
            return py::make_tuple(to_array(st.data), st.kernel_sizes);
        },
        py::arg("image"), py::arg("kernel"), "Returns the ragged stack padded to [S, O, F, F] and the kernel sizes.");
    m.def(
        "scale_pool",
        [](const Array& image, const Array& kernel, const std::string& kind) {
            const Tensor x = to_tensor(image);
            const KernelPyramid pyramid(to_tensor(kernel), x.dim(1));
            const ScaleFeatureStack st = sconv2d_forward(x, pyramid);
            const PoolResult r = scale_pool(st, parse_pool(kind));
            return py::make_tuple(to_array(r.output), channel_kernel_sizes(r.selection, st));
        },
        py::arg("image"), py::arg("kernel"), py::arg("kind") = "slice",
        "Scale convolution followed by pooling; returns the pooled map and the mean selected size per channel.");

    // ---- data
    m.def("glyph_name", &glyph_name, py::arg("class_id"));
    m.def(
        "render_glyph", [](std::size_t cls, std::size_t size) { return to_array(render_glyph(cls, size)); },
        py::arg("class_id"), py::arg("size"));

    py::class_<StirSplit>(m, "Split")
        .def_property_readonly("num_classes", [](const StirSplit& s) { return s.num_classes; })
        .def_property_readonly("canvas", [](const StirSplit& s) { return s.canvas; })
        .def_property_readonly("scales", &StirSplit::scales)
        .def("__len__", [](const StirSplit& s) { return s.samples.size(); })
        .def_property_readonly("images",
                               [](const StirSplit& s) {
                                   const std::size_t n = s.samples.size(), c = s.channels, w = s.canvas;
                                   Array out({n, c, w, w});
                                   double* dst = out.mutable_data();
                                   for (const auto& smp : s.samples)
                                       dst = std::copy(smp.image.data(), smp.image.data() + smp.image.size(), dst);
                                   return out;
                               })
        .def_property_readonly("labels",
                               [](const StirSplit& s) {
                                   std::vector<int> v;
                                   for (const auto& smp : s.samples) v.push_back(smp.label);
                                   return v;
                               })
        .def_property_readonly("sample_scales",
                               [](const StirSplit& s) {
                                   std::vector<int> v;
                                   for (const auto& smp : s.samples) v.push_back(smp.scale);
                                   return v;
                               })
        .def_property_readonly("boxes", [](const StirSplit& s) {
            std::vector<std::tuple<int, int, int>> v;
            for (const auto& smp : s.samples) v.emplace_back(smp.box_x0, smp.box_y0, smp.scale);
            return v;
        });

    m.def(
        "generate_dataset",
        [](const std::string& profile, std::uint64_t seed, std::size_t instances, std::size_t classes) {
            DatasetConfig dc = parse_profile(profile) == Profile::Tiny ? tiny_dataset_config(seed) : DatasetConfig{};
            dc.seed = seed;
            if (instances) dc.instances = instances;
            if (classes) dc.num_classes = classes;
            StirDataset ds = generate_dataset(dc);
            return py::make_tuple(std::move(ds.train), std::move(ds.val), std::move(ds.test));
        },
        py::arg("profile") = "tiny", py::arg("seed") = 0, py::arg("instances") = 0, py::arg("classes") = 0,
        "Returns (train, val, test) splits; 0 keeps the profile default.");
    m.def("load_split", &load_split, py::arg("path"));
    m.def("write_split", &write_split, py::arg("split"), py::arg("path"));
    m.def("scenario_scales", [](const std::string& name, std::size_t lo, std::size_t hi) {
        const ScenarioSpec s = make_scenario(parse_scenario(name), lo, hi);
        return py::make_tuple(s.train_scales(), s.test_scales(), equivariance_pairs(s));
    });

    // ---- models
    py::class_<Model>(m, "Model")
        .def(py::init([](const std::string& arch, const std::string& profile, std::size_t classes, std::size_t canvas,
                         std::uint64_t seed) {
                 ArchSpec spec = make_arch_spec(parse_architecture(arch), parse_profile(profile), classes);
                 if (canvas) spec.canvas = canvas;
                 spec.validate();
                 return build_model(spec, seed);
             }),
             py::arg("arch") = "Standard", py::arg("profile") = "tiny", py::arg("num_classes") = 10,
             py::arg("canvas") = 0, py::arg("seed") = 0)
        .def_property_readonly("architecture",
                               [](const Model& md) { return std::string(architecture_name(md.spec().arch)); })
        .def_property_readonly("parameter_count", &Model::parameter_count)
        .def("forward", [](const Model& md, const Array& image) { return to_array(md.forward(to_tensor(image))); })
        .def("feature_map", [](const Model& md, const Array& image) {
            return to_array(last_feature_map(md, to_tensor(image)));
        })
        .def("save", [](const Model& md, const std::string& path) { write_checkpoint(make_checkpoint(md), path); });
    m.def(
        "load_model",
        [](const std::string& path, const std::string& profile, std::size_t canvas) {
            const Checkpoint c = read_checkpoint(path);
            ArchSpec spec = make_arch_spec(parse_architecture(c.architecture), parse_profile(profile), c.num_classes);
            if (canvas) spec.canvas = canvas;
            return model_from_checkpoint(c, spec);
        },
        py::arg("path"), py::arg("profile") = "tiny", py::arg("canvas") = 0);

    m.def(
        "train",
        [](const std::string& arch, const StirSplit& train_split, const StirSplit& val, const StirSplit& test,
           const std::string& scenario, std::uint64_t seed, double lr, std::size_t epochs, std::size_t batch,
           std::size_t patience, const std::string& profile) {
            TrainConfig c;
            c.arch = parse_architecture(arch);
            c.profile = parse_profile(profile);
            c.scenario = parse_scenario(scenario);
            c.seed = seed;
            c.learning_rate = lr;
            c.epochs = epochs;
            c.batch_size = batch;
            c.patience = patience;
            TrainData data{train_split, val, test, "python"};
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train(c, data);
            }
            return py::make_tuple(model_from_checkpoint(r.checkpoint, arch_spec_for(c, train_split)),
                                  metrics_dict(r.metrics));
        },
        py::arg("arch"), py::arg("train"), py::arg("val"), py::arg("test"), py::arg("scenario") = "Mid2Rest",
        py::arg("seed") = 0, py::arg("lr") = 1e-3, py::arg("epochs") = 30, py::arg("batch") = 32,
        py::arg("patience") = 5, py::arg("profile") = "tiny");

    // ---- evaluation
    m.def(
        "evaluate_per_scale",
        [](const Model& md, const StirSplit& split, const std::string& scenario) {
            if (scenario.empty()) return table_dict(evaluate_per_scale(md, split));
            const ScenarioViews v = scenario_split(split, scenario_for(scenario, split));
            return table_dict(evaluate_per_scale(md, split, v.test));
        },
        py::arg("model"), py::arg("split"), py::arg("scenario") = "");
    m.def(
        "equivariance_error",
        [](const Array& a, const Array& b) { return equivariance_error(to_tensor(a), to_tensor(b)); }, py::arg("x1"),
        py::arg("x2"), "None when the reference map is identically zero.");
    m.def(
        "scenario_equivariance_score",
        [](const Model& md, const StirSplit& split, const std::string& scenario) {
            return scenario_equivariance_score(md, split, scenario_for(scenario, split));
        },
        py::arg("model"), py::arg("split"), py::arg("scenario") = "Mid2Rest");
    m.def(
        "scale_selection_profile",
        [](const Model& md, const StirSplit& split, std::size_t label, std::size_t instance) {
            const auto subject = subject_samples(split, label, instance);
            const SelectionProfile p = scale_selection_profile(md, subject);
            return py::make_tuple(p.scales, p.kernel_size, p.r);
        },
        py::arg("model"), py::arg("split"), py::arg("label") = 0, py::arg("instance") = 0,
        "Returns (scales, kernel_size[channel][scale], r per channel).");
    m.def("pearson_r", [](const std::vector<double>& x, const std::vector<double>& y) { return pearson_r(x, y); });
    m.def("spearman_test", [](const std::vector<double>& x, const std::vector<double>& y) {
        const TrendTest t = spearman_test(x, y);
        return py::make_tuple(t.rho, t.p_value);
    });
    m.def("op_count_standard", &op_count_standard, py::arg("k"), py::arg("n"));
    m.def("op_count_scaled", &op_count_scaled, py::arg("k"), py::arg("n"));
}
