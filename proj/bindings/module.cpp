#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "hstrnet/data.hpp"
#include "hstrnet/error.hpp"
#include "hstrnet/image.hpp"
#include "hstrnet/metrics.hpp"
#include "hstrnet/model.hpp"
#include "hstrnet/selftest.hpp"
#include "hstrnet/serialize.hpp"
#include "hstrnet/toy.hpp"

namespace py = pybind11;
using namespace hstrnet;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

ImageF image_from_array(const FloatArray& a) {
    require_data(a.ndim() == 3 && a.shape(0) == 3,
                 "image arrays must be float32 with shape (3, H, W)");
    ImageF img = ImageF::zeros(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
    std::copy(a.data(), a.data() + img.numel(), img.values.begin());
    return img;
}

FloatArray array_from_image(const ImageF& img) {
    FloatArray a({py::ssize_t(3), py::ssize_t(img.height), py::ssize_t(img.width)});
    std::copy(img.values.begin(), img.values.end(), a.mutable_data());
    return a;
}

struct PyModel {
    HstrNet<float> net;

    static PyModel load(const std::string& path) {
        return PyModel{model_from_checkpoint(load_checkpoint(path))};
    }

    static PyModel build(const std::string& config_json, uint64_t seed) {
        nlohmann::json j = config_json.empty() ? nlohmann::json::object()
                                               : nlohmann::json::parse(config_json);
        PyModel m{HstrNet<float>::build(model_config_from_json(j))};
        m.net.init(seed);
        return m;
    }

    FloatArray forward(const FloatArray& lr, const FloatArray& ref) const {
        NoGradGuard guard;
        return array_from_image(
            from_tensor(net.forward(to_tensor(image_from_array(lr)), to_tensor(image_from_array(ref)))));
    }

    void save(const std::string& path, int64_t step) const {
        save_checkpoint(checkpoint_from_model(net, step), path);
    }

    std::string config_json() const { return to_json(net.cfg).dump(); }
    std::string variant() const { return net.cfg.variant; }
    size_t param_count() const { return net.param_count(); }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Reference-based video super-resolution core";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

    m.def(
        "degrade",
        [](const FloatArray& img, int factor) {
            return array_from_image(degrade(image_from_array(img), factor));
        },
        py::arg("img"), py::arg("factor") = 4,
        "Bicubic downsample then upsample an image shaped (3, H, W) in [0,1].");

    m.def(
        "bicubic_resize",
        [](const FloatArray& img, int out_h, int out_w) {
            return array_from_image(bicubic_resize(image_from_array(img), out_h, out_w));
        },
        py::arg("img"), py::arg("out_h"), py::arg("out_w"));

    m.def(
        "warp",
        [](const FloatArray& src, const FloatArray& flow) {
            require_data(src.ndim() == 3, "warp expects src shaped (C, H, W)");
            require_data(flow.ndim() == 3 && flow.shape(0) == 2 && flow.shape(1) == src.shape(1) &&
                             flow.shape(2) == src.shape(2),
                         "warp expects flow shaped (2, H, W) matching src");
            NoGradGuard guard;
            const int c = static_cast<int>(src.shape(0));
            const int h = static_cast<int>(src.shape(1));
            const int w = static_cast<int>(src.shape(2));
            Tensor<float> st = Tensor<float>::zeros({1, c, h, w});
            Tensor<float> ft = Tensor<float>::zeros({1, 2, h, w});
            std::copy(src.data(), src.data() + st.numel(), st.data());
            std::copy(flow.data(), flow.data() + ft.numel(), ft.data());
            Tensor<float> out = warp(st, ft);
            FloatArray res({py::ssize_t(c), py::ssize_t(h), py::ssize_t(w)});
            std::copy(out.values().begin(), out.values().end(), res.mutable_data());
            return res;
        },
        py::arg("src"), py::arg("flow"),
        "Backward-warp src by a per-pixel displacement field (border-clamped bilinear).");

    m.def(
        "psnr",
        [](const FloatArray& a, const FloatArray& b, const std::string& space) {
            return psnr(image_from_array(a), image_from_array(b), space);
        },
        py::arg("a"), py::arg("b"), py::arg("metric_space") = "rgb");

    m.def(
        "ssim",
        [](const FloatArray& a, const FloatArray& b, const std::string& space) {
            return ssim(image_from_array(a), image_from_array(b), space);
        },
        py::arg("a"), py::arg("b"), py::arg("metric_space") = "rgb");

    m.def(
        "render_toy_frame",
        [](uint64_t scene_seed, double t, int height, int width) {
            return array_from_image(render_toy_frame(scene_seed, t, height, width));
        },
        py::arg("scene_seed"), py::arg("t"), py::arg("height") = 128, py::arg("width") = 128,
        "Render one frame of the synthetic drifting-texture scene.");

    m.def("make_toy_corpus", &make_toy_corpus, py::arg("root"), py::arg("seed") = 1,
          "Write the 4-clip synthetic septuplet corpus.");

    m.def(
        "selftest",
        [](bool f64) {
            std::vector<std::tuple<std::string, bool, std::string>> out;
            for (const auto& c : run_selftest(f64)) out.emplace_back(c.name, c.pass, c.detail);
            return out;
        },
        py::arg("f64") = false, "Run the numeric invariant suite; returns (name, pass, detail).");

    py::class_<PyModel>(m, "Model")
        .def_static("load", &PyModel::load, py::arg("path"))
        .def_static("build", &PyModel::build, py::arg("config_json") = "", py::arg("seed") = 1)
        .def("forward", &PyModel::forward, py::arg("lr"), py::arg("ref"),
             "Super-resolve one (3,H,W) pair; returns the clamped reconstruction.")
        .def("save", &PyModel::save, py::arg("path"), py::arg("step") = 0)
        .def("config_json", &PyModel::config_json)
        .def_property_readonly("variant", &PyModel::variant)
        .def_property_readonly("param_count", &PyModel::param_count);
}
