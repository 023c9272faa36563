#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <optional>

#include "metainv/analytic.hpp"
#include "metainv/framelet.hpp"
#include "metainv/io.hpp"
#include "metainv/metrics.hpp"
#include "metainv/network.hpp"
#include "metainv/simulate.hpp"
#include "metainv/solvers.hpp"

#include <pybind11/numpy.h>

namespace py = pybind11;
using namespace metainv;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_numpy(const DoubleArray& arr) {
    Shape shape(static_cast<std::size_t>(arr.ndim()));
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[static_cast<std::size_t>(i)] = arr.shape(i);
    std::vector<double> data(arr.data(), arr.data() + arr.size());
    return Tensor::from_external(std::move(shape), std::move(data));
}

py::array_t<double> numpy_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> arr(shape);
    std::memcpy(arr.mutable_data(), t.data(), t.size() * sizeof(double));
    return arr;
}

Image image_from_numpy(const DoubleArray& arr, const ScanGeometry& g) {
    Tensor t = tensor_from_numpy(arr);
    if (t.rank() != 2) throw std::invalid_argument("image array must be 2-D");
    const std::size_t n = t.dim(0);
    return Image(n, g.pixel_size, std::move(t));
}

Sinogram sinogram_from_numpy(const DoubleArray& arr) {
    Tensor t = tensor_from_numpy(arr);
    if (t.rank() != 2) throw std::invalid_argument("sinogram array must be 2-D");
    const std::size_t nv = t.dim(0), nd = t.dim(1);
    return Sinogram(nv, nd, std::move(t));
}

HqsParams hqs_params(double lambda0, double d_lambda, double gamma0, double d_gamma, std::size_t k_iters,
                     std::size_t l_iters, double rel_tol, double gamma_floor, const std::string& threshold_mode) {
    HqsParams p;
    p.lambda0 = lambda0;
    p.d_lambda = d_lambda;
    p.gamma0 = gamma0;
    p.d_gamma = d_gamma;
    p.K = k_iters;
    p.L = l_iters;
    p.rel_tol = rel_tol;
    p.gamma_floor = gamma_floor;
    if (threshold_mode == "ratio")
        p.threshold_mode = HqsParams::ThresholdMode::Ratio;
    else if (threshold_mode == "direct")
        p.threshold_mode = HqsParams::ThresholdMode::Direct;
    else
        throw std::invalid_argument("threshold_mode must be 'ratio' or 'direct'");
    p.validate();
    return p;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Sparse-view CT reconstruction: matched projector pair, Ram-Lak FBP, HQS-CG and an "
              "unrolled reconstructor with a learned CG warm start.";

    py::enum_<Beam>(m, "Beam").value("parallel", Beam::Parallel).value("fan", Beam::Fan);

    py::class_<ScanGeometry>(m, "ScanGeometry")
        .def_readonly("n_det", &ScanGeometry::n_det)
        .def_readonly("det_pitch", &ScanGeometry::det_pitch)
        .def_readonly("src_to_center", &ScanGeometry::src_to_center)
        .def_readonly("det_to_center", &ScanGeometry::det_to_center)
        .def_readonly("n", &ScanGeometry::n)
        .def_readonly("pixel_size", &ScanGeometry::pixel_size)
        .def_property_readonly("n_views", &ScanGeometry::n_views)
        .def_property_readonly("angles", [](const ScanGeometry& g) { return g.angles; });

    m.def(
        "make_geometry",
        [](const std::string& beam, std::size_t n_views, std::size_t n_det, std::size_t n, double pixel_size,
           std::optional<double> src_to_center, std::optional<double> det_to_center,
           std::optional<double> det_pitch) {
            Beam b;
            if (beam == "parallel")
                b = Beam::Parallel;
            else if (beam == "fan")
                b = Beam::Fan;
            else
                throw std::invalid_argument("beam must be 'parallel' or 'fan'");
            FanDistances dist;
            if (src_to_center) dist.src_to_center = *src_to_center;
            if (det_to_center) dist.det_to_center = *det_to_center;
            return make_geometry(b, n_views, n_det, ImageSpec{n, pixel_size}, dist,
                                 det_pitch ? std::optional<double>(*det_pitch) : std::nullopt);
        },
        py::arg("beam"), py::arg("n_views"), py::arg("n_det"), py::arg("n"), py::arg("pixel_size") = 1.0,
        py::arg("src_to_center") = py::none(), py::arg("det_to_center") = py::none(),
        py::arg("det_pitch") = py::none());

    m.def(
        "shepp_logan", [](std::size_t n) { return numpy_from_tensor(shepp_logan(n).data); }, py::arg("n"));
    m.def(
        "random_phantom",
        [](std::size_t n, std::uint64_t seed) { return numpy_from_tensor(random_phantom(n, seed).data); },
        py::arg("n"), py::arg("seed"));

    m.def(
        "forward_project",
        [](const DoubleArray& img, const ScanGeometry& g) {
            return numpy_from_tensor(forward_project(image_from_numpy(img, g), g).data);
        },
        py::arg("image"), py::arg("geometry"));
    m.def(
        "back_project",
        [](const DoubleArray& sino, const ScanGeometry& g) {
            return numpy_from_tensor(back_project(sinogram_from_numpy(sino), g).data);
        },
        py::arg("sinogram"), py::arg("geometry"));
    m.def(
        "fbp",
        [](const DoubleArray& sino, const ScanGeometry& g) {
            return numpy_from_tensor(fbp(sinogram_from_numpy(sino), g).data);
        },
        py::arg("sinogram"), py::arg("geometry"));
    m.def(
        "ramlak_filter",
        [](const DoubleArray& sino, const ScanGeometry& g) {
            return numpy_from_tensor(ramlak_filter(sinogram_from_numpy(sino), g).data);
        },
        py::arg("sinogram"), py::arg("geometry"));

    m.def(
        "frame_highpass",
        [](const DoubleArray& img) { return numpy_from_tensor(framelet::highpass(tensor_from_numpy(img))); },
        py::arg("image"));
    m.def(
        "frame_highpass_adjoint",
        [](const DoubleArray& c) { return numpy_from_tensor(framelet::highpass_adjoint(tensor_from_numpy(c))); },
        py::arg("coefficients"));

    m.def(
        "simulate_sinogram",
        [](const DoubleArray& img, const ScanGeometry& g, double i0, double sigma_e, std::uint64_t seed,
           bool noiseless) {
            NoiseSpec ns;
            ns.i0 = i0;
            ns.sigma_e = sigma_e;
            ns.seed = seed;
            ns.noiseless = noiseless;
            return numpy_from_tensor(simulate_sinogram(image_from_numpy(img, g), g, ns).data);
        },
        py::arg("image"), py::arg("geometry"), py::arg("i0") = 5e6, py::arg("sigma_e") = 0.0,
        py::arg("seed") = 0, py::arg("noiseless") = false);

    m.def(
        "hqs_cg",
        [](const DoubleArray& sino, const ScanGeometry& g, double lambda0, double d_lambda, double gamma0,
           double d_gamma, std::size_t k_iters, std::size_t l_iters, double rel_tol, double gamma_floor,
           const std::string& threshold_mode) {
            const HqsParams p = hqs_params(lambda0, d_lambda, gamma0, d_gamma, k_iters, l_iters, rel_tol,
                                           gamma_floor, threshold_mode);
            return numpy_from_tensor(hqs_cg(sinogram_from_numpy(sino), g, p).data);
        },
        py::arg("sinogram"), py::arg("geometry"), py::arg("lambda0") = 0.005, py::arg("d_lambda") = 0.0008,
        py::arg("gamma0") = 0.01, py::arg("d_gamma") = 0.02, py::arg("K") = 200, py::arg("L") = 5,
        py::arg("rel_tol") = 3e-4, py::arg("gamma_floor") = 1e-4, py::arg("threshold_mode") = "ratio");

    m.def(
        "metainv_reconstruct",
        [](const DoubleArray& sino, const ScanGeometry& g, const std::string& weights_path, bool all_layers) {
            Checkpoint ckpt = load_checkpoint(weights_path);
            std::vector<Image> layers = metainv_reconstruct(sinogram_from_numpy(sino), g, ckpt.config,
                                                            ckpt.weights);
            if (!all_layers) return py::object(numpy_from_tensor(layers.back().data));
            py::list out;
            for (const Image& im : layers) out.append(numpy_from_tensor(im.data));
            return py::object(out);
        },
        py::arg("sinogram"), py::arg("geometry"), py::arg("weights_path"), py::arg("all_layers") = false);

    m.def(
        "psnr",
        [](const DoubleArray& x, const DoubleArray& y, double peak) {
            return psnr(tensor_from_numpy(x), tensor_from_numpy(y), peak);
        },
        py::arg("x"), py::arg("y"), py::arg("peak") = 0.0);
    m.def(
        "ssim",
        [](const DoubleArray& x, const DoubleArray& y) { return ssim(tensor_from_numpy(x), tensor_from_numpy(y)); },
        py::arg("x"), py::arg("y"));
    m.def(
        "ms_ssim",
        [](const DoubleArray& x, const DoubleArray& y, std::size_t levels) {
            const MsSsimResult r = ms_ssim(tensor_from_numpy(x), tensor_from_numpy(y), levels);
            return py::make_tuple(r.value, r.levels);
        },
        py::arg("x"), py::arg("y"), py::arg("levels") = 5);

    m.def(
        "save_tensor",
        [](const std::string& path, const DoubleArray& arr) { save_tensor(path, tensor_from_numpy(arr)); },
        py::arg("path"), py::arg("array"));
    m.def(
        "load_tensor", [](const std::string& path) { return numpy_from_tensor(load_tensor(path)); },
        py::arg("path"));
}
