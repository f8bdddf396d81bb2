#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "deffa/cli.hpp"
#include "deffa/csa.hpp"
#include "deffa/errors.hpp"
#include "deffa/imaging.hpp"
#include "deffa/invariant.hpp"
#include "deffa/manifest.hpp"
#include "deffa/metrics.hpp"
#include "deffa/net.hpp"
#include "deffa/train.hpp"

namespace py = pybind11;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8 = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;

deffa::ColorImage to_image(const F64& a)
{
    if (a.ndim() != 3 || a.shape(2) != 3) throw deffa::ValidationError("expected an (H, W, 3) array");
    const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    return deffa::ColorImage(h, w, std::vector<double>(a.data(), a.data() + a.size()));
}

deffa::GrayField to_field(const F64& a)
{
    if (a.ndim() != 2) throw deffa::ValidationError("expected an (H, W) array");
    return deffa::GrayField(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                            std::vector<double>(a.data(), a.data() + a.size()));
}

deffa::BinaryMask to_mask(const U8& a)
{
    if (a.ndim() != 2) throw deffa::ValidationError("expected an (H, W) mask");
    std::vector<uint8_t> px(a.data(), a.data() + a.size());
    for (auto& p : px) p = p ? 1 : 0;
    return deffa::BinaryMask(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), std::move(px));
}

F64 from_field(const deffa::GrayField& f)
{
    F64 out({f.height(), f.width()});
    std::copy(f.pixels().begin(), f.pixels().end(), out.mutable_data());
    return out;
}

F64 from_image(const deffa::ColorImage& img)
{
    F64 out({img.height(), img.width(), 3});
    std::copy(img.data().begin(), img.data().end(), out.mutable_data());
    return out;
}

py::dict counts_dict(const deffa::ConfusionCounts& c)
{
    py::dict d;
    d["tp"] = c.tp;
    d["tn"] = c.tn;
    d["fp"] = c.fp;
    d["fn"] = c.fn;
    return d;
}

py::dict report_dict(const deffa::MetricsReport& r)
{
    py::dict d;
    d["acc"] = r.acc;
    d["recall"] = r.recall;
    d["specificity"] = r.specificity;
    d["precision"] = r.precision;
    d["iou"] = r.iou;
    d["dsc"] = r.dsc;
    d["mcc"] = r.mcc;
    d["degenerate"] = r.degenerate;
    return d;
}

deffa::InvariantConfig invariant_config(int window_size, double alpha_enh, bool normalize)
{
    deffa::InvariantConfig cfg;
    cfg.window_size = window_size;
    cfg.alpha_enh = alpha_enh;
    cfg.normalize_output = normalize;
    return cfg;
}

class Model {
public:
    explicit Model(const std::string& path) : ckpt_(deffa::load_checkpoint(path)) {}

    F64 predict(const F64& image, int window_size, double alpha_enh)
    {
        deffa::FundusSample s;
        s.id = "input";
        s.image = to_image(image);
        s.vessel_mask = deffa::BinaryMask(s.image.height(), s.image.width());
        s.fov_mask = deffa::BinaryMask(s.image.height(), s.image.width(), 1);
        return from_field(deffa::predict(ckpt_.net, s, invariant_config(window_size, alpha_enh, true)));
    }

    std::string manifest() const { return ckpt_.manifest.dump(); }
    int64_t payload_bytes() const { return deffa::parameter_payload_bytes(*ckpt_.net); }

private:
    deffa::Checkpoint ckpt_;
};

}  // namespace

PYBIND11_MODULE(_deffa, m)
{
    m.doc() = "Retinal vessel segmentation pipeline";
    m.attr("__version__") = deffa::kToolVersion;

    m.def(
        "invariant_input",
        [](const F64& image, int window_size, double alpha_enh, bool normalize) {
            return from_field(
                deffa::make_invariant_input(to_image(image), invariant_config(window_size, alpha_enh, normalize)));
        },
        py::arg("image"), py::arg("window_size") = 15, py::arg("alpha_enh") = 1.0, py::arg("normalize") = true,
        "Enhanced single-channel input for an (H, W, 3) image in [0, 1].");

    m.def(
        "jaccard_distance", [](const U8& a, const U8& b) { return deffa::jaccard_distance(to_mask(a), to_mask(b)); },
        py::arg("a"), py::arg("b"));

    m.def(
        "csa_transform",
        [](const F64& image, std::array<double, 3> mean, std::array<double, 3> std, double alpha, bool clip) {
            deffa::ChannelStats stats;
            stats.mean = mean;
            stats.std = std;
            return from_image(deffa::csa_transform(to_image(image), stats, alpha, clip));
        },
        py::arg("image"), py::arg("mean"), py::arg("std"), py::arg("alpha"), py::arg("clip") = true);

    m.def(
        "confusion",
        [](const F64& prob, const U8& gt, const U8& fov, double threshold) {
            return counts_dict(deffa::confusion(to_field(prob), to_mask(gt), to_mask(fov), threshold));
        },
        py::arg("prob"), py::arg("gt"), py::arg("fov"), py::arg("threshold") = 0.5);

    m.def(
        "segmentation_metrics",
        [](uint64_t tp, uint64_t tn, uint64_t fp, uint64_t fn) {
            return report_dict(deffa::segmentation_metrics({tp, tn, fp, fn}));
        },
        py::arg("tp"), py::arg("tn"), py::arg("fp"), py::arg("fn"));

    m.def(
        "roc_auc",
        [](const F64& prob, const U8& gt, const U8& fov) {
            return deffa::roc_auc(to_field(prob), to_mask(gt), to_mask(fov));
        },
        py::arg("prob"), py::arg("gt"), py::arg("fov"));

    m.def("default_payload_bytes", [] {
        deffa::DeffaNet net = deffa::make_model({}, 0);
        return deffa::parameter_payload_bytes(*net);
    });

    m.def(
        "run", [](const std::vector<std::string>& args) { return deffa::dispatch(args); }, py::arg("args"),
        "Runs one command-line subcommand and returns its exit status.");

    py::class_<Model>(m, "Model")
        .def(py::init<const std::string&>(), py::arg("checkpoint"))
        .def("predict", &Model::predict, py::arg("image"), py::arg("window_size") = 15, py::arg("alpha_enh") = 1.0)
        .def_property_readonly("manifest", &Model::manifest)
        .def_property_readonly("payload_bytes", &Model::payload_bytes);
}
