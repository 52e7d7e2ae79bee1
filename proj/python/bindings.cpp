#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "uinr/errors.hpp"
#include "uinr/eval.hpp"
#include "uinr/lcp.hpp"
#include "uinr/training.hpp"

namespace py = pybind11;
using namespace uinr;

namespace {

// A trained or loaded model: architecture, parameters and normalization.
struct PyModel {
    ModelConfig config;
    Network net;
    NormParams norm;
    Dims dims{1, 1, 1};
    Spacing spacing{1.0, 1.0, 1.0};
};

MatrixXd to_coords(const std::vector<std::array<double, 3>>& pts) {
    MatrixXd m(static_cast<Eigen::Index>(pts.size()), 3);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (int j = 0; j < 3; ++j) m(static_cast<Eigen::Index>(i), j) = pts[i][j];
    }
    return m;
}

std::vector<double> to_vec(const VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

py::dict report_dict(const EvalReport& rep) {
    py::dict d;
    d["psnr_db"] = rep.psnr_db;
    d["corr_eu_error"] = rep.corr_eu_error;
    d["corr_au_locvar"] = rep.corr_au_locvar;
    d["corr_au_interp"] = rep.corr_au_interp;
    d["nll_eu"] = rep.nll_eu;
    d["nll_au"] = rep.nll_au;
    d["clamped_eu"] = rep.clamped_eu;
    d["clamped_au"] = rep.clamped_au;
    return d;
}

}  // namespace

PYBIND11_MODULE(_uinr, m) {
    m.doc() = "uncertainty-aware implicit neural representations for volume data";

    py::register_exception<ConfigError>(m, "UinrConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "UinrIoError", PyExc_IOError);
    py::register_exception<NumericError>(m, "UinrNumericError", PyExc_ArithmeticError);
    py::register_exception<UsageError>(m, "UinrUsageError", PyExc_RuntimeError);

    py::class_<VolumeGrid>(m, "VolumeGrid")
        .def(py::init([](std::array<int, 3> dims, std::vector<double> values) {
                 return VolumeGrid(dims, std::move(values));
             }),
             py::arg("dims"), py::arg("values"))
        .def_property_readonly("dims", [](const VolumeGrid& v) { return v.dims(); })
        .def_property_readonly("values", [](const VolumeGrid& v) { return v.values(); })
        .def("at", &VolumeGrid::at, py::arg("x"), py::arg("y"), py::arg("z"))
        .def("min", &VolumeGrid::min_value)
        .def("max", &VolumeGrid::max_value)
        .def("__len__", &VolumeGrid::size);

    m.def("load_raw",
          [](const std::string& path, Dims dims, const std::string& dtype) {
              return load_raw(path, dims, parse_dtype(dtype));
          },
          py::arg("path"), py::arg("dims"), py::arg("dtype") = "f32le");
    m.def("write_volume",
          [](const std::string& path, const VolumeGrid& vol, const std::string& field_kind) {
              VolumeMeta meta;
              meta.dims = vol.dims();
              meta.spacing = vol.spacing();
              meta.field_kind = field_kind;
              write_volume(path, vol, meta);
          },
          py::arg("path"), py::arg("volume"), py::arg("field_kind") = "scalar");
    m.def("read_volume",
          [](const std::string& path) { return read_volume(path).first; }, py::arg("path"));

    m.def("gradient_magnitude", &gradient_magnitude);
    m.def("local_variance", &local_variance, py::arg("volume"), py::arg("window"));
    m.def("interpolation_error_field", &interpolation_error_field, py::arg("volume"),
          py::arg("factors"));
    m.def("downsample", &downsample, py::arg("volume"), py::arg("factors"));
    m.def("upsample_trilinear", &upsample_trilinear, py::arg("volume"), py::arg("dims"));
    m.def("trilinear_sample", &trilinear_sample, py::arg("volume"), py::arg("px"),
          py::arg("py"), py::arg("pz"));

    py::class_<NIGParams>(m, "NIGParams")
        .def(py::init([](double v, double gamma, double alpha, double beta) {
                 return NIGParams{v, gamma, alpha, beta};
             }),
             py::arg("v"), py::arg("gamma"), py::arg("alpha"), py::arg("beta"))
        .def_readwrite("v", &NIGParams::v)
        .def_readwrite("gamma", &NIGParams::gamma)
        .def_readwrite("alpha", &NIGParams::alpha)
        .def_readwrite("beta", &NIGParams::beta);

    m.def("link",
          [](double rv, double rgamma, double ralpha, double rbeta) {
              return link(RawEvidentialOutput{rv, rgamma, ralpha, rbeta});
          },
          py::arg("rv"), py::arg("rgamma"), py::arg("ralpha"), py::arg("rbeta"));
    m.def("predictive_moments", [](const NIGParams& p) {
        const auto mo = predictive_moments(p);
        return py::make_tuple(mo.mean, mo.au, mo.eu);
    });
    m.def("nig_pdf", &nig_pdf, py::arg("mu"), py::arg("sigma2"), py::arg("params"));
    m.def("nig_kl", &nig_kl, py::arg("p"), py::arg("q"));
    m.def("evidence_penalty", &evidence_penalty, py::arg("y"), py::arg("params"));

    py::class_<ModelConfig>(m, "ModelConfig")
        .def_readwrite("width", &ModelConfig::width)
        .def_readwrite("blocks", &ModelConfig::blocks)
        .def_readwrite("decoders", &ModelConfig::decoders)
        .def_readwrite("decoder_hidden", &ModelConfig::decoder_hidden)
        .def_readwrite("dropout_rate", &ModelConfig::dropout_rate)
        .def_readwrite("mc_passes", &ModelConfig::mc_passes)
        .def_property_readonly("variant",
                               [](const ModelConfig& c) { return variant_name(c.variant); })
        .def_property_readonly("parameter_count", &ModelConfig::parameter_count);

    m.def("default_config",
          [](const std::string& variant) { return default_config(parse_variant(variant)); },
          py::arg("variant"));

    py::class_<PyModel>(m, "Model")
        .def_property_readonly("config", [](const PyModel& s) { return s.config; })
        .def_property_readonly("dims", [](const PyModel& s) { return s.dims; })
        .def_property_readonly("parameter_count",
                               [](const PyModel& s) { return s.net.parameter_count(); })
        .def("predict",
             [](const PyModel& s, const std::vector<std::array<double, 3>>& pts,
                std::uint64_t seed) {
                 const PredictBatch pb = predict(s.config, s.net, to_coords(pts), seed);
                 py::dict d;
                 d["mean"] = to_vec(pb.mean);
                 if (pb.au.size() > 0) {
                     d["au"] = to_vec(pb.au);
                     d["eu"] = to_vec(pb.eu);
                 }
                 return d;
             },
             py::arg("points"), py::arg("seed") = 0)
        .def("reconstruct",
             [](const PyModel& s, std::optional<Dims> dims, std::uint64_t seed) {
                 const PredictionField f = reconstruct(s.config, s.net, s.norm,
                                                       dims.value_or(s.dims), seed, s.spacing);
                 py::dict d;
                 d["mean"] = f.mean;
                 d["seconds"] = f.seconds;
                 if (f.au) {
                     d["au"] = *f.au;
                     d["eu"] = *f.eu;
                 }
                 return d;
             },
             py::arg("dims") = std::nullopt, py::arg("seed") = 0)
        .def("save", [](const PyModel& s, const std::string& path) {
            Checkpoint ckpt;
            ckpt.config = s.config;
            ckpt.norm = s.norm;
            ckpt.dims = s.dims;
            ckpt.spacing = s.spacing;
            ckpt.params = s.net.params();
            save_checkpoint(path, ckpt);
        });

    m.def("train",
          [](const VolumeGrid& volume, const std::string& variant, int epochs,
             int batch_size, std::uint64_t seed, double lr, const std::string& out_dir,
             std::optional<ModelConfig> model) {
              ModelConfig cfg = model.value_or(default_config(parse_variant(variant)));
              cfg.variant = parse_variant(variant);
              TrainConfig tc;
              tc.epochs = epochs;
              tc.batch_size = batch_size;
              tc.seed = seed;
              tc.lr.base_lr = lr;
              tc.weights = default_weights(cfg.variant);
              tc.out_dir = out_dir;
              TrainResult res = train(cfg, volume, tc);
              py::dict d;
              d["model"] = PyModel{res.config, std::move(res.net), res.norm, res.dims,
                                   res.spacing};
              std::vector<double> totals;
              for (const auto& rec : res.log) totals.push_back(rec.total);
              d["loss"] = totals;
              return d;
          },
          py::arg("volume"), py::arg("variant") = "rev", py::arg("epochs") = 300,
          py::arg("batch_size") = 4096, py::arg("seed") = 1, py::arg("lr") = 5e-5,
          py::arg("out_dir") = "", py::arg("model") = std::nullopt);

    m.def("load_model", [](const std::string& path) {
        const Checkpoint ckpt = load_checkpoint(path);
        return PyModel{ckpt.config, restore_network(ckpt), ckpt.norm, ckpt.dims,
                       ckpt.spacing};
    });

    m.def("psnr", &psnr, py::arg("ground_truth"), py::arg("prediction"));
    m.def("corr_fields", &corr_fields, py::arg("a"), py::arg("b"));
    m.def("evaluate",
          [](const VolumeGrid& gt, const VolumeGrid& mean, const VolumeGrid& au,
             const VolumeGrid& eu, Factors locvar_window, Factors interp_factors,
             bool squared_error) {
              return report_dict(
                  evaluate(gt, mean, au, eu, locvar_window, interp_factors, squared_error));
          },
          py::arg("ground_truth"), py::arg("mean"), py::arg("au"), py::arg("eu"),
          py::arg("locvar_window") = Factors{2, 2, 2},
          py::arg("interp_factors") = Factors{4, 4, 4}, py::arg("squared_error") = false);

    m.def("cell_lcp", &cell_lcp, py::arg("mu"), py::arg("var"), py::arg("isovalue"));
    m.def("lcp_field",
          [](const VolumeGrid& mean, const VolumeGrid& var, double isovalue) {
              return lcp_field(GaussianField(mean, var), isovalue);
          },
          py::arg("mean"), py::arg("var"), py::arg("isovalue"));
    m.def("mean_crossing_mask", &mean_crossing_mask, py::arg("mean"), py::arg("isovalue"));
    m.def("normal_cdf", &normal_cdf);
}
