#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>
#include <vector>

#include "diffquant/calibration.hpp"
#include "diffquant/dataset.hpp"
#include "diffquant/diffusion.hpp"
#include "diffquant/errors.hpp"
#include "diffquant/evaluation.hpp"
#include "diffquant/quantizer.hpp"
#include "diffquant/rng.hpp"
#include "diffquant/schedule.hpp"
#include "diffquant/score_net.hpp"
#include "diffquant/serialize.hpp"
#include "diffquant/streams.hpp"
#include "diffquant/tensor.hpp"
#include "diffquant/version.hpp"

namespace py = pybind11;
using namespace diffquant;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const DoubleArray& arr) {
    py::buffer_info info = arr.request();
    std::vector<std::int64_t> shape(info.shape.begin(), info.shape.end());
    std::vector<double> data(static_cast<std::size_t>(info.size));
    if (info.size > 0) {
        std::memcpy(data.data(), info.ptr, static_cast<std::size_t>(info.size) * sizeof(double));
    }
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<double> out(shape);
    if (t.size() > 0) {
        std::memcpy(out.mutable_data(), t.data.data(),
                    static_cast<std::size_t>(t.size()) * sizeof(double));
    }
    return out;
}

SamplerConfig build_sampler(const std::string& kind, int steps, double eta,
                            const std::string& variance_mode, bool clip_x0, double clip) {
    SamplerConfig cfg;
    cfg.kind = sampler_kind_from_string(kind);
    cfg.num_steps = steps;
    cfg.eta = eta;
    cfg.variance_mode = variance_mode_from_string(variance_mode);
    cfg.clip_x0 = clip_x0;
    cfg.clip = clip;
    return cfg;
}

std::vector<int> timesteps_from_any(const py::object& t, py::ssize_t rows) {
    if (py::isinstance<py::int_>(t)) {
        return std::vector<int>(static_cast<std::size_t>(rows), t.cast<int>());
    }
    auto ts = t.cast<std::vector<int>>();
    if (static_cast<py::ssize_t>(ts.size()) != rows) {
        throw InputError("timestep list length does not match the row count");
    }
    return ts;
}

// Checkpoint plus the schedule it trained against; the Python surface works
// with whole artifacts rather than loose layer tensors.
struct PyModel {
    Checkpoint ckpt;
    std::string id;
    NoiseSchedule sched;

    static PyModel load(const std::string& path) {
        LoadedCheckpoint lc = load_checkpoint(path);
        PyModel m;
        m.ckpt = std::move(lc.ckpt);
        m.id = lc.id;
        m.sched = make_schedule(m.ckpt.sched_kind, m.ckpt.T, m.ckpt.const_beta);
        return m;
    }
};

struct PyQuantModel {
    QuantizedModel qm;
    NoiseSchedule sched;

    static PyQuantModel load(const std::string& path) {
        PyQuantModel m;
        m.qm = load_qmodel(path);
        m.sched = make_schedule(m.qm.sched_kind, m.qm.T, m.qm.const_beta);
        return m;
    }
};

template <typename Net>
py::array_t<double> sample_array(const Net& net, const NoiseSchedule& sched,
                                 const std::string& kind, int steps, double eta,
                                 const std::string& variance_mode, bool clip_x0, double clip,
                                 int n, std::uint64_t seed) {
    SamplerConfig cfg = build_sampler(kind, steps, eta, variance_mode, clip_x0, clip);
    cfg.validate(sched);
    return array_from_tensor(sample_batch(net, cfg, n, sched, seed).samples);
}

}  // namespace

PYBIND11_MODULE(_diffquant, m) {
    m.doc() = "metric-calibrated low-bit quantization for toy denoising models";
    m.attr("__version__") = kVersionString;

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<MissingInputError>(m, "MissingInputError", PyExc_FileNotFoundError);
    py::register_exception<IncompatibleError>(m, "IncompatibleError", PyExc_ValueError);
    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<Rng>(m, "Rng")
        .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("seed"), py::arg("stream"))
        .def("next_u32", &Rng::next_u32)
        .def("uniform01", &Rng::uniform01)
        .def("standard_normal", &Rng::standard_normal)
        .def("uniform_below", &Rng::uniform_below, py::arg("n"));

    py::class_<QuantMetric>(m, "QuantMetric")
        .def_static("lp", &QuantMetric::lp, py::arg("p"))
        .def_static("l1", &QuantMetric::l1)
        .def_static("cosine", &QuantMetric::cosine)
        .def_static("kl", &QuantMetric::kl, py::arg("bins") = 2048)
        .def_property_readonly("name", &QuantMetric::name);

    py::class_<QuantParams>(m, "QuantParams")
        .def_readonly("scales", &QuantParams::scales)
        .def_readonly("zero_points", &QuantParams::zero_points)
        .def_readonly("bits", &QuantParams::bits)
        .def_readonly("is_signed", &QuantParams::is_signed)
        .def_readonly("axis", &QuantParams::axis)
        .def_property_readonly("per_channel",
                               [](const QuantParams& q) {
                                   return q.granularity == Granularity::PerChannel;
                               })
        .def_property_readonly("p_min", &QuantParams::p_min)
        .def_property_readonly("p_max", &QuantParams::p_max);

    m.def(
        "fit_params",
        [](const DoubleArray& x, const QuantMetric& metric, int bits, bool is_signed,
           bool symmetric, bool per_channel, int axis, int num_candidates,
           double min_scale_fraction) {
            SearchConfig cfg;
            cfg.num_candidates = num_candidates;
            cfg.min_scale_fraction = min_scale_fraction;
            cfg.symmetric = symmetric;
            return fit_params(tensor_from_array(x), metric, cfg, bits, is_signed,
                              per_channel ? Granularity::PerChannel : Granularity::PerTensor,
                              axis);
        },
        py::arg("x"), py::arg("metric"), py::arg("bits") = 8, py::arg("is_signed") = false,
        py::arg("symmetric") = false, py::arg("per_channel") = false, py::arg("axis") = 0,
        py::arg("num_candidates") = 100, py::arg("min_scale_fraction") = 0.2);

    m.def(
        "minmax_params",
        [](const DoubleArray& x, int bits, bool is_signed, bool symmetric, bool per_channel,
           int axis) {
            return minmax_params(tensor_from_array(x), bits, is_signed, symmetric,
                                 per_channel ? Granularity::PerChannel : Granularity::PerTensor,
                                 axis);
        },
        py::arg("x"), py::arg("bits") = 8, py::arg("is_signed") = false,
        py::arg("symmetric") = false, py::arg("per_channel") = false, py::arg("axis") = 0);

    m.def(
        "quantize",
        [](const DoubleArray& x, const QuantParams& q) {
            return array_from_tensor(quantize(tensor_from_array(x), q));
        },
        py::arg("x"), py::arg("params"));

    m.def(
        "quant_dequant",
        [](const DoubleArray& x, const QuantParams& q) {
            return array_from_tensor(quant_dequant(tensor_from_array(x), q));
        },
        py::arg("x"), py::arg("params"));

    m.def(
        "metric_distance",
        [](const DoubleArray& x_sim, const DoubleArray& x_fp, const QuantMetric& metric) {
            return metric_distance(tensor_from_array(x_sim), tensor_from_array(x_fp), metric);
        },
        py::arg("x_sim"), py::arg("x_fp"), py::arg("metric"));

    m.def("round_half_even", &round_half_even, py::arg("v"));

    py::class_<NoiseSchedule>(m, "Schedule")
        .def_readonly("T", &NoiseSchedule::T)
        .def_property_readonly(
            "kind", [](const NoiseSchedule& s) { return to_string(s.kind); })
        .def_readonly("beta", &NoiseSchedule::beta)
        .def_readonly("alpha", &NoiseSchedule::alpha)
        .def_readonly("alpha_bar", &NoiseSchedule::alpha_bar)
        .def_readonly("beta_tilde", &NoiseSchedule::beta_tilde);

    m.def(
        "make_schedule",
        [](const std::string& kind, int T, double const_beta) {
            return make_schedule(schedule_kind_from_string(kind), T, const_beta);
        },
        py::arg("kind"), py::arg("T"), py::arg("const_beta") = 0.0);

    m.def(
        "make_dataset",
        [](const std::string& kind, int n, std::uint64_t seed) {
            return array_from_tensor(make_dataset(dataset_kind_from_string(kind), n, seed).data);
        },
        py::arg("kind"), py::arg("n"), py::arg("seed"));

    m.def(
        "q_sample",
        [](const DoubleArray& x0, int t, const DoubleArray& eps, const NoiseSchedule& sched) {
            return array_from_tensor(
                q_sample(tensor_from_array(x0), t, tensor_from_array(eps), sched));
        },
        py::arg("x0"), py::arg("t"), py::arg("eps"), py::arg("sched"));

    m.def("respace", &respace, py::arg("T"), py::arg("num_steps"));

    m.def("ndtc_timestep", &draw_ndtc_timestep, py::arg("mu"), py::arg("T"), py::arg("rng"));

    m.def(
        "sliced_wasserstein",
        [](const DoubleArray& a, const DoubleArray& b, int n_proj, std::uint64_t seed) {
            Rng rng(seed, streams::kEvalProjections);
            return sliced_wasserstein(tensor_from_array(a), tensor_from_array(b), n_proj, rng);
        },
        py::arg("a"), py::arg("b"), py::arg("n_proj") = 128, py::arg("seed") = 9910);

    py::class_<PyModel>(m, "Model")
        .def_static("load", &PyModel::load, py::arg("path"))
        .def_readonly("id", &PyModel::id)
        .def_property_readonly("T", [](const PyModel& m_) { return m_.ckpt.T; })
        .def_property_readonly("schedule",
                               [](const PyModel& m_) { return m_.sched; })
        .def(
            "forward",
            [](const PyModel& m_, const DoubleArray& x, const py::object& t) {
                Tensor xt = tensor_from_array(x);
                std::vector<int> ts = timesteps_from_any(t, xt.dim(0));
                return array_from_tensor(forward(m_.ckpt.net, xt, ts, m_.ckpt.T));
            },
            py::arg("x"), py::arg("t"))
        .def(
            "sample",
            [](const PyModel& m_, int n, std::uint64_t seed, const std::string& kind, int steps,
               double eta, const std::string& variance_mode, bool clip_x0, double clip) {
                return sample_array(QuantizedNetwork::wrap_fp(m_.ckpt.net), m_.sched, kind,
                                    steps, eta, variance_mode, clip_x0, clip, n, seed);
            },
            py::arg("n"), py::arg("seed"), py::arg("kind") = "ddim", py::arg("steps") = 50,
            py::arg("eta") = 0.0, py::arg("variance_mode") = "fixed_small",
            py::arg("clip_x0") = false, py::arg("clip") = 1.0)
        .def(
            "collect",
            [](const PyModel& m_, const std::string& collector, int n, std::uint64_t seed,
               double mu, int t) {
                CollectorKind kind = collector_kind_from_string(collector);
                CalibrationSet set;
                switch (kind) {
                    case CollectorKind::NDTC: {
                        double mu_eff = mu < 0.0 ? 0.4 * m_.ckpt.T : mu;
                        set = collect_ndtc(m_.ckpt.net, m_.sched, n, mu_eff, seed);
                        break;
                    }
                    case CollectorKind::FixedT: {
                        int t_eff = t < 0 ? static_cast<int>(round_half_even(0.5 * m_.ckpt.T))
                                          : t;
                        set = collect_fixed_t(m_.ckpt.net, m_.sched, n, t_eff, seed);
                        break;
                    }
                    case CollectorKind::UniformT:
                        set = collect_uniform_t(m_.ckpt.net, m_.sched, n, seed);
                        break;
                    default:
                        throw ConfigError(
                            "the forward-process collector needs a dataset, not a model");
                }
                set.manifest.checkpoint_id = m_.id;
                py::array_t<std::uint32_t> ts(
                    static_cast<py::ssize_t>(set.timesteps.size()));
                std::memcpy(ts.mutable_data(), set.timesteps.data(),
                            set.timesteps.size() * sizeof(std::uint32_t));
                return py::make_tuple(array_from_tensor(set.samples), ts);
            },
            py::arg("collector") = "ndtc", py::arg("n") = 1024, py::arg("seed") = 42,
            py::arg("mu") = -1.0, py::arg("t") = -1);

    py::class_<PyQuantModel>(m, "QuantModel")
        .def_static("load", &PyQuantModel::load, py::arg("path"))
        .def_property_readonly("checkpoint_id",
                               [](const PyQuantModel& q) { return q.qm.checkpoint_id; })
        .def_property_readonly("bits", [](const PyQuantModel& q) { return q.qm.bits; })
        .def_property_readonly("metric",
                               [](const PyQuantModel& q) { return q.qm.metric.name(); })
        .def_property_readonly("T", [](const PyQuantModel& q) { return q.qm.T; })
        .def(
            "forward",
            [](const PyQuantModel& q, const DoubleArray& x, const py::object& t) {
                Tensor xt = tensor_from_array(x);
                std::vector<int> ts = timesteps_from_any(t, xt.dim(0));
                return array_from_tensor(forward(q.qm.qnet, xt, ts, q.qm.T));
            },
            py::arg("x"), py::arg("t"))
        .def(
            "sample",
            [](const PyQuantModel& q, int n, std::uint64_t seed, const std::string& kind,
               int steps, double eta, const std::string& variance_mode, bool clip_x0,
               double clip) {
                return sample_array(q.qm.qnet, q.sched, kind, steps, eta, variance_mode,
                                    clip_x0, clip, n, seed);
            },
            py::arg("n"), py::arg("seed"), py::arg("kind") = "ddim", py::arg("steps") = 50,
            py::arg("eta") = 0.0, py::arg("variance_mode") = "fixed_small",
            py::arg("clip_x0") = false, py::arg("clip") = 1.0)
        .def("save",
             [](const PyQuantModel& q, const std::string& path) { save_qmodel(path, q.qm); },
             py::arg("path"));

    m.def(
        "calibrate",
        [](const PyModel& model, const DoubleArray& samples, const std::vector<int>& timesteps,
           const QuantMetric& metric, int bits, int num_candidates, double min_scale_fraction) {
            CalibrationSet set;
            set.samples = tensor_from_array(samples);
            set.timesteps.assign(timesteps.begin(), timesteps.end());
            set.manifest.collector = "in_memory";
            set.manifest.n = static_cast<int>(set.timesteps.size());
            set.manifest.schedule_kind = to_string(model.ckpt.sched_kind);
            set.manifest.T = model.ckpt.T;
            set.manifest.const_beta = model.ckpt.const_beta;
            set.manifest.checkpoint_id = model.id;
            set.validate(model.ckpt.T);
            SearchConfig search;
            search.num_candidates = num_candidates;
            search.min_scale_fraction = min_scale_fraction;
            PyQuantModel out;
            out.qm.qnet =
                calibrate_network(model.ckpt.net, set, model.sched, metric, bits, search);
            out.qm.bits = bits;
            out.qm.metric = metric;
            out.qm.search = search;
            out.qm.checkpoint_id = model.id;
            out.qm.calib_collector = set.manifest.collector;
            out.qm.sched_kind = model.ckpt.sched_kind;
            out.qm.T = model.ckpt.T;
            out.qm.const_beta = model.ckpt.const_beta;
            out.sched = model.sched;
            return out;
        },
        py::arg("model"), py::arg("samples"), py::arg("timesteps"), py::arg("metric"),
        py::arg("bits") = 8, py::arg("num_candidates") = 100,
        py::arg("min_scale_fraction") = 0.2);
}
