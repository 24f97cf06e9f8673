// Python bindings for the core operations: scenario handling, the full
// simulate/montecarlo pipeline, and the low-level message/fusion primitives.

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mrblat/harness.hpp"
#include "mrblat/rng.hpp"

namespace py = pybind11;
using namespace mrblat;

namespace {

Eigen::MatrixXd stack_rows(const std::vector<Vec4>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), 4);
    for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows[i];
    return out;
}

Eigen::MatrixXd truth_matrix(const std::vector<KinematicState>& truth) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(truth.size()), 4);
    for (size_t i = 0; i < truth.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = truth[i].vec();
    }
    return out;
}

Eigen::MatrixXd cov_diagonals(const std::vector<Mat4>& covs) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(covs.size()), 4);
    for (size_t i = 0; i < covs.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = covs[i].diagonal();
    }
    return out;
}

py::dict track_dict(const TrackEstimate& est) {
    py::dict d;
    d["mean"] = stack_rows(est.mean);
    d["var"] = cov_diagonals(est.cov);
    return d;
}

RadarModel model_for(const ScenarioConfig& cfg, int radar) {
    if (radar < 0 || radar >= static_cast<int>(cfg.radar_poses.size())) {
        throw ConfigError("radar index out of range");
    }
    const ChirpBank bank = make_chirp_bank(cfg.waveform, cfg.n_tx);
    return make_radar_model(cfg.radar_poses[static_cast<size_t>(radar)], cfg.array(), bank,
                            cfg.waveform, cfg.rcs, cfg.gain, cfg.power, cfg.max_range);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "multi-radar Bayesian localization and tracking simulator";

    py::register_exception<ConfigError>(m, "ConfigurationError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_RuntimeError);

    py::class_<RadarPose>(m, "RadarPose")
        .def(py::init([](const Vec2& position, double boresight_angle) {
                 RadarPose pose{position, boresight_angle};
                 pose.validate();
                 return pose;
             }),
             py::arg("position"), py::arg("boresight_angle") = 0.0)
        .def_readonly("position", &RadarPose::position)
        .def_readonly("boresight_angle", &RadarPose::boresight_angle);

    m.def(
        "local_to_global",
        [](const Vec2& local, const RadarPose& pose) {
            return local_to_global(LocalPoint{local}, pose).v;
        },
        py::arg("local"), py::arg("pose"));
    m.def(
        "global_to_local",
        [](const Vec2& global, const RadarPose& pose) {
            return global_to_local(GlobalPoint{global}, pose).v;
        },
        py::arg("global"), py::arg("pose"));
    m.def(
        "two_way_delay",
        [](const Vec2& target, const RadarPose& pose) {
            return two_way_delay(GlobalPoint{target}, pose);
        },
        py::arg("target"), py::arg("pose"));

    m.def(
        "predict",
        [](const Vec4& phi, double dt) {
            return predict(KinematicState::from_vec(phi), make_kinematic_matrices(dt)).vec();
        },
        py::arg("phi"), py::arg("dt"), "Noise-free constant-velocity propagation T(dt) phi.");
    m.def(
        "process_noise_precision",
        [](const Vec4& lambda_a, double dt) {
            return process_noise_precision(lambda_a, make_kinematic_matrices(dt));
        },
        py::arg("lambda_a"), py::arg("dt"));

    m.def(
        "combine_gaussians",
        [](const std::vector<std::pair<Vec4, Mat4>>& messages) {
            std::vector<GaussianMessage> msgs;
            for (const auto& [mean, prec] : messages) {
                GaussianMessage g;
                g.mean = mean;
                g.precision = prec;
                msgs.push_back(g);
            }
            const PosteriorSlice s = combine_gaussians(msgs);
            return py::make_tuple(s.mean, s.cov);
        },
        py::arg("messages"),
        "Product of Gaussians given as (mean, precision) pairs; returns (mean, covariance).");

    m.def(
        "update_lambda_a",
        [](const std::vector<std::pair<Vec4, Mat4>>& slices, double dt, double prior_shape,
           double prior_rate) {
            std::vector<PosteriorSlice> ps;
            for (const auto& [mean, cov] : slices) ps.push_back({mean, cov});
            const GammaSurrogate g =
                update_lambda_a(ps, make_kinematic_matrices(dt), prior_shape, prior_rate);
            return py::make_tuple(g.shape, g.rate);
        },
        py::arg("slices"), py::arg("dt"), py::arg("prior_shape") = 1.0,
        py::arg("prior_rate") = 1.0,
        "Gamma surrogate (shape, rate) from posterior (mean, covariance) slices.");

    py::class_<ScenarioConfig>(m, "Scenario")
        .def_static("preset", &preset_scenario, py::arg("name"))
        .def_static("from_json", &scenario_from_json_text, py::arg("text"))
        .def_static("from_file", &scenario_from_json_file, py::arg("path"))
        .def("to_json", &scenario_to_json_text)
        .def_property_readonly("name", [](const ScenarioConfig& c) { return c.name; })
        .def_property_readonly("n_radars",
                               [](const ScenarioConfig& c) { return c.radar_poses.size(); })
        .def_property_readonly(
            "n_pulses", [](const ScenarioConfig& c) { return generate_track(c.track).size(); })
        .def_property(
            "runs", [](const ScenarioConfig& c) { return c.mc.runs; },
            [](ScenarioConfig& c, int v) { c.mc.runs = v; })
        .def_property(
            "seed", [](const ScenarioConfig& c) { return c.mc.seed; },
            [](ScenarioConfig& c, uint64_t v) { c.mc.seed = v; })
        .def_property(
            "workers", [](const ScenarioConfig& c) { return c.mc.workers; },
            [](ScenarioConfig& c, int v) { c.mc.workers = v; })
        .def_property(
            "run_mrblat", [](const ScenarioConfig& c) { return c.run_mrblat; },
            [](ScenarioConfig& c, bool v) { c.run_mrblat = v; })
        .def_property(
            "run_kf", [](const ScenarioConfig& c) { return c.run_kf; },
            [](ScenarioConfig& c, bool v) { c.run_kf = v; })
        .def("truth", [](const ScenarioConfig& c) { return truth_matrix(generate_track(c.track)); })
        .def("validate", &ScenarioConfig::validate);

    m.def(
        "simulate",
        [](const ScenarioConfig& cfg, std::optional<uint64_t> run_seed) {
            const uint64_t seed = run_seed ? *run_seed : derive_seed(cfg.mc.seed, 0);
            const SimulationResult res = simulate_once(cfg, seed);
            py::dict d;
            d["truth"] = truth_matrix(res.truth);
            if (!res.mrblat.empty()) d["mrblat"] = track_dict(res.mrblat);
            if (!res.kf.empty()) d["kf"] = track_dict(res.kf);
            d["bus_bytes"] = res.bus_bytes;
            return d;
        },
        py::arg("scenario"), py::arg("run_seed") = std::nullopt,
        "One realization; returns truth and per-algorithm tracks.");

    m.def(
        "montecarlo",
        [](const ScenarioConfig& cfg) {
            const RunResult rr = run_montecarlo(cfg);
            py::dict d;
            d["runs"] = rr.runs;
            d["rmse_mrblat"] = rr.rmse_mrblat;
            d["rmse_kf"] = rr.rmse_kf;
            d["coverage_index_mrblat"] = rr.coverage_index_mrblat;
            d["min_snr_db"] = rr.min_snr_db;
            d["max_rmse_mrblat"] = rr.max_rmse_mrblat;
            d["max_rmse_kf"] = rr.max_rmse_kf;
            d["coverage_pooled"] = rr.coverage_pooled;
            d["coverage_mean_per_run"] = rr.coverage_mean_per_run;
            d["bus_bytes_first_run"] = rr.first_run.bus_bytes;
            return d;
        },
        py::arg("scenario"));

    m.def(
        "snr_at",
        [](const ScenarioConfig& cfg, double x, double y) {
            const ChirpBank bank = make_chirp_bank(cfg.waveform, cfg.n_tx);
            const ArrayGeometry arr = cfg.array();
            std::vector<double> out;
            for (const auto& pose : cfg.radar_poses) {
                const RadarModel model = make_radar_model(pose, arr, bank, cfg.waveform, cfg.rcs,
                                                          cfg.gain, cfg.power, cfg.max_range);
                out.push_back(snr_at(model, KinematicState{x, y, 0.0, 0.0}));
            }
            return out;
        },
        py::arg("scenario"), py::arg("x"), py::arg("y"),
        "Per-radar post-matched-filter SNR (dB) at a scene point.");

    m.def(
        "synthesize_pulse",
        [](const ScenarioConfig& cfg, int radar, const Vec4& phi, uint64_t seed) {
            const RadarModel model = model_for(cfg, radar);
            return synthesize_observation(model, KinematicState::from_vec(phi), seed).z;
        },
        py::arg("scenario"), py::arg("radar"), py::arg("phi"), py::arg("seed"),
        "Matched-filter observation matrix (N_R N_T x N_s) for one pulse.");

    m.def(
        "conventional_estimate",
        [](const ScenarioConfig& cfg, int radar, const Vec4& phi, uint64_t seed) {
            const RadarModel model = model_for(cfg, radar);
            const ObservationBlock obs =
                synthesize_observation(model, KinematicState::from_vec(phi), seed);
            const PointMeasurement meas = conventional_estimate(obs, model);
            py::dict d;
            d["range"] = meas.range;
            d["azimuth"] = meas.azimuth;
            d["global"] = meas.global.v;
            return d;
        },
        py::arg("scenario"), py::arg("radar"), py::arg("phi"), py::arg("seed"),
        "Matched-filter range + Capon DoA point estimate for one pulse.");

    m.def(
        "fit_data_message",
        [](const ScenarioConfig& cfg, int radar, const Vec4& phi, const Vec4& init_local,
           uint64_t seed) {
            const RadarModel model = model_for(cfg, radar);
            const ObservationBlock obs =
                synthesize_observation(model, KinematicState::from_vec(phi), seed);
            const DataMessageResult fit =
                minimize_data_message(obs, KinematicState::from_vec(init_local), model);
            py::dict d;
            d["mean_local"] = fit.message.mean;
            d["precision_diag"] = Vec4(fit.message.precision.diagonal());
            d["low_confidence"] = fit.low_confidence;
            d["iterations"] = fit.iterations;
            return d;
        },
        py::arg("scenario"), py::arg("radar"), py::arg("phi"), py::arg("init_local"),
        py::arg("seed"),
        "Variational data-message fit in the radar's local frame.");
}
