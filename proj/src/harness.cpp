#include "mrblat/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "mrblat/rng.hpp"

namespace mrblat {

using nlohmann::json;

ArrayGeometry ScenarioConfig::array() const {
    if (custom_array) return *custom_array;
    return make_virtual_ula(n_tx, n_rx, waveform.wavelength());
}

void ScenarioConfig::validate() const {
    if (radar_poses.empty()) throw ConfigError("ScenarioConfig: no radars");
    for (const auto& pose : radar_poses) pose.validate();
    waveform.validate();
    if (n_tx < 1 || n_rx < 1) throw ConfigError("ScenarioConfig: need n_tx, n_rx >= 1");
    if (!(power > 0.0) || !(gain > 0.0) || !(rcs > 0.0) || !(max_range > 0.0)) {
        throw ConfigError("ScenarioConfig: power, gain, rcs, max_range must be positive");
    }
    track.validate();
    if (n_ite < 1) throw ConfigError("ScenarioConfig: n_ite must be >= 1");
    for (int i = 0; i < 4; ++i) {
        if (!(lambda_init[i] > 0.0)) throw ConfigError("ScenarioConfig: lambda_init must be positive");
    }
    if (smoothing_window < 0) throw ConfigError("ScenarioConfig: smoothing_window must be >= 0");
    if (mc.runs < 1) throw ConfigError("ScenarioConfig: monte_carlo.runs must be >= 1");
    if (mc.workers < 1) throw ConfigError("ScenarioConfig: monte_carlo.workers must be >= 1");
    if (!(snr_grid.step > 0.0) || snr_grid.x_max <= snr_grid.x_min ||
        snr_grid.y_max <= snr_grid.y_min) {
        throw ConfigError("ScenarioConfig: bad snr_grid");
    }
    if (custom_array) custom_array->validate();
}

// --- presets ----------------------------------------------------------------

namespace {

// Chains arcs and stop-and-go joints while tracking the running pose so the
// produced TrackSpec is continuous by construction.
class TrackBuilder {
public:
    TrackBuilder(Vec2 start, Vec2 dir, double speed)
        : pos_(start), dir_(dir.normalized()), speed_(speed) {}

    // sweep > 0 turns left (CCW), sweep < 0 turns right.
    TrackBuilder& turn(double radius, double sweep) {
        const double sgn = sweep >= 0.0 ? 1.0 : -1.0;
        const Vec2 normal = sgn * Vec2{-dir_.y(), dir_.x()};
        const Vec2 center = pos_ + radius * normal;
        const double a0 = std::atan2(pos_.y() - center.y(), pos_.x() - center.x());
        segments_.push_back(ArcSegment{center, radius, a0, sweep, speed_});
        const double a1 = a0 + sweep;
        pos_ = center + radius * Vec2{std::cos(a1), std::sin(a1)};
        dir_ = sgn * Vec2{-std::sin(a1), std::cos(a1)};
        return *this;
    }

    // Full stop, then re-accelerate along new_dir at the same rate. The pose
    // advances over both legs so the following arc connects exactly.
    TrackBuilder& stop_and_go(double decel, Vec2 new_dir, double new_speed) {
        segments_.push_back(LinearStopSegment{dir_ * speed_, decel});
        pos_ += dir_ * (speed_ * speed_ / (2.0 * decel));
        new_dir.normalize();
        pos_ += new_dir * (new_speed * new_speed / (2.0 * decel));
        dir_ = new_dir;
        speed_ = new_speed;
        return *this;
    }

    TrackSpec finish(double prf) const {
        TrackSpec spec;
        spec.segments = segments_;
        spec.pulse_rate = prf;
        return spec;
    }

private:
    std::vector<TrackSegment> segments_;
    Vec2 pos_;
    Vec2 dir_;
    double speed_;
};

ScenarioConfig base_three_radar_scenario() {
    ScenarioConfig cfg;
    cfg.waveform = make_waveform_config(10e9, 20e6, 16e-6, 256e6);
    cfg.radar_poses = {
        {Vec2{0.0, 0.0}, -0.15},
        {Vec2{50.0, 0.0}, 0.0},
        {Vec2{100.0, 0.0}, 0.15},
    };
    return cfg;
}

}  // namespace

ScenarioConfig preset_scenario(const std::string& name) {
    if (name == "track-a-like") {
        ScenarioConfig cfg = base_three_radar_scenario();
        cfg.name = name;
        // Loop with a brief far spike (~215 m at the tight turn, starving the
        // conventional estimator at every radar) and two close passes on the
        // way home.
        TrackBuilder b(Vec2{-5.0, 55.0}, Vec2{1.0, 0.0}, 10.0);
        b.turn(50.0, 0.5 * kPi)
            .stop_and_go(10.0, Vec2{0.0, 1.0}, 10.0)
            .turn(150.0, -30.0 * kPi / 180.0)
            .turn(20.0, -kPi)
            .turn(150.0, -30.0 * kPi / 180.0)
            .stop_and_go(10.0, Vec2{-1.0, 0.0}, 10.0)
            .turn(45.0, 135.0 * kPi / 180.0)
            .turn(40.0, 0.5 * kPi)
            .turn(45.0, 75.0 * kPi / 180.0);
        cfg.track = b.finish(10.0);
        return cfg;
    }
    if (name == "track-b-like") {
        ScenarioConfig cfg = base_three_radar_scenario();
        cfg.name = name;
        // S-shape whose middle loop tops out near 205 m.
        TrackBuilder b(Vec2{105.0, 60.0}, Vec2{-1.0, 0.0}, 10.0);
        b.turn(30.0, -kPi)
            .stop_and_go(10.0, Vec2{1.0, 0.0}, 10.0)
            .turn(25.0, 1.5 * kPi)
            .stop_and_go(10.0, Vec2{0.0, -1.0}, 10.0)
            .turn(35.0, -0.5 * kPi)
            .turn(30.0, 115.0 * kPi / 180.0);
        cfg.track = b.finish(10.0);
        return cfg;
    }
    throw ConfigError("unknown preset '" + name + "' (try track-a-like, track-b-like)");
}

// --- JSON -------------------------------------------------------------------

namespace {

json segment_to_json(const TrackSegment& seg) {
    json j;
    if (const auto* a = std::get_if<ArcSegment>(&seg)) {
        j["type"] = "arc";
        j["center"] = {a->center.x(), a->center.y()};
        j["radius"] = a->radius;
        j["start_angle_rad"] = a->start_angle;
        j["sweep_rad"] = a->sweep;
        j["speed_mps"] = a->speed;
    } else {
        const auto& st = std::get<LinearStopSegment>(seg);
        j["type"] = "stop";
        j["start_velocity"] = {st.start_velocity.x(), st.start_velocity.y()};
        j["deceleration_mps2"] = st.deceleration;
    }
    return j;
}

TrackSegment segment_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "arc") {
        ArcSegment a;
        a.center = Vec2{j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>()};
        a.radius = j.at("radius").get<double>();
        a.start_angle = j.at("start_angle_rad").get<double>();
        a.sweep = j.at("sweep_rad").get<double>();
        a.speed = j.at("speed_mps").get<double>();
        return a;
    }
    if (type == "stop") {
        LinearStopSegment st;
        st.start_velocity = Vec2{j.at("start_velocity").at(0).get<double>(),
                                 j.at("start_velocity").at(1).get<double>()};
        st.deceleration = j.at("deceleration_mps2").get<double>();
        return st;
    }
    throw ConfigError("track segment: unknown type '" + type + "'");
}

}  // namespace

std::string scenario_to_json_text(const ScenarioConfig& cfg) {
    json j;
    j["name"] = cfg.name;
    j["radars"] = json::array();
    for (const auto& pose : cfg.radar_poses) {
        j["radars"].push_back({{"position", {pose.position.x(), pose.position.y()}},
                               {"boresight_angle_rad", pose.boresight_angle}});
    }
    j["waveform"] = {{"carrier_freq_hz", cfg.waveform.carrier_freq},
                     {"bandwidth_hz", cfg.waveform.bandwidth},
                     {"pulse_duration_s", cfg.waveform.pulse_duration},
                     {"sample_rate_hz", cfg.waveform.sample_rate},
                     {"num_samples", cfg.waveform.num_samples},
                     {"noise_variance_w", cfg.waveform.noise_variance}};
    j["n_tx"] = cfg.n_tx;
    j["n_rx"] = cfg.n_rx;
    j["power_w"] = cfg.power;
    j["gain"] = cfg.gain;
    j["rcs_m2"] = cfg.rcs;
    j["max_range_m"] = cfg.max_range;
    j["track"] = {{"pulse_rate_hz", cfg.track.pulse_rate}, {"segments", json::array()}};
    for (const auto& seg : cfg.track.segments) {
        j["track"]["segments"].push_back(segment_to_json(seg));
    }
    j["algorithms"] = {{"mrblat", cfg.run_mrblat}, {"kf", cfg.run_kf}};
    j["n_ite"] = cfg.n_ite;
    j["lambda_init"] = {cfg.lambda_init[0], cfg.lambda_init[1], cfg.lambda_init[2],
                        cfg.lambda_init[3]};
    j["smoothing_window"] = cfg.smoothing_window;
    j["monte_carlo"] = {{"runs", cfg.mc.runs}, {"seed", cfg.mc.seed}, {"workers", cfg.mc.workers}};
    j["snr_grid"] = {{"x_min", cfg.snr_grid.x_min}, {"x_max", cfg.snr_grid.x_max},
                     {"y_min", cfg.snr_grid.y_min}, {"y_max", cfg.snr_grid.y_max},
                     {"step", cfg.snr_grid.step}};
    if (cfg.custom_array) {
        j["array"] = {{"tx_positions", cfg.custom_array->tx_positions},
                      {"rx_positions", cfg.custom_array->rx_positions}};
    }
    return j.dump(2) + "\n";
}

ScenarioConfig scenario_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& err) {
        throw ConfigError(std::string("config parse error: ") + err.what());
    }

    ScenarioConfig cfg;
    try {
        cfg.name = j.value("name", std::string("custom"));
        for (const auto& rj : j.at("radars")) {
            RadarPose pose;
            pose.position = Vec2{rj.at("position").at(0).get<double>(),
                                 rj.at("position").at(1).get<double>()};
            pose.boresight_angle = rj.value("boresight_angle_rad", 0.0);
            cfg.radar_poses.push_back(pose);
        }
        const json& wj = j.at("waveform");
        cfg.waveform = make_waveform_config(
            wj.at("carrier_freq_hz").get<double>(), wj.at("bandwidth_hz").get<double>(),
            wj.at("pulse_duration_s").get<double>(), wj.at("sample_rate_hz").get<double>());
        if (wj.contains("num_samples")) cfg.waveform.num_samples = wj.at("num_samples").get<int>();
        if (wj.contains("noise_variance_w")) {
            cfg.waveform.noise_variance = wj.at("noise_variance_w").get<double>();
        }
        cfg.n_tx = j.value("n_tx", 3);
        cfg.n_rx = j.value("n_rx", 3);
        cfg.power = j.value("power_w", 6.99);
        cfg.gain = j.value("gain", 1.0);
        cfg.rcs = j.value("rcs_m2", 0.05);
        cfg.max_range = j.value("max_range_m", 300.0);
        const json& tj = j.at("track");
        cfg.track.pulse_rate = tj.at("pulse_rate_hz").get<double>();
        for (const auto& sj : tj.at("segments")) {
            cfg.track.segments.push_back(segment_from_json(sj));
        }
        if (j.contains("algorithms")) {
            cfg.run_mrblat = j["algorithms"].value("mrblat", true);
            cfg.run_kf = j["algorithms"].value("kf", true);
        }
        cfg.n_ite = j.value("n_ite", 5);
        if (j.contains("lambda_init")) {
            for (int i = 0; i < 4; ++i) cfg.lambda_init[i] = j["lambda_init"].at(i).get<double>();
        }
        cfg.smoothing_window = j.value("smoothing_window", 0);
        if (j.contains("monte_carlo")) {
            cfg.mc.runs = j["monte_carlo"].value("runs", 32);
            cfg.mc.seed = j["monte_carlo"].value("seed", uint64_t{1});
            cfg.mc.workers = j["monte_carlo"].value("workers", 2);
        }
        if (j.contains("snr_grid")) {
            cfg.snr_grid.x_min = j["snr_grid"].value("x_min", -40.0);
            cfg.snr_grid.x_max = j["snr_grid"].value("x_max", 150.0);
            cfg.snr_grid.y_min = j["snr_grid"].value("y_min", 10.0);
            cfg.snr_grid.y_max = j["snr_grid"].value("y_max", 220.0);
            cfg.snr_grid.step = j["snr_grid"].value("step", 5.0);
        }
        if (j.contains("array")) {
            ArrayGeometry arr;
            arr.tx_positions = j["array"].at("tx_positions").get<std::vector<double>>();
            arr.rx_positions = j["array"].at("rx_positions").get<std::vector<double>>();
            cfg.custom_array = arr;
        }
    } catch (const json::exception& err) {
        throw ConfigError(std::string("config field error: ") + err.what());
    }
    cfg.validate();
    return cfg;
}

ScenarioConfig scenario_from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return scenario_from_json_text(text);
}

ScenarioConfig load_scenario(const std::string& path_or_preset) {
    if (path_or_preset == "track-a-like" || path_or_preset == "track-b-like") {
        return preset_scenario(path_or_preset);
    }
    return scenario_from_json_file(path_or_preset);
}

// --- simulation -------------------------------------------------------------

namespace {

std::vector<RadarModel> build_models(const ScenarioConfig& cfg) {
    const ChirpBank bank = make_chirp_bank(cfg.waveform, cfg.n_tx);
    const ArrayGeometry arr = cfg.array();
    std::vector<RadarModel> models;
    models.reserve(cfg.radar_poses.size());
    for (const auto& pose : cfg.radar_poses) {
        models.push_back(make_radar_model(pose, arr, bank, cfg.waveform, cfg.rcs, cfg.gain,
                                          cfg.power, cfg.max_range));
    }
    return models;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

SimulationResult simulate_once(const ScenarioConfig& cfg, uint64_t run_seed) {
    cfg.validate();
    SimulationResult result;
    result.truth = generate_track(cfg.track);
    const int n_pulses = static_cast<int>(result.truth.size());
    const KinematicMatrices kin = make_kinematic_matrices(1.0 / cfg.track.pulse_rate);
    const std::vector<RadarModel> models = build_models(cfg);
    const int n_radar = static_cast<int>(models.size());

    const auto synth = [&](int radar, int pulse) {
        try {
            return synthesize_observation(models[static_cast<size_t>(radar)],
                                          result.truth[static_cast<size_t>(pulse)],
                                          derive_seed(run_seed, static_cast<uint64_t>(radar),
                                                      static_cast<uint64_t>(pulse)));
        } catch (const std::exception& err) {
            throw NumericError("pulse " + std::to_string(pulse) + ", radar " +
                               std::to_string(radar) + ": " + err.what());
        }
    };

    if (cfg.run_mrblat) {
        const auto t0 = std::chrono::steady_clock::now();
        NodeConfig ncfg;
        for (const auto& m : models) ncfg.all_poses.push_back(m.pose);
        ncfg.n_ite = cfg.n_ite;
        ncfg.smoothing_window = cfg.smoothing_window;
        ncfg.lambda_init = cfg.lambda_init;

        std::vector<RadarNode> nodes;
        nodes.reserve(static_cast<size_t>(n_radar));
        for (int k = 0; k < n_radar; ++k) {
            nodes.emplace_back(k, models[static_cast<size_t>(k)], kin, ncfg);
        }
        BroadcastBus bus;
        for (auto& node : nodes) bus.attach(&node);

        const auto tracks = run_tracker(nodes, bus, synth, n_pulses);
        for (const auto& slice : tracks[0]) {
            result.mrblat.mean.push_back(slice.mean);
            result.mrblat.cov.push_back(slice.cov);
        }
        result.bus_bytes = bus.bytes_total();
        result.bus_log = bus.log();
        result.wall_mrblat = seconds_since(t0);
    }

    if (cfg.run_kf) {
        const auto t0 = std::chrono::steady_clock::now();
        const KFModel kf_model = make_kf_model(n_radar, kin, cfg.lambda_init);
        std::vector<StackedMeasurement> measurements;
        measurements.reserve(static_cast<size_t>(n_pulses));
        KFState init;
        for (int pulse = 0; pulse < n_pulses; ++pulse) {
            StackedMeasurement sm;
            sm.z = Eigen::VectorXd(2 * n_radar);
            sm.R = Eigen::MatrixXd::Zero(2 * n_radar, 2 * n_radar);
            for (int k = 0; k < n_radar; ++k) {
                const ObservationBlock obs = synth(k, pulse);
                const PointMeasurement meas =
                    conventional_estimate(obs, models[static_cast<size_t>(k)]);
                sm.z.segment<2>(2 * k) = meas.global.v;
                sm.R.block<2, 2>(2 * k, 2 * k) = measurement_covariance(
                    meas.range, meas.azimuth, models[static_cast<size_t>(k)].pose, cfg.waveform);
            }
            if (pulse == 0) {
                Vec2 mean = Vec2::Zero();
                for (int k = 0; k < n_radar; ++k) mean += sm.z.segment<2>(2 * k);
                mean /= n_radar;
                init.mean << mean.x(), mean.y(), 0.0, 0.0;
                init.cov = Vec4(400.0, 400.0, 225.0, 225.0).asDiagonal();
            }
            measurements.push_back(std::move(sm));
        }
        const KFForwardResult fwd = kf_forward(measurements, kf_model, init);
        const std::vector<KFState> smoothed = kf_backward_smooth(fwd, kf_model);
        for (const auto& s : smoothed) {
            result.kf.mean.push_back(s.mean);
            result.kf.cov.push_back(s.cov);
        }
        result.wall_kf = seconds_since(t0);
    }
    return result;
}

// --- metrics ----------------------------------------------------------------

std::vector<double> compute_rmse(const std::vector<std::vector<Vec2>>& positions_per_run,
                                 const std::vector<Vec2>& truth) {
    const size_t n = truth.size();
    for (const auto& run : positions_per_run) {
        if (run.size() != n) throw NumericError("compute_rmse: length mismatch");
    }
    std::vector<double> out(n, 0.0);
    if (positions_per_run.empty()) return out;
    for (size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (const auto& run : positions_per_run) acc += (run[i] - truth[i]).squaredNorm();
        out[i] = std::sqrt(acc / static_cast<double>(positions_per_run.size()));
    }
    return out;
}

namespace {

double chi2_2_quantile(double level) {
    if (level == 0.95) return 5.9915;
    if (level == 0.99) return 9.2103;
    if (level == 0.90) return 4.6052;
    throw ConfigError("compute_coverage: unsupported level");
}

bool covered_at(const Vec4& mean, const Mat4& cov, const KinematicState& truth,
                double threshold) {
    const Vec2 e = mean.head<2>() - Vec2{truth.x, truth.y};
    const Mat2 sigma = cov.topLeftCorner<2, 2>();
    const Eigen::LDLT<Mat2> ldlt(sigma);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        throw NumericError("compute_coverage: non-SPD position covariance");
    }
    return e.dot(ldlt.solve(e)) <= threshold;
}

}  // namespace

double compute_coverage(const TrackEstimate& estimate, const std::vector<KinematicState>& truth,
                        double level) {
    if (estimate.mean.size() != truth.size()) {
        throw NumericError("compute_coverage: length mismatch");
    }
    const double threshold = chi2_2_quantile(level);
    size_t hits = 0;
    for (size_t i = 0; i < truth.size(); ++i) {
        if (covered_at(estimate.mean[i], estimate.cov[i], truth[i], threshold)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::vector<double> track_min_snr(const ScenarioConfig& cfg,
                                  const std::vector<KinematicState>& truth) {
    const std::vector<RadarModel> models = build_models(cfg);
    std::vector<double> out;
    out.reserve(truth.size());
    for (const auto& state : truth) {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& model : models) m = std::min(m, snr_at(model, state));
        out.push_back(m);
    }
    return out;
}

// --- Monte Carlo ------------------------------------------------------------

RunResult run_montecarlo(const ScenarioConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.mc.runs == 1) {
        std::cerr << "warning: runs=1 gives no spread; RMSE/coverage series are skipped "
                     "(track-only mode)\n";
    }

    RunResult result;
    result.runs = cfg.mc.runs;
    result.seed = cfg.mc.seed;
    result.n_radars = static_cast<int>(cfg.radar_poses.size());

    const std::vector<KinematicState> truth = generate_track(cfg.track);
    const int n = static_cast<int>(truth.size());
    result.n_pulses = n;
    result.min_snr_db = track_min_snr(cfg, truth);

    struct PerRun {
        std::vector<double> err2_m, err2_k;
        std::vector<uint8_t> covered;
        double coverage = 0.0;
        double wall_m = 0.0, wall_k = 0.0;
    };
    std::vector<PerRun> slots(static_cast<size_t>(cfg.mc.runs));
    std::vector<std::string> errors(static_cast<size_t>(cfg.mc.runs));
    SimulationResult first_run;
    std::mutex first_mutex;

    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= cfg.mc.runs) return;
            try {
                const uint64_t run_seed = derive_seed(cfg.mc.seed, static_cast<uint64_t>(r));
                SimulationResult res = simulate_once(cfg, run_seed);
                PerRun& slot = slots[static_cast<size_t>(r)];
                slot.wall_m = res.wall_mrblat;
                slot.wall_k = res.wall_kf;
                if (cfg.run_mrblat) {
                    slot.err2_m.resize(static_cast<size_t>(n));
                    slot.covered.resize(static_cast<size_t>(n));
                    for (int i = 0; i < n; ++i) {
                        const Vec2 e = res.mrblat.mean[static_cast<size_t>(i)].head<2>() -
                                       Vec2{truth[static_cast<size_t>(i)].x,
                                            truth[static_cast<size_t>(i)].y};
                        slot.err2_m[static_cast<size_t>(i)] = e.squaredNorm();
                        slot.covered[static_cast<size_t>(i)] =
                            covered_at(res.mrblat.mean[static_cast<size_t>(i)],
                                       res.mrblat.cov[static_cast<size_t>(i)],
                                       truth[static_cast<size_t>(i)], 5.9915)
                                ? 1
                                : 0;
                    }
                    double hits = 0.0;
                    for (auto c : slot.covered) hits += c;
                    slot.coverage = hits / n;
                }
                if (cfg.run_kf) {
                    slot.err2_k.resize(static_cast<size_t>(n));
                    for (int i = 0; i < n; ++i) {
                        const Vec2 e = res.kf.mean[static_cast<size_t>(i)].head<2>() -
                                       Vec2{truth[static_cast<size_t>(i)].x,
                                            truth[static_cast<size_t>(i)].y};
                        slot.err2_k[static_cast<size_t>(i)] = e.squaredNorm();
                    }
                }
                if (r == 0) {
                    std::lock_guard<std::mutex> lock(first_mutex);
                    first_run = std::move(res);
                }
            } catch (const std::exception& err) {
                errors[static_cast<size_t>(r)] = err.what();
            }
        }
    };

    const int n_workers = std::min(cfg.mc.workers, cfg.mc.runs);
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(n_workers));
        for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (int r = 0; r < cfg.mc.runs; ++r) {
        if (!errors[static_cast<size_t>(r)].empty()) {
            throw NumericError("run " + std::to_string(r) + ": " + errors[static_cast<size_t>(r)]);
        }
    }

    // Sequential reduction in run order keeps results independent of the
    // worker schedule.
    const bool series = cfg.mc.runs >= 2;
    if (cfg.run_mrblat && series) {
        result.rmse_mrblat.assign(static_cast<size_t>(n), 0.0);
        result.coverage_index_mrblat.assign(static_cast<size_t>(n), 0.0);
    }
    if (cfg.run_kf && series) result.rmse_kf.assign(static_cast<size_t>(n), 0.0);

    double pooled_hits = 0.0;
    double per_run_cov_sum = 0.0;
    for (const auto& slot : slots) {
        if (cfg.run_mrblat && series) {
            for (int i = 0; i < n; ++i) {
                result.rmse_mrblat[static_cast<size_t>(i)] += slot.err2_m[static_cast<size_t>(i)];
                result.coverage_index_mrblat[static_cast<size_t>(i)] +=
                    slot.covered[static_cast<size_t>(i)];
            }
        }
        if (cfg.run_kf && series) {
            for (int i = 0; i < n; ++i) {
                result.rmse_kf[static_cast<size_t>(i)] += slot.err2_k[static_cast<size_t>(i)];
            }
        }
        if (cfg.run_mrblat) {
            for (auto c : slot.covered) pooled_hits += c;
            per_run_cov_sum += slot.coverage;
        }
        result.wall_mrblat += slot.wall_m;
        result.wall_kf += slot.wall_k;
    }
    if (cfg.run_mrblat && series) {
        for (int i = 0; i < n; ++i) {
            result.rmse_mrblat[static_cast<size_t>(i)] =
                std::sqrt(result.rmse_mrblat[static_cast<size_t>(i)] / cfg.mc.runs);
            result.coverage_index_mrblat[static_cast<size_t>(i)] /= cfg.mc.runs;
        }
        result.max_rmse_mrblat =
            *std::max_element(result.rmse_mrblat.begin(), result.rmse_mrblat.end());
    }
    if (cfg.run_kf && series) {
        for (int i = 0; i < n; ++i) {
            result.rmse_kf[static_cast<size_t>(i)] =
                std::sqrt(result.rmse_kf[static_cast<size_t>(i)] / cfg.mc.runs);
        }
        result.max_rmse_kf = *std::max_element(result.rmse_kf.begin(), result.rmse_kf.end());
    }
    if (cfg.run_mrblat) {
        result.coverage_pooled = pooled_hits / (static_cast<double>(cfg.mc.runs) * n);
        result.coverage_mean_per_run = per_run_cov_sum / cfg.mc.runs;
    }
    result.first_run = std::move(first_run);
    result.wall_seconds = seconds_since(t0);
    return result;
}

std::vector<SnrMapPoint> snr_map(const ScenarioConfig& cfg, const SnrGrid& grid) {
    const std::vector<RadarModel> models = build_models(cfg);
    std::vector<SnrMapPoint> out;
    for (double y = grid.y_min; y <= grid.y_max + 1e-9; y += grid.step) {
        for (double x = grid.x_min; x <= grid.x_max + 1e-9; x += grid.step) {
            SnrMapPoint pt;
            pt.x = x;
            pt.y = y;
            pt.max_db = -std::numeric_limits<double>::infinity();
            KinematicState state{x, y, 0.0, 0.0};
            for (const auto& model : models) {
                const double s = snr_at(model, state);
                pt.snr_db.push_back(s);
                pt.max_db = std::max(pt.max_db, s);
            }
            out.push_back(std::move(pt));
        }
    }
    return out;
}

// --- emission ---------------------------------------------------------------

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw NumericError("cannot open output file: " + path);
    f << std::setprecision(17);
    return f;
}

}  // namespace

void write_truth_csv(const std::string& path, const std::vector<KinematicState>& truth,
                     double dt) {
    auto f = open_out(path);
    f << "n,t,x,y,vx,vy\n";
    for (size_t i = 0; i < truth.size(); ++i) {
        f << i << ',' << static_cast<double>(i) * dt << ',' << truth[i].x << ',' << truth[i].y
          << ',' << truth[i].vx << ',' << truth[i].vy << '\n';
    }
}

void write_track_csv(const std::string& path, const TrackEstimate& est, double dt) {
    auto f = open_out(path);
    f << "n,t,x,y,vx,vy,var_x,var_y,var_vx,var_vy,cov_xy\n";
    for (size_t i = 0; i < est.mean.size(); ++i) {
        const Vec4& m = est.mean[i];
        const Mat4& c = est.cov[i];
        f << i << ',' << static_cast<double>(i) * dt << ',' << m[0] << ',' << m[1] << ','
          << m[2] << ',' << m[3] << ',' << c(0, 0) << ',' << c(1, 1) << ',' << c(2, 2) << ','
          << c(3, 3) << ',' << c(0, 1) << '\n';
    }
}

void write_rmse_csv(const std::string& path, const RunResult& result, double dt) {
    auto f = open_out(path);
    f << "n,t,rmse_mrblat,rmse_kf,coverage_mrblat,min_snr_db\n";
    const auto value_or_nan = [](const std::vector<double>& v, size_t i) {
        return i < v.size() ? v[i] : std::numeric_limits<double>::quiet_NaN();
    };
    for (int i = 0; i < result.n_pulses; ++i) {
        const size_t si = static_cast<size_t>(i);
        f << i << ',' << i * dt << ',' << value_or_nan(result.rmse_mrblat, si) << ','
          << value_or_nan(result.rmse_kf, si) << ','
          << value_or_nan(result.coverage_index_mrblat, si) << ','
          << value_or_nan(result.min_snr_db, si) << '\n';
    }
}

void write_snr_map_csv(const std::string& path, const std::vector<SnrMapPoint>& map) {
    auto f = open_out(path);
    f << "x,y";
    if (!map.empty()) {
        for (size_t k = 0; k < map[0].snr_db.size(); ++k) f << ",snr_r" << k;
    }
    f << ",snr_max\n";
    for (const auto& pt : map) {
        f << pt.x << ',' << pt.y;
        for (double s : pt.snr_db) f << ',' << s;
        f << ',' << pt.max_db << '\n';
    }
}

void write_bus_log_jsonl(const std::string& path, const std::vector<BusLogEntry>& log) {
    auto f = open_out(path);
    for (const auto& entry : log) {
        f << "{\"pulse\":" << entry.pulse << ",\"sender\":" << entry.sender
          << ",\"bytes\":" << entry.bytes << "}\n";
    }
}

void write_summary_json(const std::string& path, const ScenarioConfig& cfg,
                        const RunResult& result) {
    json j;
    j["name"] = cfg.name;
    j["runs"] = result.runs;
    j["seed"] = result.seed;
    j["pulses"] = result.n_pulses;
    j["radars"] = result.n_radars;
    j["wall_seconds"] = result.wall_seconds;
    if (cfg.run_mrblat) {
        j["mrblat"] = {{"max_rmse_m", result.rmse_mrblat.empty()
                                          ? nullptr
                                          : json(result.max_rmse_mrblat)},
                       {"coverage_pooled", result.coverage_pooled},
                       {"coverage_mean_per_run", result.coverage_mean_per_run},
                       {"wall_seconds", result.wall_mrblat}};
        j["bus"] = {{"bytes_total_first_run", result.first_run.bus_bytes},
                    {"payload_bytes", DataMessagePayload::kWireBytes},
                    {"bytes_per_pulse",
                     result.n_pulses > 0
                         ? static_cast<double>(result.first_run.bus_bytes) / result.n_pulses
                         : 0.0}};
    }
    if (cfg.run_kf) {
        j["kf"] = {{"max_rmse_m", result.rmse_kf.empty() ? nullptr : json(result.max_rmse_kf)},
                   {"wall_seconds", result.wall_kf}};
    }
    auto f = open_out(path);
    f << j.dump(2) << "\n";
}

void write_experiment(const std::string& dir, const ScenarioConfig& cfg,
                      const RunResult& result, bool include_bus_log) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const double dt = 1.0 / cfg.track.pulse_rate;

    {
        auto f = open_out(dir + "/config.json");
        f << scenario_to_json_text(cfg);
    }
    write_truth_csv(dir + "/truth.csv", result.first_run.truth, dt);
    if (cfg.run_mrblat) write_track_csv(dir + "/mrblat_track.csv", result.first_run.mrblat, dt);
    if (cfg.run_kf) write_track_csv(dir + "/kf_track.csv", result.first_run.kf, dt);
    write_rmse_csv(dir + "/rmse.csv", result, dt);
    write_snr_map_csv(dir + "/snr_map.csv", snr_map(cfg, cfg.snr_grid));
    write_summary_json(dir + "/summary.json", cfg, result);
    if (include_bus_log && cfg.run_mrblat) {
        write_bus_log_jsonl(dir + "/bus_log.jsonl", result.first_run.bus_log);
    }
}

}  // namespace mrblat
