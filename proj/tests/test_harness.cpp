#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mrblat/harness.hpp"
#include "mrblat/rng.hpp"
#include "test_support.hpp"

using namespace mrblat;

namespace {

// tiny end-to-end scenario for pipeline-level tests
ScenarioConfig tiny_scenario() {
    ScenarioConfig cfg;
    cfg.name = "tiny";
    cfg.waveform = mrblat::testing::small_waveform();
    cfg.radar_poses = {{Vec2{0.0, 0.0}, 0.0}, {Vec2{40.0, 0.0}, 0.1}};
    cfg.rcs = 0.5;
    cfg.n_ite = 2;
    TrackSpec track;
    track.pulse_rate = 10.0;
    track.segments.push_back(ArcSegment{Vec2{20.0, 10.0}, 60.0, kPi / 3.0, 0.35, 10.0});
    cfg.track = track;
    cfg.mc.runs = 2;
    cfg.mc.seed = 9;
    cfg.mc.workers = 2;
    cfg.snr_grid = {0.0, 40.0, 40.0, 80.0, 20.0};
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("compute_rmse: closed-form cases") {
    const std::vector<Vec2> truth{{0.0, 0.0}, {1.0, 1.0}, {2.0, 2.0}};
    {
        const std::vector<std::vector<Vec2>> runs{truth, truth};
        const auto rmse = compute_rmse(runs, truth);
        for (double v : rmse) CHECK(v == 0.0);
    }
    {
        std::vector<Vec2> off = truth;
        for (auto& p : off) p.x() += 1.0;
        const auto rmse = compute_rmse({off, off}, truth);
        for (double v : rmse) CHECK(v == doctest::Approx(1.0));
    }
    {
        std::vector<Vec2> e3 = truth, e4 = truth;
        e3[1].x() += 3.0;
        e4[1].y() -= 4.0;
        const auto rmse = compute_rmse({e3, e4}, truth);
        CHECK(rmse[1] == doctest::Approx(3.5355339059327378));
    }
    CHECK_THROWS_AS(compute_rmse({{Vec2{0, 0}}}, truth), NumericError);
}

TEST_CASE("compute_coverage: exact hits and misses") {
    std::vector<KinematicState> truth(5);
    for (size_t i = 0; i < truth.size(); ++i) truth[i] = {double(i), 2.0 * i, 0.0, 0.0};
    TrackEstimate est;
    for (const auto& t : truth) {
        est.mean.push_back(Vec4(t.x, t.y, 0.0, 0.0));
        est.cov.push_back(Mat4::Identity());
    }
    CHECK(compute_coverage(est, truth) == 1.0);

    for (auto& m : est.mean) m[0] += 10.0;  // 10 sigma away
    CHECK(compute_coverage(est, truth) == 0.0);
}

TEST_CASE("compute_coverage: calibrated on matching Gaussian errors") {
    Rng rng(55);
    const int n = 10000;
    std::vector<KinematicState> truth(n, {0.0, 0.0, 0.0, 0.0});
    TrackEstimate est;
    Mat2 sqrt_cov;
    sqrt_cov << 2.0, 0.0, 0.7, 0.5;  // covariance = L L^T
    for (int i = 0; i < n; ++i) {
        const Vec2 e = sqrt_cov * Vec2{rng.normal(), rng.normal()};
        est.mean.push_back(Vec4(e.x(), e.y(), 0.0, 0.0));
        Mat4 cov = Mat4::Identity();
        cov.topLeftCorner<2, 2>() = sqrt_cov * sqrt_cov.transpose();
        est.cov.push_back(cov);
    }
    const double cov95 = compute_coverage(est, truth, 0.95);
    CHECK(cov95 > 0.93);
    CHECK(cov95 < 0.97);
}

TEST_CASE("snr_map: decays with range and respects layout symmetry") {
    ScenarioConfig cfg = tiny_scenario();
    cfg.radar_poses = {{Vec2{0.0, 0.0}, 0.0}, {Vec2{40.0, 0.0}, 0.0}};  // symmetric about x=20
    const SnrGrid grid{-20.0, 60.0, 30.0, 90.0, 10.0};
    const auto map = snr_map(cfg, grid);

    for (const auto& pt : map) {
        REQUIRE(pt.snr_db.size() == 2);
        CHECK(pt.max_db == std::max(pt.snr_db[0], pt.snr_db[1]));
    }
    // strictly decreasing with range from radar 0 along x = 0
    double prev = 1e9;
    for (const auto& pt : map) {
        if (pt.x == 0.0) {
            CHECK(pt.snr_db[0] < prev);
            prev = pt.snr_db[0];
        }
    }
    // mirror symmetry about the layout axis
    for (const auto& a : map) {
        const double xm = 40.0 - a.x;
        for (const auto& b : map) {
            if (b.y == a.y && b.x == xm) {
                CHECK(a.max_db == doctest::Approx(b.max_db).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("simulate_once and run_montecarlo are deterministic") {
    const ScenarioConfig cfg = tiny_scenario();
    const SimulationResult a = simulate_once(cfg, 1234);
    const SimulationResult b = simulate_once(cfg, 1234);
    REQUIRE(a.mrblat.mean.size() == b.mrblat.mean.size());
    for (size_t i = 0; i < a.mrblat.mean.size(); ++i) {
        CHECK((a.mrblat.mean[i] - b.mrblat.mean[i]).norm() == 0.0);
        CHECK((a.kf.mean[i] - b.kf.mean[i]).norm() == 0.0);
    }

    const RunResult r1 = run_montecarlo(cfg);
    const RunResult r2 = run_montecarlo(cfg);
    CHECK(r1.rmse_mrblat == r2.rmse_mrblat);
    CHECK(r1.rmse_kf == r2.rmse_kf);
    CHECK(r1.coverage_pooled == r2.coverage_pooled);

    // worker count cannot change results
    ScenarioConfig serial = cfg;
    serial.mc.workers = 1;
    const RunResult r3 = run_montecarlo(serial);
    CHECK(r3.rmse_mrblat == r1.rmse_mrblat);
    CHECK(r3.rmse_kf == r1.rmse_kf);
}

TEST_CASE("output CSVs hash identically across reruns") {
    namespace fs = std::filesystem;
    const ScenarioConfig cfg = tiny_scenario();
    const auto dir1 = fs::temp_directory_path() / "mrblat_exp1";
    const auto dir2 = fs::temp_directory_path() / "mrblat_exp2";
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    write_experiment(dir1.string(), cfg, run_montecarlo(cfg), false);
    write_experiment(dir2.string(), cfg, run_montecarlo(cfg), false);
    for (const char* name :
         {"truth.csv", "mrblat_track.csv", "kf_track.csv", "rmse.csv", "snr_map.csv",
          "config.json"}) {
        CHECK(slurp((dir1 / name).string()) == slurp((dir2 / name).string()));
    }
    fs::remove_all(dir1);
    fs::remove_all(dir2);
}

TEST_CASE("run_montecarlo: runs=1 keeps tracks but skips the spread series") {
    ScenarioConfig cfg = tiny_scenario();
    cfg.mc.runs = 1;
    const RunResult r = run_montecarlo(cfg);
    CHECK(r.rmse_mrblat.empty());
    CHECK(r.rmse_kf.empty());
    CHECK_FALSE(r.first_run.mrblat.empty());
    CHECK_FALSE(r.first_run.kf.empty());
}

TEST_CASE("run_montecarlo: failures carry the run index") {
    ScenarioConfig cfg = tiny_scenario();
    cfg.max_range = 60.0;  // the track exits the unambiguous region
    try {
        run_montecarlo(cfg);
        FAIL("expected NumericError");
    } catch (const NumericError& err) {
        const std::string what = err.what();
        CHECK(what.find("run ") != std::string::npos);
        CHECK(what.find("pulse") != std::string::npos);
    }
}

TEST_CASE("scenario JSON round trip") {
    const ScenarioConfig cfg = preset_scenario("track-a-like");
    const std::string text = scenario_to_json_text(cfg);
    const ScenarioConfig back = scenario_from_json_text(text);
    CHECK(back.name == cfg.name);
    CHECK(back.radar_poses.size() == cfg.radar_poses.size());
    CHECK(back.waveform.num_samples == cfg.waveform.num_samples);
    CHECK(back.rcs == cfg.rcs);
    CHECK(back.track.segments.size() == cfg.track.segments.size());
    const auto t1 = generate_track(cfg.track);
    const auto t2 = generate_track(back.track);
    REQUIRE(t1.size() == t2.size());
    for (size_t i = 0; i < t1.size(); ++i) {
        CHECK(t1[i].x == t2[i].x);
        CHECK(t1[i].y == t2[i].y);
    }

    CHECK_THROWS_AS(scenario_from_json_text("{not json"), ConfigError);
    CHECK_THROWS_AS(scenario_from_json_text("{}"), ConfigError);
}

TEST_CASE("presets: geometric envelope and SNR straddle") {
    for (const char* name : {"track-a-like", "track-b-like"}) {
        const ScenarioConfig cfg = preset_scenario(name);
        cfg.validate();
        REQUIRE(cfg.radar_poses.size() == 3);
        const auto truth = generate_track(cfg.track);
        CHECK(truth.size() > 250);   // tens of seconds at PRF 10
        CHECK(truth.size() < 600);

        double min_range = 1e9, max_range = 0.0;
        for (const auto& s : truth) {
            for (const auto& pose : cfg.radar_poses) {
                const double r = (Vec2{s.x, s.y} - pose.position).norm();
                min_range = std::min(min_range, r);
                max_range = std::max(max_range, r);
            }
        }
        CHECK(min_range > 15.0);                      // far field, no radar overrun
        CHECK(max_range < 0.75 * cfg.max_range);      // clear of delay aliasing
        CHECK(max_range > 170.0);                     // reaches the starved region

        // indices where every radar is starved and indices where it is not
        const auto snr = track_min_snr(cfg, truth);
        CHECK(*std::min_element(snr.begin(), snr.end()) < -20.0);
        CHECK(*std::max_element(snr.begin(), snr.end()) > -18.0);
    }

    // the track-a-like close pass crosses into the 0..20 dB band
    const ScenarioConfig a = preset_scenario("track-a-like");
    const auto truth = generate_track(a.track);
    const ChirpBank bank = make_chirp_bank(a.waveform, a.n_tx);
    const ArrayGeometry arr = a.array();
    std::vector<RadarModel> models;
    for (const auto& pose : a.radar_poses) {
        models.push_back(make_radar_model(pose, arr, bank, a.waveform, a.rcs, a.gain, a.power,
                                          a.max_range));
    }
    double best = -1e9, worst = 1e9;
    for (const auto& s : truth) {
        double m = -1e9;
        for (const auto& model : models) m = std::max(m, snr_at(model, s));
        best = std::max(best, m);
        worst = std::min(worst, m);
    }
    CHECK(best > 0.0);    // inside the 0..20 dB band at the close pass
    CHECK(best < 20.0);
    CHECK(worst < 0.0);   // and below it on the far excursion
}

TEST_CASE("preset track-a-like pulse-0 geometry supports the conventional init") {
    const ScenarioConfig cfg = preset_scenario("track-a-like");
    const auto truth = generate_track(cfg.track);
    for (const auto& pose : cfg.radar_poses) {
        const LocalPoint lp = global_to_local(GlobalPoint{Vec2{truth[0].x, truth[0].y}}, pose);
        const double az = std::atan2(lp.v.x(), lp.v.y());
        CHECK(std::abs(az) < kCaponGridHalfSpan);
        CHECK(lp.v.norm() < 150.0);  // strong enough for a clean first fix
    }
}
