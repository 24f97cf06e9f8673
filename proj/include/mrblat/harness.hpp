#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mrblat/baseline.hpp"
#include "mrblat/node.hpp"

namespace mrblat {

struct MonteCarloConfig {
    int runs = 32;
    uint64_t seed = 1;
    int workers = 2;
};

struct SnrGrid {
    double x_min = -40.0, x_max = 150.0;
    double y_min = 10.0, y_max = 220.0;
    double step = 5.0;
};

/// Everything one experiment needs; defaults follow the reference parameter
/// set (three 3x3 radars, 10 GHz, 20 MHz, 16 us, 256 MHz, thermal noise,
/// rho = 0.05 m^2, P = 6.99 W, R_max = 300 m, PRF = 10 Hz).
struct ScenarioConfig {
    std::string name = "custom";
    std::vector<RadarPose> radar_poses;
    WaveformConfig waveform;
    int n_tx = 3;
    int n_rx = 3;
    double power = 6.99;       // W, per-pulse total
    double gain = 1.0;
    double rcs = 0.05;         // m^2
    double max_range = 300.0;  // m, unambiguous design region
    TrackSpec track;           // carries the PRF
    bool run_mrblat = true;
    bool run_kf = true;
    int n_ite = 5;
    Vec4 lambda_init = Vec4::Ones();
    int smoothing_window = 0;
    MonteCarloConfig mc;
    SnrGrid snr_grid;
    std::optional<ArrayGeometry> custom_array;

    ArrayGeometry array() const;
    void validate() const;
};

/// Built-in scenarios: "track-a-like" (loop with a far excursion and a close
/// pass) and "track-b-like" (S-shape with a far excursion).
ScenarioConfig preset_scenario(const std::string& name);

/// JSON round-trip of the scenario (schema documented in the README).
ScenarioConfig scenario_from_json_text(const std::string& text);
ScenarioConfig scenario_from_json_file(const std::string& path);
std::string scenario_to_json_text(const ScenarioConfig& cfg);

/// Loads --config payloads: a path, or a preset name.
ScenarioConfig load_scenario(const std::string& path_or_preset);

struct TrackEstimate {
    std::vector<Vec4> mean;
    std::vector<Mat4> cov;

    bool empty() const { return mean.empty(); }
};

struct SimulationResult {
    std::vector<KinematicState> truth;
    TrackEstimate mrblat;  // node 0's posterior (all nodes agree)
    TrackEstimate kf;
    uint64_t bus_bytes = 0;
    std::vector<BusLogEntry> bus_log;
    double wall_mrblat = 0.0;
    double wall_kf = 0.0;
};

/// One full realization: synthesize every pulse for every radar from the
/// run seed, execute the enabled trackers. Deterministic in run_seed.
SimulationResult simulate_once(const ScenarioConfig& cfg, uint64_t run_seed);

/// Per-index RMSE over runs: sqrt(mean_r ||e_{r,n}||^2).
std::vector<double> compute_rmse(const std::vector<std::vector<Vec2>>& positions_per_run,
                                 const std::vector<Vec2>& truth);

/// Fraction of indices whose truth lies inside the level-% position ellipse.
/// Supported levels: 0.90, 0.95, 0.99.
double compute_coverage(const TrackEstimate& estimate,
                        const std::vector<KinematicState>& truth, double level = 0.95);

struct RunResult {
    int runs = 0;
    uint64_t seed = 0;
    int n_pulses = 0;
    int n_radars = 0;
    std::vector<double> rmse_mrblat;           // per index (empty if disabled)
    std::vector<double> rmse_kf;
    std::vector<double> coverage_index_mrblat; // per index fraction over runs
    std::vector<double> min_snr_db;            // min over radars at the truth
    double max_rmse_mrblat = 0.0;
    double max_rmse_kf = 0.0;
    double coverage_pooled = 0.0;
    double coverage_mean_per_run = 0.0;
    double wall_seconds = 0.0;
    double wall_mrblat = 0.0;
    double wall_kf = 0.0;
    SimulationResult first_run;
};

/// Monte Carlo driver; deterministic for a fixed master seed regardless of
/// worker count. Throws with the run index on any per-run failure.
RunResult run_montecarlo(const ScenarioConfig& cfg);

struct SnrMapPoint {
    double x = 0.0, y = 0.0;
    std::vector<double> snr_db;  // per radar
    double max_db = 0.0;
};

std::vector<SnrMapPoint> snr_map(const ScenarioConfig& cfg, const SnrGrid& grid);

/// Per-index min-over-radars SNR along a track.
std::vector<double> track_min_snr(const ScenarioConfig& cfg,
                                  const std::vector<KinematicState>& truth);

// --- result emission ------------------------------------------------------

void write_truth_csv(const std::string& path, const std::vector<KinematicState>& truth,
                     double dt);
void write_track_csv(const std::string& path, const TrackEstimate& est, double dt);
void write_rmse_csv(const std::string& path, const RunResult& result, double dt);
void write_snr_map_csv(const std::string& path, const std::vector<SnrMapPoint>& map);
void write_bus_log_jsonl(const std::string& path, const std::vector<BusLogEntry>& log);
void write_summary_json(const std::string& path, const ScenarioConfig& cfg,
                        const RunResult& result);

/// Writes the full experiment directory (config snapshot, truth, tracks,
/// rmse, snr map, summary).
void write_experiment(const std::string& dir, const ScenarioConfig& cfg,
                      const RunResult& result, bool include_bus_log);

}  // namespace mrblat
