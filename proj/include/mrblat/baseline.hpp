#pragma once

#include <vector>

#include "mrblat/common.hpp"
#include "mrblat/geometry.hpp"
#include "mrblat/waveform.hpp"

namespace mrblat {

/// Conventional per-radar point estimate fed to the Kalman filter.
struct PointMeasurement {
    double range = 0.0;    // meters
    double azimuth = 0.0;  // radians off boresight
    GlobalPoint global;
};

/// Capon DoA grid: [-60 deg, 60 deg] at 0.5 deg, fixed alongside the
/// measurement-noise model derived from it.
constexpr double kCaponGridHalfSpan = 60.0 * kPi / 180.0;
constexpr double kCaponGridStep = 0.5 * kPi / 180.0;

/// Magnitude of the matched-filter delay profile per channel, evaluated on
/// delay bins [0, n_bins). Only the occupied spectral bins contribute.
Eigen::MatrixXd delay_profile(const ObservationBlock& obs, int n_bins);

/// Median over channels of the per-channel delay-bin argmax, converted to
/// meters via c / (2 f_s). The search window covers ranges below max_range
/// (the radar's unambiguous design region).
double estimate_range(const ObservationBlock& obs, const WaveformConfig& cfg,
                      double max_range = 300.0);

/// Capon (MVDR) azimuth estimate from the virtual-array snapshot at the
/// detected range bin, with diagonal loading 1e-3 tr(C)/dim.
double estimate_doa_capon(const ObservationBlock& obs, const ArrayGeometry& arr,
                          const WaveformConfig& cfg, double max_range = 300.0);

/// The Capon spatial spectrum 1 / (a^H C^{-1} a) on the DoA grid.
Eigen::VectorXd capon_spectrum(const ObservationBlock& obs, const ArrayGeometry& arr,
                               const WaveformConfig& cfg, double max_range = 300.0);

/// (u, v) = (r sin theta, r cos theta) mapped through the pose.
GlobalPoint measurement_to_global(double range, double theta, const RadarPose& pose);

/// Range + DoA + global conversion in one pass (shared delay profile).
PointMeasurement conventional_estimate(const ObservationBlock& obs, const RadarModel& model);

/// First-order measurement covariance in the global frame: range-bin and DoA
/// grid quantization variances propagated through the polar->Cartesian map.
Mat2 measurement_covariance(double range, double theta, const RadarPose& pose,
                            const WaveformConfig& cfg);

struct KFModel {
    Eigen::MatrixXd H;       // (2 n_radar) x 4 stacked position selectors
    Eigen::MatrixXd R_meas;  // default measurement covariance (per-pulse R overrides)
    Mat4 Q;                  // process covariance G diag(1/lambda_init) G^T
    Mat4 T;
};

KFModel make_kf_model(int n_radar, const KinematicMatrices& m, const Vec4& lambda_init);

struct StackedMeasurement {
    Eigen::VectorXd z;  // 2 n_radar
    Eigen::MatrixXd R;  // empty -> use model default
};

struct KFState {
    Vec4 mean = Vec4::Zero();
    Mat4 cov = Mat4::Zero();
};

struct KFForwardResult {
    std::vector<KFState> filtered;
    std::vector<KFState> predicted;  // prior at each step (predicted[0] = init)
};

/// Linear-Gaussian forward recursion with the stacked observation matrix.
KFForwardResult kf_forward(const std::vector<StackedMeasurement>& measurements,
                           const KFModel& model, const KFState& init);

/// Fixed-interval (RTS) backward smoothing of a forward pass.
std::vector<KFState> kf_backward_smooth(const KFForwardResult& forward, const KFModel& model);

}  // namespace mrblat
