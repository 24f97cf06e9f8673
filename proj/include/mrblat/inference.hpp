#pragma once

#include <string>
#include <vector>

#include "mrblat/common.hpp"
#include "mrblat/kinematics.hpp"
#include "mrblat/waveform.hpp"

namespace mrblat {

/// Gaussian message in information form. Velocity components of data messages
/// carry exactly zero precision (the likelihood does not depend on velocity).
struct GaussianMessage {
    Vec4 mean = Vec4::Zero();
    Mat4 precision = Mat4::Zero();
    bool low_confidence = false;
};

/// Per-axis gamma posterior over the process-noise precision Lambda_a.
struct GammaSurrogate {
    Vec4 shape = Vec4::Ones();
    Vec4 rate = Vec4::Ones();
    double prior_shape = 1.0;  // zeta
    double prior_rate = 1.0;   // chi

    Vec4 mean() const { return shape.cwiseQuotient(rate); }
};

/// One time slice of the smoothed posterior q(phi_n).
struct PosteriorSlice {
    Vec4 mean = Vec4::Zero();
    Mat4 cov = Mat4::Zero();
};

/// ML estimate of the complex path gain, evaluated with the unit-amplitude
/// template at the supplied local state. Throws when the template energy
/// vanishes.
Cplx alpha_ml_estimate(const ObservationBlock& obs, const KinematicState& phi_local,
                       const RadarModel& model);

/// KL divergence (up to constants) between N(mean, diag(exp(logvar))) and the
/// single-pulse likelihood, in the radar's local frame. Velocity components of
/// mean/logvar are inert. Throws NumericError naming the offending term if an
/// intermediate is non-finite.
double kl_objective(const Vec4& mean_local, const Vec4& logvar, const ObservationBlock& obs,
                    Cplx alpha_hat, const RadarModel& model);

struct KlGradient {
    Vec4 d_mean = Vec4::Zero();
    Vec2 d_logvar_pos = Vec2::Zero();
};

/// Analytic gradient of kl_objective in the four mean components and the two
/// position log-variances.
KlGradient kl_objective_gradient(const Vec4& mean_local, const Vec4& logvar,
                                 const ObservationBlock& obs, Cplx alpha_hat,
                                 const RadarModel& model);

struct TraceRow {
    int iteration = 0;
    double objective = 0.0;
    Vec4 mean = Vec4::Zero();
    Vec2 logvar_pos = Vec2::Zero();
};

struct MinimizeOptions {
    int max_iterations = 200;
    double rel_tol = 1e-9;
    double step_tol = 1e-6;
    double init_sigma = 1.0;                  // initial position std, meters
    std::vector<TraceRow>* trace = nullptr;   // optional objective trace
};

struct DataMessageResult {
    GaussianMessage message;  // local frame; velocity entries passed through
    double objective = 0.0;
    int iterations = 0;
    bool low_confidence = false;
};

/// BFGS with central-difference gradients over (u, v, log var_u, log var_v).
/// Velocity mean components pass through from phi_init untouched and are
/// reported with zero precision.
DataMessageResult minimize_data_message(const ObservationBlock& obs,
                                        const KinematicState& phi_init_local,
                                        const RadarModel& model,
                                        const MinimizeOptions& opts = {});

/// Forward temporal message: N(T phi_prev, (G^{-T} E[La] G^{-1})^{-1}).
GaussianMessage prediction_message(const PosteriorSlice& prev, const GammaSurrogate& gamma,
                                   const KinematicMatrices& m);

/// Backward temporal message: N(T^{-1} phi_next, (T^T G^{-T} E[La] G^{-1} T)^{-1}).
GaussianMessage smoothing_message(const PosteriorSlice& next, const GammaSurrogate& gamma,
                                  const KinematicMatrices& m);

/// Product of Gaussians: precision sum, precision-weighted mean. Throws
/// NumericError naming the null directions when the summed precision is
/// singular.
PosteriorSlice combine_gaussians(const std::vector<GaussianMessage>& messages);

/// Gamma surrogate update from all slices 0..N (N = slices - 1 transitions):
/// shape = (N + zeta) / 2, rate = (chi + sum_n V_{n,n-1}) / 2 per axis.
GammaSurrogate update_lambda_a(const std::vector<PosteriorSlice>& slices,
                               const KinematicMatrices& m, double prior_shape = 1.0,
                               double prior_rate = 1.0);

void write_objective_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);

}  // namespace mrblat
