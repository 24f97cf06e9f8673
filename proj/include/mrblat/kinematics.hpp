#pragma once

#include <variant>
#include <vector>

#include "mrblat/common.hpp"

namespace mrblat {

/// Target state phi = [x, y, vx, vy] in global Cartesian coordinates.
struct KinematicState {
    double x = 0.0;
    double y = 0.0;
    double vx = 0.0;
    double vy = 0.0;

    Vec4 vec() const { return {x, y, vx, vy}; }
    static KinematicState from_vec(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }
};

/// Constant-velocity transition matrix T and process-noise matrix G for one
/// pulse interval dt = 1/PRF.
struct KinematicMatrices {
    Mat4 T = Mat4::Identity();
    Mat4 G = Mat4::Identity();
    double dt = 0.0;
};

KinematicMatrices make_kinematic_matrices(double dt);

/// Noise-free mean propagation: T * phi.
KinematicState predict(const KinematicState& phi, const KinematicMatrices& m);

/// G^{-T} diag(lambda_a) G^{-1}; the precision of the temporal message for a
/// per-axis process-noise precision lambda_a. Throws on non-positive entries.
Mat4 process_noise_precision(const Vec4& lambda_a, const KinematicMatrices& m);

/// Circle segment traversed at constant speed. Position is
/// center + radius * (cos angle, sin angle); positive sweep is CCW.
struct ArcSegment {
    Vec2 center{0.0, 0.0};
    double radius = 0.0;
    double start_angle = 0.0;   // radians
    double sweep = 0.0;         // radians, signed
    double speed = 0.0;         // m/s
};

/// Full stop: constant-magnitude deceleration along start_velocity down to
/// zero, then re-acceleration at the same magnitude along the next segment's
/// initial direction (omitted when the stop is the last segment).
struct LinearStopSegment {
    Vec2 start_velocity{0.0, 0.0};
    double deceleration = 0.0;  // m/s^2, > 0
};

using TrackSegment = std::variant<ArcSegment, LinearStopSegment>;

struct TrackSpec {
    std::vector<TrackSegment> segments;
    double pulse_rate = 10.0;   // Hz

    void validate() const;      // throws ConfigError naming the offending segment
};

/// Samples position and velocity every 1/pulse_rate seconds from t = 0 to the
/// end of the last segment (inclusive of the final sample).
std::vector<KinematicState> generate_track(const TrackSpec& spec);

}  // namespace mrblat
