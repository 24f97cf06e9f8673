#pragma once

#include "mrblat/common.hpp"

namespace mrblat {

/// Point in the shared global (x, y) frame all radars fuse in.
struct GlobalPoint {
    Vec2 v{0.0, 0.0};
};

/// Point in one radar's local (u, v) frame: v along boresight, u across it.
struct LocalPoint {
    Vec2 v{0.0, 0.0};
};

/// Position and orientation of one radar in the global frame.
/// boresight_angle is measured from the global +y axis, counter-clockwise
/// positive, and normalized to [-pi, pi).
struct RadarPose {
    Vec2 position{0.0, 0.0};
    double boresight_angle = 0.0;

    void validate() const;
};

/// Rotation taking local coordinates into global ones for boresight angle psi.
Mat2 rotation(double psi);

/// global = R(psi) * local + p
GlobalPoint local_to_global(const LocalPoint& pt, const RadarPose& pose);

/// local = R(psi)^T * (global - p); exact inverse of local_to_global.
LocalPoint global_to_local(const GlobalPoint& pt, const RadarPose& pose);

/// Round-trip two-way propagation delay 2 * range / c.
/// Throws NumericError if the target coincides with the radar.
double two_way_delay(const GlobalPoint& target, const RadarPose& pose);

}  // namespace mrblat
