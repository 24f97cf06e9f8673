#include "mrblat/geometry.hpp"

#include <cmath>

namespace mrblat {

void RadarPose::validate() const {
    if (!position.allFinite() || !std::isfinite(boresight_angle)) {
        throw ConfigError("RadarPose: non-finite position or boresight angle");
    }
    if (boresight_angle < -kPi || boresight_angle >= kPi) {
        throw ConfigError("RadarPose: boresight_angle must lie in [-pi, pi)");
    }
}

Mat2 rotation(double psi) {
    const double c = std::cos(psi);
    const double s = std::sin(psi);
    Mat2 r;
    r << c, -s, s, c;
    return r;
}

GlobalPoint local_to_global(const LocalPoint& pt, const RadarPose& pose) {
    return {rotation(pose.boresight_angle) * pt.v + pose.position};
}

LocalPoint global_to_local(const GlobalPoint& pt, const RadarPose& pose) {
    return {rotation(pose.boresight_angle).transpose() * (pt.v - pose.position)};
}

double two_way_delay(const GlobalPoint& target, const RadarPose& pose) {
    const double range = (target.v - pose.position).norm();
    if (range <= 0.0) {
        throw NumericError("two_way_delay: target coincides with the radar");
    }
    return 2.0 * range / kSpeedOfLight;
}

}  // namespace mrblat
