#include "mrblat/kinematics.hpp"

#include <cmath>

namespace mrblat {

KinematicMatrices make_kinematic_matrices(double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw ConfigError("make_kinematic_matrices: dt must be positive and finite");
    }
    KinematicMatrices m;
    m.dt = dt;
    m.T << 1, 0, dt, 0,
           0, 1, 0, dt,
           0, 0, 1, 0,
           0, 0, 0, 1;
    const double h = 0.5 * dt * dt;
    m.G << h, 0, 0, 0,
           0, h, 0, 0,
           0, 0, dt, 0,
           0, 0, 0, dt;
    return m;
}

KinematicState predict(const KinematicState& phi, const KinematicMatrices& m) {
    return KinematicState::from_vec(m.T * phi.vec());
}

Mat4 process_noise_precision(const Vec4& lambda_a, const KinematicMatrices& m) {
    for (int i = 0; i < 4; ++i) {
        if (!(lambda_a[i] > 0.0) || !std::isfinite(lambda_a[i])) {
            throw ConfigError("process_noise_precision: lambda_a entries must be positive");
        }
    }
    // G is diagonal, so G^{-T} diag(lambda) G^{-1} stays diagonal.
    const Mat4 g_inv = m.G.inverse();
    return g_inv.transpose() * lambda_a.asDiagonal() * g_inv;
}

namespace {

// Unrolled sampling representation: each phase maps local time to state.
struct Phase {
    double duration = 0.0;
    Vec2 p0{0.0, 0.0};
    Vec2 dir{0.0, 1.0};       // unit direction for linear phases
    double speed0 = 0.0;
    double accel = 0.0;
    // arc fields
    bool is_arc = false;
    Vec2 center{0.0, 0.0};
    double radius = 0.0;
    double angle0 = 0.0;
    double angular_rate = 0.0;

    KinematicState at(double t) const {
        KinematicState s;
        if (is_arc) {
            const double a = angle0 + angular_rate * t;
            s.x = center.x() + radius * std::cos(a);
            s.y = center.y() + radius * std::sin(a);
            const double v = radius * angular_rate;
            s.vx = -v * std::sin(a);
            s.vy = v * std::cos(a);
        } else {
            const double d = speed0 * t + 0.5 * accel * t * t;
            const Vec2 p = p0 + dir * d;
            const double v = speed0 + accel * t;
            s.x = p.x();
            s.y = p.y();
            s.vx = dir.x() * v;
            s.vy = dir.y() * v;
        }
        return s;
    }
};

Vec2 arc_start_position(const ArcSegment& a) {
    return a.center + a.radius * Vec2{std::cos(a.start_angle), std::sin(a.start_angle)};
}

Vec2 arc_start_velocity(const ArcSegment& a) {
    const double sgn = a.sweep >= 0.0 ? 1.0 : -1.0;
    return a.speed * sgn * Vec2{-std::sin(a.start_angle), std::cos(a.start_angle)};
}

Vec2 segment_start_velocity(const TrackSegment& seg) {
    if (const auto* a = std::get_if<ArcSegment>(&seg)) return arc_start_velocity(*a);
    return std::get<LinearStopSegment>(seg).start_velocity;
}

// Validates parameters and joins while unrolling segments into phases.
std::vector<Phase> build_phases(const TrackSpec& spec) {
    if (!(spec.pulse_rate > 0.0)) throw ConfigError("TrackSpec: pulse_rate must be positive");
    if (spec.segments.empty()) throw ConfigError("TrackSpec: no segments");

    std::vector<Phase> phases;
    bool have_pos = false;
    Vec2 pos{0.0, 0.0};

    for (size_t i = 0; i < spec.segments.size(); ++i) {
        const TrackSegment& seg = spec.segments[i];
        if (const auto* a = std::get_if<ArcSegment>(&seg)) {
            if (!(a->radius > 0.0) || !(a->speed > 0.0) || a->sweep == 0.0) {
                throw ConfigError("TrackSpec: bad arc parameters at segment " + std::to_string(i));
            }
            const Vec2 start = arc_start_position(*a);
            if (have_pos && (start - pos).norm() > 1e-6) {
                throw ConfigError("TrackSpec: discontinuous join at segment " + std::to_string(i));
            }
            Phase ph;
            ph.is_arc = true;
            ph.center = a->center;
            ph.radius = a->radius;
            ph.angle0 = a->start_angle;
            const double sgn = a->sweep >= 0.0 ? 1.0 : -1.0;
            ph.angular_rate = sgn * a->speed / a->radius;
            ph.duration = std::abs(a->sweep) * a->radius / a->speed;
            phases.push_back(ph);
            const double end_angle = a->start_angle + a->sweep;
            pos = a->center + a->radius * Vec2{std::cos(end_angle), std::sin(end_angle)};
            have_pos = true;
        } else {
            const auto& st = std::get<LinearStopSegment>(seg);
            const double s0 = st.start_velocity.norm();
            if (!(st.deceleration > 0.0) || !(s0 > 0.0)) {
                throw ConfigError("TrackSpec: bad stop parameters at segment " + std::to_string(i));
            }
            if (!have_pos) {
                throw ConfigError("TrackSpec: track cannot begin with a stop segment");
            }
            const Vec2 dir_in = st.start_velocity / s0;

            Phase dec;
            dec.p0 = pos;
            dec.dir = dir_in;
            dec.speed0 = s0;
            dec.accel = -st.deceleration;
            dec.duration = s0 / st.deceleration;
            phases.push_back(dec);
            pos += dir_in * (s0 * s0 / (2.0 * st.deceleration));

            // Re-accelerate along the next segment's initial direction so the
            // stop hands over at that segment's own start speed.
            if (i + 1 < spec.segments.size()) {
                const Vec2 v_out = segment_start_velocity(spec.segments[i + 1]);
                const double s_out = v_out.norm();
                if (s_out > 0.0) {
                    Phase acc;
                    acc.p0 = pos;
                    acc.dir = v_out / s_out;
                    acc.speed0 = 0.0;
                    acc.accel = st.deceleration;
                    acc.duration = s_out / st.deceleration;
                    phases.push_back(acc);
                    pos += acc.dir * (s_out * s_out / (2.0 * st.deceleration));
                }
            }
        }
    }
    return phases;
}

}  // namespace

void TrackSpec::validate() const {
    (void)build_phases(*this);
}

std::vector<KinematicState> generate_track(const TrackSpec& spec) {
    const std::vector<Phase> phases = build_phases(spec);

    double total = 0.0;
    for (const auto& ph : phases) total += ph.duration;

    const double dt = 1.0 / spec.pulse_rate;
    const int n_samples = static_cast<int>(std::floor(total / dt + 1e-9)) + 1;

    std::vector<KinematicState> out;
    out.reserve(static_cast<size_t>(n_samples));
    for (int n = 0; n < n_samples; ++n) {
        double t = n * dt;
        size_t k = 0;
        while (k + 1 < phases.size() && t > phases[k].duration) {
            t -= phases[k].duration;
            ++k;
        }
        t = std::min(t, phases[k].duration);
        out.push_back(phases[k].at(t));
    }
    return out;
}

}  // namespace mrblat
