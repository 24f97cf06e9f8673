#include "mrblat/baseline.hpp"

#include <algorithm>
#include <cmath>

#include "mrblat/kinematics.hpp"

namespace mrblat {

namespace {

struct ActiveBin {
    int idx = 0;  // unsigned bin index into z columns
    Cplx phasor_step{1.0, 0.0};
};

// Delay window in bins for ranges below max_range.
int window_bins(const WaveformConfig& cfg, double max_range, int n) {
    const double bins = 2.0 * max_range / kSpeedOfLight * cfg.sample_rate;
    return std::min(n, static_cast<int>(std::ceil(bins)) + 1);
}

// Inverse transform of one channel restricted to its occupied bins, evaluated
// on delay bins [0, n_bins). Incremental phasors keep this O(active * bins).
void channel_profile(const Eigen::MatrixXcd& z, int ch, int n_bins,
                     Eigen::VectorXcd& out) {
    const int n = static_cast<int>(z.cols());
    out.setZero(n_bins);
    for (int f = 0; f < n; ++f) {
        const Cplx zf = z(ch, f);
        if (zf == Cplx(0.0, 0.0)) continue;
        const double ang = 2.0 * kPi * f / n;
        const Cplx q(std::cos(ang), std::sin(ang));
        Cplx p(1.0, 0.0);
        for (int t = 0; t < n_bins; ++t) {
            out[t] += zf * p;
            p *= q;
        }
    }
}

int profile_argmax(const Eigen::VectorXcd& profile) {
    int best = 0;
    double best_mag = -1.0;
    for (int t = 0; t < profile.size(); ++t) {
        const double mag = std::norm(profile[t]);
        if (mag > best_mag) {
            best_mag = mag;
            best = t;
        }
    }
    return best;
}

int detected_bin(const ObservationBlock& obs, const WaveformConfig& cfg, double max_range) {
    const int n_bins = window_bins(cfg, max_range, static_cast<int>(obs.z.cols()));
    std::vector<int> peaks(static_cast<size_t>(obs.z.rows()));
    Eigen::VectorXcd profile;
    for (int ch = 0; ch < obs.z.rows(); ++ch) {
        channel_profile(obs.z, ch, n_bins, profile);
        peaks[static_cast<size_t>(ch)] = profile_argmax(profile);
    }
    // median; lowest bin wins ties by the nth_element ordering
    const size_t mid = peaks.size() / 2;
    std::nth_element(peaks.begin(), peaks.begin() + static_cast<long>(mid), peaks.end());
    return peaks[mid];
}

double bin_to_range(int bin, const WaveformConfig& cfg) {
    return bin * kSpeedOfLight / (2.0 * cfg.sample_rate);
}

// Virtual-array snapshot at one delay bin.
Eigen::VectorXcd snapshot_at_bin(const ObservationBlock& obs, int bin) {
    const int n = static_cast<int>(obs.z.cols());
    Eigen::VectorXcd y(obs.z.rows());
    for (int ch = 0; ch < obs.z.rows(); ++ch) {
        Cplx acc(0.0, 0.0);
        for (int f = 0; f < n; ++f) {
            const Cplx zf = obs.z(ch, f);
            if (zf == Cplx(0.0, 0.0)) continue;
            const double ang = 2.0 * kPi * f * bin / static_cast<double>(n);
            acc += zf * Cplx(std::cos(ang), std::sin(ang));
        }
        y[ch] = acc;
    }
    return y;
}

Eigen::VectorXd capon_spectrum_of_snapshot(const Eigen::VectorXcd& snapshot,
                                           const ArrayGeometry& arr,
                                           const WaveformConfig& cfg) {
    const int dim = static_cast<int>(snapshot.size());
    Eigen::MatrixXcd c = snapshot * snapshot.adjoint();
    const double load = 1e-3 * c.trace().real() / dim;
    if (!(load > 0.0)) throw NumericError("estimate_doa_capon: empty snapshot");
    c += load * Eigen::MatrixXcd::Identity(dim, dim);

    Eigen::LLT<Eigen::MatrixXcd> llt(c);
    if (llt.info() != Eigen::Success) {
        throw NumericError("estimate_doa_capon: singular snapshot covariance");
    }

    // virtual element offsets in channel order (j, m)
    std::vector<double> d;
    d.reserve(static_cast<size_t>(dim));
    for (int j = 0; j < arr.n_rx(); ++j) {
        for (int m = 0; m < arr.n_tx(); ++m) {
            d.push_back(arr.rx_positions[j] + arr.tx_positions[m]);
        }
    }

    const int n_grid = static_cast<int>(std::lround(2.0 * kCaponGridHalfSpan / kCaponGridStep)) + 1;
    const double kappa = 2.0 * kPi / cfg.wavelength();
    Eigen::VectorXd spectrum(n_grid);
    for (int gi = 0; gi < n_grid; ++gi) {
        const double theta = -kCaponGridHalfSpan + gi * kCaponGridStep;
        Eigen::VectorXcd a(dim);
        const double s = std::sin(theta);
        for (int i = 0; i < dim; ++i) {
            const double ph = kappa * d[static_cast<size_t>(i)] * s;
            a[i] = Cplx(std::cos(ph), std::sin(ph));
        }
        const Eigen::VectorXcd ca = llt.solve(a);
        spectrum[gi] = 1.0 / a.dot(ca).real();  // a^H C^{-1} a, real by symmetry
    }
    return spectrum;
}

double capon_peak(const Eigen::VectorXcd& snapshot, const ArrayGeometry& arr,
                  const WaveformConfig& cfg) {
    const Eigen::VectorXd spectrum = capon_spectrum_of_snapshot(snapshot, arr, cfg);
    int best = 0;
    spectrum.maxCoeff(&best);
    return -kCaponGridHalfSpan + best * kCaponGridStep;
}

}  // namespace

Eigen::MatrixXd delay_profile(const ObservationBlock& obs, int n_bins) {
    Eigen::MatrixXd mags(obs.z.rows(), n_bins);
    Eigen::VectorXcd profile;
    for (int ch = 0; ch < obs.z.rows(); ++ch) {
        channel_profile(obs.z, ch, n_bins, profile);
        mags.row(ch) = profile.cwiseAbs().transpose();
    }
    return mags;
}

double estimate_range(const ObservationBlock& obs, const WaveformConfig& cfg,
                      double max_range) {
    return bin_to_range(detected_bin(obs, cfg, max_range), cfg);
}

double estimate_doa_capon(const ObservationBlock& obs, const ArrayGeometry& arr,
                          const WaveformConfig& cfg, double max_range) {
    const int bin = detected_bin(obs, cfg, max_range);
    return capon_peak(snapshot_at_bin(obs, bin), arr, cfg);
}

Eigen::VectorXd capon_spectrum(const ObservationBlock& obs, const ArrayGeometry& arr,
                               const WaveformConfig& cfg, double max_range) {
    const int bin = detected_bin(obs, cfg, max_range);
    return capon_spectrum_of_snapshot(snapshot_at_bin(obs, bin), arr, cfg);
}

GlobalPoint measurement_to_global(double range, double theta, const RadarPose& pose) {
    if (range < 0.0) throw ConfigError("measurement_to_global: negative range");
    const LocalPoint local{Vec2{range * std::sin(theta), range * std::cos(theta)}};
    return local_to_global(local, pose);
}

PointMeasurement conventional_estimate(const ObservationBlock& obs, const RadarModel& model) {
    const int bin = detected_bin(obs, model.cfg, model.max_range);
    PointMeasurement meas;
    meas.range = bin_to_range(bin, model.cfg);
    meas.azimuth = capon_peak(snapshot_at_bin(obs, bin), model.array, model.cfg);
    meas.global = measurement_to_global(meas.range, meas.azimuth, model.pose);
    return meas;
}

Mat2 measurement_covariance(double range, double theta, const RadarPose& pose,
                            const WaveformConfig& cfg) {
    const double bin = kSpeedOfLight / (2.0 * cfg.sample_rate);
    const double var_r = bin * bin / 12.0;
    const double var_th = kCaponGridStep * kCaponGridStep / 12.0;
    Mat2 jac;
    jac << std::sin(theta), range * std::cos(theta),
           std::cos(theta), -range * std::sin(theta);
    const Mat2 local = jac * Vec2(var_r, var_th).asDiagonal() * jac.transpose();
    const Mat2 rot = rotation(pose.boresight_angle);
    return rot * local * rot.transpose();
}

KFModel make_kf_model(int n_radar, const KinematicMatrices& m, const Vec4& lambda_init) {
    if (n_radar < 1) throw ConfigError("make_kf_model: need at least one radar");
    KFModel model;
    model.H = Eigen::MatrixXd::Zero(2 * n_radar, 4);
    for (int k = 0; k < n_radar; ++k) {
        model.H(2 * k, 0) = 1.0;
        model.H(2 * k + 1, 1) = 1.0;
    }
    model.Q = m.G * lambda_init.cwiseInverse().asDiagonal() * m.G.transpose();
    model.T = m.T;
    model.R_meas = Eigen::MatrixXd::Identity(2 * n_radar, 2 * n_radar);
    return model;
}

KFForwardResult kf_forward(const std::vector<StackedMeasurement>& measurements,
                           const KFModel& model, const KFState& init) {
    KFForwardResult out;
    out.filtered.reserve(measurements.size());
    out.predicted.reserve(measurements.size());

    KFState prior = init;
    const Mat4 eye = Mat4::Identity();
    for (size_t n = 0; n < measurements.size(); ++n) {
        if (n > 0) {
            prior.mean = model.T * out.filtered[n - 1].mean;
            prior.cov = model.T * out.filtered[n - 1].cov * model.T.transpose() + model.Q;
        }
        out.predicted.push_back(prior);

        const auto& meas = measurements[n];
        const Eigen::MatrixXd& r = meas.R.size() > 0 ? meas.R : model.R_meas;
        const Eigen::MatrixXd s = model.H * prior.cov * model.H.transpose() + r;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            throw NumericError("kf_forward: non-SPD innovation covariance at step " +
                               std::to_string(n));
        }
        const Eigen::MatrixXd k_gain =
            ldlt.solve(model.H * prior.cov.transpose()).transpose();
        KFState post;
        post.mean = prior.mean + k_gain * (meas.z - model.H * prior.mean);
        const Mat4 ikh = eye - k_gain * model.H;
        post.cov = ikh * prior.cov * ikh.transpose() +
                   k_gain * r * k_gain.transpose();  // Joseph form
        out.filtered.push_back(post);
    }
    return out;
}

std::vector<KFState> kf_backward_smooth(const KFForwardResult& forward, const KFModel& model) {
    const size_t n = forward.filtered.size();
    std::vector<KFState> smoothed(n);
    if (n == 0) return smoothed;
    smoothed[n - 1] = forward.filtered[n - 1];
    for (size_t i = n - 1; i-- > 0;) {
        const KFState& f = forward.filtered[i];
        const KFState& pred_next = forward.predicted[i + 1];
        const Mat4 gain =
            f.cov * model.T.transpose() * pred_next.cov.ldlt().solve(Mat4::Identity());
        smoothed[i].mean = f.mean + gain * (smoothed[i + 1].mean - pred_next.mean);
        smoothed[i].cov =
            f.cov + gain * (smoothed[i + 1].cov - pred_next.cov) * gain.transpose();
        smoothed[i].cov = 0.5 * (smoothed[i].cov + smoothed[i].cov.transpose()).eval();
    }
    return smoothed;
}

}  // namespace mrblat
