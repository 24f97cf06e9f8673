#include "mrblat/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>

#include "mrblat/rng.hpp"

namespace mrblat {

void WaveformConfig::validate() const {
    if (!(carrier_freq > 0.0) || !(bandwidth > 0.0) || !(pulse_duration > 0.0) ||
        !(sample_rate > 0.0) || !(noise_variance > 0.0)) {
        throw ConfigError("WaveformConfig: all parameters must be positive");
    }
    if (bandwidth > 0.5 * sample_rate) {
        throw ConfigError("WaveformConfig: bandwidth exceeds f_s/2");
    }
    if (num_samples < 1) throw ConfigError("WaveformConfig: num_samples < 1");
}

WaveformConfig make_waveform_config(double carrier_freq, double bandwidth,
                                    double pulse_duration, double sample_rate) {
    WaveformConfig cfg;
    cfg.carrier_freq = carrier_freq;
    cfg.bandwidth = bandwidth;
    cfg.pulse_duration = pulse_duration;
    cfg.sample_rate = sample_rate;
    cfg.num_samples = static_cast<int>(std::lround(pulse_duration * sample_rate));
    cfg.noise_variance = bandwidth * kBoltzmann * 290.0;
    cfg.validate();
    return cfg;
}

void ArrayGeometry::validate() const {
    if (tx_positions.empty() || rx_positions.empty()) {
        throw ConfigError("ArrayGeometry: empty antenna list");
    }
    for (double d : tx_positions) {
        if (!std::isfinite(d)) throw ConfigError("ArrayGeometry: non-finite tx offset");
    }
    for (double d : rx_positions) {
        if (!std::isfinite(d)) throw ConfigError("ArrayGeometry: non-finite rx offset");
    }
}

ArrayGeometry make_virtual_ula(int n_tx, int n_rx, double wavelength) {
    if (n_tx < 1 || n_rx < 1) throw ConfigError("make_virtual_ula: need at least one antenna");
    ArrayGeometry arr;
    const double rx_sp = 0.5 * wavelength;
    const double tx_sp = n_rx * rx_sp;
    for (int m = 0; m < n_tx; ++m) {
        arr.tx_positions.push_back((m - 0.5 * (n_tx - 1)) * tx_sp);
    }
    for (int j = 0; j < n_rx; ++j) {
        arr.rx_positions.push_back((j - 0.5 * (n_rx - 1)) * rx_sp);
    }
    return arr;
}

namespace {

// Unitary forward DFT; radix-2 when possible, direct evaluation otherwise.
// Only runs once per scenario (chirp construction), so the fallback is fine.
std::vector<Cplx> dft_unitary(std::vector<Cplx> x) {
    const size_t n = x.size();
    if (n == 0) return x;
    const bool pow2 = (n & (n - 1)) == 0;
    std::vector<Cplx> out(n);
    if (pow2) {
        // bit-reversal permutation + iterative butterflies
        out = std::move(x);
        size_t j = 0;
        for (size_t i = 1; i < n; ++i) {
            size_t bit = n >> 1;
            for (; j & bit; bit >>= 1) j ^= bit;
            j ^= bit;
            if (i < j) std::swap(out[i], out[j]);
        }
        for (size_t len = 2; len <= n; len <<= 1) {
            const double ang = -2.0 * kPi / static_cast<double>(len);
            const Cplx wl(std::cos(ang), std::sin(ang));
            for (size_t i = 0; i < n; i += len) {
                Cplx w(1.0, 0.0);
                for (size_t k = 0; k < len / 2; ++k) {
                    const Cplx a = out[i + k];
                    const Cplx b = out[i + k + len / 2] * w;
                    out[i + k] = a + b;
                    out[i + k + len / 2] = a - b;
                    w *= wl;
                }
            }
        }
    } else {
        for (size_t k = 0; k < n; ++k) {
            Cplx acc(0.0, 0.0);
            for (size_t t = 0; t < n; ++t) {
                const double ang = -2.0 * kPi * static_cast<double>(k * t % n) / static_cast<double>(n);
                acc += x[t] * Cplx(std::cos(ang), std::sin(ang));
            }
            out[k] = acc;
        }
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (auto& v : out) v *= scale;
    return out;
}

int signed_bin(int f, int n) { return f <= n / 2 - 1 ? f : f - n; }
int unsigned_bin(int k, int n) { return k >= 0 ? k : k + n; }

}  // namespace

ChirpBank make_chirp_bank(const WaveformConfig& cfg, int n_tx) {
    if (n_tx < 1) throw ConfigError("make_chirp_bank: n_tx must be >= 1");
    if (cfg.bandwidth > cfg.sample_rate) {
        throw ConfigError("make_chirp_bank: bandwidth exceeds the sample rate");
    }
    const int n = cfg.num_samples;
    const double fs = cfg.sample_rate;
    const double bw = cfg.bandwidth;
    const double dur = n / fs;

    // Unit-amplitude linear chirp sweeping [-BW/2, BW/2].
    std::vector<Cplx> u(static_cast<size_t>(n));
    for (int t = 0; t < n; ++t) {
        const double tt = t / fs;
        const double phase = 2.0 * kPi * (-0.5 * bw * tt + 0.5 * bw / dur * tt * tt);
        u[static_cast<size_t>(t)] = Cplx(std::cos(phase), std::sin(phase));
    }
    const std::vector<Cplx> spec = dft_unitary(std::move(u));

    // Half-width of the occupied band in bins.
    const int k_max = static_cast<int>(std::floor(0.5 * bw * n / fs));
    if (2 * k_max + 1 < n_tx) {
        throw ConfigError("make_chirp_bank: band too narrow for the transmitter count");
    }

    ChirpBank bank;
    bank.spectra = Eigen::MatrixXcd::Zero(n_tx, n);
    for (int m = 0; m < n_tx; ++m) {
        double energy = 0.0;
        for (int k = -k_max; k <= k_max; ++k) {
            if ((k + k_max) % n_tx != m) continue;
            const Cplx v = spec[static_cast<size_t>(unsigned_bin(k, n))];
            bank.spectra(m, unsigned_bin(k, n)) = v;
            energy += std::norm(v);
        }
        // Fold the transmitter's full slot energy onto its comb.
        const double scale = std::sqrt(static_cast<double>(n) / energy);
        bank.spectra.row(m) *= scale;
    }
    return bank;
}

Eigen::MatrixXd noise_precision(const ChirpBank& bank, const WaveformConfig& cfg) {
    const int n_tx = bank.n_tx();
    const int n = bank.n_samples();
    // One receiver per block row group; precision depends only on the tx row.
    Eigen::MatrixXd lz = Eigen::MatrixXd::Zero(n_tx, n);
    for (int m = 0; m < n_tx; ++m) {
        for (int f = 0; f < n; ++f) {
            const double w = std::norm(bank.spectra(m, f));
            lz(m, f) = w > 0.0 ? 1.0 / (cfg.noise_variance * w) : 0.0;
        }
    }
    return lz;
}

PathLoss path_loss(double tau, const WaveformConfig& cfg, double rcs, double gain,
                   double power) {
    if (!(tau > 0.0)) throw ConfigError("path_loss: tau must be positive");
    const double range = 0.5 * kSpeedOfLight * tau;
    const double lam = cfg.wavelength();
    const double four_pi = 4.0 * kPi;
    const double p_rx = power * gain * gain * lam * lam * rcs /
                        (four_pi * four_pi * four_pi * range * range * range * range);
    const double mag = std::sqrt(p_rx);
    const double phase = -2.0 * kPi * cfg.carrier_freq * tau;
    return {Cplx(mag * std::cos(phase), mag * std::sin(phase))};
}

Eigen::MatrixXcd steering_matrix(const LocalPoint& target_local, const ArrayGeometry& arr,
                                 const WaveformConfig& cfg) {
    const double r = target_local.v.norm();
    if (!(r > 0.0)) throw ConfigError("steering_matrix: target on the radar");
    const double sin_th = target_local.v.x() / r;
    const double kappa = 2.0 * kPi / cfg.wavelength();
    Eigen::MatrixXcd a(arr.n_rx(), arr.n_tx());
    for (int j = 0; j < arr.n_rx(); ++j) {
        for (int m = 0; m < arr.n_tx(); ++m) {
            const double ph = kappa * (arr.rx_positions[j] + arr.tx_positions[m]) * sin_th;
            a(j, m) = Cplx(std::cos(ph), std::sin(ph));
        }
    }
    return a;
}

RadarModel make_radar_model(const RadarPose& pose, const ArrayGeometry& arr,
                            const ChirpBank& bank, const WaveformConfig& cfg, double rcs,
                            double gain, double power, double max_range) {
    pose.validate();
    arr.validate();
    cfg.validate();
    if (!(rcs > 0.0) || !(power > 0.0) || !(gain > 0.0) || !(max_range > 0.0)) {
        throw ConfigError("make_radar_model: rcs, gain, power, max_range must be positive");
    }

    RadarModel model;
    model.pose = pose;
    model.cfg = cfg;
    model.array = arr;
    model.bank = bank;
    model.rcs = rcs;
    model.gain = gain;
    model.power = power;
    model.max_range = max_range;
    model.inv_noise_var = 1.0 / cfg.noise_variance;

    const int n = bank.n_samples();
    const int n_tx = bank.n_tx();
    const double peak = bank.spectra.cwiseAbs2().maxCoeff();

    for (int m = 0; m < n_tx; ++m) {
        std::vector<int> ks;
        std::vector<double> ws;
        for (int f = 0; f < n; ++f) {
            const double w = std::norm(bank.spectra(m, f));
            if (w > 1e-12 * peak) {
                ks.push_back(signed_bin(f, n));
                ws.push_back(w);
            }
        }
        if (ks.empty()) throw ConfigError("make_radar_model: transmit row carries no energy");
        std::vector<size_t> order(ks.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return ks[a] < ks[b]; });

        RowSupport row;
        row.k0 = ks[order[0]];
        row.step = order.size() > 1 ? ks[order[1]] - ks[order[0]] : 1;
        for (size_t i = 0; i < order.size(); ++i) {
            const int k = ks[order[i]];
            if (k != row.k0 + row.step * static_cast<int>(i)) {
                throw ConfigError("make_radar_model: non-uniform spectral comb");
            }
            const double w = ws[order[i]];
            const double g = 2.0 * kPi * k / n;
            row.w.push_back(w);
            row.w_sum += w;
            row.w_gamma += w * g;
            row.w_gamma2 += w * g * g;
        }
        model.rows.push_back(std::move(row));
    }

    for (int j = 0; j < arr.n_rx(); ++j) {
        for (int m = 0; m < n_tx; ++m) {
            ChannelSupport ch;
            ch.rx = j;
            ch.tx = m;
            ch.d_virt = arr.rx_positions[j] + arr.tx_positions[m];
            model.channels.push_back(ch);
        }
    }

    model.energy_weighted = 0.0;
    model.k00 = model.k01 = model.k11 = 0.0;
    for (const auto& ch : model.channels) {
        const RowSupport& row = model.rows[static_cast<size_t>(ch.tx)];
        model.energy_weighted += row.w_sum * model.inv_noise_var;
        model.k00 += ch.d_virt * ch.d_virt * row.w_sum;
        model.k01 += ch.d_virt * row.w_gamma;
        model.k11 += row.w_gamma2;
    }

    Eigen::MatrixXd lz(arr.n_rx() * n_tx, n);
    const Eigen::MatrixXd per_row = noise_precision(bank, cfg);
    for (size_t c = 0; c < model.channels.size(); ++c) {
        lz.row(static_cast<Eigen::Index>(c)) = per_row.row(model.channels[c].tx);
    }
    model.lambda_z = std::make_shared<const Eigen::MatrixXd>(std::move(lz));
    return model;
}

TargetGeom local_target_geometry(double u, double v, const RadarModel& model) {
    TargetGeom g;
    g.u = u;
    g.v = v;
    g.r = std::hypot(u, v);
    if (!(g.r > 0.0)) throw NumericError("local_target_geometry: zero range");
    g.sin_th = u / g.r;
    g.cos_th = v / g.r;
    const double fs = model.cfg.sample_rate;
    g.delay_samples = 2.0 * g.r / kSpeedOfLight * fs;
    const double r2 = g.r * g.r;
    g.th_u = v / r2;
    g.th_v = -u / r2;
    const double dscale = 2.0 * fs / kSpeedOfLight;
    g.del_u = dscale * u / g.r;
    g.del_v = dscale * v / g.r;
    return g;
}

Correlation correlate_template(const RadarModel& model, const Eigen::MatrixXcd& z,
                               const TargetGeom& g, bool with_gradient) {
    const int n = model.cfg.num_samples;
    const double kappa = 2.0 * kPi / model.cfg.wavelength();
    const double two_pi_over_n = 2.0 * kPi / n;

    Cplx c_acc(0.0, 0.0);
    Cplx g_beta(0.0, 0.0);   // sum beta_ch * conj(A) * t0
    Cplx g_gamma(0.0, 0.0);  // sum conj(A) * sum_f gamma_k conj(D) z

    for (size_t ci = 0; ci < model.channels.size(); ++ci) {
        const ChannelSupport& ch = model.channels[ci];
        const RowSupport& row = model.rows[static_cast<size_t>(ch.tx)];
        const auto zrow = z.row(static_cast<Eigen::Index>(ci));

        // conj of the delay phase: exp(+i 2 pi k delta / N), advanced bin to bin.
        const double ph0 = two_pi_over_n * row.k0 * g.delay_samples;
        const double dph = two_pi_over_n * row.step * g.delay_samples;
        Cplx p(std::cos(ph0), std::sin(ph0));
        const Cplx q(std::cos(dph), std::sin(dph));

        Cplx t0(0.0, 0.0);
        Cplx t1(0.0, 0.0);
        int idx = unsigned_bin(row.k0, n);
        const size_t count = row.w.size();
        if (with_gradient) {
            for (size_t i = 0; i < count; ++i) {
                const Cplx zp = zrow(idx) * p;
                t0 += zp;
                t1 += static_cast<double>(i) * zp;
                p *= q;
                idx += row.step;
                if (idx >= n) idx -= n;
            }
        } else {
            for (size_t i = 0; i < count; ++i) {
                t0 += zrow(idx) * p;
                p *= q;
                idx += row.step;
                if (idx >= n) idx -= n;
            }
        }

        const double aph = kappa * ch.d_virt * g.sin_th;
        const Cplx a_conj(std::cos(aph), -std::sin(aph));
        c_acc += a_conj * t0;
        if (with_gradient) {
            g_beta += kappa * ch.d_virt * g.cos_th * (a_conj * t0);
            g_gamma += a_conj * (two_pi_over_n * (static_cast<double>(row.k0) * t0 +
                                                  static_cast<double>(row.step) * t1));
        }
    }

    Correlation out;
    out.c = c_acc * model.inv_noise_var;
    if (with_gradient) {
        const Cplx gb = g_beta * model.inv_noise_var;
        const Cplx gg = g_gamma * model.inv_noise_var;
        const Cplx mi(0.0, -1.0);
        out.dc_du = mi * (g.th_u * gb - g.del_u * gg);
        out.dc_dv = mi * (g.th_v * gb - g.del_v * gg);
    }
    return out;
}

Mat2 template_gradient_gram(const RadarModel& model, const TargetGeom& g) {
    const double kappa = 2.0 * kPi / model.cfg.wavelength();
    const double b = kappa * g.cos_th;
    const double tu = g.th_u, tv = g.th_v, du = g.del_u, dv = g.del_v;
    Mat2 j;
    j(0, 0) = b * b * tu * tu * model.k00 - 2.0 * b * tu * du * model.k01 + du * du * model.k11;
    j(1, 1) = b * b * tv * tv * model.k00 - 2.0 * b * tv * dv * model.k01 + dv * dv * model.k11;
    j(0, 1) = b * b * tu * tv * model.k00 - b * (tu * dv + tv * du) * model.k01 +
              du * dv * model.k11;
    j(1, 0) = j(0, 1);
    return j * model.inv_noise_var;
}

Eigen::MatrixXcd unit_template(const RadarModel& model, const TargetGeom& g) {
    const int n = model.cfg.num_samples;
    const double kappa = 2.0 * kPi / model.cfg.wavelength();
    const double two_pi_over_n = 2.0 * kPi / n;
    Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(model.channels.size()), n);
    for (size_t ci = 0; ci < model.channels.size(); ++ci) {
        const ChannelSupport& ch = model.channels[ci];
        const RowSupport& row = model.rows[static_cast<size_t>(ch.tx)];
        const double aph = kappa * ch.d_virt * g.sin_th;
        const Cplx a(std::cos(aph), std::sin(aph));
        for (size_t i = 0; i < row.w.size(); ++i) {
            const int k = row.k0 + row.step * static_cast<int>(i);
            const double ph = -two_pi_over_n * k * g.delay_samples;
            s(static_cast<Eigen::Index>(ci), unsigned_bin(k, n)) =
                a * row.w[i] * Cplx(std::cos(ph), std::sin(ph));
        }
    }
    return s;
}

ObservationBlock synthesize_observation(const RadarModel& model, const KinematicState& phi,
                                        uint64_t rng_seed) {
    const GlobalPoint gp{Vec2{phi.x, phi.y}};
    const LocalPoint lp = global_to_local(gp, model.pose);
    const double range = lp.v.norm();
    if (!(range > 0.0)) throw NumericError("synthesize_observation: target on the radar");
    if (range >= model.max_range) {
        throw NumericError("synthesize_observation: range " + std::to_string(range) +
                           " m reaches the unambiguous limit (delay aliasing)");
    }

    const TargetGeom g = local_target_geometry(lp.v.x(), lp.v.y(), model);
    const double tau = 2.0 * range / kSpeedOfLight;
    const Cplx alpha = path_loss(tau, model.cfg, model.rcs, model.gain, model.power).value;

    const int n = model.cfg.num_samples;
    const double kappa = 2.0 * kPi / model.cfg.wavelength();
    const double two_pi_over_n = 2.0 * kPi / n;
    const double sw2 = model.cfg.noise_variance;

    Rng rng(rng_seed);
    ObservationBlock obs;
    obs.z = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(model.channels.size()), n);
    obs.noise_precision = model.lambda_z;

    for (size_t ci = 0; ci < model.channels.size(); ++ci) {
        const ChannelSupport& ch = model.channels[ci];
        const RowSupport& row = model.rows[static_cast<size_t>(ch.tx)];
        const double aph = kappa * ch.d_virt * g.sin_th;
        const Cplx a = alpha * Cplx(std::cos(aph), std::sin(aph));
        for (size_t i = 0; i < row.w.size(); ++i) {
            const int k = row.k0 + row.step * static_cast<int>(i);
            const double ph = -two_pi_over_n * k * g.delay_samples;
            const double w = row.w[i];
            Cplx val = a * w * Cplx(std::cos(ph), std::sin(ph));
            if (sw2 > 0.0) val += rng.cnormal(sw2 * w);
            obs.z(static_cast<Eigen::Index>(ci), unsigned_bin(k, n)) = val;
        }
    }
    return obs;
}

ObservationBlock synthesize_observation(const KinematicState& phi, const RadarPose& pose,
                                        const ArrayGeometry& arr, const ChirpBank& bank,
                                        const WaveformConfig& cfg, double rcs,
                                        uint64_t rng_seed, double gain, double power,
                                        double max_range) {
    const RadarModel model = make_radar_model(pose, arr, bank, cfg, rcs, gain, power, max_range);
    return synthesize_observation(model, phi, rng_seed);
}

double snr_at(const RadarModel& model, const KinematicState& phi) {
    const GlobalPoint gp{Vec2{phi.x, phi.y}};
    const double range = (gp.v - model.pose.position).norm();
    if (!(range > 0.0)) throw NumericError("snr_at: target on the radar");
    const double tau = 2.0 * range / kSpeedOfLight;
    const Cplx alpha = path_loss(tau, model.cfg, model.rcs, model.gain, model.power).value;
    const double total = std::norm(alpha) * model.energy_weighted;
    const double per_dim = total / (static_cast<double>(model.channels.size()) *
                                    model.cfg.num_samples);
    return 10.0 * std::log10(per_dim);
}

double snr_at(const KinematicState& phi, const RadarPose& pose, const ArrayGeometry& arr,
              const ChirpBank& bank, const WaveformConfig& cfg, double rcs, double gain,
              double power) {
    const RadarModel model = make_radar_model(pose, arr, bank, cfg, rcs, gain, power,
                                              std::numeric_limits<double>::infinity());
    return snr_at(model, phi);
}

void write_observation_block(const std::string& path, const ObservationBlock& obs) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw NumericError("write_observation_block: cannot open " + path);
    const uint64_t rows = static_cast<uint64_t>(obs.z.rows());
    const uint64_t cols = static_cast<uint64_t>(obs.z.cols());
    f.write(reinterpret_cast<const char*>(&rows), 8);
    f.write(reinterpret_cast<const char*>(&cols), 8);
    for (Eigen::Index r = 0; r < obs.z.rows(); ++r) {
        for (Eigen::Index c = 0; c < obs.z.cols(); ++c) {
            const float re = static_cast<float>(obs.z(r, c).real());
            const float im = static_cast<float>(obs.z(r, c).imag());
            f.write(reinterpret_cast<const char*>(&re), 4);
            f.write(reinterpret_cast<const char*>(&im), 4);
        }
    }
}

Eigen::MatrixXcd read_observation_block(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw NumericError("read_observation_block: cannot open " + path);
    uint64_t rows = 0, cols = 0;
    f.read(reinterpret_cast<char*>(&rows), 8);
    f.read(reinterpret_cast<char*>(&cols), 8);
    Eigen::MatrixXcd z(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
            float re = 0.0f, im = 0.0f;
            f.read(reinterpret_cast<char*>(&re), 4);
            f.read(reinterpret_cast<char*>(&im), 4);
            z(r, c) = Cplx(re, im);
        }
    }
    if (!f) throw NumericError("read_observation_block: truncated file " + path);
    return z;
}

}  // namespace mrblat
