#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mrblat/common.hpp"
#include "mrblat/geometry.hpp"
#include "mrblat/kinematics.hpp"

namespace mrblat {

struct WaveformConfig {
    double carrier_freq = 10e9;     // f_c, Hz
    double bandwidth = 20e6;        // BW, Hz
    double pulse_duration = 16e-6;  // T_Tx, s
    double sample_rate = 256e6;     // f_s, Hz
    int num_samples = 4096;         // N_s = round(T_Tx * f_s)
    double noise_variance = 8.007764e-14;  // sigma_w^2, W

    double wavelength() const { return kSpeedOfLight / carrier_freq; }
    void validate() const;
};

/// Config with N_s derived from T_Tx * f_s and the thermal noise floor
/// BW * k_b * 290 filled in.
WaveformConfig make_waveform_config(double carrier_freq, double bandwidth,
                                    double pulse_duration, double sample_rate);

/// Scalar antenna offsets along the radar face (perpendicular to boresight).
struct ArrayGeometry {
    std::vector<double> tx_positions;  // meters
    std::vector<double> rx_positions;  // meters

    int n_tx() const { return static_cast<int>(tx_positions.size()); }
    int n_rx() const { return static_cast<int>(rx_positions.size()); }
    void validate() const;
};

/// Colinear ULAs giving the standard filled virtual array: rx at lambda/2,
/// tx at n_rx * lambda/2, both centered on the radar position.
ArrayGeometry make_virtual_ula(int n_tx, int n_rx, double wavelength);

/// Frequency-domain transmit samples, one row per transmitter (unitary DFT
/// convention, unsigned bin indexing with wrap-around at N_s/2).
///
/// Orthogonality between transmitters is realized by interleaved frequency
/// combs over the chirp band: row m keeps every n_tx-th in-band bin of a
/// common linear chirp and is rescaled back to full pulse energy. Rows are
/// then exactly orthogonal at every lag, which is the idealized TDM model
/// (no cross-talk between virtual channels).
struct ChirpBank {
    Eigen::MatrixXcd spectra;  // N_T x N_s

    int n_tx() const { return static_cast<int>(spectra.rows()); }
    int n_samples() const { return static_cast<int>(spectra.cols()); }
};

ChirpBank make_chirp_bank(const WaveformConfig& cfg, int n_tx);

/// Per-channel, per-bin noise precision of the matched-filter output:
/// 1 / (sigma_w^2 |U[m,f]|^2), zero where the bin carries no energy.
/// Row order matches ObservationBlock: channel (j, m) at row j * N_T + m.
Eigen::MatrixXd noise_precision(const ChirpBank& bank, const WaveformConfig& cfg);

/// Matched-filter output of one radar for one MIMO pulse.
struct ObservationBlock {
    Eigen::MatrixXcd z;  // N_R*N_T x N_s, channel (j, m) at row j * N_T + m
    std::shared_ptr<const Eigen::MatrixXd> noise_precision;

    int n_channels() const { return static_cast<int>(z.rows()); }
    int n_samples() const { return static_cast<int>(z.cols()); }
};

/// Complex amplitude from the radar range equation:
/// |alpha|^2 = P G^2 lambda^2 rho / ((4 pi)^3 R^4), arg(alpha) = -w_c tau.
struct PathLoss {
    Cplx value{0.0, 0.0};
};

PathLoss path_loss(double tau, const WaveformConfig& cfg, double rcs, double gain,
                   double power);

/// A[j, m] = exp(i (2 pi / lambda) (d_j + d_m) sin theta), theta the local
/// azimuth of the target off boresight.
Eigen::MatrixXcd steering_matrix(const LocalPoint& target_local, const ArrayGeometry& arr,
                                 const WaveformConfig& cfg);

// ---------------------------------------------------------------------------
// Radar model: one radar's pose, waveform and precomputed spectral support,
// shared by the synthesizer, the conventional estimator and the variational
// data-message fit.
// ---------------------------------------------------------------------------

/// Active bins of one transmit row. Bins form a uniform comb in signed
/// frequency index: k_i = k0 + step * i.
struct RowSupport {
    int k0 = 0;
    int step = 1;
    std::vector<double> w;   // |U|^2 per active bin
    double w_sum = 0.0;      // sum w            (row energy, = N_s)
    double w_gamma = 0.0;    // sum w * g_k,     g_k = 2 pi k / N_s
    double w_gamma2 = 0.0;   // sum w * g_k^2
};

struct ChannelSupport {
    int rx = 0;
    int tx = 0;
    double d_virt = 0.0;  // d_rx[j] + d_tx[m]
};

struct RadarModel {
    RadarPose pose;
    WaveformConfig cfg;
    ArrayGeometry array;
    ChirpBank bank;
    double rcs = 0.05;
    double gain = 1.0;
    double power = 6.99;
    double max_range = 300.0;

    std::vector<RowSupport> rows;
    std::vector<ChannelSupport> channels;  // row j * N_T + m
    std::shared_ptr<const Eigen::MatrixXd> lambda_z;

    double inv_noise_var = 0.0;   // 1 / sigma_w^2
    double energy_weighted = 0.0; // <S~|Lz|S~>, position independent for comb banks
    // Jacobian moments over channels/bins (see data-message fit).
    double k00 = 0.0;  // sum_ch d^2 * w_sum
    double k01 = 0.0;  // sum_ch d   * w_gamma
    double k11 = 0.0;  // sum_ch       w_gamma2
};

RadarModel make_radar_model(const RadarPose& pose, const ArrayGeometry& arr,
                            const ChirpBank& bank, const WaveformConfig& cfg, double rcs,
                            double gain, double power, double max_range);

/// Geometry of a candidate target position in the radar's local frame,
/// with the partial derivatives the objective Jacobian needs.
struct TargetGeom {
    double u = 0.0, v = 0.0, r = 0.0;
    double sin_th = 0.0, cos_th = 0.0;
    double delay_samples = 0.0;            // tau * f_s (fractional)
    double th_u = 0.0, th_v = 0.0;         // d theta / d(u, v)
    double del_u = 0.0, del_v = 0.0;       // d delay_samples / d(u, v)
};

TargetGeom local_target_geometry(double u, double v, const RadarModel& model);

/// <S~(u,v) | Lz | Z> and, optionally, its gradient wrt the local position.
/// S~ is the unit-amplitude signal template (steering and envelope delay
/// phases only; the carrier phase lives in the path-loss alpha).
struct Correlation {
    Cplx c{0.0, 0.0};
    Cplx dc_du{0.0, 0.0};
    Cplx dc_dv{0.0, 0.0};
};

Correlation correlate_template(const RadarModel& model, const Eigen::MatrixXcd& z,
                               const TargetGeom& g, bool with_gradient);

/// Position block of <grad S~ | Lz | grad S~> (real 2x2, local frame).
Mat2 template_gradient_gram(const RadarModel& model, const TargetGeom& g);

/// Noise-free unit-amplitude template S~ as a dense matrix (test/debug aid).
Eigen::MatrixXcd unit_template(const RadarModel& model, const TargetGeom& g);

/// Synthesize the matched-filter output for a target with global state phi.
/// Deterministic in rng_seed. Throws if the range reaches max_range (delay
/// aliasing) or the target sits on the radar.
ObservationBlock synthesize_observation(const RadarModel& model, const KinematicState& phi,
                                        uint64_t rng_seed);

ObservationBlock synthesize_observation(const KinematicState& phi, const RadarPose& pose,
                                        const ArrayGeometry& arr, const ChirpBank& bank,
                                        const WaveformConfig& cfg, double rcs,
                                        uint64_t rng_seed, double gain = 1.0,
                                        double power = 6.99, double max_range = 300.0);

/// Post-matched-filter SNR <S|Lz|S> / (N_R N_T N_s) in dB.
double snr_at(const RadarModel& model, const KinematicState& phi);

double snr_at(const KinematicState& phi, const RadarPose& pose, const ArrayGeometry& arr,
              const ChirpBank& bank, const WaveformConfig& cfg, double rcs,
              double gain = 1.0, double power = 6.99);

/// Debug dump: 16-byte header (N_R*N_T, N_s as little-endian u64) followed by
/// the row-major complex64 samples of z.
void write_observation_block(const std::string& path, const ObservationBlock& obs);
Eigen::MatrixXcd read_observation_block(const std::string& path);

}  // namespace mrblat
