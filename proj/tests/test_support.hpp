#pragma once

#include <cmath>

#include "mrblat/harness.hpp"
#include "mrblat/rng.hpp"

namespace mrblat::testing {

/// Scaled-down waveform for fast unit tests: 256 samples, 8 MHz band,
/// 4.7 m range bins, ~21 active bins per transmitter.
inline WaveformConfig small_waveform() {
    return make_waveform_config(10e9, 8e6, 8e-6, 32e6);
}

struct SmallRadar {
    WaveformConfig cfg;
    ArrayGeometry arr;
    ChirpBank bank;
    RadarModel model;
};

inline SmallRadar make_small_radar(const RadarPose& pose = {}, double rcs = 0.05,
                                   double max_range = 300.0) {
    SmallRadar r{small_waveform(), {}, {}, {}};
    r.arr = make_virtual_ula(3, 3, r.cfg.wavelength());
    r.bank = make_chirp_bank(r.cfg, 3);
    r.model = make_radar_model(pose, r.arr, r.bank, r.cfg, rcs, 1.0, 6.99, max_range);
    return r;
}

/// rcs that puts snr_at(state) at the requested level (snr is linear in rcs).
inline double rcs_for_snr(const SmallRadar& base, const KinematicState& state,
                          double target_db) {
    const double now_db = snr_at(base.model, state);
    return base.model.rcs * std::pow(10.0, (target_db - now_db) / 10.0);
}

}  // namespace mrblat::testing
