#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mrblat/baseline.hpp"
#include "mrblat/inference.hpp"
#include "mrblat/waveform.hpp"

namespace mrblat {

/// Wire format of one broadcast: global-frame mean plus the diagonal of the
/// data-message precision in the sender's local frame (velocity entries are
/// zero). Receivers rotate the precision into the global frame themselves
/// from the sender's static pose. 8 doubles + sender + pulse + flag = 73 B.
struct DataMessagePayload {
    uint32_t sender = 0;
    uint32_t pulse = 0;
    Vec4 mean_global = Vec4::Zero();
    Vec4 precision_diag_local = Vec4::Zero();
    bool low_confidence = false;

    static constexpr int kWireBytes = 4 + 4 + 8 * 8 + 1;
};

/// Global-frame Gaussian reconstructed from a payload and the sender's pose.
GaussianMessage payload_to_global_message(const DataMessagePayload& payload,
                                          const RadarPose& sender_pose);

struct NodeConfig {
    std::vector<RadarPose> all_poses;   // static, shared by every node
    int n_ite = 5;
    int smoothing_window = 0;           // 0 = full re-smoothing over 0..N
    Vec4 lambda_init = Vec4::Ones();
    MinimizeOptions minimize;
};

/// One radar's tracker state: the memory of everyone's broadcasts, its own
/// posterior buffer, and the gamma surrogate over the process-noise precision.
class RadarNode {
public:
    RadarNode(int id, RadarModel model, KinematicMatrices kin, NodeConfig cfg);

    /// Alg. 1 line 2: fit the data message for this pulse in local
    /// coordinates and return the global-frame broadcast payload.
    DataMessagePayload process_pulse(const ObservationBlock& obs, int pulse_index);

    /// Bus delivery; every broadcast reaches every node exactly once.
    void receive(const DataMessagePayload& payload);

    /// Alg. 1 lines 4-15: n_ite Gauss-Seidel sweeps over slices 0..N plus the
    /// gamma update (held at lambda_init while N <= 1).
    void local_message_passing(int pulse_index, int n_ite);
    void local_message_passing(int pulse_index) { local_message_passing(pulse_index, cfg_.n_ite); }

    int id() const { return id_; }
    int n_radars() const { return static_cast<int>(cfg_.all_poses.size()); }
    const RadarModel& model() const { return model_; }
    const std::vector<PosteriorSlice>& posterior() const { return posterior_; }
    const GammaSurrogate& gamma() const { return gamma_; }
    const std::vector<std::vector<GaussianMessage>>& memory() const { return memory_; }

private:
    PosteriorSlice combine_slice(int n, int last_pulse) const;

    int id_;
    RadarModel model_;
    KinematicMatrices kin_;
    NodeConfig cfg_;
    std::vector<std::vector<GaussianMessage>> memory_;  // [pulse][sender]
    std::vector<PosteriorSlice> posterior_;
    GammaSurrogate gamma_;
};

struct BusLogEntry {
    int pulse = 0;
    int sender = 0;
    int bytes = 0;
};

/// Lossless synchronous broadcast transport with a byte counter; nodes are
/// synchronized once per pulse.
class BroadcastBus {
public:
    void attach(RadarNode* node) { nodes_.push_back(node); }
    void broadcast(const DataMessagePayload& payload);

    uint64_t bytes_total() const { return bytes_total_; }
    const std::vector<BusLogEntry>& log() const { return log_; }

private:
    std::vector<RadarNode*> nodes_;
    std::vector<BusLogEntry> log_;
    uint64_t bytes_total_ = 0;
};

using ObservationSource = std::function<ObservationBlock(int radar, int pulse)>;

/// Wraps pre-synthesized streams; throws on length mismatch across radars.
ObservationSource make_vector_source(std::vector<std::vector<ObservationBlock>> streams);

/// Full tracker: per pulse every node fits + broadcasts, then re-smooths.
/// Returns each node's final posterior (identical across nodes by
/// construction).
std::vector<std::vector<PosteriorSlice>> run_tracker(std::vector<RadarNode>& nodes,
                                                     BroadcastBus& bus,
                                                     const ObservationSource& source,
                                                     int n_pulses);

}  // namespace mrblat
