#include "mrblat/node.hpp"

#include <cmath>

namespace mrblat {

namespace {

constexpr double kVelocitySentinelVar = 1e12;  // unobserved velocity at pulse 0

GammaSurrogate gamma_from_mean(const Vec4& lambda_mean) {
    GammaSurrogate g;
    g.shape = lambda_mean;
    g.rate = Vec4::Ones();
    return g;
}

}  // namespace

GaussianMessage payload_to_global_message(const DataMessagePayload& payload,
                                          const RadarPose& sender_pose) {
    GaussianMessage msg;
    msg.mean = payload.mean_global;
    msg.low_confidence = payload.low_confidence;
    const Mat2 rot = rotation(sender_pose.boresight_angle);
    const Mat2 pos_prec = rot *
                          Vec2(payload.precision_diag_local[0], payload.precision_diag_local[1])
                              .asDiagonal() *
                          rot.transpose();
    msg.precision = Mat4::Zero();
    msg.precision.topLeftCorner<2, 2>() = pos_prec;
    msg.precision(2, 2) = payload.precision_diag_local[2];
    msg.precision(3, 3) = payload.precision_diag_local[3];
    return msg;
}

RadarNode::RadarNode(int id, RadarModel model, KinematicMatrices kin, NodeConfig cfg)
    : id_(id), model_(std::move(model)), kin_(kin), cfg_(std::move(cfg)) {
    if (cfg_.all_poses.empty()) throw ConfigError("RadarNode: empty pose list");
    gamma_ = gamma_from_mean(cfg_.lambda_init);
}

DataMessagePayload RadarNode::process_pulse(const ObservationBlock& obs, int pulse_index) {
    KinematicState init_local;
    if (pulse_index == 0) {
        // Same input the KF gets: conventional range/DoA point estimate.
        const PointMeasurement meas = conventional_estimate(obs, model_);
        init_local.x = meas.range * std::sin(meas.azimuth);
        init_local.y = meas.range * std::cos(meas.azimuth);
    } else {
        if (posterior_.size() < static_cast<size_t>(pulse_index)) {
            throw NumericError("process_pulse: posterior missing for pulse " +
                               std::to_string(pulse_index - 1));
        }
        const Vec4 pred = kin_.T * posterior_[static_cast<size_t>(pulse_index - 1)].mean;
        const LocalPoint lp = global_to_local(GlobalPoint{Vec2{pred[0], pred[1]}}, model_.pose);
        const Vec2 v_local =
            rotation(model_.pose.boresight_angle).transpose() * Vec2{pred[2], pred[3]};
        init_local.x = lp.v.x();
        init_local.y = lp.v.y();
        init_local.vx = v_local.x();
        init_local.vy = v_local.y();
    }

    const DataMessageResult fit = minimize_data_message(obs, init_local, model_, cfg_.minimize);

    DataMessagePayload payload;
    payload.sender = static_cast<uint32_t>(id_);
    payload.pulse = static_cast<uint32_t>(pulse_index);
    const GlobalPoint gp =
        local_to_global(LocalPoint{Vec2{fit.message.mean[0], fit.message.mean[1]}}, model_.pose);
    const Vec2 v_global =
        rotation(model_.pose.boresight_angle) * Vec2{fit.message.mean[2], fit.message.mean[3]};
    payload.mean_global << gp.v.x(), gp.v.y(), v_global.x(), v_global.y();
    payload.precision_diag_local << fit.message.precision(0, 0), fit.message.precision(1, 1),
        0.0, 0.0;
    payload.low_confidence = fit.low_confidence;
    return payload;
}

void RadarNode::receive(const DataMessagePayload& payload) {
    const size_t pulse = payload.pulse;
    if (memory_.size() <= pulse) memory_.resize(pulse + 1);
    auto& slot = memory_[pulse];
    if (slot.empty()) slot.resize(cfg_.all_poses.size());
    if (payload.sender >= cfg_.all_poses.size()) {
        throw ConfigError("RadarNode::receive: unknown sender");
    }
    slot[payload.sender] =
        payload_to_global_message(payload, cfg_.all_poses[payload.sender]);
}

PosteriorSlice RadarNode::combine_slice(int n, int last_pulse) const {
    std::vector<GaussianMessage> msgs;
    msgs.reserve(cfg_.all_poses.size() + 2);
    for (const auto& m : memory_[static_cast<size_t>(n)]) msgs.push_back(m);
    if (n >= 1) {
        msgs.push_back(prediction_message(posterior_[static_cast<size_t>(n - 1)], gamma_, kin_));
    }
    if (n <= last_pulse - 1 && static_cast<size_t>(n + 1) < posterior_.size()) {
        msgs.push_back(smoothing_message(posterior_[static_cast<size_t>(n + 1)], gamma_, kin_));
    }

    if (n == 0 && last_pulse == 0) {
        // No temporal messages yet: velocity is unobserved, so fuse the
        // position marginal only and park velocity on a wide sentinel.
        Mat2 lam = Mat2::Zero();
        Vec2 eta = Vec2::Zero();
        for (const auto& m : msgs) {
            lam += m.precision.topLeftCorner<2, 2>();
            eta += m.precision.topLeftCorner<2, 2>() * m.mean.head<2>();
        }
        const Eigen::LDLT<Mat2> ldlt(lam);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            throw NumericError("local_message_passing: singular position precision at slice 0");
        }
        PosteriorSlice slice;
        slice.mean.head<2>() = ldlt.solve(eta);
        slice.mean.tail<2>().setZero();
        slice.cov = Mat4::Zero();
        slice.cov.topLeftCorner<2, 2>() = ldlt.solve(Mat2::Identity());
        slice.cov(2, 2) = kVelocitySentinelVar;
        slice.cov(3, 3) = kVelocitySentinelVar;
        return slice;
    }

    try {
        return combine_gaussians(msgs);
    } catch (const NumericError& err) {
        throw NumericError("local_message_passing: slice " + std::to_string(n) + ": " +
                           err.what());
    }
}

void RadarNode::local_message_passing(int pulse_index, int n_ite) {
    if (memory_.size() <= static_cast<size_t>(pulse_index)) {
        throw NumericError("local_message_passing: memory incomplete through pulse " +
                           std::to_string(pulse_index));
    }
    for (size_t p = 0; p <= static_cast<size_t>(pulse_index); ++p) {
        if (memory_[p].size() != cfg_.all_poses.size()) {
            throw NumericError("local_message_passing: missing broadcasts at pulse " +
                               std::to_string(p));
        }
    }

    // Seed the new slice from data + prediction before sweeping, so the
    // backward message into slice N-1 sees an initialized neighbor.
    if (posterior_.size() == static_cast<size_t>(pulse_index)) {
        posterior_.push_back(combine_slice(pulse_index, pulse_index));
    } else if (posterior_.size() < static_cast<size_t>(pulse_index)) {
        throw NumericError("local_message_passing: pulses processed out of order");
    }

    const int first =
        cfg_.smoothing_window > 0 ? std::max(0, pulse_index - cfg_.smoothing_window) : 0;

    for (int ite = 0; ite < n_ite; ++ite) {
        for (int n = first; n <= pulse_index; ++n) {
            posterior_[static_cast<size_t>(n)] = combine_slice(n, pulse_index);
        }
        if (pulse_index > 1) {
            gamma_ = update_lambda_a(posterior_, kin_);
        } else {
            gamma_ = gamma_from_mean(cfg_.lambda_init);
        }
    }
}

void BroadcastBus::broadcast(const DataMessagePayload& payload) {
    if (nodes_.empty()) throw ConfigError("BroadcastBus: no nodes attached");
    for (RadarNode* node : nodes_) node->receive(payload);
    log_.push_back({static_cast<int>(payload.pulse), static_cast<int>(payload.sender),
                    DataMessagePayload::kWireBytes});
    bytes_total_ += DataMessagePayload::kWireBytes;
}

ObservationSource make_vector_source(std::vector<std::vector<ObservationBlock>> streams) {
    for (size_t k = 1; k < streams.size(); ++k) {
        if (streams[k].size() != streams[0].size()) {
            throw ConfigError("make_vector_source: stream length mismatch across radars");
        }
    }
    auto shared = std::make_shared<std::vector<std::vector<ObservationBlock>>>(std::move(streams));
    return [shared](int radar, int pulse) -> ObservationBlock {
        return shared->at(static_cast<size_t>(radar)).at(static_cast<size_t>(pulse));
    };
}

std::vector<std::vector<PosteriorSlice>> run_tracker(std::vector<RadarNode>& nodes,
                                                     BroadcastBus& bus,
                                                     const ObservationSource& source,
                                                     int n_pulses) {
    if (nodes.empty()) throw ConfigError("run_tracker: no nodes");
    for (int pulse = 0; pulse < n_pulses; ++pulse) {
        std::vector<DataMessagePayload> payloads;
        payloads.reserve(nodes.size());
        for (auto& node : nodes) {
            payloads.push_back(node.process_pulse(source(node.id(), pulse), pulse));
        }
        for (const auto& payload : payloads) bus.broadcast(payload);
        for (auto& node : nodes) node.local_message_passing(pulse);
    }

    std::vector<std::vector<PosteriorSlice>> tracks;
    tracks.reserve(nodes.size());
    for (const auto& node : nodes) tracks.push_back(node.posterior());
    return tracks;
}

}  // namespace mrblat
