// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/lift.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace voxfuse {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

Eigen::Vector3d unproject_pixel(const CameraModel &camera, double u, double v, double depth) {
    if (!(depth > 0.0) || !std::isfinite(depth)) {
        throw Error(ErrorCode::InvalidDepth, "depth must be positive and finite");
    }
    const Eigen::Vector3d ray((u - camera.cx()) / camera.fx(), (v - camera.cy()) / camera.fy(), 1.0);
    return camera.R.transpose() * (depth * ray - camera.T);
}

Eigen::VectorXd attribute_feature(const Eigen::Vector3d &color, double opacity,
                                  const Eigen::Vector3d &scale, int dim) {
    const double values[7] = {color.x(),           color.y(),           color.z(),          opacity,
                              std::log(scale.x()), std::log(scale.y()), std::log(scale.z())};
    Eigen::VectorXd f = Eigen::VectorXd::Zero(dim);
    for (int i = 0; i < 7; ++i) {
        if (2 * i < dim) {
            f[2 * i] = std::sin(std::numbers::pi * values[i]);
        }
        if (2 * i + 1 < dim) {
            f[2 * i + 1] = std::cos(std::numbers::pi * values[i]);
        }
    }
    return f;
}

GaussianPrimitive decode_pixel(const CameraModel &camera, int u, int v, double depth,
                               std::span<const float> raw, double timestamp, int feature_dim) {
    if (raw.size() != kGaussianMapChannels) {
        throw Error(ErrorCode::DimensionMismatch, "gaussian map pixel must carry 11 channels");
    }
    GaussianPrimitive g;
    g.mu = unproject_pixel(camera, u, v, depth);
    for (int c = 0; c < 3; ++c) {
        g.color[c] = sigmoid(raw[c]);
        g.scale[c] = std::clamp(std::exp(double(raw[4 + c])), kMinDecodedScale, kMaxDecodedScale);
    }
    g.opacity = sigmoid(raw[3]);
    const Eigen::Vector4d q(raw[7], raw[8], raw[9], raw[10]);
    const double norm = q.norm();
    g.rotation = norm > 0.0 && std::isfinite(norm) ? Eigen::Vector4d(q / norm) : Eigen::Vector4d::Constant(0.5);
    g.timestamp = timestamp;
    g.feature = attribute_feature(g.color, g.opacity, g.scale, feature_dim);
    g.source_pixel = static_cast<std::int64_t>(v) * camera.width + u;
    return g;
}

std::vector<GaussianPrimitive> decode_gaussian_map(const FrameObservation &frame, int frame_index,
                                                   int feature_dim) {
    if (!frame.gaussian_map) {
        throw Error(ErrorCode::MissingGaussianMap, "frame has no gaussian map");
    }
    const Image &map = *frame.gaussian_map;
    const int w = frame.camera.width;
    const int h = frame.camera.height;
    if (map.height() != h || map.width() != w || map.channels() != kGaussianMapChannels ||
        !frame.depth.same_extent(map)) {
        throw Error(ErrorCode::ShapeMismatch, "gaussian map does not match the frame extent");
    }
    std::vector<GaussianPrimitive> out;
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            const double d = frame.depth.at(v, u);
            if (!(d > 0.0) || !std::isfinite(d)) {
                continue;
            }
            const std::size_t index = static_cast<std::size_t>(v) * w + u;
            GaussianPrimitive g = decode_pixel(frame.camera, u, v, d, map.pixel(index), frame.timestamp, feature_dim);
            g.source_frame = frame_index;
            out.push_back(std::move(g));
        }
    }
    return out;
}

CanonicalSpace build_canonical_space(std::span<const FrameObservation> frames, int feature_dim) {
    if (frames.empty()) {
        throw Error(ErrorCode::EmptyInput, "at least one frame is required");
    }
    CanonicalSpace space;
    for (std::size_t t = 0; t < frames.size(); ++t) {
        auto decoded = decode_gaussian_map(frames[t], static_cast<int>(t), feature_dim);
        space.primitives.insert(space.primitives.end(), std::make_move_iterator(decoded.begin()),
                                std::make_move_iterator(decoded.end()));
        space.frame_timestamps.push_back(frames[t].timestamp);
    }
    return space;
}

CanonicalSpace suppress_dynamic(CanonicalSpace space, std::span<const FrameObservation> frames) {
    for (auto &g : space.primitives) {
        if (g.source_frame < 0 || static_cast<std::size_t>(g.source_frame) >= frames.size() || g.source_pixel < 0) {
            throw Error(ErrorCode::InvalidArgument, "primitive provenance does not index a frame pixel");
        }
        const Image &mask = frames[g.source_frame].dyn_mask;
        if (mask.empty()) {
            continue;
        }
        const double score = std::clamp(double(mask.pixel(g.source_pixel)[0]), 0.0, 1.0);
        g.opacity *= 1.0 - score;
    }
    return space;
}

Eigen::Vector3d interpolate_dynamic_centers(const DynamicTrack &track, double tau_star) {
    const auto &keys = track.keyframes;
    if (keys.empty()) {
        throw Error(ErrorCode::EmptyTrack, "track has no keyframes");
    }
    for (std::size_t i = 1; i < keys.size(); ++i) {
        if (!(keys[i].first > keys[i - 1].first)) {
            throw Error(ErrorCode::InvalidArgument, "track keyframes must be strictly increasing in time");
        }
    }
    if (tau_star <= keys.front().first) {
        return keys.front().second;
    }
    if (tau_star >= keys.back().first) {
        return keys.back().second;
    }
    const auto upper = std::upper_bound(keys.begin(), keys.end(), tau_star,
                                        [](double t, const auto &k) { return t < k.first; });
    const auto lower = upper - 1;
    const double s = (tau_star - lower->first) / (upper->first - lower->first);
    return (1.0 - s) * lower->second + s * upper->second;
}

std::vector<GaussianPrimitive> place_dynamic_gaussians(const CanonicalSpace &space,
                                                       std::span<const DynamicTrack> tracks,
                                                       double tau_star) {
    std::vector<GaussianPrimitive> out;
    for (const auto &track : tracks) {
        const Eigen::Vector3d target = interpolate_dynamic_centers(track, tau_star);
        double best_gap = std::numeric_limits<double>::infinity();
        double best_time = 0.0;
        for (const auto index : track.attached) {
            if (index >= space.primitives.size()) {
                throw Error(ErrorCode::InvalidArgument, "track references a missing primitive");
            }
            const double t = space.primitives[index].timestamp;
            const double gap = std::abs(t - tau_star);
            if (gap < best_gap || (gap == best_gap && t < best_time)) {
                best_gap = gap;
                best_time = t;
            }
        }
        for (const auto index : track.attached) {
            const auto &g = space.primitives[index];
            if (g.timestamp != best_time) {
                continue;
            }
            GaussianPrimitive moved = g;
            moved.mu += target - interpolate_dynamic_centers(track, g.timestamp);
            moved.timestamp = tau_star;
            out.push_back(std::move(moved));
        }
    }
    return out;
}

} // namespace voxfuse
