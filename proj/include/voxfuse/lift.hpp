// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "voxfuse/core.hpp"

#include <span>
#include <utility>
#include <vector>

namespace voxfuse {

/// R^T (K^-1 * depth * [u, v, 1]^T - T). Throws InvalidDepth unless depth is
/// positive and finite.
Eigen::Vector3d unproject_pixel(const CameraModel &camera, double u, double v, double depth);

/// Fixed sinusoidal encoding of (color, opacity, log-scale): [sin(pi x), cos(pi x)]
/// per value, zero-padded or truncated to `dim`.
Eigen::VectorXd attribute_feature(const Eigen::Vector3d &color, double opacity,
                                  const Eigen::Vector3d &scale, int dim);

inline constexpr double kMinDecodedScale = 1e-6;
inline constexpr double kMaxDecodedScale = 1e2;

/// Activates the 11 raw channels of one pixel: color(3) and opacity(1) through a
/// sigmoid, scale(3) through exp clamped to [1e-6, 1e2], rotation(4) normalized.
/// A zero rotation decodes as normalize(1, 1, 1, 1).
GaussianPrimitive decode_pixel(const CameraModel &camera, int u, int v, double depth,
                               std::span<const float> raw, double timestamp,
                               int feature_dim = kDefaultFeatureDim);

/// One primitive per valid-depth pixel, in row-major pixel order.
std::vector<GaussianPrimitive> decode_gaussian_map(const FrameObservation &frame, int frame_index,
                                                   int feature_dim = kDefaultFeatureDim);

/// Concatenates decode_gaussian_map over frames in frame order.
CanonicalSpace build_canonical_space(std::span<const FrameObservation> frames,
                                     int feature_dim = kDefaultFeatureDim);

/// Scales each primitive's opacity by (1 - dynamic score) at its source pixel.
CanonicalSpace suppress_dynamic(CanonicalSpace space, std::span<const FrameObservation> frames);

struct DynamicTrack {
    /// (timestamp, centre), strictly increasing in timestamp.
    std::vector<std::pair<double, Eigen::Vector3d>> keyframes;
    /// Primitive indices that move rigidly with the track.
    std::vector<std::size_t> attached;
};

/// Piecewise-linear in tau, clamped to the first/last keyframe outside their range.
Eigen::Vector3d interpolate_dynamic_centers(const DynamicTrack &track, double tau_star);

/// Moves the attached primitives of each track to tau_star. Only the primitives
/// observed in the frame nearest tau_star are emitted; their non-positional
/// attributes are carried over unchanged.
std::vector<GaussianPrimitive> place_dynamic_gaussians(const CanonicalSpace &space,
                                                       std::span<const DynamicTrack> tracks,
                                                       double tau_star);

} // namespace voxfuse
