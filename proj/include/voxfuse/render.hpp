// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "voxfuse/core.hpp"

#include <optional>
#include <span>

namespace voxfuse {

inline constexpr double kNearPlane = 0.01;
inline constexpr double kCovarianceDilation = 0.3;
inline constexpr double kMaxSplatAlpha = 0.99;
inline constexpr double kMinSplatAlpha = 1.0 / 255.0;
inline constexpr double kTransmittanceCutoff = 1e-4;
inline constexpr double kMaxCovarianceCondition = 1e8;
inline constexpr int kTileSize = 16;

struct ProjectedGaussian {
    Eigen::Vector2d mean;   // pixel coordinates
    Eigen::Matrix2d cov;    // screen-space covariance including the dilation
    double depth = 0.0;     // camera-space z
};

/// EWA projection: cov2d = J R Sigma R^T J^T + 0.3 I with Sigma = R_q diag(s^2) R_q^T.
/// Returns nullopt (culled) when the camera-space depth is <= 0.01.
std::optional<ProjectedGaussian> project_gaussian(const GaussianPrimitive &g, const CameraModel &camera);

struct RenderOutput {
    Image rgb;   // H x W x 3, premultiplied by accumulated alpha
    Image alpha; // H x W x 1
    Image depth; // H x W x 1, alpha-normalized expected depth (0 where alpha == 0)
};

/// Tile-based front-to-back splatting. Primitives are sorted by view depth with
/// ties broken by index; degenerate screen covariances are skipped.
RenderOutput rasterize(std::span<const GaussianPrimitive> gaussians, const CameraModel &camera);

/// World-space ray direction of pixel (u, v).
Eigen::Vector3d pixel_direction(const CameraModel &camera, double u, double v);

/// Per-pixel sky colour, clamped to [0, 1].
Image sky_eval(const SkyModel &sky, const CameraModel &camera);

/// A * (rgb / A) + (1 - A) * sky; pixels with A <= 1e-6 take the sky colour.
Image composite(const RenderOutput &render, const Image &sky_rgb);

/// Screen-space splat data after culling; exposed for reference renderers.
struct Splat {
    Eigen::Vector2d mean;
    Eigen::Matrix2d conic; // inverse covariance
    double depth;
    double opacity;
    Eigen::Vector3d color;
    std::size_t index;
};

/// Projects, drops culled/degenerate/transparent primitives and sorts by
/// (depth, index).
std::vector<Splat> prepare_splats(std::span<const GaussianPrimitive> gaussians, const CameraModel &camera);

} // namespace voxfuse
