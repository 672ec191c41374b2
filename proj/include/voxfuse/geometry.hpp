// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "voxfuse/core.hpp"

#include <span>

namespace voxfuse {

inline constexpr double kDefaultSoftminEta = 10.0;
inline constexpr double kDynamicValidityThreshold = 0.5;

struct NormalMap {
    Image normals; // H x W x 3 camera-frame unit normals, zero where invalid
    Image valid;   // H x W x 1, 1 = valid
};

/// Normals from a depth map. Each pixel averages the four cross products of its
/// orthogonal forward/backward difference pairs and is oriented so that n . p < 0
/// (facing the camera). Border pixels, pixels with an invalid 4-neighbour, sky
/// pixels and pixels with dynamic score above 0.5 are invalid. Masks may be empty.
NormalMap depth_to_normals(const Image &depth, const CameraModel &camera, const Image &sky_mask = {},
                           const Image &dyn_mask = {});

/// Soft-argmin normal: R_q * softmax(-eta * s) / |softmax(-eta * s)|.
Eigen::Vector3d gaussian_normal(const Eigen::Vector3d &scale, const Eigen::Vector4d &rotation,
                                double eta = kDefaultSoftminEta);

/// weight * mean over valid pixels of 1 - |<n, n_gt>|. Throws EmptyValidSet.
double normal_pred_loss(const Image &normals, const Image &normals_gt, const Image &valid, double weight = 1.0);

/// weight * mean over valid pixels of 1 - |<R_t * gaussian_normal, n_gt>|, where
/// each valid pixel is matched to the primitive whose source_pixel it is.
double normal_gs_loss(std::span<const GaussianPrimitive> primitives, const Eigen::Matrix3d &camera_rotation,
                      const Image &normals_gt, const Image &valid, double eta = kDefaultSoftminEta,
                      double weight = 1.0);

} // namespace voxfuse
