// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/geometry.hpp"
#include "voxfuse/numeric.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <vector>

namespace voxfuse {
namespace {

bool valid_depth(float d) { return d > 0.0f && std::isfinite(d); }

void require_shapes(const Image &a, const Image &b, const Image &valid) {
    if (!a.same_shape(b) || a.channels() != 3 || !valid.same_extent(a) || valid.channels() != 1) {
        throw Error(ErrorCode::ShapeMismatch, "normal maps and validity mask must share one extent");
    }
}

Eigen::Vector3d read3(const Image &img, std::size_t index) {
    const auto p = img.pixel(index);
    return {p[0], p[1], p[2]};
}

} // namespace

NormalMap depth_to_normals(const Image &depth, const CameraModel &camera, const Image &sky_mask,
                           const Image &dyn_mask) {
    const int h = depth.height();
    const int w = depth.width();
    if (depth.channels() != 1 || h != camera.height || w != camera.width) {
        throw Error(ErrorCode::ShapeMismatch, "depth map does not match the camera extent");
    }
    if ((!sky_mask.empty() && !sky_mask.same_extent(depth)) || (!dyn_mask.empty() && !dyn_mask.same_extent(depth))) {
        throw Error(ErrorCode::ShapeMismatch, "masks do not match the depth extent");
    }
    NormalMap out{Image(h, w, 3), Image(h, w, 1)};
    auto point = [&](int v, int u) {
        const double d = depth.at(v, u);
        return Eigen::Vector3d((u - camera.cx()) / camera.fx() * d, (v - camera.cy()) / camera.fy() * d, d);
    };
    for (int v = 1; v + 1 < h; ++v) {
        for (int u = 1; u + 1 < w; ++u) {
            if (!valid_depth(depth.at(v, u)) || !valid_depth(depth.at(v, u - 1)) ||
                !valid_depth(depth.at(v, u + 1)) || !valid_depth(depth.at(v - 1, u)) ||
                !valid_depth(depth.at(v + 1, u))) {
                continue;
            }
            if (!sky_mask.empty() && sky_mask.at(v, u) > 0.5f) {
                continue;
            }
            if (!dyn_mask.empty() && dyn_mask.at(v, u) > kDynamicValidityThreshold) {
                continue;
            }
            const Eigen::Vector3d p = point(v, u);
            const Eigen::Vector3d right = point(v, u + 1) - p;
            const Eigen::Vector3d left = point(v, u - 1) - p;
            const Eigen::Vector3d down = point(v + 1, u) - p;
            const Eigen::Vector3d up = point(v - 1, u) - p;
            Eigen::Vector3d n = right.cross(down) + down.cross(left) + left.cross(up) + up.cross(right);
            n *= 0.25;
            const double norm = n.norm();
            if (!(norm > 0.0) || !std::isfinite(norm)) {
                continue;
            }
            n /= norm;
            if (n.dot(p) > 0.0) {
                n = -n;
            }
            for (int c = 0; c < 3; ++c) {
                out.normals.at(v, u, c) = static_cast<float>(n[c]);
            }
            out.valid.at(v, u) = 1.0f;
        }
    }
    return out;
}

Eigen::Vector3d gaussian_normal(const Eigen::Vector3d &scale, const Eigen::Vector4d &rotation, double eta) {
    const Eigen::Vector3d logits = -eta * scale;
    const Eigen::Vector3d e = (logits.array() - logits.maxCoeff()).exp().matrix();
    const Eigen::Vector3d soft = e / e.sum();
    return rotation_matrix(rotation) * (soft / soft.norm());
}

double normal_pred_loss(const Image &normals, const Image &normals_gt, const Image &valid, double weight) {
    require_shapes(normals, normals_gt, valid);
    std::vector<double> terms;
    for (std::size_t i = 0; i < valid.pixel_count(); ++i) {
        if (valid.pixel(i)[0] <= 0.5f) {
            continue;
        }
        terms.push_back(1.0 - std::abs(read3(normals, i).dot(read3(normals_gt, i))));
    }
    if (terms.empty()) {
        throw Error(ErrorCode::EmptyValidSet, "no valid pixels");
    }
    return weight * pairwise_mean(terms);
}

double normal_gs_loss(std::span<const GaussianPrimitive> primitives, const Eigen::Matrix3d &camera_rotation,
                      const Image &normals_gt, const Image &valid, double eta, double weight) {
    if (normals_gt.channels() != 3 || !valid.same_extent(normals_gt) || valid.channels() != 1) {
        throw Error(ErrorCode::ShapeMismatch, "normal map and validity mask must share one extent");
    }
    std::vector<std::ptrdiff_t> owner(valid.pixel_count(), -1);
    for (std::size_t i = 0; i < primitives.size(); ++i) {
        const auto pixel = primitives[i].source_pixel;
        if (pixel >= 0 && static_cast<std::size_t>(pixel) < owner.size()) {
            owner[static_cast<std::size_t>(pixel)] = static_cast<std::ptrdiff_t>(i);
        }
    }
    std::vector<double> terms;
    for (std::size_t p = 0; p < valid.pixel_count(); ++p) {
        if (valid.pixel(p)[0] <= 0.5f) {
            continue;
        }
        if (owner[p] < 0) {
            throw Error(ErrorCode::InvalidArgument, "valid pixel has no primitive of this frame");
        }
        const auto &g = primitives[static_cast<std::size_t>(owner[p])];
        const Eigen::Vector3d n = camera_rotation * gaussian_normal(g.scale, g.rotation, eta);
        terms.push_back(1.0 - std::abs(n.dot(read3(normals_gt, p))));
    }
    if (terms.empty()) {
        throw Error(ErrorCode::EmptyValidSet, "no valid pixels");
    }
    return weight * pairwise_mean(terms);
}

} // namespace voxfuse
