// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/render.hpp"
#include "voxfuse/parallel.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <tuple>
#include <vector>

namespace voxfuse {

std::optional<ProjectedGaussian> project_gaussian(const GaussianPrimitive &g, const CameraModel &camera) {
    const Eigen::Vector3d p = camera.to_camera(g.mu);
    if (!(p.z() > kNearPlane)) {
        return std::nullopt;
    }
    const Eigen::Matrix3d rq = rotation_matrix(g.rotation);
    const Eigen::Matrix3d sigma = rq * g.scale.array().square().matrix().asDiagonal() * rq.transpose();
    const double z = p.z();
    Eigen::Matrix<double, 2, 3> jacobian;
    jacobian << camera.fx() / z, 0.0, -camera.fx() * p.x() / (z * z),
                0.0, camera.fy() / z, -camera.fy() * p.y() / (z * z);
    const Eigen::Matrix<double, 2, 3> jw = jacobian * camera.R;
    ProjectedGaussian out;
    out.cov = jw * sigma * jw.transpose() + kCovarianceDilation * Eigen::Matrix2d::Identity();
    out.mean = camera.project(p);
    out.depth = z;
    return out;
}

std::vector<Splat> prepare_splats(std::span<const GaussianPrimitive> gaussians, const CameraModel &camera) {
    std::vector<Splat> splats;
    splats.reserve(gaussians.size());
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const auto &g = gaussians[i];
        if (!(g.opacity >= kMinSplatAlpha)) {
            continue;
        }
        const auto projected = project_gaussian(g, camera);
        if (!projected) {
            continue;
        }
        const Eigen::Matrix2d &cov = projected->cov;
        const double det = cov.determinant();
        const double half_trace = 0.5 * cov.trace();
        const double disc = std::sqrt(std::max(0.0, half_trace * half_trace - det));
        const double lambda_max = half_trace + disc;
        const double lambda_min = half_trace - disc;
        // NonInvertibleCov: skipped, not fatal.
        if (!(det > 0.0) || !(lambda_min > 0.0) || lambda_max / lambda_min > kMaxCovarianceCondition) {
            continue;
        }
        splats.push_back({projected->mean, cov.inverse(), projected->depth, g.opacity, g.color, i});
    }
    std::sort(splats.begin(), splats.end(), [](const Splat &a, const Splat &b) {
        return std::tie(a.depth, a.index) < std::tie(b.depth, b.index);
    });
    return splats;
}

RenderOutput rasterize(std::span<const GaussianPrimitive> gaussians, const CameraModel &camera) {
    const int w = camera.width;
    const int h = camera.height;
    RenderOutput out{Image(h, w, 3), Image(h, w, 1), Image(h, w, 1)};
    const std::vector<Splat> splats = prepare_splats(gaussians, camera);

    const int tiles_x = (w + kTileSize - 1) / kTileSize;
    const int tiles_y = (h + kTileSize - 1) / kTileSize;
    std::vector<std::vector<std::uint32_t>> tile_lists(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (std::size_t s = 0; s < splats.size(); ++s) {
        const Splat &sp = splats[s];
        // Radius beyond which opacity * exp(-r^2 / 2 lambda_max) < 1/255.
        const Eigen::Matrix2d cov = sp.conic.inverse();
        const double half_trace = 0.5 * cov.trace();
        const double lambda_max =
            half_trace + std::sqrt(std::max(0.0, half_trace * half_trace - cov.determinant()));
        const double reach = std::sqrt(2.0 * std::log(sp.opacity / kMinSplatAlpha) * lambda_max) + 1.0;
        const int x0 = std::max(0, static_cast<int>(std::floor(sp.mean.x() - reach)));
        const int x1 = std::min(w - 1, static_cast<int>(std::ceil(sp.mean.x() + reach)));
        const int y0 = std::max(0, static_cast<int>(std::floor(sp.mean.y() - reach)));
        const int y1 = std::min(h - 1, static_cast<int>(std::ceil(sp.mean.y() + reach)));
        if (x0 > x1 || y0 > y1) {
            continue;
        }
        for (int ty = y0 / kTileSize; ty <= y1 / kTileSize; ++ty) {
            for (int tx = x0 / kTileSize; tx <= x1 / kTileSize; ++tx) {
                tile_lists[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<std::uint32_t>(s));
            }
        }
    }

    parallel_for(tile_lists.size(), [&](std::size_t tile) {
        const auto &list = tile_lists[tile];
        const int tx = static_cast<int>(tile % tiles_x);
        const int ty = static_cast<int>(tile / tiles_x);
        for (int v = ty * kTileSize; v < std::min(h, (ty + 1) * kTileSize); ++v) {
            for (int u = tx * kTileSize; u < std::min(w, (tx + 1) * kTileSize); ++u) {
                double transmittance = 1.0;
                double alpha = 0.0;
                double depth = 0.0;
                Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
                for (const auto s : list) {
                    const Splat &sp = splats[s];
                    const Eigen::Vector2d d(u - sp.mean.x(), v - sp.mean.y());
                    const double power = -0.5 * d.dot(sp.conic * d);
                    const double a = std::min(kMaxSplatAlpha, sp.opacity * std::exp(power));
                    if (a < kMinSplatAlpha) {
                        continue;
                    }
                    const double contribution = a * transmittance;
                    rgb += contribution * sp.color;
                    alpha += contribution;
                    depth += contribution * sp.depth;
                    transmittance *= 1.0 - a;
                    if (transmittance < kTransmittanceCutoff) {
                        break;
                    }
                }
                for (int c = 0; c < 3; ++c) {
                    out.rgb.at(v, u, c) = static_cast<float>(rgb[c]);
                }
                out.alpha.at(v, u) = static_cast<float>(alpha);
                out.depth.at(v, u) = alpha > 0.0 ? static_cast<float>(depth / alpha) : 0.0f;
            }
        }
    });
    return out;
}

Eigen::Vector3d pixel_direction(const CameraModel &camera, double u, double v) {
    const Eigen::Vector3d ray((u - camera.cx()) / camera.fx(), (v - camera.cy()) / camera.fy(), 1.0);
    return (camera.R.transpose() * ray).normalized();
}

Image sky_eval(const SkyModel &sky, const CameraModel &camera) {
    Image out(camera.height, camera.width, 3);
    for (int v = 0; v < camera.height; ++v) {
        for (int u = 0; u < camera.width; ++u) {
            const Eigen::Matrix<double, 9, 1> basis = sh_basis(pixel_direction(camera, u, v));
            const Eigen::Vector3d rgb = sky.coeffs.transpose() * basis;
            for (int c = 0; c < 3; ++c) {
                out.at(v, u, c) = static_cast<float>(std::clamp(rgb[c], 0.0, 1.0));
            }
        }
    }
    return out;
}

Image composite(const RenderOutput &render, const Image &sky_rgb) {
    if (!render.rgb.same_shape(sky_rgb) || render.rgb.channels() != 3 || !render.alpha.same_extent(render.rgb)) {
        throw Error(ErrorCode::ShapeMismatch, "render and sky images differ in shape");
    }
    Image out(sky_rgb.height(), sky_rgb.width(), 3);
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        const float a = render.alpha.pixel(i)[0];
        const auto rgb = render.rgb.pixel(i);
        const auto sky = sky_rgb.pixel(i);
        auto dst = out.pixel(i);
        for (int c = 0; c < 3; ++c) {
            dst[c] = a > 1e-6f ? a * (rgb[c] / a) + (1.0f - a) * sky[c] : sky[c];
        }
    }
    return out;
}

} // namespace voxfuse
