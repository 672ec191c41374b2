// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/synth.hpp"
#include "voxfuse/geometry.hpp"
#include "voxfuse/lift.hpp"
#include "voxfuse/random.hpp"
#include "voxfuse/render.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace voxfuse {
namespace {

constexpr double kBaseDepth = 1.0;
constexpr double kColorGain = 4.0;
constexpr double kAngularRate = 1.5 * std::numbers::pi;
constexpr double kClutterFraction = 0.2;

double frame_time(int t, int n_frames) { return static_cast<double>(t) / (n_frames - 1); }

double logit(double p) { return std::log(p / (1.0 - p)); }

void check_config(const SynthConfig &c) {
    if (c.n_frames < 2) {
        throw Error(ErrorCode::BadConfig, "synthetic scene needs at least two frames");
    }
    if (c.n_gaussians < 1) {
        throw Error(ErrorCode::BadConfig, "synthetic scene needs at least one primitive");
    }
    if (!(c.rho > 0.0) || !std::isfinite(c.rho)) {
        throw Error(ErrorCode::BadConfig, "rho must be positive");
    }
    if (!(c.deform_amplitude >= 0.0) || !std::isfinite(c.deform_amplitude)) {
        throw Error(ErrorCode::BadConfig, "deform_amplitude must be non-negative");
    }
    if (!(c.dynamic_fraction >= 0.0 && c.dynamic_fraction <= 1.0)) {
        throw Error(ErrorCode::BadConfig, "dynamic_fraction must lie in [0, 1]");
    }
}

} // namespace

std::vector<double> SyntheticScene::timestamps() const {
    std::vector<double> out;
    out.reserve(frames.size());
    for (const auto &f : frames) {
        out.push_back(f.timestamp);
    }
    return out;
}

std::size_t SyntheticScene::nearest_frame(double tau) const {
    int best = 0;
    for (int t = 1; t < config.n_frames; ++t) {
        if (std::abs(frame_time(t, config.n_frames) - tau) < std::abs(frame_time(best, config.n_frames) - tau)) {
            best = t;
        }
    }
    return static_cast<std::size_t>(best);
}

double SyntheticScene::generative_time(double tau) const {
    if (config.profile == DeformProfile::Piecewise) {
        return frame_time(static_cast<int>(nearest_frame(tau)), config.n_frames);
    }
    return tau;
}

SyntheticScene::RawState SyntheticScene::raw_state(const Primitive &p, double time) const {
    RawState s{static_cast<float>(p.depth), p.raw};
    if (!p.dynamic) {
        return s;
    }
    const double amplitude = config.deform_amplitude;
    s.depth = static_cast<float>(p.depth + amplitude * config.rho * std::sin(kAngularRate * time + p.depth_phase));
    for (int c = 0; c < 3; ++c) {
        const double offset = 2.0 * std::numbers::pi * c / 3.0;
        s.raw[c] = static_cast<float>(p.raw[c] + kColorGain * amplitude *
                                                     std::sin(kAngularRate * time + p.color_phase + offset));
    }
    return s;
}

std::vector<GaussianPrimitive> SyntheticScene::true_state(double tau) const {
    const double time = generative_time(tau);
    const int nearest = static_cast<int>(nearest_frame(tau));
    std::vector<GaussianPrimitive> out;
    out.reserve(primitives.size());
    for (const auto &p : primitives) {
        const RawState s = raw_state(p, time);
        GaussianPrimitive g = decode_pixel(camera, p.u, p.v, s.depth, s.raw, tau);
        g.source_frame = nearest;
        out.push_back(std::move(g));
    }
    return out;
}

int SyntheticScene::owner_of(const GaussianPrimitive &g) const {
    if (g.source_pixel < 0 || static_cast<std::size_t>(g.source_pixel) >= pixel_owner.size()) {
        return -1;
    }
    return pixel_owner[static_cast<std::size_t>(g.source_pixel)];
}

std::size_t SyntheticScene::dynamic_count() const {
    return static_cast<std::size_t>(
        std::count_if(primitives.begin(), primitives.end(), [](const Primitive &p) { return p.dynamic; }));
}

SyntheticScene synth_scene(std::uint64_t seed, const SynthConfig &config) {
    check_config(config);
    SyntheticScene scene;
    scene.config = config;
    scene.seed = seed;
    Rng rng(seed);

    const int n = config.n_gaussians;
    const int width = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    const int ground_rows = (n + width - 1) / width;
    const int sky_rows = std::max(2, ground_rows / 4);
    const int height = sky_rows + ground_rows;
    const double rho = config.rho;
    // Neighbouring pixels land two voxels apart at the base depth.
    const double focal = kBaseDepth / (2.0 * rho);
    scene.camera.K = CameraModel::intrinsics(focal, focal, 0.5 * (width - 1), 0.5 * (height - 1));
    scene.camera.width = width;
    scene.camera.height = height;

    scene.sky.coeffs.row(0) = Eigen::RowVector3d(0.55, 0.70, 0.90) / kShY00;
    scene.sky.coeffs.row(1) = Eigen::RowVector3d(-0.10, -0.08, -0.04);
    scene.sky.coeffs.row(2) = Eigen::RowVector3d(0.02, 0.02, 0.05);

    const long base_cell = std::lround(kBaseDepth / rho);
    const Eigen::Vector3d ground_normal = Eigen::Vector3d(0.0, -0.1, -1.0).normalized();
    const Eigen::Quaterniond tilt = Eigen::Quaterniond::FromTwoVectors(Eigen::Vector3d::UnitZ(), ground_normal);
    scene.pixel_owner.assign(static_cast<std::size_t>(width) * height, -1);
    scene.primitives.reserve(static_cast<std::size_t>(n));
    for (int id = 0; id < n; ++id) {
        const int row = id / width;
        SyntheticScene::Primitive p;
        p.u = id % width;
        p.v = sky_rows + row;
        const long slope = ground_rows > 1 ? std::lround(2.0 * (ground_rows - 1 - row) / (ground_rows - 1)) : 0;
        const bool clutter = rng.uniform() < kClutterFraction;
        const long lift = clutter ? 3 : 0;
        p.depth = static_cast<double>(base_cell + slope - lift + static_cast<long>(rng.index(2))) * rho;
        p.depth_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        p.color_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

        const bool checker = ((p.u / 3) + (row / 3)) % 2 == 0;
        Eigen::Vector3d base = checker ? Eigen::Vector3d(0.55, 0.45, 0.30) : Eigen::Vector3d(0.30, 0.50, 0.25);
        if (clutter) {
            base = Eigen::Vector3d(0.45, 0.40, 0.45);
        }
        for (int c = 0; c < 3; ++c) {
            const double value = std::clamp(base[c] + rng.uniform(-0.12, 0.12), 0.05, 0.95);
            p.raw[c] = static_cast<float>(logit(value));
        }
        p.raw[3] = static_cast<float>(logit(rng.uniform(0.85, 0.97)));
        Eigen::Quaterniond q;
        if (clutter) {
            for (int c = 0; c < 3; ++c) {
                p.raw[4 + c] = static_cast<float>(std::log(rho * rng.uniform(0.5, 0.9)));
            }
            q = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
        } else {
            p.raw[4] = static_cast<float>(std::log(rho * rng.uniform(0.8, 1.0)));
            p.raw[5] = static_cast<float>(std::log(rho * rng.uniform(0.8, 1.0)));
            p.raw[6] = static_cast<float>(std::log(0.1 * rho));
            q = tilt * Eigen::Quaterniond(
                           Eigen::AngleAxisd(rng.uniform(0.0, std::numbers::pi), Eigen::Vector3d::UnitZ()));
        }
        p.raw[7] = static_cast<float>(q.w());
        p.raw[8] = static_cast<float>(q.x());
        p.raw[9] = static_cast<float>(q.y());
        p.raw[10] = static_cast<float>(q.z());

        scene.pixel_owner[static_cast<std::size_t>(p.v) * width + p.u] = id;
        scene.primitives.push_back(p);
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.index(i)]);
    }
    const auto dynamic = static_cast<std::size_t>(std::lround(config.dynamic_fraction * n));
    for (std::size_t i = 0; i < dynamic; ++i) {
        scene.primitives[static_cast<std::size_t>(order[i])].dynamic = true;
    }

    const Image sky_rgb = sky_eval(scene.sky, scene.camera);
    Image sky_mask(height, width, 1);
    for (int v = 0; v < sky_rows; ++v) {
        for (int u = 0; u < width; ++u) {
            sky_mask.at(v, u) = 1.0f;
        }
    }
    for (int t = 0; t < config.n_frames; ++t) {
        const double tau = frame_time(t, config.n_frames);
        FrameObservation frame;
        frame.timestamp = tau;
        frame.camera = scene.camera;
        frame.depth = Image(height, width, 1);
        frame.gaussian_map = Image(height, width, kGaussianMapChannels);
        frame.sky_mask = sky_mask;
        frame.dyn_mask = Image(height, width, 1);
        for (const auto &p : scene.primitives) {
            const auto s = scene.raw_state(p, tau);
            const std::size_t pixel = static_cast<std::size_t>(p.v) * width + p.u;
            frame.depth.pixel(pixel)[0] = s.depth;
            std::copy(s.raw.begin(), s.raw.end(), frame.gaussian_map->pixel(pixel).begin());
        }
        const auto truth = scene.true_state(tau);
        frame.image = composite(rasterize(truth, scene.camera), sky_rgb);
        frame.normal_gt = depth_to_normals(frame.depth, scene.camera, frame.sky_mask).normals;
        scene.frames.push_back(std::move(frame));
    }
    return scene;
}

} // namespace voxfuse
