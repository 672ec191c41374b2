// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "voxfuse/core.hpp"
#include "voxfuse/lift.hpp"
#include "voxfuse/random.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <system_error>
#include <unistd.h>

namespace voxfuse::testing {

inline Eigen::Vector4d random_unit_quaternion(Rng &rng) {
    Eigen::Vector4d q;
    do {
        q = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    } while (q.norm() < 1e-3);
    return q.normalized();
}

inline GaussianPrimitive random_primitive(Rng &rng, double extent = 1.0) {
    GaussianPrimitive g;
    g.mu = {rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(-extent, extent)};
    g.color = {rng.uniform(), rng.uniform(), rng.uniform()};
    g.opacity = rng.uniform(0.05, 1.0);
    g.scale = {rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5)};
    g.rotation = random_unit_quaternion(rng);
    g.timestamp = rng.uniform();
    g.feature = attribute_feature(g.color, g.opacity, g.scale, kDefaultFeatureDim);
    g.source_frame = 0;
    return g;
}

inline CameraModel simple_camera(int width, int height, double f) {
    CameraModel cam;
    cam.width = width;
    cam.height = height;
    cam.K = CameraModel::intrinsics(f, f, 0.5 * (width - 1), 0.5 * (height - 1));
    return cam;
}

inline CameraModel random_camera(Rng &rng, int width, int height) {
    CameraModel cam;
    cam.width = width;
    cam.height = height;
    const Eigen::Vector4d q = random_unit_quaternion(rng);
    cam.R = rotation_matrix(q);
    cam.T = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    cam.K = CameraModel::intrinsics(rng.uniform(50, 200), rng.uniform(50, 200), rng.uniform(1, width - 1),
                                    rng.uniform(1, height - 1));
    return cam;
}

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("voxfuse_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir &) = delete;
    TempDir &operator=(const TempDir &) = delete;

    const std::filesystem::path &path() const { return path_; }
    std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace voxfuse::testing
