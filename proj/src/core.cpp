// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/core.hpp"
#include "voxfuse/random.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <string>

namespace voxfuse {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NonPositiveScale: return "NonPositiveScale";
    case ErrorCode::OutOfRangeOpacity: return "OutOfRangeOpacity";
    case ErrorCode::OutOfRangeColor: return "OutOfRangeColor";
    case ErrorCode::OutOfRangeTimestamp: return "OutOfRangeTimestamp";
    case ErrorCode::ZeroQuaternion: return "ZeroQuaternion";
    case ErrorCode::InvalidCamera: return "InvalidCamera";
    case ErrorCode::InvalidDepth: return "InvalidDepth";
    case ErrorCode::MissingGaussianMap: return "MissingGaussianMap";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyTrack: return "EmptyTrack";
    case ErrorCode::NonPositiveRho: return "NonPositiveRho";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyVoxel: return "EmptyVoxel";
    case ErrorCode::DegenerateQuaternionSum: return "DegenerateQuaternionSum";
    case ErrorCode::QueryFrameAbsent: return "QueryFrameAbsent";
    case ErrorCode::EmptyValidSet: return "EmptyValidSet";
    case ErrorCode::NonInvertibleCov: return "NonInvertibleCov";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteComponent: return "NonFiniteComponent";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::NoMatchedVoxels: return "NoMatchedVoxels";
    case ErrorCode::NonFiniteObjective: return "NonFiniteObjective";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnsupportedProperty: return "UnsupportedProperty";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::BadTimestamps: return "BadTimestamps";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

GaussianPrimitive validate_primitive(GaussianPrimitive g) {
    const bool finite = g.mu.allFinite() && g.color.allFinite() && std::isfinite(g.opacity) &&
                        g.scale.allFinite() && g.rotation.allFinite() && std::isfinite(g.timestamp) &&
                        g.feature.allFinite();
    if (!finite) {
        throw Error(ErrorCode::NonFinite, "primitive has a non-finite field");
    }
    if ((g.scale.array() <= 0.0).any()) {
        throw Error(ErrorCode::NonPositiveScale, "scale components must be positive");
    }
    if (g.opacity < 0.0 || g.opacity > 1.0) {
        throw Error(ErrorCode::OutOfRangeOpacity, "opacity must lie in [0, 1]");
    }
    if ((g.color.array() < 0.0).any() || (g.color.array() > 1.0).any()) {
        throw Error(ErrorCode::OutOfRangeColor, "color must lie in [0, 1]");
    }
    if (g.timestamp < 0.0 || g.timestamp > 1.0) {
        throw Error(ErrorCode::OutOfRangeTimestamp, "timestamp must lie in [0, 1]");
    }
    const double norm2 = g.rotation.squaredNorm();
    if (norm2 == 0.0) {
        throw Error(ErrorCode::ZeroQuaternion, "rotation quaternion is zero");
    }
    if (std::abs(norm2 - 1.0) > 1e-14) {
        g.rotation /= std::sqrt(norm2);
    }
    return g;
}

Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d &q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Eigen::Vector4d quaternion_from_matrix(const Eigen::Matrix3d &rotation) {
    const Eigen::Quaterniond q(rotation);
    return {q.w(), q.x(), q.y(), q.z()};
}

Eigen::Matrix3d CameraModel::intrinsics(double fx, double fy, double cx, double cy) {
    Eigen::Matrix3d k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
}

void validate_camera(const CameraModel &camera) {
    if (!camera.R.allFinite() || !camera.T.allFinite() || !camera.K.allFinite()) {
        throw Error(ErrorCode::InvalidCamera, "camera has non-finite entries");
    }
    if ((camera.R.transpose() * camera.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
        std::abs(camera.R.determinant() - 1.0) > 1e-6) {
        throw Error(ErrorCode::InvalidCamera, "R is not a proper rotation");
    }
    const auto &k = camera.K;
    if (k(1, 0) != 0.0 || k(2, 0) != 0.0 || k(2, 1) != 0.0 || k(0, 1) != 0.0 || k(2, 2) != 1.0) {
        throw Error(ErrorCode::InvalidCamera, "K must be upper-triangular with zero skew");
    }
    if (camera.width <= 0 || camera.height <= 0) {
        throw Error(ErrorCode::InvalidCamera, "image size must be positive");
    }
    if (!(camera.fx() > 0.0) || !(camera.fy() > 0.0)) {
        throw Error(ErrorCode::InvalidCamera, "focal lengths must be positive");
    }
    if (!(camera.cx() > 0.0 && camera.cx() < camera.width && camera.cy() > 0.0 &&
          camera.cy() < camera.height)) {
        throw Error(ErrorCode::InvalidCamera, "principal point must lie inside the image");
    }
}

void validate_frame(const FrameObservation &frame) {
    validate_camera(frame.camera);
    const int h = frame.camera.height;
    const int w = frame.camera.width;
    auto check = [&](const Image &img, int channels, std::string_view what, bool optional) {
        if (optional && img.empty()) {
            return;
        }
        if (img.height() != h || img.width() != w || img.channels() != channels) {
            throw Error(ErrorCode::ShapeMismatch,
                        std::string(what) + " does not match the camera extent " + std::to_string(w) +
                            "x" + std::to_string(h));
        }
    };
    check(frame.image, 3, "image", false);
    check(frame.depth, 1, "depth", false);
    check(frame.dyn_mask, 1, "dyn_mask", true);
    check(frame.sky_mask, 1, "sky_mask", true);
    if (frame.normal_gt) {
        check(*frame.normal_gt, 3, "normal_gt", false);
        for (std::size_t i = 0; i < frame.normal_gt->pixel_count(); ++i) {
            const auto n = frame.normal_gt->pixel(i);
            const double norm = std::sqrt(double(n[0]) * n[0] + double(n[1]) * n[1] + double(n[2]) * n[2]);
            if (norm != 0.0 && std::abs(norm - 1.0) > 1e-4) {
                throw Error(ErrorCode::InvalidArgument, "normal_gt rows must be unit length where valid");
            }
        }
    }
    if (frame.gaussian_map) {
        check(*frame.gaussian_map, kGaussianMapChannels, "gaussian_map", false);
    }
    if (!(frame.timestamp >= 0.0 && frame.timestamp <= 1.0)) {
        throw Error(ErrorCode::OutOfRangeTimestamp, "frame timestamp must lie in [0, 1]");
    }
}

void validate_space(const CanonicalSpace &space) {
    const auto frames = static_cast<int>(space.frame_timestamps.size());
    for (const auto &g : space.primitives) {
        if (g.source_frame < 0 || g.source_frame >= frames) {
            throw Error(ErrorCode::InvalidArgument, "primitive source_frame does not index a frame");
        }
    }
}

const VoxelCell *VoxelPartition::find(const VoxelKey &key) const {
    const auto it = std::lower_bound(cells.begin(), cells.end(), key,
                                     [](const VoxelCell &c, const VoxelKey &k) { return c.key < k; });
    if (it == cells.end() || it->key != key) {
        return nullptr;
    }
    return &*it;
}

std::size_t VoxelPartition::primitive_count() const {
    std::size_t n = 0;
    for (const auto &c : cells) {
        n += c.members.size();
    }
    return n;
}

bool is_partition(const VoxelPartition &partition, std::size_t n) {
    std::vector<std::size_t> all;
    all.reserve(n);
    for (const auto &c : partition.cells) {
        if (c.members.empty()) {
            return false;
        }
        all.insert(all.end(), c.members.begin(), c.members.end());
    }
    if (all.size() != n) {
        return false;
    }
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < n; ++i) {
        if (all[i] != i) {
            return false;
        }
    }
    return true;
}

FusionParams::FusionParams(Config config) : config_(config) {
    if (config_.feature_dim <= 0 || config_.hidden <= 0 || config_.bands <= 0) {
        throw Error(ErrorCode::BadConfig, "fusion network dimensions must be positive");
    }
    const int h = config_.hidden;
    const int shapes[TensorCount][2] = {
        {h, config_.feature_dim}, {h, 1}, {h, 2 * config_.bands}, {h, 1}, {h, h}, {h, 1},
        {h, 2 * h},               {h, 1}, {1, h},                 {1, 1}, {1, 1}};
    constexpr std::string_view names[TensorCount] = {
        "phi_f.weight", "phi_f.bias", "phi_t.0.weight", "phi_t.0.bias", "phi_t.1.weight", "phi_t.1.bias",
        "attn.0.weight", "attn.0.bias", "attn.1.weight", "attn.1.bias", "beta"};
    std::size_t offset = 0;
    for (int t = 0; t < TensorCount; ++t) {
        layout_[t] = {names[t], shapes[t][0], shapes[t][1], offset};
        offset += static_cast<std::size_t>(shapes[t][0]) * shapes[t][1];
    }
    values_.assign(offset, 0.0);
    set_beta(config_.beta_init);
}

FusionParams FusionParams::initialized(std::uint64_t seed, Config config) {
    FusionParams params(config);
    Rng rng(seed);
    const auto fan_in = [&](Tensor t) {
        switch (t) {
        case FeatureWeight:
        case FeatureBias: return config.feature_dim;
        case Time0Weight:
        case Time0Bias: return 2 * config.bands;
        case Time1Weight:
        case Time1Bias:
        case Attn1Weight:
        case Attn1Bias: return config.hidden;
        case Attn0Weight:
        case Attn0Bias: return 2 * config.hidden;
        default: return 1;
        }
    };
    for (int t = 0; t < Beta; ++t) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in(static_cast<Tensor>(t))));
        auto m = params.tensor(static_cast<Tensor>(t));
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = rng.uniform(-bound, bound);
        }
    }
    return params;
}

std::optional<FusionParams::Tensor> FusionParams::find(std::string_view name) const {
    for (int t = 0; t < TensorCount; ++t) {
        if (layout_[t].name == name) {
            return static_cast<Tensor>(t);
        }
    }
    return std::nullopt;
}

FusionParams::MatrixMap FusionParams::tensor(Tensor t) {
    const auto &i = layout_[t];
    return MatrixMap(values_.data() + i.offset, i.rows, i.cols);
}

FusionParams::ConstMatrixMap FusionParams::tensor(Tensor t) const {
    const auto &i = layout_[t];
    return ConstMatrixMap(values_.data() + i.offset, i.rows, i.cols);
}

void FusionParams::validate() const {
    if (!(beta() > 0.0) || !std::isfinite(beta())) {
        throw Error(ErrorCode::InvalidArgument, "temperature beta must be positive");
    }
    if (!(config_.lambda_mix >= 0.0 && config_.lambda_mix <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "lambda_mix must lie in [0, 1]");
    }
}

Eigen::Matrix<double, 9, 1> sh_basis(const Eigen::Vector3d &d) {
    const double x = d.x(), y = d.y(), z = d.z();
    Eigen::Matrix<double, 9, 1> b;
    b << kShY00,                          // l=0
        0.4886025119029199 * y,           // l=1, m=-1
        0.4886025119029199 * z,           // l=1, m=0
        0.4886025119029199 * x,           // l=1, m=1
        1.0925484305920792 * x * y,       // l=2, m=-2
        1.0925484305920792 * y * z,       // l=2, m=-1
        0.31539156525252005 * (3 * z * z - 1.0),
        1.0925484305920792 * x * z,       // l=2, m=1
        0.5462742152960396 * (x * x - y * y);
    return b;
}

} // namespace voxfuse
