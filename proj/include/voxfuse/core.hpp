// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "voxfuse/errors.hpp"
#include "voxfuse/image.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace voxfuse {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kDefaultFeatureDim = 16;
inline constexpr int kGaussianMapChannels = 11;

/// One canonical-space splat. Rotation is a unit quaternion stored (w, x, y, z);
/// scale is stored linearly.
struct GaussianPrimitive {
    Eigen::Vector3d mu = Eigen::Vector3d::Zero();
    Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);
    double opacity = 1.0;
    Eigen::Vector3d scale = Eigen::Vector3d::Ones();
    Eigen::Vector4d rotation{1.0, 0.0, 0.0, 0.0};
    double timestamp = 0.0;
    Eigen::VectorXd feature = Eigen::VectorXd::Zero(kDefaultFeatureDim);
    int source_frame = -1;
    /// Linear pixel index (v * width + u) in the source frame, -1 when unknown.
    std::int64_t source_pixel = -1;
};

/// Checks every field and returns g with its rotation renormalized. Idempotent
/// bitwise: a quaternion already unit to within rounding is left untouched.
GaussianPrimitive validate_primitive(GaussianPrimitive g);

/// Rotation matrix of a unit quaternion (w, x, y, z).
Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d &q);

/// Quaternion (w, x, y, z) of a rotation matrix.
Eigen::Vector4d quaternion_from_matrix(const Eigen::Matrix3d &rotation);

/// Pinhole camera. World-to-camera is p = R * mu + T; pixel (u, v) has homogeneous
/// coordinates K * p / p_z with integer u, v at pixel centres.
struct CameraModel {
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d T = Eigen::Vector3d::Zero();
    Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
    int width = 0;
    int height = 0;

    double fx() const { return K(0, 0); }
    double fy() const { return K(1, 1); }
    double cx() const { return K(0, 2); }
    double cy() const { return K(1, 2); }

    Eigen::Vector3d to_camera(const Eigen::Vector3d &world) const { return R * world + T; }
    Eigen::Vector2d project(const Eigen::Vector3d &camera_point) const {
        return {fx() * camera_point.x() / camera_point.z() + cx(),
                fy() * camera_point.y() / camera_point.z() + cy()};
    }

    static Eigen::Matrix3d intrinsics(double fx, double fy, double cx, double cy);
};

/// Throws InvalidCamera unless R is a proper rotation and K is a zero-skew
/// intrinsics matrix with its principal point inside the image.
void validate_camera(const CameraModel &camera);

/// One context frame. Per-pixel maps share the camera's extent; optional maps
/// may be empty.
struct FrameObservation {
    Image image;        // H x W x 3, [0, 1]
    Image depth;        // H x W x 1, 0 = invalid
    Image dyn_mask;     // H x W x 1, [0, 1]; empty means all static
    Image sky_mask;     // H x W x 1, {0, 1}; empty means no sky
    std::optional<Image> normal_gt;    // H x W x 3 camera-frame unit normals
    std::optional<Image> gaussian_map; // H x W x 11 raw attribute channels
    double timestamp = 0.0;
    CameraModel camera;
};

void validate_frame(const FrameObservation &frame);

struct CanonicalSpace {
    std::vector<GaussianPrimitive> primitives;
    std::vector<double> frame_timestamps;
};

void validate_space(const CanonicalSpace &space);

using VoxelKey = std::array<std::int64_t, 3>;

struct VoxelCell {
    VoxelKey key{};
    std::vector<std::size_t> members; // ascending primitive indices
};

/// Sparse voxel grouping. Cells are sorted lexicographically by key, never empty,
/// and their member lists partition 0..N-1.
struct VoxelPartition {
    double rho = 0.0;
    std::vector<VoxelCell> cells;

    const VoxelCell *find(const VoxelKey &key) const;
    std::size_t primitive_count() const;
};

/// True when the cells form an exact partition of 0..n-1.
bool is_partition(const VoxelPartition &partition, std::size_t n);

struct FusionConfig {
    int feature_dim = kDefaultFeatureDim;
    int hidden = 64;
    int bands = 10;
    double lambda_mix = 0.3;
    double beta_init = 1.0;
};

/// Learnable weights of the aggregation network, stored as one flat vector with a
/// fixed tensor layout. Matrices are row-major [out, in].
///
///   phi_f.weight [H, D_f], phi_f.bias [H]          feature encoder
///   phi_t.0.weight [H, 2L], phi_t.0.bias [H]       time MLP, layer 1 (SiLU after)
///   phi_t.1.weight [H, H], phi_t.1.bias [H]        time MLP, layer 2
///   attn.0.weight [H, 2H], attn.0.bias [H]         attention MLP, layer 1 (SiLU after)
///   attn.1.weight [1, H], attn.1.bias [1]          attention MLP, layer 2
///   beta [1]                                       softmax temperature
class FusionParams {
public:
    using Config = FusionConfig;

    enum Tensor : int {
        FeatureWeight,
        FeatureBias,
        Time0Weight,
        Time0Bias,
        Time1Weight,
        Time1Bias,
        Attn0Weight,
        Attn0Bias,
        Attn1Weight,
        Attn1Bias,
        Beta,
        TensorCount
    };

    struct TensorInfo {
        std::string_view name;
        int rows;
        int cols;
        std::size_t offset;
    };

    using MatrixMap = Eigen::Map<RowMajorMatrix>;
    using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;

    /// All weights zero, beta = beta_init.
    FusionParams() : FusionParams(Config{}) {}
    explicit FusionParams(Config config);

    /// Linear-layer style init: every weight and bias uniform in +-1/sqrt(fan_in).
    static FusionParams initialized(std::uint64_t seed, Config config = {});

    const Config &config() const noexcept { return config_; }
    int time_dim() const noexcept { return 2 * config_.bands; }

    const TensorInfo &info(Tensor t) const noexcept { return layout_[t]; }
    std::span<const TensorInfo> layout() const noexcept { return layout_; }
    std::optional<Tensor> find(std::string_view name) const;

    MatrixMap tensor(Tensor t);
    ConstMatrixMap tensor(Tensor t) const;

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }

    double beta() const noexcept { return values_[layout_[Beta].offset]; }
    void set_beta(double beta) noexcept { values_[layout_[Beta].offset] = beta; }
    double lambda_mix() const noexcept { return config_.lambda_mix; }

    /// Throws InvalidArgument unless beta > 0 and lambda_mix in [0, 1].
    void validate() const;

    friend bool operator==(const FusionParams &a, const FusionParams &b) {
        return a.values_ == b.values_ && a.config_.feature_dim == b.config_.feature_dim &&
               a.config_.hidden == b.config_.hidden && a.config_.bands == b.config_.bands &&
               a.config_.lambda_mix == b.config_.lambda_mix;
    }

private:
    Config config_;
    std::array<TensorInfo, TensorCount> layout_{};
    std::vector<double> values_;
};

/// Degree-2 real spherical-harmonic sky, one 9-vector of coefficients per RGB
/// channel. Basis index is l * l + l + m.
struct SkyModel {
    Eigen::Matrix<double, 9, 3> coeffs = Eigen::Matrix<double, 9, 3>::Zero();
};

/// Real SH basis up to degree 2 at unit direction d.
Eigen::Matrix<double, 9, 1> sh_basis(const Eigen::Vector3d &d);

inline constexpr double kShY00 = 0.28209479177387814;

} // namespace voxfuse
