// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include "voxfuse/core.hpp"

#include <Eigen/LU>
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

namespace voxfuse {
namespace {

using testing::random_primitive;

template <typename Fn>
ErrorCode code_of(Fn &&fn) {
    try {
        fn();
    } catch (const Error &e) {
        return e.code();
    }
    ADD_FAILURE() << "no voxfuse::Error thrown";
    return ErrorCode::IoFailure;
}

bool bitwise_equal(const GaussianPrimitive &a, const GaussianPrimitive &b) {
    auto same = [](const auto &x, const auto &y) {
        return x.size() == y.size() && std::memcmp(x.data(), y.data(), sizeof(double) * x.size()) == 0;
    };
    return same(a.mu, b.mu) && same(a.color, b.color) && same(a.scale, b.scale) && same(a.rotation, b.rotation) &&
           same(a.feature, b.feature) && std::memcmp(&a.opacity, &b.opacity, sizeof(double)) == 0 &&
           std::memcmp(&a.timestamp, &b.timestamp, sizeof(double)) == 0 && a.source_frame == b.source_frame &&
           a.source_pixel == b.source_pixel;
}

TEST(ValidatePrimitive, RenormalizesScaledIdentity) {
    GaussianPrimitive g;
    g.rotation = {2, 0, 0, 0};
    EXPECT_EQ(validate_primitive(g).rotation, Eigen::Vector4d(1, 0, 0, 0));
}

TEST(ValidatePrimitive, RejectsNegativeScale) {
    GaussianPrimitive g;
    g.scale = {1, 1, -0.1};
    EXPECT_EQ(code_of([&] { validate_primitive(g); }), ErrorCode::NonPositiveScale);
}

TEST(ValidatePrimitive, ValidPrimitiveUnchanged) {
    GaussianPrimitive g;
    g.opacity = 0.5;
    g.rotation = Eigen::Vector4d(1, 2, 3, 4).normalized();
    g.scale = {0.1, 0.2, 0.3};
    EXPECT_TRUE(bitwise_equal(validate_primitive(g), g));
}

TEST(ValidatePrimitive, RejectsBadFields) {
    GaussianPrimitive g;
    g.mu.x() = std::numeric_limits<double>::quiet_NaN();
    EXPECT_EQ(code_of([&] { validate_primitive(g); }), ErrorCode::NonFinite);
    g = {};
    g.opacity = 1.5;
    EXPECT_EQ(code_of([&] { validate_primitive(g); }), ErrorCode::OutOfRangeOpacity);
    g = {};
    g.color = {0.5, -0.1, 0.5};
    EXPECT_EQ(code_of([&] { validate_primitive(g); }), ErrorCode::OutOfRangeColor);
    g = {};
    g.timestamp = 1.01;
    EXPECT_EQ(code_of([&] { validate_primitive(g); }), ErrorCode::OutOfRangeTimestamp);
    g = {};
    g.rotation.setZero();
    EXPECT_EQ(code_of([&] { validate_primitive(g); }), ErrorCode::ZeroQuaternion);
    g = {};
    g.scale.z() = 0.0;
    EXPECT_EQ(code_of([&] { validate_primitive(g); }), ErrorCode::NonPositiveScale);
}

TEST(ValidatePrimitive, IdempotentBitwise) {
    Rng rng(11);
    for (int i = 0; i < 2000; ++i) {
        GaussianPrimitive g = random_primitive(rng);
        g.rotation *= rng.uniform(0.1, 10.0);
        const GaussianPrimitive once = validate_primitive(g);
        EXPECT_TRUE(bitwise_equal(validate_primitive(once), once)) << i;
        EXPECT_NEAR(once.rotation.norm(), 1.0, 1e-6);
    }
}

TEST(Error, MessageCarriesCode) {
    const Error e(ErrorCode::NonPositiveRho, "rho is zero");
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveRho);
    EXPECT_STREQ(e.what(), "NonPositiveRho: rho is zero");
    EXPECT_EQ(to_string(ErrorCode::BadTimestamps), "BadTimestamps");
}

TEST(Rotation, MatrixIsProperAndRoundTrips) {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const Eigen::Vector4d q = testing::random_unit_quaternion(rng);
        const Eigen::Matrix3d r = rotation_matrix(q);
        EXPECT_LT((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
        const Eigen::Vector4d back = quaternion_from_matrix(r);
        EXPECT_NEAR(std::abs(back.dot(q)), 1.0, 1e-12);
    }
}

TEST(Rotation, QuarterTurnAboutX) {
    const double h = std::sqrt(0.5);
    const Eigen::Matrix3d r = rotation_matrix({h, h, 0, 0});
    EXPECT_LT((r * Eigen::Vector3d::UnitY() - Eigen::Vector3d::UnitZ()).norm(), 1e-12);
}

TEST(Camera, ValidationRules) {
    CameraModel cam = testing::simple_camera(100, 80, 120);
    EXPECT_NO_THROW(validate_camera(cam));

    CameraModel bad = cam;
    bad.R(0, 0) = -1;
    EXPECT_EQ(code_of([&] { validate_camera(bad); }), ErrorCode::InvalidCamera);
    bad = cam;
    bad.K(0, 1) = 0.5;
    EXPECT_EQ(code_of([&] { validate_camera(bad); }), ErrorCode::InvalidCamera);
    bad = cam;
    bad.K(0, 0) = -1;
    EXPECT_EQ(code_of([&] { validate_camera(bad); }), ErrorCode::InvalidCamera);
    bad = cam;
    bad.K(0, 2) = 100;
    EXPECT_EQ(code_of([&] { validate_camera(bad); }), ErrorCode::InvalidCamera);
    bad = cam;
    bad.K(1, 2) = 0;
    EXPECT_EQ(code_of([&] { validate_camera(bad); }), ErrorCode::InvalidCamera);
}

TEST(Frame, MapsMustShareExtent) {
    FrameObservation f;
    f.camera = testing::simple_camera(8, 6, 10);
    f.image = Image(6, 8, 3);
    f.depth = Image(6, 8, 1);
    EXPECT_NO_THROW(validate_frame(f));
    f.sky_mask = Image(6, 7, 1);
    EXPECT_EQ(code_of([&] { validate_frame(f); }), ErrorCode::ShapeMismatch);
    f.sky_mask = {};
    f.gaussian_map = Image(6, 8, 10);
    EXPECT_EQ(code_of([&] { validate_frame(f); }), ErrorCode::ShapeMismatch);
    f.gaussian_map = Image(6, 8, kGaussianMapChannels);
    EXPECT_NO_THROW(validate_frame(f));
}

TEST(Frame, NormalsMustBeUnit) {
    FrameObservation f;
    f.camera = testing::simple_camera(4, 4, 10);
    f.image = Image(4, 4, 3);
    f.depth = Image(4, 4, 1);
    Image normals(4, 4, 3);
    for (std::size_t i = 0; i < normals.pixel_count(); ++i) {
        normals.pixel(i)[2] = -1.0f;
    }
    f.normal_gt = normals;
    EXPECT_NO_THROW(validate_frame(f));
    f.normal_gt->pixel(5)[2] = -0.9f;
    EXPECT_THROW(validate_frame(f), Error);
}

TEST(Space, SourceFrameMustIndexAFrame) {
    CanonicalSpace space;
    space.frame_timestamps = {0.0, 1.0};
    space.primitives.resize(2);
    space.primitives[0].source_frame = 0;
    space.primitives[1].source_frame = 1;
    EXPECT_NO_THROW(validate_space(space));
    space.primitives[1].source_frame = 2;
    EXPECT_THROW(validate_space(space), Error);
}

TEST(Partition, Checker) {
    VoxelPartition p;
    p.rho = 1;
    p.cells = {{{0, 0, 0}, {0, 2}}, {{0, 0, 1}, {1}}};
    EXPECT_TRUE(is_partition(p, 3));
    EXPECT_FALSE(is_partition(p, 4));
    EXPECT_EQ(p.primitive_count(), 3u);
    ASSERT_NE(p.find({0, 0, 1}), nullptr);
    EXPECT_EQ(p.find({0, 0, 1})->members, std::vector<std::size_t>{1});
    EXPECT_EQ(p.find({1, 0, 1}), nullptr);
    p.cells.push_back({{2, 0, 0}, {}});
    EXPECT_FALSE(is_partition(p, 3));
    p.cells.back().members = {2};
    EXPECT_FALSE(is_partition(p, 3));
}

TEST(Params, LayoutMatchesArchitecture) {
    const FusionParams p;
    EXPECT_EQ(p.time_dim(), 20);
    const auto shape = [&](FusionParams::Tensor t) { return std::pair(p.info(t).rows, p.info(t).cols); };
    EXPECT_EQ(shape(FusionParams::FeatureWeight), std::pair(64, 16));
    EXPECT_EQ(shape(FusionParams::Time0Weight), std::pair(64, 20));
    EXPECT_EQ(shape(FusionParams::Time1Weight), std::pair(64, 64));
    EXPECT_EQ(shape(FusionParams::Attn0Weight), std::pair(64, 128));
    EXPECT_EQ(shape(FusionParams::Attn1Weight), std::pair(1, 64));
    EXPECT_EQ(shape(FusionParams::Beta), std::pair(1, 1));
    std::size_t total = 0;
    for (const auto &info : p.layout()) {
        EXPECT_EQ(info.offset, total);
        total += static_cast<std::size_t>(info.rows) * info.cols;
    }
    EXPECT_EQ(total, p.size());
    EXPECT_EQ(p.size(), 64u * 16 + 64 + 64 * 20 + 64 + 64 * 64 + 64 + 64 * 128 + 64 + 64 + 1 + 1);
    EXPECT_EQ(p.beta(), 1.0);
    EXPECT_EQ(p.lambda_mix(), 0.3);
    EXPECT_EQ(p.find("attn.0.weight"), FusionParams::Attn0Weight);
    EXPECT_FALSE(p.find("nope").has_value());
}

TEST(Params, Validation) {
    FusionParams p;
    EXPECT_NO_THROW(p.validate());
    p.set_beta(0.0);
    EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::InvalidArgument);
    FusionConfig config;
    config.lambda_mix = 1.2;
    EXPECT_THROW(FusionParams(config).validate(), Error);
}

TEST(Params, InitIsSeededAndBounded) {
    const auto a = FusionParams::initialized(5);
    const auto b = FusionParams::initialized(5);
    const auto c = FusionParams::initialized(6);
    EXPECT_EQ(a, b);
    EXPECT_FALSE(a == c);
    EXPECT_EQ(a.beta(), 1.0);
    const auto w = a.tensor(FusionParams::Attn0Weight);
    EXPECT_LE(w.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(128.0));
}

TEST(Sky, DcBasisIsConstant) {
    const Eigen::Vector3d dirs[] = {{0, 0, 1}, {1, 0, 0}, Eigen::Vector3d(1, -2, 3).normalized()};
    for (const auto &d : dirs) {
        const auto b = sh_basis(d);
        EXPECT_DOUBLE_EQ(b[0], kShY00);
        EXPECT_NEAR(b[2], 0.4886025119029199 * d.z(), 1e-15);
    }
}

TEST(Sky, BasisIsOrthonormalOnTheSphere) {
    // Fibonacci-sphere quadrature of the Gram matrix.
    const int n = 20000;
    Eigen::Matrix<double, 9, 9> gram = Eigen::Matrix<double, 9, 9>::Zero();
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / n;
        const double r = std::sqrt(1.0 - z * z);
        const double phi = i * std::numbers::pi * (3.0 - std::sqrt(5.0));
        const auto b = sh_basis({r * std::cos(phi), r * std::sin(phi), z});
        gram += b * b.transpose();
    }
    gram *= 4.0 * std::numbers::pi / n;
    EXPECT_LT((gram - Eigen::Matrix<double, 9, 9>::Identity()).cwiseAbs().maxCoeff(), 1e-3);
}

} // namespace
} // namespace voxfuse
