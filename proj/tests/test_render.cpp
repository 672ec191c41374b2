// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"
#include "support.hpp"

#include "voxfuse/render.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

namespace voxfuse {
namespace {

GaussianPrimitive splat_at(const Eigen::Vector3d &mu, double scale, double opacity, const Eigen::Vector3d &color) {
    GaussianPrimitive g;
    g.mu = mu;
    g.scale = Eigen::Vector3d::Constant(scale);
    g.opacity = opacity;
    g.color = color;
    return g;
}

std::vector<GaussianPrimitive> random_scene(Rng &rng, std::size_t n) {
    std::vector<GaussianPrimitive> prims;
    for (std::size_t i = 0; i < n; ++i) {
        GaussianPrimitive g = testing::random_primitive(rng);
        g.mu = {rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(1.0, 4.0)};
        g.scale = {rng.uniform(0.01, 0.3), rng.uniform(0.01, 0.3), rng.uniform(0.01, 0.3)};
        g.opacity = rng.uniform(0.05, 1.0);
        prims.push_back(g);
    }
    return prims;
}

TEST(Project, OnAxisIsotropic) {
    const double f = 80, z = 2.5, s = 0.1;
    const CameraModel cam = testing::simple_camera(64, 64, f);
    const auto proj = project_gaussian(splat_at({0, 0, z}, s, 1, {1, 1, 1}), cam);
    ASSERT_TRUE(proj.has_value());
    const double diag = (f * s / z) * (f * s / z) + 0.3;
    EXPECT_NEAR(proj->cov(0, 0), diag, 1e-12);
    EXPECT_NEAR(proj->cov(1, 1), diag, 1e-12);
    EXPECT_NEAR(proj->cov(0, 1), 0.0, 1e-12);
    EXPECT_NEAR(proj->depth, z, 1e-15);
    EXPECT_LT((proj->mean - Eigen::Vector2d(cam.cx(), cam.cy())).norm(), 1e-12);
}

TEST(Project, MatchesFullMatrixProduct) {
    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
        const CameraModel cam = testing::random_camera(rng, 64, 48);
        GaussianPrimitive g = testing::random_primitive(rng);
        g.mu = cam.R.transpose() * (Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(1, 5)) - cam.T);
        const auto proj = project_gaussian(g, cam);
        ASSERT_TRUE(proj.has_value());
        const Eigen::Vector3d p = cam.R * g.mu + cam.T;
        Eigen::Matrix<double, 2, 3> j;
        j << cam.fx() / p.z(), 0, -cam.fx() * p.x() / (p.z() * p.z()), 0, cam.fy() / p.z(),
            -cam.fy() * p.y() / (p.z() * p.z());
        const Eigen::Quaterniond q(g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3]);
        const Eigen::Matrix3d rq = q.toRotationMatrix();
        const Eigen::Matrix3d sigma = rq * g.scale.cwiseAbs2().asDiagonal() * rq.transpose();
        const Eigen::Matrix2d expected = j * cam.R * sigma * cam.R.transpose() * j.transpose() + 0.3 * Eigen::Matrix2d::Identity();
        EXPECT_LT((proj->cov - expected).cwiseAbs().maxCoeff(), 1e-9 * expected.cwiseAbs().maxCoeff());
    }
}

TEST(Project, CullsBehindCamera) {
    const CameraModel cam = testing::simple_camera(32, 32, 40);
    EXPECT_FALSE(project_gaussian(splat_at({0, 0, -1}, 0.1, 1, {1, 1, 1}), cam).has_value());
    EXPECT_FALSE(project_gaussian(splat_at({0, 0, 0.01}, 0.1, 1, {1, 1, 1}), cam).has_value());
    EXPECT_TRUE(project_gaussian(splat_at({0, 0, 0.02}, 0.1, 1, {1, 1, 1}), cam).has_value());
}

TEST(Project, IsotropicIgnoresViewAxisRotation) {
    const CameraModel cam = testing::simple_camera(32, 32, 40);
    GaussianPrimitive g = splat_at({0.3, -0.2, 2}, 0.2, 1, {1, 1, 1});
    const auto a = project_gaussian(g, cam);
    const double h = std::sqrt(0.5);
    g.rotation = {h, 0, 0, h};
    const auto b = project_gaussian(g, cam);
    EXPECT_LT((a->cov - b->cov).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Rasterize, EmptyList) {
    const CameraModel cam = testing::simple_camera(40, 30, 40);
    const RenderOutput out = rasterize({}, cam);
    EXPECT_EQ(out.rgb, Image(30, 40, 3));
    EXPECT_EQ(out.alpha, Image(30, 40, 1));
}

TEST(Rasterize, SingleOpaqueDisc) {
    const CameraModel cam = testing::simple_camera(33, 33, 40);
    GaussianPrimitive g = splat_at({0, 0, 2}, 0.5, 1.0, {0.2, 0.6, 0.9});
    g.scale.z() = 0.001;
    const std::vector<GaussianPrimitive> prims{g};
    const RenderOutput out = rasterize(prims, cam);
    EXPECT_NEAR(out.alpha.at(16, 16), 0.99, 1e-6);
    for (int c = 0; c < 3; ++c) {
        EXPECT_NEAR(out.rgb.at(16, 16, c), g.color[c] * 0.99, 1e-6);
    }
    EXPECT_NEAR(out.depth.at(16, 16), 2.0, 1e-6);

    g.opacity = 0.5;
    EXPECT_NEAR(rasterize(std::vector<GaussianPrimitive>{g}, cam).alpha.at(16, 16), 0.5, 1e-6);
}

TEST(Rasterize, TwoLayerCompositing) {
    const CameraModel cam = testing::simple_camera(33, 33, 40);
    const std::vector<GaussianPrimitive> prims{splat_at({0, 0, 3}, 0.4, 0.6, {0, 0, 1}),
                                               splat_at({0, 0, 2}, 0.4, 0.6, {1, 0, 0})};
    const RenderOutput out = rasterize(prims, cam);
    EXPECT_NEAR(out.rgb.at(16, 16, 0), 0.6, 1e-6);
    EXPECT_NEAR(out.rgb.at(16, 16, 1), 0.0, 1e-6);
    EXPECT_NEAR(out.rgb.at(16, 16, 2), 0.4 * 0.6, 1e-6);
    EXPECT_NEAR(out.alpha.at(16, 16), 0.84, 1e-6);
}

TEST(Rasterize, MatchesBruteForce) {
    Rng rng(32);
    for (int scene = 0; scene < 10; ++scene) {
        const CameraModel cam = testing::simple_camera(64, 64, 48);
        const auto prims = random_scene(rng, 1 + rng.index(100));
        const RenderOutput out = rasterize(prims, cam);
        const auto ref = oracle::render(prims, cam);
        double worst = 0;
        for (std::size_t p = 0; p < out.alpha.pixel_count(); ++p) {
            for (int c = 0; c < 3; ++c) {
                worst = std::max(worst, std::abs(out.rgb.pixel(p)[c] - ref[p * 4 + c]));
            }
            worst = std::max(worst, std::abs(out.alpha.pixel(p)[0] - ref[p * 4 + 3]));
        }
        EXPECT_LE(worst, 1e-4) << scene;
    }
}

TEST(Rasterize, StoredOrderDoesNotMatter) {
    Rng rng(33);
    const CameraModel cam = testing::simple_camera(64, 64, 48);
    for (int trial = 0; trial < 10; ++trial) {
        auto prims = random_scene(rng, 30);
        const RenderOutput a = rasterize(prims, cam);
        std::reverse(prims.begin(), prims.end());
        std::swap(prims[0], prims[7]);
        const RenderOutput b = rasterize(prims, cam);
        for (std::size_t i = 0; i < a.rgb.data().size(); ++i) {
            EXPECT_NEAR(a.rgb.data()[i], b.rgb.data()[i], 1e-6);
        }
        for (std::size_t i = 0; i < a.alpha.data().size(); ++i) {
            EXPECT_NEAR(a.alpha.data()[i], b.alpha.data()[i], 1e-6);
        }
    }
}

TEST(Rasterize, AddingAPrimitiveNeverLowersAlpha) {
    Rng rng(34);
    const CameraModel cam = testing::simple_camera(48, 48, 40);
    auto prims = random_scene(rng, 20);
    RenderOutput before = rasterize(prims, cam);
    for (int step = 0; step < 20; ++step) {
        prims.push_back(random_scene(rng, 1)[0]);
        const RenderOutput after = rasterize(prims, cam);
        for (std::size_t i = 0; i < after.alpha.data().size(); ++i) {
            // Early termination below 1e-4 transmittance bounds how much a
            // terminated pixel can differ.
            EXPECT_GE(after.alpha.data()[i], before.alpha.data()[i] - 1e-4f);
            EXPECT_LE(after.alpha.data()[i], 1.0f);
            EXPECT_GE(after.alpha.data()[i], 0.0f);
        }
        before = after;
    }
}

TEST(Rasterize, SkipsTransparentAndDegenerate) {
    const CameraModel cam = testing::simple_camera(16, 16, 20);
    std::vector<GaussianPrimitive> prims{splat_at({0, 0, 2}, 0.2, 1.0 / 512, {1, 1, 1}),
                                         splat_at({0, 0, -2}, 0.2, 1.0, {1, 1, 1})};
    EXPECT_TRUE(prepare_splats(prims, cam).empty());
    EXPECT_EQ(rasterize(prims, cam).alpha, Image(16, 16, 1));
}

TEST(Sky, DcTermIsConstant) {
    SkyModel sky;
    sky.coeffs.row(0) = Eigen::RowVector3d(0.2, 0.5, 0.7) / kShY00;
    const CameraModel cam = testing::simple_camera(20, 10, 15);
    const Image img = sky_eval(sky, cam);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        EXPECT_NEAR(img.pixel(i)[0], 0.2f, 1e-6);
        EXPECT_NEAR(img.pixel(i)[1], 0.5f, 1e-6);
        EXPECT_NEAR(img.pixel(i)[2], 0.7f, 1e-6);
    }
    EXPECT_EQ(sky_eval(SkyModel{}, cam), Image(10, 20, 3));
}

TEST(Sky, LinearZTermOrdersBrightness) {
    SkyModel sky;
    sky.coeffs.row(0).setConstant(0.1 / kShY00);
    sky.coeffs.row(2).setConstant(0.5);
    CameraModel cam = testing::simple_camera(30, 20, 12);
    cam.R = Eigen::AngleAxisd(0.6, Eigen::Vector3d::UnitX()).toRotationMatrix();
    const Image img = sky_eval(sky, cam);
    std::vector<std::pair<double, float>> samples;
    for (int v = 0; v < 20; ++v) {
        for (int u = 0; u < 30; ++u) {
            samples.emplace_back(pixel_direction(cam, u, v).z(), img.at(v, u, 0));
        }
    }
    std::sort(samples.begin(), samples.end());
    for (std::size_t i = 1; i < samples.size(); ++i) {
        EXPECT_GE(samples[i].second, samples[i - 1].second);
    }
    EXPECT_GT(samples.back().second, samples.front().second);
}

TEST(Sky, OutputIsClamped) {
    SkyModel sky;
    Rng rng(35);
    for (int i = 0; i < 9; ++i) {
        sky.coeffs.row(i) = Eigen::RowVector3d(rng.normal(), rng.normal(), rng.normal()) * 3;
    }
    const Image clamped = sky_eval(sky, testing::simple_camera(16, 16, 8));
    for (float x : clamped.data()) {
        EXPECT_GE(x, 0.0f);
        EXPECT_LE(x, 1.0f);
    }
}

RenderOutput constant_render(int h, int w, float alpha, const Eigen::Vector3f &pure) {
    RenderOutput r{Image(h, w, 3), Image(h, w, 1, alpha), Image(h, w, 1)};
    for (std::size_t i = 0; i < r.rgb.pixel_count(); ++i) {
        for (int c = 0; c < 3; ++c) {
            r.rgb.pixel(i)[c] = alpha * pure[c];
        }
    }
    return r;
}

Image constant_image(int h, int w, const Eigen::Vector3f &c) {
    Image img(h, w, 3);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        for (int k = 0; k < 3; ++k) {
            img.pixel(i)[k] = c[k];
        }
    }
    return img;
}

TEST(Composite, Identities) {
    const Eigen::Vector3f pure(0.3f, 0.6f, 0.9f), sky(0.1f, 0.2f, 0.8f);
    EXPECT_EQ(composite(constant_render(4, 5, 1.0f, pure), constant_image(4, 5, sky)), constant_image(4, 5, pure));
    EXPECT_EQ(composite(constant_render(4, 5, 0.0f, pure), constant_image(4, 5, sky)), constant_image(4, 5, sky));
    const Image gray = composite(constant_render(4, 5, 0.5f, {1, 1, 1}), constant_image(4, 5, {0, 0, 0}));
    for (float x : gray.data()) {
        EXPECT_EQ(x, 0.5f);
    }
}

TEST(Composite, StaysInUnitRange) {
    Rng rng(36);
    RenderOutput r{Image(8, 8, 3), Image(8, 8, 1), Image(8, 8, 1)};
    Image sky(8, 8, 3);
    for (std::size_t i = 0; i < 64; ++i) {
        const float a = static_cast<float>(rng.uniform());
        r.alpha.pixel(i)[0] = a;
        for (int c = 0; c < 3; ++c) {
            r.rgb.pixel(i)[c] = a * static_cast<float>(rng.uniform());
            sky.pixel(i)[c] = static_cast<float>(rng.uniform());
        }
    }
    const Image out = composite(r, sky);
    for (float x : out.data()) {
        EXPECT_GE(x, 0.0f);
        EXPECT_LE(x, 1.0f);
    }
}

TEST(Composite, ShapeMismatch) {
    try {
        composite(constant_render(4, 5, 1.0f, {1, 1, 1}), Image(5, 4, 3));
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
    }
}

} // namespace
} // namespace voxfuse
