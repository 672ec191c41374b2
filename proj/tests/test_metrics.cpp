// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include "voxfuse/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace voxfuse {
namespace {

Image random_image(Rng &rng, int h, int w, int c = 3) {
    Image img(h, w, c);
    for (auto &x : img.data()) {
        x = static_cast<float>(rng.uniform());
    }
    return img;
}

TEST(L1, Examples) {
    Rng rng(41);
    const std::vector<Image> a{random_image(rng, 8, 8)};
    EXPECT_EQ(l1_photometric(a, a), 0.0);
    const std::vector<Image> ones{Image(4, 4, 3, 1.0f)}, zeros{Image(4, 4, 3, 0.0f)};
    EXPECT_EQ(l1_photometric(zeros, ones), 1.0);
    const std::vector<Image> gt(2, Image(4, 4, 3, 0.75f)), pred(2, Image(4, 4, 3, 0.25f));
    EXPECT_NEAR(l1_photometric(pred, gt), 0.5, 1e-12);
    EXPECT_NEAR(l1_photometric(pred, gt, 2.0), 1.0, 1e-12);
}

TEST(L1, ShapeMismatch) {
    const std::vector<Image> a{Image(4, 4, 3)}, b{Image(4, 5, 3)};
    try {
        l1_photometric(a, b);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
    }
    EXPECT_THROW(l1_photometric(a, std::vector<Image>{}), Error);
}

TEST(DynBce, Examples) {
    Image mask(4, 4, 1);
    for (std::size_t i = 0; i < 16; i += 2) {
        mask.pixel(i)[0] = 1.0f;
    }
    const std::vector<Image> gt{mask};
    const double exact = dyn_bce(gt, gt);
    EXPECT_GE(exact, 0.0);
    EXPECT_LE(exact, 0.5 * 2e-7);

    const std::vector<Image> half{Image(4, 4, 1, 0.5f)};
    EXPECT_NEAR(dyn_bce(half, gt), 0.5 * std::log(2.0), 1e-12);
    EXPECT_NEAR(dyn_bce(half, gt), 0.3466, 1e-4);

    Image flipped = mask;
    for (auto &x : flipped.data()) {
        x = 1.0f - x;
    }
    const std::vector<Image> worst{flipped};
    EXPECT_NEAR(dyn_bce(worst, gt), 0.5 * -std::log(kBceClamp), 1e-6);
}

TEST(SkyAlpha, Examples) {
    Image sky(4, 4, 1);
    Image alpha(4, 4, 1);
    for (int v = 0; v < 4; ++v) {
        for (int u = 0; u < 4; ++u) {
            sky.at(v, u) = v < 2 ? 1.0f : 0.0f;
            alpha.at(v, u) = v < 2 ? 0.0f : 1.0f;
        }
    }
    EXPECT_EQ(sky_alpha_loss(std::vector<Image>{alpha}, std::vector<Image>{sky}), 0.0);
    EXPECT_NEAR(sky_alpha_loss(std::vector<Image>{Image(4, 4, 1, 1.0f)}, std::vector<Image>{sky}), 0.5, 1e-12);
    EXPECT_NEAR(sky_alpha_loss(std::vector<Image>{Image(4, 4, 1, 1.0f)}, std::vector<Image>{sky}, 3.0), 1.5, 1e-12);
    Rng rng(42);
    Image random_sky(4, 4, 1);
    for (auto &x : random_sky.data()) {
        x = rng.uniform() < 0.5 ? 1.0f : 0.0f;
    }
    EXPECT_NEAR(sky_alpha_loss(std::vector<Image>{Image(4, 4, 1, 0.5f)}, std::vector<Image>{random_sky}), 0.5,
                1e-12);
    EXPECT_THROW(sky_alpha_loss(std::vector<Image>{Image(4, 4, 1)}, std::vector<Image>{Image(3, 4, 1)}), Error);
}

TEST(TotalLoss, SumsAndFlagsPerceptualTerm) {
    EXPECT_EQ(total_loss({}).total, 0.0);
    LossComponents c;
    c.rgb = 0.1;
    c.dyn = 0.2;
    c.sky = 0.3;
    const LossBreakdown b = total_loss(c);
    EXPECT_NEAR(b.total, 0.6, 1e-15);
    double sum = 0;
    bool saw_lpips = false;
    for (const auto &e : b.entries) {
        if (e.name == "lpips") {
            saw_lpips = true;
            EXPECT_FALSE(e.available);
            EXPECT_EQ(e.value, 0.0);
        } else {
            EXPECT_TRUE(e.available);
        }
        sum += e.value;
    }
    EXPECT_TRUE(saw_lpips);
    EXPECT_NEAR(sum, b.total, 1e-9);
}

TEST(TotalLoss, RejectsNonFinite) {
    LossComponents c;
    c.normal_gs = std::numeric_limits<double>::quiet_NaN();
    try {
        total_loss(c);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::NonFiniteComponent);
    }
    c.normal_gs = 0;
    c.rgb = std::numeric_limits<double>::infinity();
    EXPECT_THROW(total_loss(c), Error);
}

TEST(Psnr, Examples) {
    Rng rng(43);
    const Image a = random_image(rng, 16, 16);
    EXPECT_EQ(psnr(a, a), kPsnrInfinity);
    EXPECT_NEAR(psnr_from_mse(0.01), 20.0, 1e-9);
    EXPECT_NEAR(psnr_from_mse(1.0), 0.0, 1e-12);
    EXPECT_NEAR(psnr(Image(4, 4, 3, 0.0f), Image(4, 4, 3, 0.1f)), 20.0, 1e-5);
    EXPECT_NEAR(psnr(Image(4, 4, 3, 0.0f), Image(4, 4, 3, 1.0f)), 0.0, 1e-12);
    EXPECT_THROW(psnr(Image(4, 4, 3), Image(4, 4, 1)), Error);
}

TEST(Psnr, StrictlyDecreasingInMse) {
    double previous = psnr_from_mse(1e-10);
    for (double mse = 2e-10; mse < 10; mse *= 1.7) {
        const double current = psnr_from_mse(mse);
        EXPECT_LT(current, previous);
        previous = current;
    }
}

TEST(Ssim, IdentityAndSymmetry) {
    Rng rng(44);
    for (int trial = 0; trial < 5; ++trial) {
        const Image a = random_image(rng, 24, 31), b = random_image(rng, 24, 31);
        EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
        EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-9);
        EXPECT_LE(ssim(a, b), 1.0);
        EXPECT_GE(ssim(a, b), -1.0);
    }
}

TEST(Ssim, ConstantImages) {
    const double c1 = 0.01 * 0.01;
    const double value = ssim(Image(16, 16, 3, 0.0f), Image(16, 16, 3, 1.0f));
    EXPECT_NEAR(value, c1 / (1.0 + c1), 1e-9);
    EXPECT_LT(value, 0.01);
}

TEST(Ssim, TooSmall) {
    try {
        ssim(Image(10, 20, 3), Image(10, 20, 3));
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::ImageTooSmall);
    }
}

TEST(Ssim, DegradesWithNoise) {
    Rng rng(45);
    const Image a = random_image(rng, 32, 32);
    double previous = 1.0;
    for (double sigma : {0.02, 0.1, 0.3}) {
        Image b = a;
        for (auto &x : b.data()) {
            x = static_cast<float>(std::clamp(x + sigma * rng.normal(), 0.0, 1.0));
        }
        const double s = ssim(a, b);
        EXPECT_LT(s, previous);
        previous = s;
    }
}

} // namespace
} // namespace voxfuse
