// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "voxfuse/core.hpp"

#include <limits>
#include <span>
#include <string>
#include <vector>

namespace voxfuse {

struct LossWeights {
    double rgb = 1.0;
    double sky = 1.0;
    double dyn = 0.5;
    double normal_pred = 0.05;
    double normal_gs = 0.02;
    double lpips = 0.05; // recorded only; the perceptual term is not computed
};

/// weight * (1/T) sum_t mean |I_t - I_hat_t| over pixels and channels.
double l1_photometric(std::span<const Image> rendered, std::span<const Image> gt, double weight = 1.0);

inline constexpr double kBceClamp = 1e-7;

/// weight * mean binary cross-entropy over pixels and views; predictions are
/// clamped to [1e-7, 1 - 1e-7].
double dyn_bce(std::span<const Image> pred, std::span<const Image> gt_mask, double weight = 0.5);

/// weight * mean |A - (1 - M_sky)| over pixels and views.
double sky_alpha_loss(std::span<const Image> alpha, std::span<const Image> sky_mask, double weight = 1.0);

/// Already-weighted loss terms. The perceptual term is never available and is
/// reported as excluded.
struct LossComponents {
    double rgb = 0.0;
    double dyn = 0.0;
    double sky = 0.0;
    double normal_pred = 0.0;
    double normal_gs = 0.0;
};

struct LossBreakdown {
    struct Entry {
        std::string name;
        double value;
        bool available;
    };
    double total = 0.0;
    std::vector<Entry> entries;
};

/// Sum of the components. Throws NonFiniteComponent if any is NaN or infinite.
LossBreakdown total_loss(const LossComponents &components);

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

/// 10 log10(1 / MSE); +infinity when MSE < 1e-12.
double psnr(const Image &a, const Image &b);
double psnr_from_mse(double mse);
double mean_squared_error(const Image &a, const Image &b);

/// Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2,
/// evaluated on the valid (unpadded) region per channel and averaged.
double ssim(const Image &a, const Image &b);

} // namespace voxfuse
