// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/metrics.hpp"
#include "voxfuse/numeric.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace voxfuse {
namespace {

void require_pairs(std::span<const Image> a, std::span<const Image> b) {
    if (a.empty() || a.size() != b.size()) {
        throw Error(ErrorCode::ShapeMismatch, "view lists must be non-empty and of equal length");
    }
    for (std::size_t t = 0; t < a.size(); ++t) {
        if (!a[t].same_shape(b[t])) {
            throw Error(ErrorCode::ShapeMismatch, "image shapes differ");
        }
    }
}

template <typename Fn>
double mean_over_views(std::span<const Image> a, std::span<const Image> b, Fn &&per_element) {
    std::vector<double> per_view;
    std::vector<double> terms;
    for (std::size_t t = 0; t < a.size(); ++t) {
        const auto da = a[t].data();
        const auto db = b[t].data();
        terms.resize(da.size());
        for (std::size_t i = 0; i < da.size(); ++i) {
            terms[i] = per_element(double(da[i]), double(db[i]));
        }
        per_view.push_back(pairwise_mean(terms));
    }
    return pairwise_mean(per_view);
}

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

std::array<double, kSsimWindow> ssim_kernel() {
    std::array<double, kSsimWindow> k{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double x = i - kSsimWindow / 2;
        k[i] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
        sum += k[i];
    }
    for (auto &v : k) {
        v /= sum;
    }
    return k;
}

// Separable valid-mode filtering of a single-channel plane.
std::vector<double> filter_valid(const std::vector<double> &plane, int h, int w,
                                 const std::array<double, kSsimWindow> &k) {
    const int oh = h - kSsimWindow + 1;
    const int ow = w - kSsimWindow + 1;
    std::vector<double> rows(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) {
                s += k[i] * plane[static_cast<std::size_t>(y) * w + x + i];
            }
            rows[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) {
                s += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
            }
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    }
    return out;
}

} // namespace

double l1_photometric(std::span<const Image> rendered, std::span<const Image> gt, double weight) {
    require_pairs(rendered, gt);
    return weight * mean_over_views(rendered, gt, [](double a, double b) { return std::abs(a - b); });
}

double dyn_bce(std::span<const Image> pred, std::span<const Image> gt_mask, double weight) {
    require_pairs(pred, gt_mask);
    return weight * mean_over_views(pred, gt_mask, [](double p, double y) {
               p = std::clamp(p, kBceClamp, 1.0 - kBceClamp);
               return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
           });
}

double sky_alpha_loss(std::span<const Image> alpha, std::span<const Image> sky_mask, double weight) {
    require_pairs(alpha, sky_mask);
    return weight * mean_over_views(alpha, sky_mask, [](double a, double m) { return std::abs(a - (1.0 - m)); });
}

LossBreakdown total_loss(const LossComponents &c) {
    LossBreakdown out;
    out.entries = {{"rgb", c.rgb, true},
                   {"lpips", 0.0, false},
                   {"dyn", c.dyn, true},
                   {"sky", c.sky, true},
                   {"normal_pred", c.normal_pred, true},
                   {"normal_gs", c.normal_gs, true}};
    for (const auto &e : out.entries) {
        if (!std::isfinite(e.value)) {
            throw Error(ErrorCode::NonFiniteComponent, "loss component '" + e.name + "' is not finite");
        }
        out.total += e.value;
    }
    return out;
}

double mean_squared_error(const Image &a, const Image &b) {
    if (!a.same_shape(b) || a.empty()) {
        throw Error(ErrorCode::ShapeMismatch, "image shapes differ");
    }
    std::vector<double> terms(a.data().size());
    for (std::size_t i = 0; i < terms.size(); ++i) {
        const double d = double(a.data()[i]) - double(b.data()[i]);
        terms[i] = d * d;
    }
    return pairwise_mean(terms);
}

double psnr_from_mse(double mse) { return mse < 1e-12 ? kPsnrInfinity : 10.0 * std::log10(1.0 / mse); }

double psnr(const Image &a, const Image &b) { return psnr_from_mse(mean_squared_error(a, b)); }

double ssim(const Image &a, const Image &b) {
    if (!a.same_shape(b)) {
        throw Error(ErrorCode::ShapeMismatch, "image shapes differ");
    }
    const int h = a.height();
    const int w = a.width();
    if (h < kSsimWindow || w < kSsimWindow) {
        throw Error(ErrorCode::ImageTooSmall, "SSIM needs at least 11x11 pixels");
    }
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const auto kernel = ssim_kernel();
    const std::size_t n = a.pixel_count();
    std::vector<double> channel_means;
    for (int c = 0; c < a.channels(); ++c) {
        std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = a.pixel(i)[c];
            y[i] = b.pixel(i)[c];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = filter_valid(x, h, w, kernel);
        const auto my = filter_valid(y, h, w, kernel);
        const auto sxx = filter_valid(xx, h, w, kernel);
        const auto syy = filter_valid(yy, h, w, kernel);
        const auto sxy = filter_valid(xy, h, w, kernel);
        std::vector<double> map(mx.size());
        for (std::size_t i = 0; i < map.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i];
            const double vy = syy[i] - my[i] * my[i];
            const double cov = sxy[i] - mx[i] * my[i];
            map[i] = ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
                     ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
        }
        channel_means.push_back(pairwise_mean(map));
    }
    return pairwise_mean(channel_means);
}

} // namespace voxfuse
