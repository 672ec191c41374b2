// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace voxfuse {

/// Dense row-major H x W x C float image. Pixel (u, v) is column u, row v.
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels, float fill = 0.0f)
        : height_(height), width_(width), channels_(channels),
          data_(static_cast<std::size_t>(height) * width * channels, fill) {}

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int channels() const noexcept { return channels_; }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(height_) * width_; }

    bool same_shape(const Image &other) const noexcept {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }
    bool same_extent(const Image &other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    float &at(int v, int u, int c = 0) noexcept {
        assert(v >= 0 && v < height_ && u >= 0 && u < width_ && c >= 0 && c < channels_);
        return data_[(static_cast<std::size_t>(v) * width_ + u) * channels_ + c];
    }
    float at(int v, int u, int c = 0) const noexcept {
        assert(v >= 0 && v < height_ && u >= 0 && u < width_ && c >= 0 && c < channels_);
        return data_[(static_cast<std::size_t>(v) * width_ + u) * channels_ + c];
    }

    /// All channels of one pixel, addressed by linear pixel index v * width + u.
    std::span<float> pixel(std::size_t index) noexcept {
        return {data_.data() + index * channels_, static_cast<std::size_t>(channels_)};
    }
    std::span<const float> pixel(std::size_t index) const noexcept {
        return {data_.data() + index * channels_, static_cast<std::size_t>(channels_)};
    }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    friend bool operator==(const Image &, const Image &) = default;

private:
    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

} // namespace voxfuse
