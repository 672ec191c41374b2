// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>

namespace voxfuse {
namespace {

class HeaderReader {
public:
    explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

    std::string token() {
        skip_space();
        const std::size_t start = pos_;
        while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            ++pos_;
        }
        if (start == pos_) {
            throw Error(ErrorCode::MalformedHeader, "truncated image header");
        }
        return std::string(bytes_.substr(start, pos_ - start));
    }

    long integer() {
        const std::string t = token();
        char *end = nullptr;
        const long value = std::strtol(t.c_str(), &end, 10);
        if (*end != '\0' || value <= 0) {
            throw Error(ErrorCode::MalformedHeader, "bad integer '" + t + "' in image header");
        }
        return value;
    }

    double real() {
        const std::string t = token();
        char *end = nullptr;
        const double value = std::strtod(t.c_str(), &end);
        if (*end != '\0' || value == 0.0 || !std::isfinite(value)) {
            throw Error(ErrorCode::MalformedHeader, "bad scale '" + t + "' in image header");
        }
        return value;
    }

    /// Consumes the single whitespace byte that ends a header.
    std::size_t data_offset() {
        if (pos_ >= bytes_.size()) {
            throw Error(ErrorCode::MalformedHeader, "image header has no data");
        }
        return pos_ + 1;
    }

private:
    void skip_space() {
        while (pos_ < bytes_.size()) {
            if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') {
                    ++pos_;
                }
            } else if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

float swap_float(float value) {
    std::uint32_t bits;
    std::memcpy(&bits, &value, 4);
    bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
    std::memcpy(&value, &bits, 4);
    return value;
}

bool host_little_endian() { return std::endian::native == std::endian::little; }

std::uint8_t quantize(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void write_8bit(const fs::path &path, const Image &image, int channels, std::string_view magic) {
    if (image.channels() != channels || image.empty()) {
        throw Error(ErrorCode::ShapeMismatch, std::string(magic) + " needs a non-empty " + std::to_string(channels) +
                                                  "-channel image");
    }
    std::string out = std::string(magic) + "\n" + std::to_string(image.width()) + " " +
                      std::to_string(image.height()) + "\n255\n";
    for (const float v : image.data()) {
        out.push_back(static_cast<char>(quantize(v)));
    }
    write_file_atomic(path, out);
}

} // namespace

Image read_image(const fs::path &path) {
    const std::string bytes = read_file(path);
    HeaderReader header(bytes);
    const std::string magic = header.token();
    if (magic == "P6" || magic == "P5") {
        const int channels = magic == "P6" ? 3 : 1;
        const long width = header.integer();
        const long height = header.integer();
        const long maxval = header.integer();
        if (maxval > 255) {
            throw Error(ErrorCode::MalformedHeader, "only 8-bit netpbm images are supported");
        }
        const std::size_t offset = header.data_offset();
        Image image(static_cast<int>(height), static_cast<int>(width), channels);
        if (bytes.size() - offset < image.data().size()) {
            throw Error(ErrorCode::MalformedHeader, "netpbm payload is truncated");
        }
        auto data = image.data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            data[i] = static_cast<float>(static_cast<unsigned char>(bytes[offset + i])) / static_cast<float>(maxval);
        }
        return image;
    }
    if (magic == "PF" || magic == "Pf") {
        const int channels = magic == "PF" ? 3 : 1;
        const long width = header.integer();
        const long height = header.integer();
        const double scale = header.real();
        const std::size_t offset = header.data_offset();
        Image image(static_cast<int>(height), static_cast<int>(width), channels);
        const std::size_t row = static_cast<std::size_t>(width) * channels;
        if (bytes.size() - offset < image.data().size() * 4) {
            throw Error(ErrorCode::MalformedHeader, "pfm payload is truncated");
        }
        const bool swap = (scale < 0.0) != host_little_endian();
        for (long v = 0; v < height; ++v) {
            // Rows are stored bottom to top.
            const char *src = bytes.data() + offset + static_cast<std::size_t>(height - 1 - v) * row * 4;
            float *dst = image.data().data() + static_cast<std::size_t>(v) * row;
            std::memcpy(dst, src, row * 4);
            if (swap) {
                std::transform(dst, dst + row, dst, swap_float);
            }
        }
        return image;
    }
    throw Error(ErrorCode::MalformedHeader, "unrecognized image magic '" + magic + "' in " + path.string());
}

void write_ppm(const fs::path &path, const Image &rgb) { write_8bit(path, rgb, 3, "P6"); }

void write_pgm(const fs::path &path, const Image &gray) { write_8bit(path, gray, 1, "P5"); }

void write_pfm(const fs::path &path, const Image &image) {
    if ((image.channels() != 1 && image.channels() != 3) || image.empty()) {
        throw Error(ErrorCode::ShapeMismatch, "pfm needs a non-empty 1- or 3-channel image");
    }
    std::string out = std::string(image.channels() == 3 ? "PF" : "Pf") + "\n" + std::to_string(image.width()) +
                      " " + std::to_string(image.height()) + "\n" + (host_little_endian() ? "-1.0" : "1.0") + "\n";
    const std::size_t row = static_cast<std::size_t>(image.width()) * image.channels();
    const std::size_t header = out.size();
    out.resize(header + image.data().size() * 4);
    for (int v = 0; v < image.height(); ++v) {
        std::memcpy(out.data() + header + static_cast<std::size_t>(image.height() - 1 - v) * row * 4,
                    image.data().data() + static_cast<std::size_t>(v) * row, row * 4);
    }
    write_file_atomic(path, out);
}

} // namespace voxfuse
