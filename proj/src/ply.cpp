// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/io.hpp"
#include "voxfuse/lift.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <sstream>

namespace voxfuse {
namespace {

enum class Scalar { I8, U8, I16, U16, I32, U32, F32, F64 };

std::optional<Scalar> scalar_type(const std::string &name) {
    static const std::map<std::string, Scalar> types = {
        {"char", Scalar::I8},    {"int8", Scalar::I8},     {"uchar", Scalar::U8},  {"uint8", Scalar::U8},
        {"short", Scalar::I16},  {"int16", Scalar::I16},   {"ushort", Scalar::U16}, {"uint16", Scalar::U16},
        {"int", Scalar::I32},    {"int32", Scalar::I32},   {"uint", Scalar::U32},  {"uint32", Scalar::U32},
        {"float", Scalar::F32},  {"float32", Scalar::F32}, {"double", Scalar::F64}, {"float64", Scalar::F64},
    };
    const auto it = types.find(name);
    return it == types.end() ? std::nullopt : std::optional(it->second);
}

std::size_t scalar_size(Scalar s) {
    switch (s) {
    case Scalar::I8:
    case Scalar::U8: return 1;
    case Scalar::I16:
    case Scalar::U16: return 2;
    case Scalar::I32:
    case Scalar::U32:
    case Scalar::F32: return 4;
    case Scalar::F64: return 8;
    }
    return 0;
}

template <typename T>
double load(const char *p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
}

double decode_scalar(Scalar s, const char *p) {
    switch (s) {
    case Scalar::I8: return load<std::int8_t>(p);
    case Scalar::U8: return load<std::uint8_t>(p);
    case Scalar::I16: return load<std::int16_t>(p);
    case Scalar::U16: return load<std::uint16_t>(p);
    case Scalar::I32: return load<std::int32_t>(p);
    case Scalar::U32: return load<std::uint32_t>(p);
    case Scalar::F32: return load<float>(p);
    case Scalar::F64: return load<double>(p);
    }
    return 0.0;
}

template <typename T>
void append(std::string &out, T value) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    out.append(bytes, sizeof(T));
}

struct Property {
    std::string name;
    Scalar type;
};

struct Header {
    bool ascii = false;
    std::size_t count = 0;
    std::vector<Property> properties;
    std::vector<double> frame_timestamps;
    std::size_t data_offset = 0;
};

Header parse_header(const std::string &bytes) {
    const std::size_t end = bytes.find("end_header");
    if (bytes.rfind("ply", 0) != 0 || end == std::string::npos) {
        throw Error(ErrorCode::MalformedHeader, "not a ply file");
    }
    const std::size_t newline = bytes.find('\n', end);
    if (newline == std::string::npos) {
        throw Error(ErrorCode::MalformedHeader, "ply header is not terminated");
    }
    Header header;
    header.data_offset = newline + 1;
    std::istringstream lines(bytes.substr(0, end));
    std::string line;
    bool in_vertex = false;
    bool seen_vertex = false;
    bool seen_format = false;
    while (std::getline(lines, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::istringstream words(line);
        std::string keyword;
        words >> keyword;
        if (keyword == "format") {
            std::string format;
            words >> format;
            if (format == "ascii") {
                header.ascii = true;
            } else if (format != "binary_little_endian") {
                throw Error(ErrorCode::MalformedHeader, "unsupported ply format " + format);
            }
            seen_format = true;
        } else if (keyword == "comment") {
            std::string tag;
            words >> tag;
            if (tag == "frame_timestamps") {
                double t;
                while (words >> t) {
                    header.frame_timestamps.push_back(t);
                }
            }
        } else if (keyword == "element") {
            std::string name;
            long long count = -1;
            words >> name >> count;
            if (seen_vertex) {
                in_vertex = false;
                continue;
            }
            if (name != "vertex") {
                throw Error(ErrorCode::MalformedHeader, "the vertex element must come first");
            }
            if (count < 0) {
                throw Error(ErrorCode::MalformedHeader, "bad vertex count");
            }
            header.count = static_cast<std::size_t>(count);
            in_vertex = true;
            seen_vertex = true;
        } else if (keyword == "property" && in_vertex) {
            std::string type;
            std::string name;
            words >> type >> name;
            if (type == "list") {
                throw Error(ErrorCode::UnsupportedProperty, "list properties on vertices are not supported");
            }
            const auto scalar = scalar_type(type);
            if (!scalar || name.empty()) {
                throw Error(ErrorCode::MalformedHeader, "bad property line '" + line + "'");
            }
            header.properties.push_back({name, *scalar});
        }
    }
    if (!seen_format || !seen_vertex) {
        throw Error(ErrorCode::MalformedHeader, "ply header lacks a format or vertex element");
    }
    return header;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

void write_ply(const fs::path &path, std::span<const GaussianPrimitive> primitives,
               std::span<const double> frame_timestamps) {
    const Eigen::Index feature_dim = primitives.empty() ? 0 : primitives.front().feature.size();
    std::ostringstream head;
    head.precision(17);
    head << "ply\nformat binary_little_endian 1.0\n";
    if (!frame_timestamps.empty()) {
        head << "comment frame_timestamps";
        for (const double t : frame_timestamps) {
            head << ' ' << t;
        }
        head << '\n';
    }
    head << "element vertex " << primitives.size() << '\n';
    for (const char *name : {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1",
                             "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
        head << "property float " << name << '\n';
    }
    head << "property double timestamp\nproperty int source_frame\nproperty int source_pixel\n";
    for (Eigen::Index k = 0; k < feature_dim; ++k) {
        head << "property float feat_" << k << '\n';
    }
    head << "end_header\n";
    std::string out = head.str();
    for (const auto &g : primitives) {
        if (g.feature.size() != feature_dim) {
            throw Error(ErrorCode::DimensionMismatch, "primitives carry features of different sizes");
        }
        for (int c = 0; c < 3; ++c) {
            append(out, static_cast<float>(g.mu[c]));
        }
        for (int c = 0; c < 3; ++c) {
            append(out, static_cast<float>((g.color[c] - 0.5) / kShY00));
        }
        const double a = std::clamp(g.opacity, 1e-7, 1.0 - 1e-7);
        append(out, static_cast<float>(std::log(a / (1.0 - a))));
        for (int c = 0; c < 3; ++c) {
            append(out, static_cast<float>(std::log(g.scale[c])));
        }
        for (int c = 0; c < 4; ++c) {
            append(out, static_cast<float>(g.rotation[c]));
        }
        append(out, g.timestamp);
        append(out, static_cast<std::int32_t>(g.source_frame));
        append(out, static_cast<std::int32_t>(g.source_pixel));
        for (Eigen::Index k = 0; k < feature_dim; ++k) {
            append(out, static_cast<float>(g.feature[k]));
        }
    }
    write_file_atomic(path, out);
}

std::vector<GaussianPrimitive> read_ply(const fs::path &path, std::vector<double> *frame_timestamps) {
    const std::string bytes = read_file(path);
    const Header header = parse_header(bytes);
    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < header.properties.size(); ++i) {
        column[header.properties[i].name] = i;
    }
    auto require = [&](const std::string &name) {
        const auto it = column.find(name);
        if (it == column.end()) {
            throw Error(ErrorCode::UnsupportedProperty, "ply lacks required property " + name);
        }
        return it->second;
    };
    auto optional = [&](const std::string &name) -> std::optional<std::size_t> {
        const auto it = column.find(name);
        return it == column.end() ? std::nullopt : std::optional(it->second);
    };
    const std::size_t x = require("x");
    const std::size_t y = require("y");
    const std::size_t z = require("z");
    const std::size_t scale[3] = {require("scale_0"), require("scale_1"), require("scale_2")};
    const std::size_t rot[4] = {require("rot_0"), require("rot_1"), require("rot_2"), require("rot_3")};
    std::optional<std::size_t> dc[3] = {optional("f_dc_0"), optional("f_dc_1"), optional("f_dc_2")};
    std::optional<std::size_t> rgb[3] = {optional("red"), optional("green"), optional("blue")};
    const auto opacity = optional("opacity");
    const auto timestamp = optional("timestamp");
    const auto source_frame = optional("source_frame");
    const auto source_pixel = optional("source_pixel");
    std::vector<std::size_t> features;
    while (const auto f = optional("feat_" + std::to_string(features.size()))) {
        features.push_back(*f);
    }

    std::vector<double> row(header.properties.size());
    std::size_t stride = 0;
    for (const auto &p : header.properties) {
        stride += scalar_size(p.type);
    }
    std::istringstream ascii;
    if (header.ascii) {
        ascii.str(bytes.substr(header.data_offset));
    } else if ((bytes.size() - header.data_offset) / stride < header.count) {
        throw Error(ErrorCode::MalformedHeader, "ply payload is truncated");
    }
    std::vector<GaussianPrimitive> out;
    out.reserve(header.count);
    for (std::size_t n = 0; n < header.count; ++n) {
        if (header.ascii) {
            for (auto &value : row) {
                if (!(ascii >> value)) {
                    throw Error(ErrorCode::MalformedHeader, "ply payload is truncated");
                }
            }
        } else {
            const char *p = bytes.data() + header.data_offset + n * stride;
            for (std::size_t i = 0; i < row.size(); ++i) {
                row[i] = decode_scalar(header.properties[i].type, p);
                p += scalar_size(header.properties[i].type);
            }
        }
        GaussianPrimitive g;
        g.mu = {row[x], row[y], row[z]};
        for (int c = 0; c < 3; ++c) {
            if (dc[c]) {
                g.color[c] = 0.5 + kShY00 * row[*dc[c]];
            } else if (rgb[c]) {
                const bool byte = header.properties[*rgb[c]].type == Scalar::U8;
                g.color[c] = byte ? row[*rgb[c]] / 255.0 : row[*rgb[c]];
            }
            g.scale[c] = std::exp(row[scale[c]]);
        }
        g.color = g.color.cwiseMax(0.0).cwiseMin(1.0);
        g.opacity = opacity ? sigmoid(row[*opacity]) : 1.0;
        g.rotation = {row[rot[0]], row[rot[1]], row[rot[2]], row[rot[3]]};
        g.timestamp = timestamp ? row[*timestamp] : 0.0;
        g.source_frame = source_frame ? static_cast<int>(row[*source_frame]) : -1;
        g.source_pixel = source_pixel ? static_cast<std::int64_t>(row[*source_pixel]) : -1;
        if (features.empty()) {
            g.feature = attribute_feature(g.color, g.opacity, g.scale, kDefaultFeatureDim);
        } else {
            g.feature.resize(static_cast<Eigen::Index>(features.size()));
            for (std::size_t k = 0; k < features.size(); ++k) {
                g.feature[static_cast<Eigen::Index>(k)] = row[features[k]];
            }
        }
        out.push_back(validate_primitive(std::move(g)));
    }
    if (frame_timestamps) {
        *frame_timestamps = header.frame_timestamps;
    }
    return out;
}

void write_space(const fs::path &path, const CanonicalSpace &space) {
    write_ply(path, space.primitives, space.frame_timestamps);
}

CanonicalSpace read_space(const fs::path &path) {
    CanonicalSpace space;
    space.primitives = read_ply(path, &space.frame_timestamps);
    if (space.frame_timestamps.empty()) {
        int frames = 0;
        for (const auto &g : space.primitives) {
            frames = std::max(frames, g.source_frame + 1);
        }
        space.frame_timestamps.assign(static_cast<std::size_t>(frames), 0.0);
        for (const auto &g : space.primitives) {
            if (g.source_frame >= 0) {
                space.frame_timestamps[static_cast<std::size_t>(g.source_frame)] = g.timestamp;
            }
        }
    }
    return space;
}

} // namespace voxfuse
