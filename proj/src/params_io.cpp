// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/io.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <sstream>

namespace voxfuse {

static_assert(std::endian::native == std::endian::little, "tensor blobs are written in host byte order");

namespace {

std::string exact(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

} // namespace

void save_params(const fs::path &path, const FusionParams &params) {
    using nlohmann::json;
    const auto &cfg = params.config();
    json header;
    header["__metadata__"] = {{"feature_dim", std::to_string(cfg.feature_dim)},
                              {"hidden", std::to_string(cfg.hidden)},
                              {"bands", std::to_string(cfg.bands)},
                              {"lambda_mix", exact(cfg.lambda_mix)}};
    for (const auto &info : params.layout()) {
        const std::size_t begin = info.offset * sizeof(float);
        const std::size_t end = begin + static_cast<std::size_t>(info.rows) * info.cols * sizeof(float);
        json shape = info.cols == 1 ? json::array({info.rows}) : json::array({info.rows, info.cols});
        header[std::string(info.name)] = {{"dtype", "F32"}, {"shape", shape}, {"data_offsets", {begin, end}}};
    }
    std::string text = header.dump();
    while (text.size() % 8 != 0) {
        text.push_back(' ');
    }
    std::string out(8, '\0');
    const std::uint64_t length = text.size();
    std::memcpy(out.data(), &length, 8);
    out += text;
    const auto values = params.values();
    const std::size_t data = out.size();
    out.resize(data + values.size() * sizeof(float));
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto v = static_cast<float>(values[i]);
        std::memcpy(out.data() + data + i * sizeof(float), &v, sizeof(float));
    }
    write_file_atomic(path, out);
}

FusionParams load_params(const fs::path &path) {
    using nlohmann::json;
    const std::string bytes = read_file(path);
    if (bytes.size() < 8) {
        throw Error(ErrorCode::MalformedHeader, "tensor blob is too short");
    }
    std::uint64_t length = 0;
    std::memcpy(&length, bytes.data(), 8);
    if (length > bytes.size() - 8) {
        throw Error(ErrorCode::MalformedHeader, "tensor blob header overruns the file");
    }
    json header;
    FusionParams::Config cfg;
    try {
        header = json::parse(bytes.substr(8, length));
        const auto &meta = header.at("__metadata__");
        cfg.feature_dim = std::stoi(meta.at("feature_dim").get<std::string>());
        cfg.hidden = std::stoi(meta.at("hidden").get<std::string>());
        cfg.bands = std::stoi(meta.at("bands").get<std::string>());
        cfg.lambda_mix = std::stod(meta.at("lambda_mix").get<std::string>());
    } catch (const std::exception &e) {
        throw Error(ErrorCode::MalformedHeader, std::string("bad tensor blob header: ") + e.what());
    }
    if (cfg.feature_dim <= 0 || cfg.hidden <= 0 || cfg.bands <= 0) {
        throw Error(ErrorCode::MalformedHeader, "tensor blob dimensions must be positive");
    }
    FusionParams params(cfg);
    const std::size_t data = 8 + length;
    for (const auto &info : params.layout()) {
        const std::string name(info.name);
        if (!header.contains(name)) {
            throw Error(ErrorCode::MalformedHeader, "tensor blob lacks " + name);
        }
        const auto &entry = header[name];
        std::size_t expected = 1;
        std::size_t begin = 0;
        std::size_t end = 0;
        std::size_t width = 0;
        try {
            const std::string dtype = entry.at("dtype").get<std::string>();
            width = dtype == "F32" ? sizeof(float) : dtype == "F64" ? sizeof(double) : 0;
            if (width == 0) {
                throw Error(ErrorCode::MalformedHeader, name + " has unsupported dtype " + dtype);
            }
            for (const auto &d : entry.at("shape")) {
                expected *= d.get<std::size_t>();
            }
            begin = entry.at("data_offsets").at(0).get<std::size_t>();
            end = entry.at("data_offsets").at(1).get<std::size_t>();
        } catch (const json::exception &e) {
            throw Error(ErrorCode::MalformedHeader, name + ": " + e.what());
        }
        const std::size_t count = static_cast<std::size_t>(info.rows) * info.cols;
        if (expected != count || end < begin || end - begin != count * width || data + end > bytes.size()) {
            throw Error(ErrorCode::MalformedHeader, name + " has the wrong shape or byte range");
        }
        double *dst = params.values().data() + info.offset;
        for (std::size_t i = 0; i < count; ++i) {
            const char *src = bytes.data() + data + begin + i * width;
            if (width == sizeof(float)) {
                float v;
                std::memcpy(&v, src, sizeof(float));
                dst[i] = v;
            } else {
                std::memcpy(&dst[i], src, sizeof(double));
            }
        }
    }
    params.validate();
    return params;
}

} // namespace voxfuse
