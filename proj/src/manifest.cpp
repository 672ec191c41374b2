// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/io.hpp"

#include <json.hpp>

#include <cstring>
#include <iomanip>
#include <sstream>

namespace voxfuse {
namespace {

using nlohmann::json;

json matrix_json(const Eigen::Matrix3d &m) {
    json out = json::array();
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            out.push_back(m(r, c));
        }
    }
    return out;
}

Eigen::Matrix3d matrix_from(const json &j, const char *what) {
    if (!j.is_array() || j.size() != 9) {
        throw Error(ErrorCode::InvalidCamera, std::string(what) + " must hold 9 numbers, row-major");
    }
    Eigen::Matrix3d m;
    for (int i = 0; i < 9; ++i) {
        m(i / 3, i % 3) = j.at(static_cast<std::size_t>(i)).get<double>();
    }
    return m;
}

json camera_json(const CameraModel &camera) {
    return json{{"R", matrix_json(camera.R)},
                {"T", {camera.T.x(), camera.T.y(), camera.T.z()}},
                {"K", matrix_json(camera.K)},
                {"width", camera.width},
                {"height", camera.height}};
}

CameraModel camera_from(const json &j) {
    try {
        CameraModel camera;
        camera.R = matrix_from(j.at("R"), "R");
        camera.K = matrix_from(j.at("K"), "K");
        const auto &t = j.at("T");
        if (!t.is_array() || t.size() != 3) {
            throw Error(ErrorCode::InvalidCamera, "T must hold 3 numbers");
        }
        camera.T = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
        camera.width = j.at("width").get<int>();
        camera.height = j.at("height").get<int>();
        validate_camera(camera);
        return camera;
    } catch (const json::exception &e) {
        throw Error(ErrorCode::InvalidCamera, std::string("bad camera record: ") + e.what());
    }
}

json parse_json(const fs::path &path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error &e) {
        throw Error(ErrorCode::BadConfig, path.string() + ": " + e.what());
    }
}

void write_json(const fs::path &path, const json &j) { write_file_atomic(path, j.dump(2) + "\n"); }

Image require_extent(Image image, const CameraModel &camera, int channels, const std::string &what) {
    if (image.height() != camera.height || image.width() != camera.width || image.channels() != channels) {
        throw Error(ErrorCode::ShapeMismatch, what + " does not match the camera extent");
    }
    return image;
}

std::string frame_name(std::size_t t, std::string_view suffix) {
    std::ostringstream name;
    name << "frame_" << std::setw(3) << std::setfill('0') << t << suffix;
    return name.str();
}

} // namespace

void save_camera(const fs::path &path, const CameraModel &camera) { write_json(path, camera_json(camera)); }

CameraModel load_camera(const fs::path &path) { return camera_from(parse_json(path)); }

void save_sky(const fs::path &path, const SkyModel &sky) {
    json coeffs = json::array();
    for (int k = 0; k < 9; ++k) {
        coeffs.push_back({sky.coeffs(k, 0), sky.coeffs(k, 1), sky.coeffs(k, 2)});
    }
    write_json(path, json{{"sh_degree", 2}, {"coeffs", coeffs}});
}

SkyModel load_sky(const fs::path &path) {
    const json j = parse_json(path);
    try {
        const auto &coeffs = j.at("coeffs");
        if (!coeffs.is_array() || coeffs.size() != 9) {
            throw Error(ErrorCode::BadConfig, "sky model needs 9 rows of RGB coefficients");
        }
        SkyModel sky;
        for (std::size_t k = 0; k < 9; ++k) {
            for (std::size_t c = 0; c < 3; ++c) {
                sky.coeffs(static_cast<int>(k), static_cast<int>(c)) = coeffs.at(k).at(c).get<double>();
            }
        }
        return sky;
    } catch (const json::exception &e) {
        throw Error(ErrorCode::BadConfig, std::string("bad sky model: ") + e.what());
    }
}

void write_raw_map(const fs::path &path, const Image &image) {
    const auto data = image.data();
    std::string bytes(data.size() * sizeof(float), '\0');
    std::memcpy(bytes.data(), data.data(), bytes.size());
    write_file_atomic(path, bytes);
    fs::path sidecar = path;
    sidecar += ".json";
    write_json(sidecar, json{{"height", image.height()},
                             {"width", image.width()},
                             {"channels", image.channels()},
                             {"dtype", "float32"}});
}

Image read_raw_map(const fs::path &path) {
    fs::path sidecar = path;
    sidecar += ".json";
    const json meta = parse_json(sidecar);
    int h = 0;
    int w = 0;
    int c = 0;
    try {
        h = meta.at("height").get<int>();
        w = meta.at("width").get<int>();
        c = meta.at("channels").get<int>();
        if (meta.value("dtype", "float32") != "float32") {
            throw Error(ErrorCode::MalformedHeader, "raw maps must be float32");
        }
    } catch (const json::exception &e) {
        throw Error(ErrorCode::MalformedHeader, std::string("bad raw map sidecar: ") + e.what());
    }
    if (h <= 0 || w <= 0 || c <= 0) {
        throw Error(ErrorCode::MalformedHeader, "raw map extent must be positive");
    }
    const std::string bytes = read_file(path);
    Image image(h, w, c);
    if (bytes.size() != image.data().size() * sizeof(float)) {
        throw Error(ErrorCode::ShapeMismatch, path.string() + " size does not match its sidecar");
    }
    std::memcpy(image.data().data(), bytes.data(), bytes.size());
    return image;
}

std::vector<FrameObservation> load_manifest(const fs::path &manifest_path) {
    const json manifest = parse_json(manifest_path);
    const fs::path root = manifest_path.parent_path();
    std::vector<FrameObservation> frames;
    try {
        const auto &list = manifest.at("frames");
        if (!list.is_array() || list.empty()) {
            throw Error(ErrorCode::EmptyInput, "manifest lists no frames");
        }
        for (const auto &entry : list) {
            FrameObservation frame;
            frame.camera = camera_from(entry.at("camera"));
            frame.timestamp = entry.at("timestamp").get<double>();
            const auto &cam = frame.camera;
            frame.image = require_extent(read_image(root / entry.at("image").get<std::string>()), cam, 3, "image");
            frame.depth = require_extent(read_image(root / entry.at("depth").get<std::string>()), cam, 1, "depth");
            if (entry.contains("dyn_mask")) {
                frame.dyn_mask =
                    require_extent(read_image(root / entry["dyn_mask"].get<std::string>()), cam, 1, "dyn_mask");
            }
            if (entry.contains("sky_mask")) {
                frame.sky_mask =
                    require_extent(read_image(root / entry["sky_mask"].get<std::string>()), cam, 1, "sky_mask");
            }
            if (entry.contains("normals")) {
                frame.normal_gt =
                    require_extent(read_image(root / entry["normals"].get<std::string>()), cam, 3, "normals");
            }
            if (entry.contains("gaussian_map")) {
                frame.gaussian_map = require_extent(read_raw_map(root / entry["gaussian_map"].get<std::string>()),
                                                    cam, kGaussianMapChannels, "gaussian_map");
            }
            frames.push_back(std::move(frame));
        }
    } catch (const json::exception &e) {
        throw Error(ErrorCode::BadConfig, std::string("bad manifest: ") + e.what());
    }
    for (std::size_t t = 1; t < frames.size(); ++t) {
        if (!(frames[t].timestamp > frames[t - 1].timestamp)) {
            throw Error(ErrorCode::BadTimestamps, "frame timestamps must increase strictly");
        }
    }
    const double first = frames.front().timestamp;
    const double span = frames.back().timestamp - first;
    for (auto &frame : frames) {
        frame.timestamp = span > 0.0 ? (frame.timestamp - first) / span : 0.0;
        validate_frame(frame);
    }
    return frames;
}

void write_manifest(const fs::path &manifest_path, std::span<const FrameObservation> frames) {
    const fs::path root = manifest_path.parent_path();
    json list = json::array();
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const auto &frame = frames[t];
        json entry{{"timestamp", frame.timestamp}, {"camera", camera_json(frame.camera)}};
        entry["image"] = frame_name(t, ".ppm");
        write_ppm(root / entry["image"].get<std::string>(), frame.image);
        entry["depth"] = frame_name(t, "_depth.pfm");
        write_pfm(root / entry["depth"].get<std::string>(), frame.depth);
        if (!frame.dyn_mask.empty()) {
            entry["dyn_mask"] = frame_name(t, "_dyn.pgm");
            write_pgm(root / entry["dyn_mask"].get<std::string>(), frame.dyn_mask);
        }
        if (!frame.sky_mask.empty()) {
            entry["sky_mask"] = frame_name(t, "_sky.pgm");
            write_pgm(root / entry["sky_mask"].get<std::string>(), frame.sky_mask);
        }
        if (frame.normal_gt) {
            entry["normals"] = frame_name(t, "_normals.pfm");
            write_pfm(root / entry["normals"].get<std::string>(), *frame.normal_gt);
        }
        if (frame.gaussian_map) {
            entry["gaussian_map"] = frame_name(t, "_gmap.f32");
            write_raw_map(root / entry["gaussian_map"].get<std::string>(), *frame.gaussian_map);
        }
        list.push_back(std::move(entry));
    }
    write_json(manifest_path, json{{"frames", list}});
}

} // namespace voxfuse
