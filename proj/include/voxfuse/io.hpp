// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "voxfuse/core.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace voxfuse {

namespace fs = std::filesystem;

/// Reads a whole file. Throws MissingFile if it does not exist.
std::string read_file(const fs::path &path);

/// Writes through a temporary sibling and renames it into place. Creates missing
/// parent directories.
void write_file_atomic(const fs::path &path, std::string_view bytes);

// Netpbm family. PPM (P6) and PGM (P5) hold 8-bit values mapped to [0, 1]; PFM
// (PF colour, Pf grey) holds raw floats. read_image dispatches on the magic.

Image read_image(const fs::path &path);
void write_ppm(const fs::path &path, const Image &rgb);
void write_pgm(const fs::path &path, const Image &gray);
void write_pfm(const fs::path &path, const Image &image);

// Binary little-endian float32 PLY with the usual splat properties (x y z, f_dc_*, opacity
// as a logit, scale_* as logs, rot_*) plus timestamp, source_frame, source_pixel
// and feat_*. Reading also accepts ascii files, uchar red/green/blue colours and
// skips unknown properties.

void write_ply(const fs::path &path, std::span<const GaussianPrimitive> primitives,
               std::span<const double> frame_timestamps = {});
std::vector<GaussianPrimitive> read_ply(const fs::path &path, std::vector<double> *frame_timestamps = nullptr);

void write_space(const fs::path &path, const CanonicalSpace &space);
CanonicalSpace read_space(const fs::path &path);

// Small JSON documents.

void save_camera(const fs::path &path, const CameraModel &camera);
CameraModel load_camera(const fs::path &path);
void save_sky(const fs::path &path, const SkyModel &sky);
SkyModel load_sky(const fs::path &path);

/// Tensor blob: 8-byte little-endian header length, JSON header naming each
/// tensor's dtype, shape and byte range, then raw little-endian float32 data.
/// Loading also accepts F64 tensors.
void save_params(const fs::path &path, const FusionParams &params);
FusionParams load_params(const fs::path &path);

/// Raw float32 channels with a JSON sidecar (path + ".json") giving the extent.
void write_raw_map(const fs::path &path, const Image &image);
Image read_raw_map(const fs::path &path);

/// Frame list with per-frame timestamp, camera and relative file paths. Loaded
/// timestamps are renormalized to [0, 1] and must increase strictly
/// (BadTimestamps otherwise).
std::vector<FrameObservation> load_manifest(const fs::path &manifest_path);

/// Writes every frame's maps next to manifest_path and the manifest itself.
void write_manifest(const fs::path &manifest_path, std::span<const FrameObservation> frames);

} // namespace voxfuse
