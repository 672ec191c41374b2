// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "voxfuse/core.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace voxfuse {

/// How the oscillating primitives evolve between frames.
enum class DeformProfile {
    /// State at tau equals the smooth state at the nearest frame time (earlier
    /// frame on ties), so the nearest frame is always the exact answer.
    Piecewise,
    /// State follows the sinusoid continuously.
    Smooth,
};

struct SynthConfig {
    int n_frames = 4;
    int n_gaussians = 500;
    /// Depth oscillation amplitude in voxel units; colour oscillation scales with it.
    double deform_amplitude = 0.4;
    double dynamic_fraction = 0.5;
    /// Voxel size the layout is calibrated for, scene units.
    double rho = 0.002;
    DeformProfile profile = DeformProfile::Piecewise;
};

/// Procedural scene: a gently tilted, textured ground surface of disc-shaped
/// primitives with scattered ellipsoid clutter in front of it, seen by a static
/// pinhole camera, with a sky band above it. Every primitive owns one pixel in
/// every frame. Depths sit at voxel centres of the
/// calibrated grid; dynamic primitives oscillate in depth (along their pixel ray)
/// and colour, so their per-frame observations share a voxel at the calibrated
/// size and compete inside it.
class SyntheticScene {
public:
    struct Primitive {
        int u = 0;
        int v = 0;
        double depth = 0.0;
        bool dynamic = false;
        double depth_phase = 0.0;
        double color_phase = 0.0;
        std::array<float, kGaussianMapChannels> raw{};
    };

    SynthConfig config;
    std::uint64_t seed = 0;
    CameraModel camera;
    SkyModel sky;
    std::vector<Primitive> primitives;
    std::vector<int> pixel_owner; // per linear pixel, primitive id or -1
    std::vector<FrameObservation> frames;

    std::vector<double> timestamps() const;

    /// Index of the frame nearest tau (earlier frame on ties).
    std::size_t nearest_frame(double tau) const;

    /// Ground-truth primitive set at tau, indexed by primitive id, with
    /// source_frame set to the nearest frame. At a frame timestamp this equals the
    /// decoded gaussian map of that frame bitwise.
    std::vector<GaussianPrimitive> true_state(double tau) const;

    /// Primitive id that produced a lifted primitive, -1 if none.
    int owner_of(const GaussianPrimitive &g) const;

    std::size_t dynamic_count() const;

private:
    friend SyntheticScene synth_scene(std::uint64_t, const SynthConfig &);
    struct RawState {
        float depth;
        std::array<float, kGaussianMapChannels> raw;
    };
    RawState raw_state(const Primitive &p, double generative_time) const;
    double generative_time(double tau) const;
};

/// Deterministic in (seed, config). Throws BadConfig for n_frames < 2 or other
/// out-of-range settings.
SyntheticScene synth_scene(std::uint64_t seed, const SynthConfig &config = {});

} // namespace voxfuse
