// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "voxfuse/core.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace voxfuse {

/// Integer cell of a mean: componentwise round(mu / rho), ties away from zero.
VoxelKey voxel_key(const Eigen::Vector3d &mu, double rho);

/// Groups primitives sharing a voxel key. Throws NonPositiveRho unless rho > 0.
VoxelPartition voxelize(std::span<const GaussianPrimitive> primitives, double rho);
inline VoxelPartition voxelize(const CanonicalSpace &space, double rho) {
    return voxelize(space.primitives, rho);
}

/// [sin(2^0 pi tau), cos(2^0 pi tau), ..., sin(2^(L-1) pi tau), cos(2^(L-1) pi tau)].
Eigen::VectorXd encode_time(double tau, int bands);

/// phi_t(gamma(tau)).
Eigen::VectorXd time_embedding(double tau, const FusionParams &params);

/// h = phi_f(feature) + phi_t(gamma(timestamp)).
Eigen::VectorXd context_embedding(const GaussianPrimitive &g, const FusionParams &params);

/// MLP_attn([h_i; h_star]), 2H -> H (SiLU) -> 1.
double relevance_logit(const Eigen::VectorXd &h_i, const Eigen::VectorXd &h_star, const FusionParams &params);

/// Temperature-scaled softmax with max subtraction.
std::vector<double> intra_voxel_weights(std::span<const double> logits, double beta);

/// Attribute-specific fusion of one voxel. Requires |cell| == |w| >= 1 and
/// sum(w) == 1 within 1e-6.
GaussianPrimitive fuse_voxel(std::span<const GaussianPrimitive> cell, std::span<const double> weights,
                             double lambda_mix, double tau_star);

/// Where the softmax over relevance logits is normalized. Global is the ablation
/// without intra-voxel normalization: one softmax across every primitive.
enum class WeightNormalization { IntraVoxel, Global };

struct VoxelFusionResult {
    std::vector<GaussianPrimitive> fused;        // one per non-empty voxel
    std::vector<VoxelKey> voxel_ids;             // aligned with fused, lexicographic
    std::vector<std::vector<std::size_t>> members;
    std::vector<std::vector<double>> weights;    // aligned with members
};

/// Voxelize, embed, score, normalize and fuse every non-empty voxel for tau_star.
VoxelFusionResult aggregate(const CanonicalSpace &space, double tau_star, const FusionParams &params,
                            double rho, WeightNormalization mode = WeightNormalization::IntraVoxel);

/// Context/target split of one training step. With probability p_drop the
/// frame at tau_star is withheld from the context; it is always the target.
struct DropoutSplit {
    std::vector<std::size_t> context;
    std::size_t target = 0;
    bool withheld = false;
};

/// Requires >= 2 frames and exactly one with timestamp tau_star (QueryFrameAbsent
/// otherwise). Deterministic in seed.
DropoutSplit dropout_query_frame(std::span<const double> timestamps, double tau_star, double p_drop,
                                 std::uint64_t seed);
DropoutSplit dropout_query_frame(std::span<const FrameObservation> frames, double tau_star, double p_drop,
                                 std::uint64_t seed);

// Batched network evaluation shared by aggregate() and training.

double silu(double x);
double silu_grad(double x);

/// Column-major inputs of the attention network for a fixed set of primitives.
struct AttentionInputs {
    Eigen::MatrixXd features;         // D_f x N
    std::vector<double> times;        // distinct timestamps, ascending
    std::vector<int> time_index;      // per primitive, index into times

    static AttentionInputs from(std::span<const GaussianPrimitive> primitives, int feature_dim);
    std::size_t size() const { return time_index.size(); }
};

/// Intermediates of one forward pass. Time columns are the distinct timestamps
/// followed by the query time in the last column.
struct AttentionForward {
    Eigen::MatrixXd time_gamma; // 2L x (K+1)
    Eigen::MatrixXd time_pre;   // H x (K+1)
    Eigen::MatrixXd time_out;   // H x (K+1)
    Eigen::MatrixXd context;    // H x N
    Eigen::MatrixXd attn_pre;   // H x N
    Eigen::VectorXd logits;     // N
    Eigen::VectorXd query() const { return time_out.col(time_out.cols() - 1); }
};

AttentionForward attention_forward(const FusionParams &params, const AttentionInputs &inputs, double tau_star);

/// Softmax of logits / beta, normalized per voxel (IntraVoxel) or across all
/// primitives (Global). Result is indexed by primitive.
Eigen::VectorXd normalized_weights(const Eigen::VectorXd &logits, const VoxelPartition &partition,
                                   double beta, WeightNormalization mode);

/// Position within `members` of the member that fixes the quaternion hemisphere:
/// the first under (source_frame, source_pixel, timestamp, mu, sign-canonical
/// rotation) order, so the choice does not depend on input order.
std::size_t hemisphere_reference(std::span<const GaussianPrimitive> primitives,
                                 std::span<const std::size_t> members);

/// Estimators applied with externally supplied weights; the weights need not sum
/// to one (Global mode).
GaussianPrimitive fuse_members(std::span<const GaussianPrimitive> primitives,
                               std::span<const std::size_t> members, std::span<const double> weights,
                               double lambda_mix, double tau_star);

} // namespace voxfuse
