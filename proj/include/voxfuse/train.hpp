// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "voxfuse/aggregate.hpp"
#include "voxfuse/synth.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace voxfuse {

/// Lifted context of a synthetic scene prepared for repeated objective
/// evaluation: packed attributes, the voxel partition and, per voxel, the
/// distinct scene primitives its members were lifted from.
struct FusionProblem {
    std::vector<std::size_t> context_frames;
    std::vector<GaussianPrimitive> primitives;
    VoxelPartition partition;
    AttentionInputs inputs;
    Eigen::Matrix3Xd mu;
    Eigen::Matrix3Xd color;
    Eigen::Matrix3Xd log_scale;
    Eigen::Matrix4Xd rotation; // sign-aligned with the first member of its voxel
    std::vector<std::vector<int>> voxel_targets;
};

/// Lifts the given frames of the scene (frame indices in ascending order).
FusionProblem make_problem(const SyntheticScene &scene, std::span<const std::size_t> context_frames,
                           double rho);

/// Per scene primitive attributes that fused voxels are scored against.
struct TargetState {
    Eigen::Matrix3Xd mu;
    Eigen::Matrix3Xd color;
    Eigen::Matrix3Xd log_scale;
    Eigen::Matrix4Xd rotation;

    static TargetState at(const SyntheticScene &scene, double tau);
};

/// Mean over voxels with at least one target of the per-voxel mean over targets k
/// of |mu - mu_k|^2 + |c - c_k|^2 + |log s - log s_k|^2 + 1 - (q . q_k)^2, where
/// (mu, c, s, q) are the fused attributes under `weights` (indexed by primitive).
/// Throws NoMatchedVoxels when no voxel has a target.
double objective_from_weights(const FusionProblem &problem, const TargetState &target,
                              const Eigen::VectorXd &weights);

/// objective_from_weights under the network weights for tau_star. When `gradient`
/// is given it receives d objective / d params, in the same layout. Throws
/// NonFiniteObjective if the value is not finite.
double fusion_objective(const FusionParams &params, const FusionProblem &problem, const TargetState &target,
                        double tau_star, WeightNormalization mode = WeightNormalization::IntraVoxel,
                        FusionParams *gradient = nullptr);

/// Convenience form: lifts `context_frames` of the scene and scores against the
/// true state at tau_star.
double fusion_objective(const FusionParams &params, const SyntheticScene &scene, double tau_star, double rho,
                        std::span<const std::size_t> context_frames);

/// Central differences of f around x, one coordinate at a time. eps must lie in
/// [1e-6, 1e-3]; a non-finite evaluation throws NonFiniteObjective.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)> &f,
                                     std::span<const double> x, double eps = 1e-5);

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// AdamW over the flat parameter vector. Decay applies to weight matrices only;
/// beta is clamped to stay positive after every step.
class AdamW {
public:
    AdamW(const FusionParams &params, AdamWConfig config = {});
    void step(FusionParams &params, const FusionParams &gradient, double lr);
    std::size_t steps() const noexcept { return t_; }

private:
    AdamWConfig config_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::vector<char> decay_;
    std::size_t t_ = 0;
};

inline constexpr double kMinBeta = 1e-4;

/// Linear warmup over the first `warmup_fraction` of the run, cosine decay to zero
/// afterwards. Step is zero-based.
double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps, double warmup_fraction);

struct TrainConfig {
    std::size_t steps = 2000;
    double lr = 3e-3;
    std::uint64_t seed = 0;
    double rho = 0.002;
    double p_drop = 0.7;
    double warmup_fraction = 0.05;
    /// Probability that a step queries a uniform tau in [0, 1] with every frame in
    /// context instead of a frame timestamp under dropout.
    double continuous_fraction = 0.5;
    WeightNormalization mode = WeightNormalization::IntraVoxel;
    AdamWConfig optimizer;
};

struct TrainResult {
    FusionParams params;
    std::vector<double> loss_curve; // objective before each update
};

/// Deterministic in (scene, init, config).
TrainResult train_fusion(const SyntheticScene &scene, const FusionParams &init, const TrainConfig &config);

/// Query times (k + 0.5) / n for k < n.
std::vector<double> query_grid(std::size_t n);

/// Mean objective over the query grid with every frame in context.
double evaluation_objective(const FusionParams &params, const SyntheticScene &scene, double rho,
                            std::size_t queries = 100, WeightNormalization mode = WeightNormalization::IntraVoxel);

struct SelectionReport {
    /// Per query, fraction of contested voxels whose highest weight lands on a
    /// member lifted from the frame nearest the query.
    std::vector<double> per_query;
    /// Fraction of queries at or above the voxel threshold.
    double accuracy = 0.0;
};

/// A voxel is contested when its members come from more than one frame and
/// differ in at least one attribute.
SelectionReport selection_accuracy(const FusionParams &params, const SyntheticScene &scene, double rho,
                                   std::size_t queries = 100, double voxel_threshold = 0.9);

} // namespace voxfuse
