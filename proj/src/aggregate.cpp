// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/aggregate.hpp"
#include "voxfuse/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

namespace voxfuse {
namespace {

struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey &k) const noexcept {
        const auto a = static_cast<std::uint64_t>(k[0]);
        const auto b = static_cast<std::uint64_t>(k[1]);
        const auto c = static_cast<std::uint64_t>(k[2]);
        return static_cast<std::size_t>(a * 73856093ULL ^ b * 19349669ULL ^ c * 83492791ULL);
    }
};

double weight_sum(std::span<const double> w) {
    double s = 0.0;
    for (double x : w) {
        s += x;
    }
    return s;
}

} // namespace

VoxelKey voxel_key(const Eigen::Vector3d &mu, double rho) {
    VoxelKey key{};
    for (int i = 0; i < 3; ++i) {
        const double scaled = mu[i] / rho;
        if (!std::isfinite(scaled) || std::abs(scaled) > 9.0e18) {
            throw Error(ErrorCode::NonFinite, "mean cannot be quantized at this voxel size");
        }
        key[i] = static_cast<std::int64_t>(std::round(scaled));
    }
    return key;
}

VoxelPartition voxelize(std::span<const GaussianPrimitive> primitives, double rho) {
    if (!(rho > 0.0) || !std::isfinite(rho)) {
        throw Error(ErrorCode::NonPositiveRho, "voxel size must be positive");
    }
    std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> slot;
    slot.reserve(primitives.size());
    VoxelPartition partition;
    partition.rho = rho;
    for (std::size_t i = 0; i < primitives.size(); ++i) {
        const VoxelKey key = voxel_key(primitives[i].mu, rho);
        const auto [it, inserted] = slot.try_emplace(key, partition.cells.size());
        if (inserted) {
            partition.cells.push_back({key, {}});
        }
        partition.cells[it->second].members.push_back(i);
    }
    std::sort(partition.cells.begin(), partition.cells.end(),
              [](const VoxelCell &a, const VoxelCell &b) { return a.key < b.key; });
    return partition;
}

Eigen::VectorXd encode_time(double tau, int bands) {
    if (bands < 1) {
        throw Error(ErrorCode::InvalidArgument, "band count must be at least 1");
    }
    Eigen::VectorXd gamma(2 * bands);
    double freq = std::numbers::pi;
    for (int l = 0; l < bands; ++l) {
        gamma[2 * l] = std::sin(freq * tau);
        gamma[2 * l + 1] = std::cos(freq * tau);
        freq *= 2.0;
    }
    return gamma;
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_grad(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

Eigen::VectorXd time_embedding(double tau, const FusionParams &params) {
    using P = FusionParams;
    const Eigen::VectorXd gamma = encode_time(tau, params.config().bands);
    const Eigen::VectorXd pre = params.tensor(P::Time0Weight) * gamma + params.tensor(P::Time0Bias);
    return params.tensor(P::Time1Weight) * pre.unaryExpr(&silu) + params.tensor(P::Time1Bias);
}

Eigen::VectorXd context_embedding(const GaussianPrimitive &g, const FusionParams &params) {
    using P = FusionParams;
    if (g.feature.size() != params.config().feature_dim) {
        throw Error(ErrorCode::DimensionMismatch, "primitive feature size does not match the encoder");
    }
    const Eigen::VectorXd feature = params.tensor(P::FeatureWeight) * g.feature + params.tensor(P::FeatureBias);
    return feature + time_embedding(g.timestamp, params);
}

double relevance_logit(const Eigen::VectorXd &h_i, const Eigen::VectorXd &h_star, const FusionParams &params) {
    using P = FusionParams;
    const int h = params.config().hidden;
    if (h_i.size() != h || h_star.size() != h) {
        throw Error(ErrorCode::DimensionMismatch, "embedding size does not match the attention MLP");
    }
    const auto w0 = params.tensor(P::Attn0Weight);
    const Eigen::VectorXd pre =
        w0.leftCols(h) * h_i + w0.rightCols(h) * h_star + params.tensor(P::Attn0Bias);
    return (params.tensor(P::Attn1Weight) * pre.unaryExpr(&silu))(0, 0) + params.tensor(P::Attn1Bias)(0, 0);
}

std::vector<double> intra_voxel_weights(std::span<const double> logits, double beta) {
    if (logits.empty()) {
        throw Error(ErrorCode::EmptyVoxel, "softmax over an empty voxel");
    }
    if (!(beta > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "temperature beta must be positive");
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> w(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        w[i] = std::exp((logits[i] - top) / beta);
        z += w[i];
    }
    for (auto &x : w) {
        x /= z;
    }
    return w;
}

namespace {

Eigen::Vector4d sign_canonical(const Eigen::Vector4d &q) {
    for (int i = 0; i < 4; ++i) {
        if (q[i] != 0.0) {
            return q[i] < 0.0 ? Eigen::Vector4d(-q) : q;
        }
    }
    return q;
}

bool precedes(const GaussianPrimitive &a, const GaussianPrimitive &b) {
    if (a.source_frame != b.source_frame) {
        return a.source_frame < b.source_frame;
    }
    if (a.source_pixel != b.source_pixel) {
        return a.source_pixel < b.source_pixel;
    }
    if (a.timestamp != b.timestamp) {
        return a.timestamp < b.timestamp;
    }
    if (a.mu != b.mu) {
        return std::lexicographical_compare(a.mu.begin(), a.mu.end(), b.mu.begin(), b.mu.end());
    }
    const Eigen::Vector4d qa = sign_canonical(a.rotation);
    const Eigen::Vector4d qb = sign_canonical(b.rotation);
    return std::lexicographical_compare(qa.begin(), qa.end(), qb.begin(), qb.end());
}

} // namespace

std::size_t hemisphere_reference(std::span<const GaussianPrimitive> primitives,
                                 std::span<const std::size_t> members) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < members.size(); ++k) {
        if (precedes(primitives[members[k]], primitives[members[best]])) {
            best = k;
        }
    }
    return best;
}

GaussianPrimitive fuse_members(std::span<const GaussianPrimitive> primitives,
                               std::span<const std::size_t> members, std::span<const double> weights,
                               double lambda_mix, double tau_star) {
    if (members.empty()) {
        throw Error(ErrorCode::EmptyVoxel, "cannot fuse an empty voxel");
    }
    if (members.size() != weights.size()) {
        throw Error(ErrorCode::DimensionMismatch, "one weight per member is required");
    }
    const GaussianPrimitive &first = primitives[members[0]];
    const Eigen::Vector4d reference = primitives[members[hemisphere_reference(primitives, members)]].rotation;
    GaussianPrimitive out;
    out.mu.setZero();
    out.color.setZero();
    out.feature = Eigen::VectorXd::Zero(first.feature.size());
    Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
    Eigen::Vector4d q_sum = Eigen::Vector4d::Zero();
    double max_opacity = 0.0;
    double mean_opacity = 0.0;
    double top_weight = -1.0;
    for (std::size_t k = 0; k < members.size(); ++k) {
        const GaussianPrimitive &g = primitives[members[k]];
        const double w = weights[k];
        out.mu += w * g.mu;
        out.color += w * g.color;
        mean_opacity += w * g.opacity;
        max_opacity = std::max(max_opacity, g.opacity);
        log_scale += w * g.scale.array().log().matrix();
        const double sign = g.rotation.dot(reference) < 0.0 ? -1.0 : 1.0;
        q_sum += (w * sign) * g.rotation;
        if (g.feature.size() == out.feature.size()) {
            out.feature += w * g.feature;
        }
        if (w > top_weight) {
            top_weight = w;
            out.source_frame = g.source_frame;
            out.source_pixel = g.source_pixel;
        }
    }
    const double q_norm = q_sum.norm();
    if (!(q_norm >= 1e-8 * weight_sum(weights)) || !(q_norm > 0.0)) {
        throw Error(ErrorCode::DegenerateQuaternionSum, "weighted quaternion sum vanishes");
    }
    out.rotation = q_sum / q_norm;
    out.opacity = lambda_mix * max_opacity + (1.0 - lambda_mix) * mean_opacity;
    out.scale = log_scale.array().exp().matrix();
    out.timestamp = tau_star;
    return out;
}

GaussianPrimitive fuse_voxel(std::span<const GaussianPrimitive> cell, std::span<const double> weights,
                             double lambda_mix, double tau_star) {
    if (cell.empty()) {
        throw Error(ErrorCode::EmptyVoxel, "cannot fuse an empty voxel");
    }
    if (std::abs(weight_sum(weights) - 1.0) > 1e-6) {
        throw Error(ErrorCode::InvalidArgument, "voxel weights must sum to one");
    }
    std::vector<std::size_t> members(cell.size());
    for (std::size_t i = 0; i < members.size(); ++i) {
        members[i] = i;
    }
    return fuse_members(cell, members, weights, lambda_mix, tau_star);
}

AttentionInputs AttentionInputs::from(std::span<const GaussianPrimitive> primitives, int feature_dim) {
    AttentionInputs in;
    in.features.resize(feature_dim, static_cast<Eigen::Index>(primitives.size()));
    for (std::size_t i = 0; i < primitives.size(); ++i) {
        const auto &f = primitives[i].feature;
        if (f.size() != feature_dim) {
            throw Error(ErrorCode::DimensionMismatch, "primitive feature size does not match the encoder");
        }
        in.features.col(static_cast<Eigen::Index>(i)) = f;
        in.times.push_back(primitives[i].timestamp);
    }
    std::sort(in.times.begin(), in.times.end());
    in.times.erase(std::unique(in.times.begin(), in.times.end()), in.times.end());
    in.time_index.resize(primitives.size());
    for (std::size_t i = 0; i < primitives.size(); ++i) {
        const auto it = std::lower_bound(in.times.begin(), in.times.end(), primitives[i].timestamp);
        in.time_index[i] = static_cast<int>(it - in.times.begin());
    }
    return in;
}

AttentionForward attention_forward(const FusionParams &params, const AttentionInputs &inputs, double tau_star) {
    using P = FusionParams;
    const int h = params.config().hidden;
    if (inputs.features.rows() != params.config().feature_dim) {
        throw Error(ErrorCode::DimensionMismatch, "feature size does not match the encoder");
    }
    const auto k = static_cast<Eigen::Index>(inputs.times.size());
    const auto n = static_cast<Eigen::Index>(inputs.size());
    AttentionForward f;
    f.time_gamma.resize(params.time_dim(), k + 1);
    for (Eigen::Index j = 0; j < k; ++j) {
        f.time_gamma.col(j) = encode_time(inputs.times[j], params.config().bands);
    }
    f.time_gamma.col(k) = encode_time(tau_star, params.config().bands);
    f.time_pre = (params.tensor(P::Time0Weight) * f.time_gamma).colwise() +
                 params.tensor(P::Time0Bias).col(0);
    f.time_out = (params.tensor(P::Time1Weight) * f.time_pre.unaryExpr(&silu)).colwise() +
                 params.tensor(P::Time1Bias).col(0);

    f.context = (params.tensor(P::FeatureWeight) * inputs.features).colwise() +
                params.tensor(P::FeatureBias).col(0);
    for (Eigen::Index i = 0; i < n; ++i) {
        f.context.col(i) += f.time_out.col(inputs.time_index[i]);
    }
    const auto w0 = params.tensor(P::Attn0Weight);
    const Eigen::VectorXd query_term = w0.rightCols(h) * f.time_out.col(k) + params.tensor(P::Attn0Bias).col(0);
    f.attn_pre = (w0.leftCols(h) * f.context).colwise() + query_term;
    f.logits = (params.tensor(P::Attn1Weight) * f.attn_pre.unaryExpr(&silu)).transpose();
    f.logits.array() += params.tensor(P::Attn1Bias)(0, 0);
    return f;
}

Eigen::VectorXd normalized_weights(const Eigen::VectorXd &logits, const VoxelPartition &partition,
                                   double beta, WeightNormalization mode) {
    if (!(beta > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "temperature beta must be positive");
    }
    Eigen::VectorXd w(logits.size());
    if (mode == WeightNormalization::Global) {
        const double top = logits.maxCoeff();
        w = ((logits.array() - top) / beta).exp();
        w /= w.sum();
        return w;
    }
    for (const auto &cell : partition.cells) {
        double top = -std::numeric_limits<double>::infinity();
        for (auto i : cell.members) {
            top = std::max(top, logits[static_cast<Eigen::Index>(i)]);
        }
        double z = 0.0;
        for (auto i : cell.members) {
            const double e = std::exp((logits[static_cast<Eigen::Index>(i)] - top) / beta);
            w[static_cast<Eigen::Index>(i)] = e;
            z += e;
        }
        for (auto i : cell.members) {
            w[static_cast<Eigen::Index>(i)] /= z;
        }
    }
    return w;
}

DropoutSplit dropout_query_frame(std::span<const double> timestamps, double tau_star, double p_drop,
                                 std::uint64_t seed) {
    if (timestamps.size() < 2) {
        throw Error(ErrorCode::InvalidArgument, "frame dropout needs at least two frames");
    }
    if (!(p_drop >= 0.0 && p_drop <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "dropout probability must lie in [0, 1]");
    }
    std::size_t matches = 0;
    DropoutSplit split;
    for (std::size_t t = 0; t < timestamps.size(); ++t) {
        if (std::abs(timestamps[t] - tau_star) <= 1e-12) {
            split.target = t;
            ++matches;
        }
    }
    if (matches != 1) {
        throw Error(ErrorCode::QueryFrameAbsent, "exactly one frame must carry the query timestamp");
    }
    Rng rng(seed);
    split.withheld = rng.uniform() < p_drop;
    for (std::size_t t = 0; t < timestamps.size(); ++t) {
        if (!(split.withheld && t == split.target)) {
            split.context.push_back(t);
        }
    }
    return split;
}

DropoutSplit dropout_query_frame(std::span<const FrameObservation> frames, double tau_star, double p_drop,
                                 std::uint64_t seed) {
    std::vector<double> times;
    times.reserve(frames.size());
    for (const auto &f : frames) {
        times.push_back(f.timestamp);
    }
    return dropout_query_frame(times, tau_star, p_drop, seed);
}

VoxelFusionResult aggregate(const CanonicalSpace &space, double tau_star, const FusionParams &params,
                            double rho, WeightNormalization mode) {
    if (space.primitives.empty()) {
        throw Error(ErrorCode::EmptyInput, "canonical space has no primitives");
    }
    params.validate();
    const VoxelPartition partition = voxelize(space, rho);
    const AttentionInputs inputs = AttentionInputs::from(space.primitives, params.config().feature_dim);
    const AttentionForward forward = attention_forward(params, inputs, tau_star);
    const Eigen::VectorXd w = normalized_weights(forward.logits, partition, params.beta(), mode);

    VoxelFusionResult result;
    const std::size_t m = partition.cells.size();
    result.fused.resize(m);
    result.voxel_ids.resize(m);
    result.members.resize(m);
    result.weights.resize(m);
    for (std::size_t c = 0; c < m; ++c) {
        const auto &cell = partition.cells[c];
        std::vector<double> cw(cell.members.size());
        for (std::size_t k = 0; k < cw.size(); ++k) {
            cw[k] = w[static_cast<Eigen::Index>(cell.members[k])];
        }
        result.fused[c] = fuse_members(space.primitives, cell.members, cw, params.lambda_mix(), tau_star);
        result.voxel_ids[c] = cell.key;
        result.members[c] = cell.members;
        result.weights[c] = std::move(cw);
    }
    return result;
}

} // namespace voxfuse
