// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/train.hpp"
#include "voxfuse/lift.hpp"
#include "voxfuse/numeric.hpp"
#include "voxfuse/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace voxfuse {
namespace {

using P = FusionParams;

void pack(std::span<const GaussianPrimitive> prims, Eigen::Matrix3Xd &mu, Eigen::Matrix3Xd &color,
          Eigen::Matrix3Xd &log_scale, Eigen::Matrix4Xd &rotation) {
    const auto n = static_cast<Eigen::Index>(prims.size());
    mu.resize(3, n);
    color.resize(3, n);
    log_scale.resize(3, n);
    rotation.resize(4, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto &g = prims[static_cast<std::size_t>(i)];
        mu.col(i) = g.mu;
        color.col(i) = g.color;
        log_scale.col(i) = g.scale.array().log().matrix();
        rotation.col(i) = g.rotation;
    }
}

/// Objective and, optionally, its derivative with respect to every weight.
double weighted_objective(const FusionProblem &problem, const TargetState &target, const Eigen::VectorXd &w,
                          Eigen::VectorXd *grad_w) {
    const auto &cells = problem.partition.cells;
    std::size_t matched = 0;
    for (const auto &targets : problem.voxel_targets) {
        matched += targets.empty() ? 0 : 1;
    }
    if (matched == 0) {
        throw Error(ErrorCode::NoMatchedVoxels, "no voxel contains a primitive with a known target");
    }
    if (grad_w) {
        grad_w->setZero(w.size());
    }
    std::vector<double> losses;
    losses.reserve(matched);
    const double voxel_scale = 1.0 / static_cast<double>(matched);
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto &targets = problem.voxel_targets[c];
        if (targets.empty()) {
            continue;
        }
        const auto &members = cells[c].members;
        Eigen::Vector3d mu = Eigen::Vector3d::Zero();
        Eigen::Vector3d color = Eigen::Vector3d::Zero();
        Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
        Eigen::Vector4d q_sum = Eigen::Vector4d::Zero();
        double w_sum = 0.0;
        for (const auto m : members) {
            const auto i = static_cast<Eigen::Index>(m);
            mu += w[i] * problem.mu.col(i);
            color += w[i] * problem.color.col(i);
            log_scale += w[i] * problem.log_scale.col(i);
            q_sum += w[i] * problem.rotation.col(i);
            w_sum += w[i];
        }
        const double q_norm = q_sum.norm();
        if (!(q_norm >= 1e-8 * w_sum) || !(q_norm > 0.0)) {
            throw Error(ErrorCode::DegenerateQuaternionSum, "weighted quaternion sum vanishes");
        }
        const Eigen::Vector4d q = q_sum / q_norm;

        const double inv_k = 1.0 / static_cast<double>(targets.size());
        double loss = 0.0;
        Eigen::Vector3d g_mu = Eigen::Vector3d::Zero();
        Eigen::Vector3d g_color = Eigen::Vector3d::Zero();
        Eigen::Vector3d g_log_scale = Eigen::Vector3d::Zero();
        Eigen::Vector4d g_q = Eigen::Vector4d::Zero();
        for (const int id : targets) {
            const Eigen::Vector3d d_mu = mu - target.mu.col(id);
            const Eigen::Vector3d d_color = color - target.color.col(id);
            const Eigen::Vector3d d_log_scale = log_scale - target.log_scale.col(id);
            const double align = q.dot(target.rotation.col(id));
            loss += d_mu.squaredNorm() + d_color.squaredNorm() + d_log_scale.squaredNorm() + 1.0 - align * align;
            g_mu += 2.0 * d_mu;
            g_color += 2.0 * d_color;
            g_log_scale += 2.0 * d_log_scale;
            g_q -= 2.0 * align * target.rotation.col(id);
        }
        losses.push_back(loss * inv_k);
        if (!grad_w) {
            continue;
        }
        const double s = voxel_scale * inv_k;
        g_mu *= s;
        g_color *= s;
        g_log_scale *= s;
        g_q *= s;
        const Eigen::Vector4d g_q_sum = (g_q - q * q.dot(g_q)) / q_norm;
        for (const auto m : members) {
            const auto i = static_cast<Eigen::Index>(m);
            (*grad_w)[i] = g_mu.dot(problem.mu.col(i)) + g_color.dot(problem.color.col(i)) +
                           g_log_scale.dot(problem.log_scale.col(i)) + g_q_sum.dot(problem.rotation.col(i));
        }
    }
    return pairwise_mean(losses);
}

void check_finite(double value) {
    if (!std::isfinite(value)) {
        throw Error(ErrorCode::NonFiniteObjective, "fusion objective is not finite");
    }
}

} // namespace

FusionProblem make_problem(const SyntheticScene &scene, std::span<const std::size_t> context_frames, double rho) {
    if (context_frames.empty()) {
        throw Error(ErrorCode::EmptyInput, "context needs at least one frame");
    }
    FusionProblem problem;
    problem.context_frames.assign(context_frames.begin(), context_frames.end());
    for (const auto t : context_frames) {
        if (t >= scene.frames.size()) {
            throw Error(ErrorCode::InvalidArgument, "context frame index out of range");
        }
        auto decoded = decode_gaussian_map(scene.frames[t], static_cast<int>(t));
        problem.primitives.insert(problem.primitives.end(), std::make_move_iterator(decoded.begin()),
                                  std::make_move_iterator(decoded.end()));
    }
    problem.partition = voxelize(problem.primitives, rho);
    problem.inputs = AttentionInputs::from(problem.primitives, kDefaultFeatureDim);
    pack(problem.primitives, problem.mu, problem.color, problem.log_scale, problem.rotation);
    problem.voxel_targets.reserve(problem.partition.cells.size());
    for (const auto &cell : problem.partition.cells) {
        const auto first = static_cast<Eigen::Index>(
            cell.members[hemisphere_reference(problem.primitives, cell.members)]);
        const Eigen::Vector4d reference = problem.rotation.col(first);
        std::set<int> owners;
        for (const auto m : cell.members) {
            const auto i = static_cast<Eigen::Index>(m);
            if (problem.rotation.col(i).dot(reference) < 0.0) {
                problem.rotation.col(i) *= -1.0;
            }
            const int owner = scene.owner_of(problem.primitives[m]);
            if (owner >= 0) {
                owners.insert(owner);
            }
        }
        problem.voxel_targets.emplace_back(owners.begin(), owners.end());
    }
    return problem;
}

TargetState TargetState::at(const SyntheticScene &scene, double tau) {
    TargetState target;
    const auto truth = scene.true_state(tau);
    pack(truth, target.mu, target.color, target.log_scale, target.rotation);
    return target;
}

double objective_from_weights(const FusionProblem &problem, const TargetState &target,
                              const Eigen::VectorXd &weights) {
    if (weights.size() != static_cast<Eigen::Index>(problem.primitives.size())) {
        throw Error(ErrorCode::DimensionMismatch, "one weight per primitive is required");
    }
    const double value = weighted_objective(problem, target, weights, nullptr);
    check_finite(value);
    return value;
}

double fusion_objective(const FusionParams &params, const FusionProblem &problem, const TargetState &target,
                        double tau_star, WeightNormalization mode, FusionParams *gradient) {
    params.validate();
    const AttentionForward f = attention_forward(params, problem.inputs, tau_star);
    const double beta = params.beta();
    const Eigen::VectorXd w = normalized_weights(f.logits, problem.partition, beta, mode);
    Eigen::VectorXd grad_w;
    const double value = weighted_objective(problem, target, w, gradient ? &grad_w : nullptr);
    check_finite(value);
    if (!gradient) {
        return value;
    }

    // Softmax of logits / beta.
    Eigen::VectorXd d_scaled(w.size());
    if (mode == WeightNormalization::Global) {
        d_scaled = w.cwiseProduct(grad_w.array().matrix() - Eigen::VectorXd::Constant(w.size(), w.dot(grad_w)));
    } else {
        for (const auto &cell : problem.partition.cells) {
            double inner = 0.0;
            for (const auto m : cell.members) {
                const auto i = static_cast<Eigen::Index>(m);
                inner += w[i] * grad_w[i];
            }
            for (const auto m : cell.members) {
                const auto i = static_cast<Eigen::Index>(m);
                d_scaled[i] = w[i] * (grad_w[i] - inner);
            }
        }
    }
    const Eigen::VectorXd d_logits = d_scaled / beta;
    const double d_beta = -d_scaled.dot(f.logits) / (beta * beta);

    *gradient = FusionParams(params.config());
    FusionParams &g = *gradient;
    const int h = params.config().hidden;
    const auto k = static_cast<Eigen::Index>(problem.inputs.times.size());

    const Eigen::MatrixXd attn_act = f.attn_pre.unaryExpr(&silu);
    g.tensor(P::Attn1Weight) = (attn_act * d_logits).transpose();
    g.tensor(P::Attn1Bias)(0, 0) = d_logits.sum();
    const Eigen::MatrixXd d_attn_pre =
        (params.tensor(P::Attn1Weight).transpose() * d_logits.transpose()).cwiseProduct(f.attn_pre.unaryExpr(&silu_grad));
    const Eigen::VectorXd d_attn_pre_sum = d_attn_pre.rowwise().sum();
    const Eigen::VectorXd query = f.query();
    auto g_attn0 = g.tensor(P::Attn0Weight);
    g_attn0.leftCols(h) = d_attn_pre * f.context.transpose();
    g_attn0.rightCols(h) = d_attn_pre_sum * query.transpose();
    g.tensor(P::Attn0Bias) = d_attn_pre_sum;

    const auto w_attn0 = params.tensor(P::Attn0Weight);
    const Eigen::MatrixXd d_context = w_attn0.leftCols(h).transpose() * d_attn_pre;
    g.tensor(P::FeatureWeight) = d_context * problem.inputs.features.transpose();
    g.tensor(P::FeatureBias) = d_context.rowwise().sum();

    Eigen::MatrixXd d_time_out = Eigen::MatrixXd::Zero(h, k + 1);
    for (Eigen::Index i = 0; i < d_context.cols(); ++i) {
        d_time_out.col(problem.inputs.time_index[static_cast<std::size_t>(i)]) += d_context.col(i);
    }
    d_time_out.col(k) = w_attn0.rightCols(h).transpose() * d_attn_pre_sum;

    g.tensor(P::Time1Weight) = d_time_out * f.time_pre.unaryExpr(&silu).transpose();
    g.tensor(P::Time1Bias) = d_time_out.rowwise().sum();
    const Eigen::MatrixXd d_time_pre = (params.tensor(P::Time1Weight).transpose() * d_time_out)
                                           .cwiseProduct(f.time_pre.unaryExpr(&silu_grad));
    g.tensor(P::Time0Weight) = d_time_pre * f.time_gamma.transpose();
    g.tensor(P::Time0Bias) = d_time_pre.rowwise().sum();
    g.set_beta(d_beta);
    return value;
}

double fusion_objective(const FusionParams &params, const SyntheticScene &scene, double tau_star, double rho,
                        std::span<const std::size_t> context_frames) {
    const FusionProblem problem = make_problem(scene, context_frames, rho);
    return fusion_objective(params, problem, TargetState::at(scene, tau_star), tau_star);
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)> &f,
                                     std::span<const double> x, double eps) {
    if (!(eps >= 1e-6 && eps <= 1e-3)) {
        throw Error(ErrorCode::InvalidArgument, "finite-difference step must lie in [1e-6, 1e-3]");
    }
    std::vector<double> point(x.begin(), x.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double saved = point[i];
        point[i] = saved + eps;
        const double up = f(point);
        point[i] = saved - eps;
        const double down = f(point);
        point[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw Error(ErrorCode::NonFiniteObjective, "objective is not finite near the expansion point");
        }
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

AdamW::AdamW(const FusionParams &params, AdamWConfig config)
    : config_(config), m_(params.size(), 0.0), v_(params.size(), 0.0), decay_(params.size(), 0) {
    for (const P::Tensor t : {P::FeatureWeight, P::Time0Weight, P::Time1Weight, P::Attn0Weight, P::Attn1Weight}) {
        const auto &info = params.info(t);
        std::fill_n(decay_.begin() + static_cast<std::ptrdiff_t>(info.offset),
                    static_cast<std::size_t>(info.rows) * info.cols, 1);
    }
}

void AdamW::step(FusionParams &params, const FusionParams &gradient, double lr) {
    if (gradient.size() != params.size() || params.size() != m_.size()) {
        throw Error(ErrorCode::DimensionMismatch, "gradient layout does not match the parameters");
    }
    ++t_;
    const double correction1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double correction2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    auto theta = params.values();
    const auto grad = gradient.values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
        m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad[i];
        v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
        const double m_hat = m_[i] / correction1;
        const double v_hat = v_[i] / correction2;
        double update = m_hat / (std::sqrt(v_hat) + config_.eps);
        if (decay_[i]) {
            update += config_.weight_decay * theta[i];
        }
        theta[i] -= lr * update;
    }
    params.set_beta(std::max(params.beta(), kMinBeta));
}

double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps, double warmup_fraction) {
    if (total_steps == 0) {
        return base_lr;
    }
    const auto warmup = static_cast<std::size_t>(std::ceil(warmup_fraction * static_cast<double>(total_steps)));
    if (step < warmup) {
        return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
    }
    const double span = static_cast<double>(std::max<std::size_t>(1, total_steps - warmup));
    const double progress = static_cast<double>(step - warmup) / span;
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

TrainResult train_fusion(const SyntheticScene &scene, const FusionParams &init, const TrainConfig &config) {
    if (config.steps == 0) {
        throw Error(ErrorCode::BadConfig, "training needs at least one step");
    }
    if (!(config.lr >= 0.0) || !std::isfinite(config.lr)) {
        throw Error(ErrorCode::BadConfig, "learning rate must be non-negative");
    }
    if (!(config.rho > 0.0)) {
        throw Error(ErrorCode::NonPositiveRho, "voxel size must be positive");
    }
    if (!(config.continuous_fraction >= 0.0 && config.continuous_fraction <= 1.0) ||
        !(config.warmup_fraction >= 0.0 && config.warmup_fraction <= 1.0)) {
        throw Error(ErrorCode::BadConfig, "fractions must lie in [0, 1]");
    }
    init.validate();
    const std::size_t frames = scene.frames.size();
    const std::vector<double> times = scene.timestamps();

    std::vector<std::size_t> all(frames);
    for (std::size_t t = 0; t < frames; ++t) {
        all[t] = t;
    }
    const FusionProblem full = make_problem(scene, all, config.rho);
    std::vector<FusionProblem> dropped;
    std::vector<TargetState> frame_targets;
    for (std::size_t t = 0; t < frames; ++t) {
        std::vector<std::size_t> rest;
        for (std::size_t s = 0; s < frames; ++s) {
            if (s != t) {
                rest.push_back(s);
            }
        }
        dropped.push_back(make_problem(scene, rest, config.rho));
        frame_targets.push_back(TargetState::at(scene, times[t]));
    }

    TrainResult result{init, {}};
    result.loss_curve.reserve(config.steps);
    AdamW optimizer(init, config.optimizer);
    FusionParams gradient(init.config());
    Rng rng(config.seed);
    for (std::size_t step = 0; step < config.steps; ++step) {
        double loss = 0.0;
        try {
            if (rng.uniform() < config.continuous_fraction) {
                const double tau = rng.uniform();
                loss = fusion_objective(result.params, full, TargetState::at(scene, tau), tau, config.mode, &gradient);
            } else {
                const std::size_t t = rng.index(frames);
                const DropoutSplit split = dropout_query_frame(times, times[t], config.p_drop, rng.next());
                const FusionProblem &problem = split.withheld ? dropped[t] : full;
                loss = fusion_objective(result.params, problem, frame_targets[t], times[t], config.mode, &gradient);
            }
        } catch (const Error &e) {
            if (e.code() == ErrorCode::NonFiniteObjective) {
                throw Error(ErrorCode::DivergedLoss, "training diverged at step " + std::to_string(step));
            }
            throw;
        }
        result.loss_curve.push_back(loss);
        optimizer.step(result.params, gradient, cosine_lr(config.lr, step, config.steps, config.warmup_fraction));
        if (!std::all_of(result.params.values().begin(), result.params.values().end(),
                         [](double v) { return std::isfinite(v); })) {
            throw Error(ErrorCode::DivergedLoss, "parameters became non-finite at step " + std::to_string(step));
        }
    }
    return result;
}

std::vector<double> query_grid(std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
    }
    return out;
}

namespace {

FusionProblem full_problem(const SyntheticScene &scene, double rho) {
    std::vector<std::size_t> all(scene.frames.size());
    for (std::size_t t = 0; t < all.size(); ++t) {
        all[t] = t;
    }
    return make_problem(scene, all, rho);
}

} // namespace

double evaluation_objective(const FusionParams &params, const SyntheticScene &scene, double rho,
                            std::size_t queries, WeightNormalization mode) {
    const FusionProblem problem = full_problem(scene, rho);
    std::vector<double> values;
    for (const double tau : query_grid(queries)) {
        values.push_back(fusion_objective(params, problem, TargetState::at(scene, tau), tau, mode));
    }
    return pairwise_mean(values);
}

SelectionReport selection_accuracy(const FusionParams &params, const SyntheticScene &scene, double rho,
                                   std::size_t queries, double voxel_threshold) {
    const FusionProblem problem = full_problem(scene, rho);
    std::vector<const VoxelCell *> contested;
    for (const auto &cell : problem.partition.cells) {
        const auto first = static_cast<Eigen::Index>(cell.members.front());
        bool many_frames = false;
        bool differ = false;
        for (const auto m : cell.members) {
            const auto i = static_cast<Eigen::Index>(m);
            many_frames |= problem.primitives[m].source_frame != problem.primitives[cell.members.front()].source_frame;
            differ |= problem.mu.col(i) != problem.mu.col(first) || problem.color.col(i) != problem.color.col(first) ||
                      problem.log_scale.col(i) != problem.log_scale.col(first) ||
                      problem.rotation.col(i) != problem.rotation.col(first);
        }
        if (many_frames && differ) {
            contested.push_back(&cell);
        }
    }
    SelectionReport report;
    std::size_t passing = 0;
    for (const double tau : query_grid(queries)) {
        const AttentionForward f = attention_forward(params, problem.inputs, tau);
        const Eigen::VectorXd w =
            normalized_weights(f.logits, problem.partition, params.beta(), WeightNormalization::IntraVoxel);
        const auto nearest = static_cast<int>(scene.nearest_frame(tau));
        std::size_t correct = 0;
        for (const VoxelCell *cell : contested) {
            std::size_t best = cell->members.front();
            for (const auto m : cell->members) {
                if (w[static_cast<Eigen::Index>(m)] > w[static_cast<Eigen::Index>(best)]) {
                    best = m;
                }
            }
            correct += problem.primitives[best].source_frame == nearest ? 1 : 0;
        }
        const double fraction =
            contested.empty() ? 1.0 : static_cast<double>(correct) / static_cast<double>(contested.size());
        report.per_query.push_back(fraction);
        passing += fraction >= voxel_threshold ? 1 : 0;
    }
    report.accuracy = queries == 0 ? 0.0 : static_cast<double>(passing) / static_cast<double>(queries);
    return report;
}

} // namespace voxfuse
