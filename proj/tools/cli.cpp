// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include "voxfuse/aggregate.hpp"
#include "voxfuse/geometry.hpp"
#include "voxfuse/io.hpp"
#include "voxfuse/lift.hpp"
#include "voxfuse/metrics.hpp"
#include "voxfuse/render.hpp"
#include "voxfuse/synth.hpp"
#include "voxfuse/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>

namespace voxfuse::cli {
namespace {

using nlohmann::json;

json finite_or_string(double v) {
    if (std::isfinite(v)) {
        return v;
    }
    return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

/// Options present in a --config JSON object but absent from the command line
/// are appended as flags, so explicit flags win.
std::vector<std::string> merge_config(std::vector<std::string> args) {
    const auto it = std::find(args.begin(), args.end(), "--config");
    if (it == args.end()) {
        return args;
    }
    if (std::next(it) == args.end()) {
        throw Error(ErrorCode::BadConfig, "--config needs a path");
    }
    const fs::path path = *std::next(it);
    args.erase(it, std::next(it, 2));
    json config;
    try {
        config = json::parse(read_file(path));
    } catch (const json::parse_error &e) {
        throw Error(ErrorCode::BadConfig, path.string() + ": " + e.what());
    }
    if (!config.is_object()) {
        throw Error(ErrorCode::BadConfig, "config must be a JSON object");
    }
    for (const auto &[key, value] : config.items()) {
        const std::string flag = "--" + key;
        const bool given = std::any_of(args.begin(), args.end(), [&](const std::string &a) {
            return a == flag || a.rfind(flag + "=", 0) == 0;
        });
        if (given) {
            continue;
        }
        if (value.is_boolean()) {
            if (value.get<bool>()) {
                args.push_back(flag);
            }
        } else if (value.is_string()) {
            args.push_back(flag);
            args.push_back(value.get<std::string>());
        } else if (value.is_number()) {
            args.push_back(flag);
            args.push_back(value.dump());
        } else {
            throw Error(ErrorCode::BadConfig, "config value for '" + key + "' must be a scalar");
        }
    }
    return args;
}

void write_json(const fs::path &path, const json &j) { write_file_atomic(path, j.dump(2) + "\n"); }

json scene_json(const SyntheticScene &scene) {
    const auto &c = scene.config;
    return json{{"seed", scene.seed},
                {"n_frames", c.n_frames},
                {"n_gaussians", c.n_gaussians},
                {"deform_amplitude", c.deform_amplitude},
                {"dynamic_fraction", c.dynamic_fraction},
                {"rho", c.rho},
                {"profile", c.profile == DeformProfile::Piecewise ? "piecewise" : "smooth"}};
}

SyntheticScene scene_from(const fs::path &dir) {
    json j;
    try {
        j = json::parse(read_file(dir / "scene.json"));
        SynthConfig c;
        c.n_frames = j.at("n_frames").get<int>();
        c.n_gaussians = j.at("n_gaussians").get<int>();
        c.deform_amplitude = j.at("deform_amplitude").get<double>();
        c.dynamic_fraction = j.at("dynamic_fraction").get<double>();
        c.rho = j.at("rho").get<double>();
        c.profile = j.value("profile", "piecewise") == "smooth" ? DeformProfile::Smooth : DeformProfile::Piecewise;
        return synth_scene(j.at("seed").get<std::uint64_t>(), c);
    } catch (const json::exception &e) {
        throw Error(ErrorCode::BadConfig, "bad scene.json: " + std::string(e.what()));
    }
}

struct Options {
    // synth
    std::uint64_t seed = 0;
    int frames = 4;
    int gaussians = 500;
    double amplitude = 0.4;
    double dynamic_fraction = 0.5;
    std::string profile = "piecewise";
    // shared paths
    std::string out;
    std::string manifest;
    std::string space;
    std::string params;
    std::string gaussians_path;
    std::string camera;
    std::string sky;
    std::string alpha;
    std::string depth;
    std::string pred;
    std::string gt;
    std::string scene;
    std::string valid;
    std::string sky_mask;
    std::string curve;
    // numbers
    double tau = 0.0;
    double rho = 0.002;
    std::optional<double> train_rho;
    std::size_t steps = 2000;
    double lr = 3e-3;
    bool global = false;
    bool suppress = false;
};

json cmd_synth(const Options &o) {
    SynthConfig c;
    c.n_frames = o.frames;
    c.n_gaussians = o.gaussians;
    c.deform_amplitude = o.amplitude;
    c.dynamic_fraction = o.dynamic_fraction;
    if (o.profile != "piecewise" && o.profile != "smooth") {
        throw Error(ErrorCode::BadConfig, "profile must be piecewise or smooth");
    }
    c.profile = o.profile == "smooth" ? DeformProfile::Smooth : DeformProfile::Piecewise;
    const SyntheticScene scene = synth_scene(o.seed, c);
    const fs::path dir = o.out;
    write_manifest(dir / "manifest.json", scene.frames);
    save_camera(dir / "camera.json", scene.camera);
    save_sky(dir / "sky.json", scene.sky);
    write_json(dir / "scene.json", scene_json(scene));
    return {{"frames", scene.frames.size()},
            {"primitives", scene.primitives.size()},
            {"dynamic", scene.dynamic_count()},
            {"out", o.out}};
}

json cmd_lift(const Options &o) {
    const auto frames = load_manifest(o.manifest);
    CanonicalSpace space = build_canonical_space(frames);
    if (o.suppress) {
        space = suppress_dynamic(std::move(space), frames);
    }
    write_space(o.out, space);
    return {{"frames", frames.size()}, {"primitives", space.primitives.size()}, {"out", o.out}};
}

json cmd_fuse(const Options &o) {
    const CanonicalSpace space = read_space(o.space);
    const FusionParams params = o.params.empty() ? FusionParams::initialized(o.seed) : load_params(o.params);
    const auto mode = o.global ? WeightNormalization::Global : WeightNormalization::IntraVoxel;
    const VoxelFusionResult fused = aggregate(space, o.tau, params, o.rho, mode);
    write_ply(o.out, fused.fused);
    return {{"voxels", fused.fused.size()}, {"primitives", space.primitives.size()}, {"out", o.out}};
}

json cmd_render(const Options &o) {
    const auto gaussians = read_ply(o.gaussians_path);
    const CameraModel camera = load_camera(o.camera);
    const RenderOutput render = rasterize(gaussians, camera);
    const Image sky_rgb = o.sky.empty() ? Image(camera.height, camera.width, 3) : sky_eval(load_sky(o.sky), camera);
    write_ppm(o.out, composite(render, sky_rgb));
    if (!o.alpha.empty()) {
        if (fs::path(o.alpha).extension() == ".pfm") {
            write_pfm(o.alpha, render.alpha);
        } else {
            write_pgm(o.alpha, render.alpha);
        }
    }
    if (!o.depth.empty()) {
        write_pfm(o.depth, render.depth);
    }
    return {{"width", camera.width}, {"height", camera.height}, {"gaussians", gaussians.size()}, {"out", o.out}};
}

json cmd_eval(const Options &o) {
    const Image pred = read_image(o.pred);
    const Image gt = read_image(o.gt);
    LossComponents components;
    components.rgb = l1_photometric(std::span(&pred, 1), std::span(&gt, 1));
    const LossBreakdown breakdown = total_loss(components);
    json entries = json::object();
    for (const auto &e : breakdown.entries) {
        const bool computed = e.name == "rgb";
        entries[e.name] = {{"value", e.value}, {"available", computed && e.available}};
    }
    const json report{{"psnr", finite_or_string(psnr(pred, gt))},
                      {"ssim", ssim(pred, gt)},
                      {"loss_breakdown", {{"total", breakdown.total}, {"terms", entries}}}};
    write_json(o.out, report);
    return report;
}

json cmd_train(const Options &o) {
    const SyntheticScene scene = scene_from(o.scene);
    const FusionParams init = FusionParams::initialized(o.seed);
    TrainConfig config;
    config.steps = o.steps;
    config.lr = o.lr;
    config.seed = o.seed;
    config.rho = o.train_rho.value_or(scene.config.rho);
    config.mode = o.global ? WeightNormalization::Global : WeightNormalization::IntraVoxel;
    const TrainResult result = train_fusion(scene, init, config);
    save_params(o.out, result.params);
    std::ostringstream csv;
    csv.precision(17);
    csv << "step,loss\n";
    for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
        csv << i << ',' << result.loss_curve[i] << '\n';
    }
    write_file_atomic(o.curve.empty() ? o.out + ".loss.csv" : o.curve, csv.str());
    const double before = evaluation_objective(init, scene, config.rho, 100, config.mode);
    const double after = evaluation_objective(result.params, scene, config.rho, 100, config.mode);
    const json summary{{"steps", config.steps},
                       {"rho", config.rho},
                       {"objective_init", before},
                       {"objective_trained", after},
                       {"objective_ratio", after / before},
                       {"selection_accuracy", selection_accuracy(result.params, scene, config.rho).accuracy},
                       {"beta", result.params.beta()}};
    return summary;
}

json cmd_normals(const Options &o) {
    const Image depth = read_image(o.depth);
    const CameraModel camera = load_camera(o.camera);
    const Image sky = o.sky_mask.empty() ? Image() : read_image(o.sky_mask);
    const NormalMap normals = depth_to_normals(depth, camera, sky);
    write_pfm(o.out, normals.normals);
    if (!o.valid.empty()) {
        write_pgm(o.valid, normals.valid);
    }
    std::size_t valid = 0;
    for (const float v : normals.valid.data()) {
        valid += v > 0.5f ? 1 : 0;
    }
    return {{"valid_pixels", valid}, {"out", o.out}};
}

} // namespace

int run(std::vector<std::string> args, std::ostream &out, std::ostream &err) {
    auto report = [&](std::string_view code, const std::string &message, int status) {
        err << json{{"error", code}, {"message", message}}.dump() << '\n';
        return status;
    };
    try {
        args = merge_config(std::move(args));
    } catch (const Error &e) {
        return report(to_string(e.code()), e.what(), 2);
    }

    CLI::App app{"Voxel-based 4D Gaussian fusion and rendering"};
    app.require_subcommand(1);
    Options o;
    std::function<json(const Options &)> action;
    auto bind = [&](CLI::App *sub, json (*fn)(const Options &)) {
        sub->callback([&action, fn] { action = fn; });
    };

    auto *synth = app.add_subcommand("synth", "Generate a synthetic dynamic scene");
    synth->add_option("--seed", o.seed, "Scene seed");
    synth->add_option("--frames", o.frames, "Number of frames");
    synth->add_option("--gaussians", o.gaussians, "Number of scene primitives");
    synth->add_option("--amplitude", o.amplitude, "Deformation amplitude in voxel units");
    synth->add_option("--dynamic-fraction", o.dynamic_fraction, "Fraction of oscillating primitives");
    synth->add_option("--profile", o.profile, "piecewise or smooth");
    synth->add_option("--out", o.out, "Output directory")->required();
    bind(synth, cmd_synth);

    auto *lift = app.add_subcommand("lift", "Lift a frame manifest into a canonical space");
    lift->add_option("--manifest", o.manifest, "manifest.json")->required();
    lift->add_flag("--suppress-dynamic", o.suppress, "Scale opacity by the dynamic mask");
    lift->add_option("--out", o.out, "Output PLY")->required();
    bind(lift, cmd_lift);

    auto *fuse = app.add_subcommand("fuse", "Aggregate a canonical space for a query time");
    fuse->add_option("--space", o.space, "Canonical space PLY")->required();
    fuse->add_option("--params", o.params, "Trained tensor blob; default is a seeded init");
    fuse->add_option("--seed", o.seed, "Init seed when --params is absent");
    fuse->add_option("--tau", o.tau, "Query time in [0, 1]")->required();
    fuse->add_option("--rho", o.rho, "Voxel size")->required();
    fuse->add_flag("--global", o.global, "One softmax across all primitives");
    fuse->add_option("--out", o.out, "Output PLY")->required();
    bind(fuse, cmd_fuse);

    auto *render = app.add_subcommand("render", "Rasterize primitives and composite over the sky");
    render->add_option("--gaussians", o.gaussians_path, "Primitive PLY")->required();
    render->add_option("--camera", o.camera, "Camera JSON")->required();
    render->add_option("--sky", o.sky, "Sky JSON; black when absent");
    render->add_option("--alpha", o.alpha, "Optional alpha map, PFM or PGM by extension");
    render->add_option("--depth", o.depth, "Optional depth PFM");
    render->add_option("--out", o.out, "Output PPM")->required();
    bind(render, cmd_render);

    auto *eval = app.add_subcommand("eval", "Image metrics between a prediction and ground truth");
    eval->add_option("--pred", o.pred, "Predicted image")->required();
    eval->add_option("--gt", o.gt, "Ground-truth image")->required();
    eval->add_option("--out", o.out, "Metrics JSON")->required();
    bind(eval, cmd_eval);

    auto *train = app.add_subcommand("train", "Train the aggregation network on a synthetic scene");
    train->add_option("--scene", o.scene, "Directory written by synth")->required();
    train->add_option("--steps", o.steps, "Optimizer steps");
    train->add_option("--lr", o.lr, "Peak learning rate");
    train->add_option("--seed", o.seed, "Init and sampling seed");
    train->add_option("--rho", o.train_rho, "Voxel size; scene default when absent");
    train->add_flag("--global", o.global, "Train the global-softmax ablation");
    train->add_option("--curve", o.curve, "Loss curve CSV; defaults to <out>.loss.csv");
    train->add_option("--out", o.out, "Output tensor blob")->required();
    bind(train, cmd_train);

    auto *normals = app.add_subcommand("normals", "Pseudo ground-truth normals from a depth map");
    normals->add_option("--depth", o.depth, "Depth PFM")->required();
    normals->add_option("--camera", o.camera, "Camera JSON")->required();
    normals->add_option("--sky", o.sky_mask, "Optional sky mask PGM");
    normals->add_option("--valid", o.valid, "Optional validity PGM");
    normals->add_option("--out", o.out, "Normals PFM")->required();
    bind(normals, cmd_normals);

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError &e) {
        return report("BadConfig", e.what(), 2);
    }
    try {
        out << action(o).dump(2) << '\n';
        return 0;
    } catch (const Error &e) {
        return report(to_string(e.code()), e.what(), 1);
    } catch (const std::exception &e) {
        return report("IoFailure", e.what(), 1);
    }
}

} // namespace voxfuse::cli
