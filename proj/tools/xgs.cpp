// xgs: generate synthetic sequences, run the semantic SLAM loop, query the map.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "xgs/error.hpp"
#include "xgs/io.hpp"
#include "xgs/pipeline.hpp"
#include "xgs/rasterizer.hpp"
#include "xgs/thinker.hpp"

namespace {

using namespace xgs;

enum ExitCode : int { kOk = 0, kInternal = 1, kConfigError = 2, kDataError = 3, kTrackingFailure = 4 };

/// Errors in hand-written inputs (config file, recipe, flags).
struct UserInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunOptions {
    std::string run_dir;
    std::string config_path;
    std::vector<std::string> overrides;  // key=value
    std::string out_dir;
    std::optional<int> threads;
    std::optional<std::string> mode;
    bool deterministic = false;
    bool strict = false;
    bool show_config = false;
};

fs::path results_dir(const std::string& run_dir, const std::string& out_dir) {
    return out_dir.empty() ? fs::path(run_dir) / "results" : fs::path(out_dir);
}

/// defaults < config file < XGS_THREADS < command-line flags and --set.
RunConfig resolve_config(const RunOptions& o) {
    RunConfig cfg = o.config_path.empty() ? RunConfig{} : RunConfig::load(o.config_path);
    if (const char* env = std::getenv("XGS_THREADS"); env && *env) {
        try {
            cfg.set("run.threads", env);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("XGS_THREADS: ") + e.what());
        }
    }
    if (o.threads) cfg.threads = *o.threads;
    if (o.mode) cfg.set("run.mode", *o.mode);
    if (o.deterministic) cfg.deterministic = true;
    for (const std::string& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

int cmd_gen(const std::string& recipe_path, const std::string& out_dir, bool force) {
    SceneRecipe recipe;
    try {
        recipe = recipe_path.empty() ? SceneRecipe{} : SceneRecipe::from_json(read_json_file(recipe_path));
    } catch (const Error& e) {
        throw UserInputError(e.what());
    }
    if (!force && fs::exists(out_dir) && !fs::is_empty(out_dir)) {
        throw UserInputError("gen: output directory " + out_dir + " is not empty (use --force)");
    }
    const Json manifest = generate_run(recipe, out_dir, force);
    spdlog::info("wrote {} files to {}", manifest.at("files").size(), out_dir);
    return kOk;
}

int cmd_run(const RunOptions& o) {
    const RunConfig cfg = resolve_config(o);
    if (o.show_config) {
        std::cout << cfg.to_text();
        return kOk;
    }
    const Sequence seq = load_sequence(o.run_dir, cfg.mode);
    spdlog::info("running {} frames ({}, {} compute threads{})", seq.frames.size(), to_string(cfg.mode), cfg.threads,
                 cfg.deterministic ? ", deterministic" : "");
    const RunResult result = run_pipeline(seq, cfg);
    const fs::path out = results_dir(o.run_dir, o.out_dir);
    write_run_outputs(out, result, cfg);
    spdlog::info("psnr {:.3f} dB, ate_rmse {:.5f}, {} keyframes, {} Gaussians -> {}", result.metrics.psnr,
                 result.metrics.ate_rmse, result.keyframes, result.field.size(), out.string());
    if (!result.failures.empty()) {
        spdlog::warn("{} frame(s) failed to track", result.failures.size());
        if (o.strict) return kTrackingFailure;
    }
    return kOk;
}

CameraPose pose_for_frame(const LoadedMap& map, std::optional<int> frame) {
    if (map.trajectory.empty()) throw InvalidInput("trajectory_est.csv is empty");
    if (!frame) return map.trajectory.back().second;
    for (const auto& [id, pose] : map.trajectory) {
        if (id == *frame) return pose;
    }
    throw UserInputError("frame " + std::to_string(*frame) + " is not in the trajectory");
}

CameraIntrinsics load_intrinsics(const std::string& run_dir) {
    return intrinsics_from_json(read_json_file(fs::path(run_dir) / "intrinsics.json"));
}

int cmd_query(const std::string& run_dir, const std::string& out_dir, const std::string& prompt, double delta,
              std::optional<int> frame, const std::string& json_path, const std::string& png_path) {
    if (!(delta >= 0.0 && delta < 1.0)) throw UserInputError("--delta must lie in [0,1)");
    const LoadedMap map = load_map(results_dir(run_dir, out_dir));
    const TextEncoder encoder = load_encoder(run_dir);
    TextQuery query;
    try {
        query = make_query(encoder, prompt, delta);
    } catch (const InvalidInput& e) {
        throw UserInputError(e.what());
    }
    const std::vector<double> scores = relevance_per_gaussian(map.field, map.codebook, query);
    const RelevanceResult result = mask_gaussians(scores, delta);
    const Json j = query_json(prompt, delta, scores, result);
    if (json_path.empty()) std::cout << j.dump(2) << '\n';
    else write_json_file(json_path, j);
    if (!png_path.empty()) {
        const CameraIntrinsics k = load_intrinsics(run_dir);
        const GaussianField masked = masked_field(map.field, result.mask);
        const Tensor3 image =
            masked.empty() ? Tensor3(3, k.height, k.width) : render(masked, pose_for_frame(map, frame), k).color;
        write_png_rgb(png_path, image);
    }
    return kOk;
}

int cmd_tokens(const std::string& run_dir, const std::string& out_dir, std::optional<int> m, const std::string& path) {
    const LoadedMap map = load_map(results_dir(run_dir, out_dir));
    int M = RunConfig{}.tokens;
    const fs::path cfg_path = results_dir(run_dir, out_dir) / "config.toml";
    if (fs::exists(cfg_path)) M = RunConfig::load(cfg_path.string()).tokens;
    if (m) M = *m;
    if (M < 1) throw UserInputError("-M must be >= 1");
    const TokenSample sample = sample_tokens(map.field, map.codebook, M);
    if (sample.clamped) spdlog::warn("M = {} exceeds the {} Gaussians in the map; clamped", M, map.field.size());
    const Json j = tokens_json(sample, M);
    const fs::path target = path.empty() ? results_dir(run_dir, out_dir) / "tokens.json" : fs::path(path);
    write_json_file(target, j);
    spdlog::info("wrote {} tokens to {}", sample.indices.size(), target.string());
    return kOk;
}

int cmd_metrics(const std::string& run_dir, const std::string& out_dir) {
    const LoadedMap map = load_map(results_dir(run_dir, out_dir));
    const Sequence seq = load_sequence(run_dir, SensorMode::Rgb);
    if (map.trajectory.size() != seq.frames.size()) throw InvalidInput("trajectory_est.csv does not cover every frame");
    std::vector<CameraPose> est, gt;
    std::vector<Tensor3> renders, images;
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        est.push_back(map.trajectory[i].second);
        gt.push_back(seq.frames[i].gt_pose);
        images.push_back(seq.frames[i].color);
        renders.push_back(map.field.empty() ? Tensor3(3, seq.intrinsics.height, seq.intrinsics.width)
                                            : render(map.field, est.back(), seq.intrinsics).color);
    }
    const Metrics m = compute_metrics(est, gt, renders, images);
    std::cout << Json{{"psnr", m.psnr}, {"ate_rmse", m.ate_rmse}, {"frames", seq.frames.size()}}.dump(2) << '\n';
    return kOk;
}

int cmd_render(const std::string& run_dir, const std::string& out_dir, std::optional<int> frame,
               const std::string& png_path, const std::string& depth_path) {
    const LoadedMap map = load_map(results_dir(run_dir, out_dir));
    if (map.field.empty()) throw InvalidInput("the map is empty");
    const CameraIntrinsics k = load_intrinsics(run_dir);
    const RenderOutput out = render(map.field, pose_for_frame(map, frame), k);
    write_png_rgb(png_path, out.color);
    if (!depth_path.empty()) {
        const Tensor3 d = surface_depth(out);
        std::vector<std::uint16_t> values(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) {
            values[i] = static_cast<std::uint16_t>(std::clamp(std::round(d.data()[i] * kDepthScale), 0.0, 65535.0));
        }
        write_png_gray16(depth_path, k.height, k.width, values);
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semantic Gaussian-splatting SLAM on synthetic scenes"};
    app.require_subcommand(1);
    bool verbose = false, quiet = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");
    app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

    std::string recipe_path, gen_out;
    bool force = false;
    auto* gen = app.add_subcommand("gen", "Generate a synthetic scene, trajectory and frames");
    gen->add_option("recipe", recipe_path, "Recipe JSON (omit for defaults)");
    gen->add_option("out", gen_out, "Output run directory")->required();
    gen->add_flag("--force", force, "Overwrite a non-empty output directory");

    RunOptions ro;
    auto* run = app.add_subcommand("run", "Track, map and learn semantics over a generated run directory");
    run->add_option("run_dir", ro.run_dir, "Directory written by gen")->required();
    run->add_option("-c,--config", ro.config_path, "key = value config file");
    run->add_option("--set", ro.overrides, "Override one key (key=value), repeatable");
    run->add_option("-o,--out", ro.out_dir, "Results directory (default <run_dir>/results)");
    run->add_option("-j,--threads", ro.threads, "Compute threads");
    run->add_option("--mode", ro.mode, "rgb or rgbd");
    run->add_flag("--deterministic", ro.deterministic, "Serialize agents; byte-stable metrics");
    run->add_flag("--strict", ro.strict, "Exit with 4 if any frame failed to track");
    run->add_flag("--show-config", ro.show_config, "Print the effective configuration and exit");

    std::string q_dir, q_out, q_prompt, q_json, q_png;
    double q_delta = 0.5;
    std::optional<int> q_frame;
    auto* query = app.add_subcommand("query", "Text-prompted relevance over the map");
    query->add_option("run_dir", q_dir)->required();
    query->add_option("-p,--prompt", q_prompt, "Prompt, e.g. region_2")->required();
    query->add_option("-d,--delta", q_delta, "Mask threshold in [0,1)");
    query->add_option("--frame", q_frame, "Frame whose estimated pose renders the mask (default last)");
    query->add_option("--json", q_json, "Write the summary here instead of stdout");
    query->add_option("--png", q_png, "Render the masked Gaussians to this PNG");
    query->add_option("-o,--out", q_out, "Results directory (default <run_dir>/results)");

    std::string t_dir, t_out, t_path;
    std::optional<int> t_m;
    auto* tokens = app.add_subcommand("tokens", "Entropy-ranked Gaussian tokens");
    tokens->add_option("run_dir", t_dir)->required();
    tokens->add_option("-M", t_m, "Number of tokens (default run.tokens)");
    tokens->add_option("--file", t_path, "Output JSON (default <results>/tokens.json)");
    tokens->add_option("-o,--out", t_out, "Results directory (default <run_dir>/results)");

    std::string m_dir, m_out;
    auto* metrics = app.add_subcommand("metrics", "Recompute PSNR and ATE from a finished run");
    metrics->add_option("run_dir", m_dir)->required();
    metrics->add_option("-o,--out", m_out, "Results directory (default <run_dir>/results)");

    std::string r_dir, r_out, r_png, r_depth;
    std::optional<int> r_frame;
    auto* rend = app.add_subcommand("render", "Render the map at an estimated pose");
    rend->add_option("run_dir", r_dir)->required();
    rend->add_option("--png", r_png, "Color output")->required();
    rend->add_option("--depth", r_depth, "16-bit depth output");
    rend->add_option("--frame", r_frame, "Frame id (default last)");
    rend->add_option("-o,--out", r_out, "Results directory (default <run_dir>/results)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);

    try {
        if (*gen) return cmd_gen(recipe_path, gen_out, force);
        if (*run) return cmd_run(ro);
        if (*query) return cmd_query(q_dir, q_out, q_prompt, q_delta, q_frame, q_json, q_png);
        if (*tokens) return cmd_tokens(t_dir, t_out, t_m, t_path);
        if (*metrics) return cmd_metrics(m_dir, m_out);
        if (*rend) return cmd_render(r_dir, r_out, r_frame, r_png, r_depth);
    } catch (const ConfigError& e) {
        spdlog::error("{}{}", e.what(), e.line() ? " (line " + std::to_string(e.line()) + ")" : "");
        return kConfigError;
    } catch (const UserInputError& e) {
        spdlog::error("{}", e.what());
        return kConfigError;
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return kDataError;
    } catch (const nlohmann::json::exception& e) {
        spdlog::error("malformed run data: {}", e.what());
        return kDataError;
    } catch (const fs::filesystem_error& e) {
        spdlog::error("{}", e.what());
        return kDataError;
    } catch (const std::exception& e) {
        spdlog::error("internal error: {}", e.what());
        return kInternal;
    }
    return kOk;
}
