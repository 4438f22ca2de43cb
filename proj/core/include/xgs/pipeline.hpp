#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "xgs/config.hpp"
#include "xgs/io.hpp"
#include "xgs/online_vq.hpp"
#include "xgs/slam.hpp"
#include "xgs/synthetic.hpp"
#include "xgs/thinker.hpp"

namespace xgs {

/// Depth PNGs store metres * kDepthScale as uint16.
inline constexpr double kDepthScale = 5000.0;

// ---------------------------------------------------------------- run directory
//
// gen writes:
//   recipe.json  intrinsics.json  encoder.json  scene_gt.json  codebook_gt.json
//   trajectory_gt.csv  manifest.json
//   frames/<id>_color.png  <id>_depth.png  <id>_labels.png  <id>_labels.json  <id>_features.xgsf

/// {"files": {relative path: sha256}} over every regular file below `dir`
/// except manifest.json itself, in path order.
Json build_manifest(const fs::path& dir);

/// Generates scene, trajectory and frames into `dir`. A non-empty `dir`
/// without `force` raises InvalidInput. Returns the manifest.
Json generate_run(const SceneRecipe& recipe, const fs::path& dir, bool force = false);

struct Sequence {
    SceneRecipe recipe;
    CameraIntrinsics intrinsics;
    std::vector<CameraFrame> frames;  // gt_pose filled from trajectory_gt.csv
    Eigen::MatrixXd phi;              // text-encoder region table
    Eigen::VectorXd generic;

    std::vector<CameraPose> ground_truth() const;
};

/// Reads a generated run directory. In Rgb mode depth is dropped on load.
/// Missing or malformed files raise ParseError / InvalidInput.
Sequence load_sequence(const fs::path& dir, SensorMode mode);

/// Text encoder matching the run's synthetic world.
TextEncoder load_encoder(const fs::path& dir);

// ---------------------------------------------------------------- run loop

/// Timing rows in report order.
inline const std::vector<std::string>& timing_components() {
    static const std::vector<std::string> rows = {
        "Vision Encoding", "VQ Codebook Update", "Grid-Sampled Target Prefetching", "Semantic Optimization",
        "Tracking",        "Radiance Mapping",   "Densification"};
    return rows;
}

struct TrackingFailure {
    int frame_id = 0;
    std::string reason;
};

struct RunResult {
    std::vector<CameraPose> estimates;
    std::vector<CameraPose> ground_truth;
    GaussianField field;
    std::vector<int> regions;  // per map Gaussian, label at its insertion pixel
    Codebook codebook;
    Metrics metrics;
    std::vector<std::pair<std::string, double>> timing_ms;  // timing_components() order
    double wall_ms = 0.0;
    int keyframes = 0;
    std::vector<TrackingFailure> failures;
    std::vector<KeyframeWindow::Event> keyframe_log;
    std::size_t stalls = 0;
    std::vector<std::string> stall_log;
    std::uint64_t semantic_blend_steps = 0;
    VqAuditLog audit;
};

/// Per-frame loop: predict -> track -> keyframe decision; each keyframe is
/// handed to the mapping agent (VQ update and target prefetch on the
/// background pool, radiance mapping, semantic phase, densify/prune).
/// Frame 0 is anchored at its ground-truth pose. A failed frame keeps the
/// constant-velocity prediction.
RunResult run_pipeline(const Sequence& sequence, const RunConfig& config);

/// {psnr, ate_rmse, per_phase_ms, fps_equivalent, ...}. Timing fields are
/// null in deterministic mode so that the bytes depend on the inputs only.
Json metrics_json(const RunResult& result, const RunConfig& config);

/// component,total_ms,per_keyframe_ms
std::string timing_csv(const RunResult& result);

/// Writes metrics.json, timing.csv, trajectory_est.csv, trajectory_gt.csv,
/// vq_audit.csv, map_scene.json, map_codebook.json, config.toml, manifest.json.
void write_run_outputs(const fs::path& out_dir, const RunResult& result, const RunConfig& config);

// ---------------------------------------------------------------- map queries

struct LoadedMap {
    GaussianField field;
    std::vector<int> regions;
    Codebook codebook;
    std::vector<std::pair<int, CameraPose>> trajectory;  // estimates
};

/// Reads map_scene.json, map_codebook.json and trajectory_est.csv from a run's output directory.
LoadedMap load_map(const fs::path& out_dir);

/// {prompt, delta, scores_summary:{min,max,mean}, mask_count, fallback_used, gaussians}
Json query_json(const std::string& prompt, double delta, const std::vector<double>& scores,
                const RelevanceResult& result);

/// {requested, M, clamped, tokens:[{index, entropy, feature}]}
Json tokens_json(const TokenSample& sample, int requested);

/// Field restricted to the masked Gaussians.
GaussianField masked_field(const GaussianField& field, const std::vector<bool>& mask);

}  // namespace xgs
