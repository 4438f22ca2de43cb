#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Core>

#include "xgs/camera.hpp"
#include "xgs/codebook.hpp"
#include "xgs/concurrency.hpp"
#include "xgs/gaussian.hpp"
#include "xgs/rasterizer.hpp"
#include "xgs/supervision.hpp"
#include "xgs/synthetic.hpp"

namespace xgs {

// ---------------------------------------------------------------- tracking

struct TrackState {
    std::optional<CameraPose> current;
    std::optional<CameraPose> previous;
    Twist velocity = Twist::Zero();

    /// Records an accepted pose and recomputes the velocity from the last two.
    void accept(const CameraPose& pose);
};

struct Prediction {
    CameraPose pose;
    bool cold_start = false;  // no prior pose; identity returned
};

/// Constant-velocity prediction: replays the last inter-frame twist.
Prediction predict_pose(const TrackState& track);

enum class PoseOptimizer { LevenbergMarquardt, GradientDescent };

std::string to_string(PoseOptimizer o);
PoseOptimizer pose_optimizer_from_string(const std::string& s);

struct TrackingConfig {
    PoseOptimizer optimizer = PoseOptimizer::LevenbergMarquardt;
    int max_iters = 100;
    double fd_step = 1e-4;
    double lr_pose = 1e-3;       // gradient-descent step
    int patience = 5;            // consecutive loss increases tolerated (gradient descent)
    double lambda_d = 1.0;
    bool use_depth = true;       // ignored when the frame has no depth
    double min_coverage = 0.02;  // fraction of pixels with alpha > 0.5 required
    double irls_floor = 1e-3;    // |r| floor for the L1 reweighting
    bool limit_jacobian = true;  // minmod of one-sided differences instead of central
};

struct TrackingLoss {
    double photo = 0.0;
    double depth = 0.0;
    double total = 0.0;
    double coverage = 0.0;
};

/// mean over 3HW of |I_hat - I| + lambda_d * mean over valid-depth pixels of |D_hat/alpha_hat - D|
/// (pixels with alpha_hat <= kSurfaceAlpha contribute no depth residual).
TrackingLoss tracking_loss(const GaussianField& field, const CameraFrame& frame, const CameraPose& pose,
                           const CameraIntrinsics& intrinsics, const TrackingConfig& cfg);

struct TrackResult {
    CameraPose pose;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    int iterations = 0;  // gradient (Jacobian) evaluations
    bool failed = false;
    std::string failure;
};

/// Refines `init` against `frame` with the map frozen. On failure `pose` is
/// the best pose seen (at worst `init`).
TrackResult track_frame(const GaussianField& field, const CameraFrame& frame, const CameraPose& init,
                        const CameraIntrinsics& intrinsics, const TrackingConfig& cfg, ThreadPool* pool = nullptr);

// ---------------------------------------------------------------- keyframes

struct Keyframe {
    CameraFrame frame;
    CameraPose pose;  // estimate, frozen during mapping
};

class KeyframeWindow {
public:
    explicit KeyframeWindow(std::size_t capacity = 8);

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const noexcept { return frames_.size(); }
    bool empty() const noexcept { return frames_.empty(); }
    const Keyframe& operator[](std::size_t i) const { return frames_[i]; }
    const Keyframe& newest() const { return frames_.back(); }
    std::vector<int> frame_ids() const;

    /// Appends, evicting the oldest only when at capacity. Returns the
    /// evicted frame id, if any.
    std::optional<int> push(Keyframe kf);

    struct Event {
        int frame_id;
        bool inserted;  // false: evicted
    };
    const std::vector<Event>& log() const noexcept { return log_; }

private:
    std::size_t capacity_;
    std::deque<Keyframe> frames_;
    std::vector<Event> log_;
};

struct KeyframeConfig {
    double translation_threshold = 0.05;
    double rotation_threshold_deg = 5.0;
};

struct KeyframeDecision {
    bool inserted = false;
    std::optional<int> evicted;
};

/// Inserts when the window is empty or the pose moved more than a threshold
/// away from the newest keyframe.
KeyframeDecision manage_keyframes(KeyframeWindow& window, const CameraFrame& frame, const CameraPose& pose,
                                  const KeyframeConfig& cfg);

// ---------------------------------------------------------------- mapping

struct MappingConfig {
    int iters = 150;
    double lr_mu = 1e-2;
    double lr_color = 0.05;
    double lr_opacity = 0.05;  // on the opacity logit
    double lr_scale = 2e-3;    // on log-scale
    double lr_rotation = 0.01;
    double lambda_d = 1.0;
    double lambda_iso = 10.0;
    bool use_depth = true;
    bool adam = true;  // false: plain gradient descent with the same rates
    double lr_final_ratio = 0.01;  // rates decay exponentially to this fraction over the phase
};

struct MappingResult {
    std::vector<double> trace;  // total loss before each step
    double final_loss = 0.0;
};

/// sum_i |s_i - mean(s_i) 1|_1
double isotropy_loss(const GaussianField& field);

/// Radiance phase: optimizes mu, rotation, scale, opacity and color over all
/// keyframes with poses, logits and the codebook frozen.
MappingResult map_window(GaussianField& field, const KeyframeWindow& window, const CameraIntrinsics& intrinsics,
                         const MappingConfig& cfg, ThreadPool* pool = nullptr);

// ---------------------------------------------------------------- semantics

enum class SemanticSource { Discrete, Continuous };

/// Supervision targets keyed by (frame id, stride, offset_h, offset_w). Thread-safe.
class TargetCache {
public:
    using Key = std::tuple<int, int, int, int>;

    void put(int frame_id, const SupervisionTarget& target);
    std::optional<SupervisionTarget> find(int frame_id, const GridSpec& grid) const;
    /// Cached target or, on a miss, builds it now and counts a stall.
    SupervisionTarget get_or_build(const CameraFrame& frame, const GridSpec& grid, SemanticSource source);
    void evict(int frame_id);
    std::size_t size() const;
    std::size_t stalls() const;
    std::vector<std::string> stall_log() const;

private:
    mutable std::mutex mutex_;
    std::map<Key, SupervisionTarget> targets_;
    std::vector<std::string> stall_log_;
};

SupervisionTarget build_target(const CameraFrame& frame, const GridSpec& grid, SemanticSource source);

/// Builds every offset of `stride` for one frame.
void prefetch_targets(TargetCache& cache, const CameraFrame& frame, int stride, SemanticSource source);

struct SemanticConfig {
    int iters = 50;
    int stride = 4;
    double lr = 0.1;
    double lambda_sem = 1.0;
    std::uint64_t offset_seed = 0;
    SemanticSource source = SemanticSource::Discrete;
};

struct SemanticResult {
    std::vector<double> trace;
    std::uint64_t blend_steps = 0;
    std::size_t stalls = 0;
};

/// Logit-only optimization. Step t uses offset next_offset(step0 + t) and
/// keyframe (step0 + t) mod |window|; `step` is advanced by iters.
SemanticResult semantic_phase(GaussianField& field, const Codebook& codebook, const KeyframeWindow& window,
                              const CameraIntrinsics& intrinsics, TargetCache& targets, std::uint64_t& step,
                              const SemanticConfig& cfg);

// ---------------------------------------------------------------- map growth

struct DensifyConfig {
    double coverage_threshold = 0.5;  // insert where rendered alpha is below this
    int stride = 2;                   // insertion lattice
    double prune_opacity = 0.01;
    double init_depth = 3.0;          // RGB-only fallback when nothing is rendered yet
    double init_opacity = 0.8;
    double scale_factor = 0.6;        // isotropic scale = factor * stride * depth / fx
};

struct DensifyResult {
    int inserted = 0;
    int pruned = 0;
};

/// Prunes low-opacity Gaussians, then back-projects one Gaussian per
/// uncovered lattice pixel of `kf` (frame depth if valid, else the median
/// rendered depth, else init_depth). Pixels with a depth channel but no valid
/// depth are skipped. `regions`, when given, is kept parallel to the field;
/// new entries take the annotation label at the insertion pixel.
DensifyResult densify_and_prune(GaussianField& field, const Keyframe& kf, const CameraIntrinsics& intrinsics,
                                const DensifyConfig& cfg, std::vector<int>* regions = nullptr);

}  // namespace xgs
