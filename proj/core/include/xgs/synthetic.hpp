#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xgs/camera.hpp"
#include "xgs/codebook.hpp"
#include "xgs/gaussian.hpp"
#include "xgs/io.hpp"
#include "xgs/supervision.hpp"
#include "xgs/tensor.hpp"

namespace xgs {

enum class TrajectoryKind { Orbit, Line, RandomWalk };
enum class SensorMode { Rgb, Rgbd };

std::string to_string(TrajectoryKind kind);
TrajectoryKind trajectory_kind_from_string(const std::string& s);
std::string to_string(SensorMode mode);
SensorMode sensor_mode_from_string(const std::string& s);

/// Everything needed to regenerate a scene, its trajectory and its frames.
struct SceneRecipe {
    std::uint64_t seed = 7;
    int n_gaussians = 100;
    Eigen::Vector3d box_min{-1.0, -1.0, -0.1};
    Eigen::Vector3d box_max{1.0, 1.0, 0.1};
    int regions = 4;
    int feature_dim = 16;
    int codebook_size = 256;

    TrajectoryKind trajectory = TrajectoryKind::Orbit;
    int frames = 30;
    int width = 32;
    int height = 32;
    double focal = 40.0;  // pixels, both axes

    double orbit_radius = 3.0;
    double arc_degrees = 24.0;       // total sweep; step is arc / frames
    double elevation = 0.0;          // camera height above the box center
    double line_step = 0.02;         // per-frame translation along +x
    double walk_max_step = 0.02;     // random walk: max per-frame translation
    double walk_max_rotation = 1.0;  // random walk: max per-frame rotation, degrees

    double scale_factor = 0.6;  // Gaussian extent relative to the grid spacing
    double anisotropy = 0.3;    // relative spread of the three axis lengths
    double opacity = 0.9;
    double color_noise = 0.08;
    double generic_share = 0.6;     // weight of the shared direction in region features
    double max_feature_cosine = 0.5;
    double pixel_noise = 0.0;       // std-dev of additive Gaussian image noise
    int feature_downsample = 16;    // continuous feature source is H/16 x W/16

    CameraIntrinsics intrinsics() const;
    Json to_json() const;
    /// Missing keys keep their defaults; unknown keys are rejected.
    static SceneRecipe from_json(const Json& j);
};

struct GeneratedScene {
    GaussianField field;
    std::vector<int> regions;  // region id per Gaussian
    Eigen::MatrixXd phi;       // R x D region features, unit rows
    Eigen::VectorXd generic;   // shared direction mixed into every row of phi
    Codebook codebook;         // rows 0..R-1 hold phi; logits select them
};

/// Throws GenerationError if phi cannot meet the cosine bound.
GeneratedScene generate_scene(const SceneRecipe& recipe);

std::vector<CameraPose> generate_trajectory(const SceneRecipe& recipe);

struct CameraFrame {
    int frame_id = 0;
    CameraPose gt_pose;
    Tensor3 color;  // 3 x H x W
    Tensor3 depth;  // 1 x H x W, empty in RGB mode
    RegionAnnotation annotation;
    ContinuousFeatureSource continuous;  // may be empty

    bool has_depth() const { return !depth.empty(); }
};

/// Region id of the dominant Gaussian per pixel (-1 where alpha = 0).
std::vector<int> render_region_map(const GaussianField& field, const std::vector<int>& regions,
                                   const CameraPose& pose, const CameraIntrinsics& intrinsics);

CameraFrame render_ground_truth_frame(const GeneratedScene& scene, const CameraPose& pose, int frame_id,
                                      const SceneRecipe& recipe, SensorMode mode);

std::vector<CameraFrame> render_ground_truth(const GeneratedScene& scene, const std::vector<CameraPose>& poses,
                                             const SceneRecipe& recipe, SensorMode mode);

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(max^2 / MSE) over all channels, capped at kPsnrCap.
double psnr(const Tensor3& a, const Tensor3& b, double max_value = 1.0);

/// RMS camera-center error after rigid (rotation + translation) alignment.
double ate_rmse(const std::vector<CameraPose>& estimate, const std::vector<CameraPose>& ground_truth);

struct Metrics {
    double psnr = 0.0;      // mean over frames
    double ate_rmse = 0.0;
};

/// Throws InvalidInput on length mismatch.
Metrics compute_metrics(const std::vector<CameraPose>& estimate, const std::vector<CameraPose>& ground_truth,
                        const std::vector<Tensor3>& renders, const std::vector<Tensor3>& gt_images);

}  // namespace xgs
