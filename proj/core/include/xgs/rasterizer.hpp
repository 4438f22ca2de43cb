#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "xgs/camera.hpp"
#include "xgs/codebook.hpp"
#include "xgs/gaussian.hpp"
#include "xgs/grid.hpp"
#include "xgs/tensor.hpp"

namespace xgs {

struct RasterConfig {
    double transmittance_min = 1e-4;  // stop blending below this transmittance
    double cutoff_sigma = 3.0;        // ellipse radius, in standard deviations
    double covariance_floor = kCovarianceFloor;
};

/// Work counters. A blend step is one (sampled pixel, overlapping Gaussian)
/// evaluation inside the compositing loop.
struct RenderStats {
    std::uint64_t blend_steps = 0;
    std::uint64_t pixels = 0;
};

struct RenderOutput {
    Tensor3 color;  // 3 x H x W
    Tensor3 depth;  // 1 x H x W, 0 where nothing is covered
    Tensor3 alpha;  // 1 x H x W
    RenderStats stats;
};

/// Compact D x H_s x W_s semantic prediction on a sampling grid.
struct CompactFeatureMap {
    Tensor3 data;
    GridSpec grid;
};

/// A Gaussian after view transformation and projection. Exposed so that
/// callers sharing one projection across several passes avoid redoing it.
struct ProjectedSplat {
    int index = 0;  // position in the field
    double depth = 0.0;
    Eigen::Vector3d p_cam = Eigen::Vector3d::Zero();
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov_raw = Eigen::Matrix2d::Zero();  // before the eigenvalue floor
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d conic = Eigen::Matrix2d::Zero();  // cov^-1
    double opacity = 0.0;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bounds of the cutoff ellipse
};

/// Projects, culls (near/far, off-screen) and sorts by camera depth, ties by
/// field index.
std::vector<ProjectedSplat> project_field(const GaussianField& field, const CameraPose& pose,
                                          const CameraIntrinsics& intrinsics,
                                          const RasterConfig& config = {});

/// Front-to-back compositing of arbitrary per-Gaussian channels over the
/// sampled pixels of `grid` only. `channels` is (field size) x C.
/// Returns C x H_s x W_s values; `alpha_out` (if non-null) receives 1 x H_s x W_s.
Tensor3 composite_grid(const std::vector<ProjectedSplat>& splats, const Eigen::MatrixXd& channels,
                       const GridSpec& grid, const RasterConfig& config, Tensor3* alpha_out = nullptr,
                       RenderStats* stats = nullptr);

/// Color, depth and alpha. Throws EmptyScene on an empty field.
RenderOutput render(const GaussianField& field, const CameraPose& pose,
                    const CameraIntrinsics& intrinsics, const RasterConfig& config = {});

/// Decoded D-dimensional features for every pixel.
Tensor3 render_features_dense(const GaussianField& field, const Codebook& codebook,
                              const CameraPose& pose, const CameraIntrinsics& intrinsics,
                              const RasterConfig& config = {}, RenderStats* stats = nullptr);

/// Decoded features at the sampled pixels only; an empty grid yields an empty map.
CompactFeatureMap render_features_grid(const GaussianField& field, const Codebook& codebook,
                                       const CameraPose& pose, const CameraIntrinsics& intrinsics,
                                       const GridSpec& grid, const RasterConfig& config = {},
                                       RenderStats* stats = nullptr);

/// Per-Gaussian mixture weights composited as K channels on a grid.
Tensor3 render_weights_grid(const GaussianField& field, const CameraPose& pose,
                            const CameraIntrinsics& intrinsics, const GridSpec& grid,
                            const RasterConfig& config = {});

/// Per-pixel index of the Gaussian with the largest blend weight alpha' * T,
/// row-major H x W; -1 where nothing contributes. Ties go to the front-most.
std::vector<int> dominant_contributors(const GaussianField& field, const CameraPose& pose,
                                       const CameraIntrinsics& intrinsics, const RasterConfig& config = {});

struct FeatureGradients {
    Eigen::MatrixXd logits;    // N x K, d loss / d z_i
    Eigen::MatrixXd features;  // N x D, d loss / d f_i (independent of the codebook)
};

/// Gradient of <upstream, render_features_grid(...)> w.r.t. every Gaussian's
/// logits, chained through the blend weights and the softmax.
FeatureGradients feature_gradients(const GaussianField& field, const Codebook& codebook,
                                   const CameraPose& pose, const CameraIntrinsics& intrinsics,
                                   const GridSpec& grid, const Tensor3& upstream,
                                   const RasterConfig& config = {});

/// One view projected and decoded for one sampling grid, so that the forward
/// and backward passes of a semantic step share the softmax work. Only
/// Gaussians whose footprint reaches a sampled pixel are decoded.
struct FeatureView {
    GridSpec grid;
    std::vector<ProjectedSplat> splats;
    std::vector<int> slot;     // per field index: row of `weights`, -1 when not decoded
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> weights;  // decoded x K
    Eigen::MatrixXd features;  // N x D, zero rows for Gaussians not decoded
};

FeatureView prepare_feature_view(const GaussianField& field, const Codebook& codebook, const CameraPose& pose,
                                 const CameraIntrinsics& intrinsics, const GridSpec& grid,
                                 const RasterConfig& config = {});

/// Same values as the field-based overloads above.
CompactFeatureMap render_features_grid(const FeatureView& view, const RasterConfig& config = {},
                                       RenderStats* stats = nullptr);
FeatureGradients feature_gradients(const FeatureView& view, const Codebook& codebook, const Tensor3& upstream,
                                   const RasterConfig& config = {});

/// Logit gradients only, written into `logit_grad` (N*K, Gaussian-major),
/// which is overwritten.
void feature_logit_gradients(const FeatureView& view, const Codebook& codebook, const Tensor3& upstream,
                             Eigen::Ref<Eigen::VectorXd> logit_grad, const RasterConfig& config = {});

/// Gradients of a scalar loss w.r.t. the geometric/appearance parameters.
/// rotation gradients are w.r.t. the quaternion coefficients (w, x, y, z),
/// projected onto the tangent of the unit sphere.
struct RadianceGradients {
    std::vector<Eigen::Vector3d> mu;
    std::vector<Eigen::Vector4d> rotation;
    std::vector<Eigen::Vector3d> scale;
    std::vector<double> opacity;
    std::vector<Eigen::Vector3d> color;

    explicit RadianceGradients(std::size_t n = 0)
        : mu(n, Eigen::Vector3d::Zero()),
          rotation(n, Eigen::Vector4d::Zero()),
          scale(n, Eigen::Vector3d::Zero()),
          opacity(n, 0.0),
          color(n, Eigen::Vector3d::Zero()) {}
};

/// Backpropagates d loss / d color (3 x H x W) and optionally d loss / d depth
/// (1 x H x W; pass an empty tensor to skip) into `grads` (accumulated).
void render_backward(const GaussianField& field, const CameraPose& pose,
                     const CameraIntrinsics& intrinsics, const Tensor3& grad_color,
                     const Tensor3& grad_depth, RadianceGradients& grads,
                     const RasterConfig& config = {});

/// Same, with an additional alpha cotangent (1 x H x W, or empty).
void render_backward(const GaussianField& field, const CameraPose& pose,
                     const CameraIntrinsics& intrinsics, const Tensor3& grad_color,
                     const Tensor3& grad_depth, const Tensor3& grad_alpha, RadianceGradients& grads,
                     const RasterConfig& config = {});

/// Pixels with at least this much accumulated alpha carry a surface depth.
inline constexpr double kSurfaceAlpha = 0.5;

/// depth / alpha where alpha > kSurfaceAlpha, 0 elsewhere: what a depth
/// sensor would report for the rendered surface.
Tensor3 surface_depth(const RenderOutput& out);

}  // namespace xgs
