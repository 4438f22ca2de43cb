#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "xgs/grid.hpp"
#include "xgs/rasterizer.hpp"
#include "xgs/tensor.hpp"

namespace xgs {

/// Grid-sampled semantic target G* (D x H_s x W_s) with validity mask V (1 x H_s x W_s).
struct SupervisionTarget {
    Tensor3 features;
    Tensor3 valid;
    GridSpec grid;

    int valid_count() const;
};

/// Region-indexed annotation: per-pixel region id (-1 = background) and the
/// R x D region feature table.
struct RegionAnnotation {
    int height = 0;
    int width = 0;
    std::vector<int> labels;  // row-major H x W
    Eigen::MatrixXd phi;      // R x D

    int label(int u, int v) const { return labels[static_cast<std::size_t>(u) * width + v]; }
    int regions() const { return static_cast<int>(phi.rows()); }
    /// Throws CorruptAnnotation if any label is outside {-1, 0..R-1}.
    void validate() const;
};

/// Low-resolution continuous feature map P (D x H_f x W_f).
struct ContinuousFeatureSource {
    Tensor3 features;
};

SupervisionTarget build_target_discrete(const RegionAnnotation& annotation, const GridSpec& grid);
SupervisionTarget build_target_continuous(const ContinuousFeatureSource& source, const GridSpec& grid);

/// round() with ties away from zero, as used for the nearest-neighbour alignment.
int round_half_away(double x);

struct SemanticLoss {
    double value = 0.0;
    Tensor3 cotangent;  // d value / d prediction, D x H_s x W_s
    int valid_cells = 0;
};

/// cos(p, t) = p.t / max(|p||t|, kCosineEpsilon); cos(0, 0) = 1.
inline constexpr double kCosineEpsilon = 1e-8;

/// lambda_sem * [mean_valid (1 - cos) + mean_valid |pred - target|_1 / D].
/// Zero valid cells give a zero loss and a zero cotangent.
SemanticLoss masked_semantic_loss(const CompactFeatureMap& prediction, const SupervisionTarget& target,
                                  double lambda_sem = 1.0);

/// Several offsets of one stride packed to a fixed (ceil(H/s), ceil(W/s))
/// shape; cells past each offset's own H_s/W_s are padding with V = 0.
struct BatchedTargets {
    int stride = 1;
    int rows = 0;
    int cols = 0;
    std::vector<std::pair<int, int>> offsets;
    std::vector<SupervisionTarget> padded;  // one per offset, all rows x cols
};

BatchedTargets build_batched_discrete(const RegionAnnotation& annotation, int stride,
                                      const std::vector<std::pair<int, int>>& offsets);

}  // namespace xgs
