#include "xgs/supervision.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xgs/error.hpp"

namespace xgs {

int SupervisionTarget::valid_count() const {
    int n = 0;
    for (double v : valid.data()) n += v != 0.0 ? 1 : 0;
    return n;
}

void RegionAnnotation::validate() const {
    if (static_cast<std::size_t>(height) * width != labels.size()) {
        throw CorruptAnnotation("RegionAnnotation: label map size does not match resolution");
    }
    const int R = regions();
    for (int r : labels) {
        if (r < -1 || r >= R) {
            throw CorruptAnnotation("RegionAnnotation: region index " + std::to_string(r) +
                                    " outside [-1, " + std::to_string(R) + ")");
        }
    }
}

SupervisionTarget build_target_discrete(const RegionAnnotation& annotation, const GridSpec& grid) {
    if (annotation.height != grid.height() || annotation.width != grid.width()) {
        throw InvalidInput("build_target_discrete: annotation resolution does not match grid");
    }
    const int D = static_cast<int>(annotation.phi.cols());
    const int R = annotation.regions();
    const int rows = grid.rows();
    const int cols = grid.cols();
    SupervisionTarget t{Tensor3(D, rows, cols), Tensor3(1, rows, cols), grid};
    for (int m = 0; m < rows; ++m) {
        for (int n = 0; n < cols; ++n) {
            const PixelCoord px = grid.pixel(m, n);
            const int r = annotation.label(px.u, px.v);
            if (r < -1 || r >= R) {
                throw CorruptAnnotation("build_target_discrete: region index " + std::to_string(r) +
                                        " at (" + std::to_string(px.u) + "," + std::to_string(px.v) +
                                        ") outside table of " + std::to_string(R));
            }
            if (r == -1) continue;
            t.valid(0, m, n) = 1.0;
            for (int c = 0; c < D; ++c) t.features(c, m, n) = annotation.phi(r, c);
        }
    }
    return t;
}

int round_half_away(double x) { return static_cast<int>(std::round(x)); }

SupervisionTarget build_target_continuous(const ContinuousFeatureSource& source, const GridSpec& grid) {
    const Tensor3& P = source.features;
    if (P.empty() || P.height() < 1 || P.width() < 1) {
        throw InvalidInput("build_target_continuous: empty feature source");
    }
    const int D = P.channels();
    const int rows = grid.rows();
    const int cols = grid.cols();
    const double su = static_cast<double>(P.height() - 1) / std::max(grid.height() - 1, 1);
    const double sv = static_cast<double>(P.width() - 1) / std::max(grid.width() - 1, 1);
    SupervisionTarget t{Tensor3(D, rows, cols), Tensor3(1, rows, cols, 1.0), grid};
    for (int m = 0; m < rows; ++m) {
        for (int n = 0; n < cols; ++n) {
            const PixelCoord px = grid.pixel(m, n);
            const int uu = round_half_away(px.u * su);
            const int vv = round_half_away(px.v * sv);
            for (int c = 0; c < D; ++c) t.features(c, m, n) = P(c, uu, vv);
        }
    }
    return t;
}

SemanticLoss masked_semantic_loss(const CompactFeatureMap& prediction, const SupervisionTarget& target,
                                  double lambda_sem) {
    const Tensor3& pred = prediction.data;
    if (!pred.same_shape(target.features) || target.valid.channels() != 1 ||
        target.valid.height() != pred.height() || target.valid.width() != pred.width()) {
        throw InvalidInput("masked_semantic_loss: prediction and target shapes differ");
    }
    const int D = pred.channels();
    SemanticLoss out;
    out.cotangent = Tensor3(D, pred.height(), pred.width());
    out.valid_cells = target.valid_count();
    if (out.valid_cells == 0 || D == 0) return out;

    const double inv_valid = 1.0 / out.valid_cells;
    double cos_sum = 0.0;
    double l1_sum = 0.0;
    Eigen::VectorXd p(D), t(D);
    for (int m = 0; m < pred.height(); ++m) {
        for (int n = 0; n < pred.width(); ++n) {
            if (target.valid(0, m, n) == 0.0) continue;
            for (int c = 0; c < D; ++c) {
                p(c) = pred(c, m, n);
                t(c) = target.features(c, m, n);
            }
            const double np = p.norm();
            const double nt = t.norm();
            const double denom = std::max(np * nt, kCosineEpsilon);
            double cosine = 1.0;
            Eigen::VectorXd g_cos = Eigen::VectorXd::Zero(D);
            if (np > 0.0 || nt > 0.0) {
                const double dot = p.dot(t);
                cosine = dot / denom;
                if (np * nt > kCosineEpsilon) {
                    g_cos = t / denom - (cosine / (np * np)) * p;
                } else if (np > 0.0) {
                    // Below the guard the denominator is constant. At p = 0 the
                    // zero subgradient is used.
                    g_cos = t / denom;
                }
            }
            cos_sum += 1.0 - cosine;
            const Eigen::ArrayXd diff = (p - t).array();
            l1_sum += diff.abs().sum() / D;
            for (int c = 0; c < D; ++c) {
                const double sgn = diff(c) > 0.0 ? 1.0 : (diff(c) < 0.0 ? -1.0 : 0.0);
                out.cotangent(c, m, n) = lambda_sem * inv_valid * (-g_cos(c) + sgn / D);
            }
        }
    }
    out.value = lambda_sem * (cos_sum * inv_valid + l1_sum * inv_valid);
    return out;
}

BatchedTargets build_batched_discrete(const RegionAnnotation& annotation, int stride,
                                      const std::vector<std::pair<int, int>>& offsets) {
    if (stride < 1) throw InvalidInput("build_batched_discrete: stride must be >= 1");
    BatchedTargets out;
    out.stride = stride;
    out.rows = (annotation.height + stride - 1) / stride;
    out.cols = (annotation.width + stride - 1) / stride;
    out.offsets = offsets;
    const int D = static_cast<int>(annotation.phi.cols());
    for (const auto& [oh, ow] : offsets) {
        const GridSpec grid(annotation.height, annotation.width, stride, oh, ow);
        const SupervisionTarget t = build_target_discrete(annotation, grid);
        SupervisionTarget padded{Tensor3(D, out.rows, out.cols), Tensor3(1, out.rows, out.cols), grid};
        for (int m = 0; m < grid.rows(); ++m) {
            for (int n = 0; n < grid.cols(); ++n) {
                padded.valid(0, m, n) = t.valid(0, m, n);
                for (int c = 0; c < D; ++c) padded.features(c, m, n) = t.features(c, m, n);
            }
        }
        out.padded.push_back(std::move(padded));
    }
    return out;
}

}  // namespace xgs
