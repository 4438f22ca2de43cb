#include "xgs/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <span>

#include <Eigen/Eigenvalues>

#include "xgs/error.hpp"

namespace xgs {
namespace {

int floor_div(int a, int b) {
    int q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

int ceil_div(int a, int b) { return -floor_div(-a, b); }

/// Splat positions (into the sorted splat list) overlapping each grid cell,
/// front to back. CSR layout: cell c owns items[start[c] .. start[c+1]).
struct CellBins {
    std::vector<int> start;
    std::vector<int> items;

    std::span<const int> cell(int c) const {
        return {items.data() + start[c], static_cast<std::size_t>(start[c + 1] - start[c])};
    }
};

struct CellRange {
    int m0, m1, n0, n1;
    bool empty() const { return m0 > m1 || n0 > n1; }
};

CellRange cells_covered(const ProjectedSplat& s, const GridSpec& grid, int rows, int cols) {
    const int st = grid.stride();
    CellRange r;
    r.m0 = std::max(0, ceil_div(s.y0 - grid.offset_h(), st));
    r.m1 = std::min(rows - 1, floor_div(s.y1 - grid.offset_h(), st));
    r.n0 = std::max(0, ceil_div(s.x0 - grid.offset_w(), st));
    r.n1 = std::min(cols - 1, floor_div(s.x1 - grid.offset_w(), st));
    return r;
}

CellBins bin_splats(const std::vector<ProjectedSplat>& splats, const GridSpec& grid) {
    const int rows = grid.rows();
    const int cols = grid.cols();
    CellBins bins;
    bins.start.assign(static_cast<std::size_t>(rows) * cols + 1, 0);
    for (const auto& s : splats) {
        const CellRange r = cells_covered(s, grid, rows, cols);
        if (r.empty()) continue;
        for (int m = r.m0; m <= r.m1; ++m) {
            for (int n = r.n0; n <= r.n1; ++n) ++bins.start[m * cols + n + 1];
        }
    }
    for (std::size_t c = 1; c < bins.start.size(); ++c) bins.start[c] += bins.start[c - 1];
    bins.items.resize(bins.start.back());
    std::vector<int> fill(bins.start.begin(), bins.start.end() - 1);
    for (int si = 0; si < static_cast<int>(splats.size()); ++si) {
        const CellRange r = cells_covered(splats[si], grid, rows, cols);
        if (r.empty()) continue;
        for (int m = r.m0; m <= r.m1; ++m) {
            for (int n = r.n0; n <= r.n1; ++n) bins.items[fill[m * cols + n]++] = si;
        }
    }
    return bins;
}

/// Walks the front-to-back list at pixel (x, y), calling
/// visit(splat_pos, alpha, gaussian, transmittance_before, dx, dy) for every
/// contributing splat. Returns the final transmittance.
template <class Visit>
double walk_pixel(const std::vector<ProjectedSplat>& splats, std::span<const int> bin, double x,
                  double y, const RasterConfig& config, std::uint64_t& steps, Visit&& visit) {
    const double cut2 = config.cutoff_sigma * config.cutoff_sigma;
    double T = 1.0;
    for (const int si : bin) {
        ++steps;
        const ProjectedSplat& s = splats[si];
        const double dx = x - s.mean.x();
        const double dy = y - s.mean.y();
        const double q = s.conic(0, 0) * dx * dx + 2.0 * s.conic(0, 1) * dx * dy + s.conic(1, 1) * dy * dy;
        if (q > cut2) continue;
        const double G = std::exp(-0.5 * q);
        const double a = s.opacity * G;
        if (a <= 0.0) continue;
        visit(si, a, G, T, dx, dy);
        T *= (1.0 - a);
        if (T < config.transmittance_min) break;
    }
    return T;
}

void require_nonempty(const GaussianField& field, const char* where) {
    if (field.empty()) throw EmptyScene(std::string(where) + ": field has no Gaussians");
}

/// Derivative of the eigenvalue floor map at `raw`, applied to the symmetric
/// cotangent `g` (Daleckii-Krein divided differences).
Eigen::Matrix2d floor_backward(const Eigen::Matrix2d& raw, double floor, const Eigen::Matrix2d& g) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(raw);
    const Eigen::Vector2d lambda = eig.eigenvalues();
    if (lambda.minCoeff() >= floor) return g;
    const Eigen::Matrix2d V = eig.eigenvectors();
    Eigen::Matrix2d gh = V.transpose() * g * V;
    auto f = [floor](double l) { return std::max(l, floor); };
    auto df = [floor](double l) { return l > floor ? 1.0 : 0.0; };
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            double dd;
            if (i == j || std::abs(lambda(i) - lambda(j)) < 1e-12) {
                dd = df(lambda(i));
            } else {
                dd = (f(lambda(i)) - f(lambda(j))) / (lambda(i) - lambda(j));
            }
            gh(i, j) *= dd;
        }
    }
    return V * gh * V.transpose();
}

/// d R(q) / d q_c for unit q = (w, x, y, z), c in {w, x, y, z}.
std::array<Eigen::Matrix3d, 4> rotation_partials(const Eigen::Quaterniond& q) {
    const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
    std::array<Eigen::Matrix3d, 4> d;
    d[0] << 0, -2 * z, 2 * y,
            2 * z, 0, -2 * x,
            -2 * y, 2 * x, 0;
    d[1] << 0, 2 * y, 2 * z,
            2 * y, -4 * x, -2 * w,
            2 * z, 2 * w, -4 * x;
    d[2] << -4 * y, 2 * x, 2 * w,
            2 * x, 0, 2 * z,
            -2 * w, 2 * z, -4 * y;
    d[3] << -4 * z, -2 * w, 2 * x,
            2 * w, -4 * z, 2 * y,
            2 * x, 2 * y, 0;
    return d;
}

}  // namespace

std::vector<ProjectedSplat> project_field(const GaussianField& field, const CameraPose& pose,
                                          const CameraIntrinsics& intrinsics, const RasterConfig& config) {
    std::vector<ProjectedSplat> splats;
    splats.reserve(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) {
        const Gaussian& g = field[i];
        const Eigen::Vector3d p = pose.transform(g.mu);
        if (!(p.z() > intrinsics.near) || !(p.z() < intrinsics.far)) continue;

        ProjectedSplat s;
        s.index = static_cast<int>(i);
        s.depth = p.z();
        s.p_cam = p;
        s.mean = project_point(p, intrinsics);
        const Eigen::Matrix3d sigma = covariance_from_parts(g.rotation.normalized(), g.scale);
        const Eigen::Matrix<double, 2, 3> JW = projection_jacobian(p, intrinsics) * pose.rotation;
        s.cov_raw = JW * sigma * JW.transpose();
        s.cov_raw(0, 1) = s.cov_raw(1, 0) = 0.5 * (s.cov_raw(0, 1) + s.cov_raw(1, 0));
        s.cov = floor_eigenvalues(s.cov_raw, config.covariance_floor);
        s.conic = s.cov.inverse();
        s.opacity = g.opacity;

        const double tr = s.cov.trace();
        const double det = s.cov.determinant();
        const double lambda_max = 0.5 * tr + std::sqrt(std::max(0.25 * tr * tr - det, 0.0));
        const double radius = config.cutoff_sigma * std::sqrt(lambda_max);
        if (!std::isfinite(radius) || !s.mean.allFinite()) continue;
        const double lo_x = std::ceil(s.mean.x() - radius), hi_x = std::floor(s.mean.x() + radius);
        const double lo_y = std::ceil(s.mean.y() - radius), hi_y = std::floor(s.mean.y() + radius);
        if (hi_x < 0.0 || hi_y < 0.0 || lo_x > intrinsics.width - 1 || lo_y > intrinsics.height - 1) continue;
        s.x0 = static_cast<int>(std::max(lo_x, 0.0));
        s.x1 = static_cast<int>(std::min(hi_x, static_cast<double>(intrinsics.width - 1)));
        s.y0 = static_cast<int>(std::max(lo_y, 0.0));
        s.y1 = static_cast<int>(std::min(hi_y, static_cast<double>(intrinsics.height - 1)));
        if (s.x0 > s.x1 || s.y0 > s.y1) continue;
        splats.push_back(s);
    }
    std::sort(splats.begin(), splats.end(), [](const ProjectedSplat& a, const ProjectedSplat& b) {
        return a.depth != b.depth ? a.depth < b.depth : a.index < b.index;
    });
    return splats;
}

Tensor3 composite_grid(const std::vector<ProjectedSplat>& splats, const Eigen::MatrixXd& channels,
                       const GridSpec& grid, const RasterConfig& config, Tensor3* alpha_out,
                       RenderStats* stats) {
    const int rows = grid.rows();
    const int cols = grid.cols();
    const int C = static_cast<int>(channels.cols());
    Tensor3 out(C, rows, cols);
    if (alpha_out) *alpha_out = Tensor3(1, rows, cols);
    if (rows == 0 || cols == 0) return out;

    const CellBins bins = bin_splats(splats, grid);
    std::uint64_t steps = 0;
    Eigen::VectorXd acc(C);
    for (int m = 0; m < rows; ++m) {
        for (int n = 0; n < cols; ++n) {
            const PixelCoord px = grid.pixel(m, n);
            acc.setZero();
            const double T = walk_pixel(splats, bins.cell(m * cols + n), px.v, px.u, config, steps,
                                        [&](int si, double a, double, double T_before, double, double) {
                                            acc += (a * T_before) * channels.row(splats[si].index).transpose();
                                        });
            for (int c = 0; c < C; ++c) out(c, m, n) = acc(c);
            if (alpha_out) (*alpha_out)(0, m, n) = 1.0 - T;
        }
    }
    if (stats) {
        stats->blend_steps += steps;
        stats->pixels += static_cast<std::uint64_t>(rows) * cols;
    }
    return out;
}

RenderOutput render(const GaussianField& field, const CameraPose& pose,
                    const CameraIntrinsics& intrinsics, const RasterConfig& config) {
    require_nonempty(field, "render");
    pose.validate();
    intrinsics.validate();
    const auto splats = project_field(field, pose, intrinsics, config);

    Eigen::MatrixXd channels = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(field.size()), 4);
    for (const auto& s : splats) {
        channels.row(s.index).head<3>() = field[s.index].color.transpose();
        channels(s.index, 3) = s.depth;
    }
    RenderOutput out;
    Tensor3 alpha;
    const GridSpec grid = GridSpec::dense(intrinsics.height, intrinsics.width);
    const Tensor3 all = composite_grid(splats, channels, grid, config, &alpha, &out.stats);
    out.color = Tensor3(3, intrinsics.height, intrinsics.width);
    out.depth = Tensor3(1, intrinsics.height, intrinsics.width);
    for (int u = 0; u < intrinsics.height; ++u) {
        for (int v = 0; v < intrinsics.width; ++v) {
            for (int c = 0; c < 3; ++c) out.color(c, u, v) = all(c, u, v);
            out.depth(0, u, v) = std::max(all(3, u, v), 0.0);
        }
    }
    out.alpha = std::move(alpha);
    return out;
}

FeatureView prepare_feature_view(const GaussianField& field, const Codebook& codebook, const CameraPose& pose,
                                 const CameraIntrinsics& intrinsics, const GridSpec& grid,
                                 const RasterConfig& config) {
    require_nonempty(field, "prepare_feature_view");
    if (field.K() != codebook.K()) throw InvalidInput("field K does not match codebook K");
    if (grid.height() != intrinsics.height || grid.width() != intrinsics.width) {
        throw InvalidInput("prepare_feature_view: grid resolution does not match intrinsics");
    }
    FeatureView view;
    view.grid = grid;
    const auto N = static_cast<Eigen::Index>(field.size());
    view.features = Eigen::MatrixXd::Zero(N, codebook.D());
    view.slot.assign(field.size(), -1);
    if (grid.empty()) return view;

    view.splats = project_field(field, pose, intrinsics, config);
    const int rows = grid.rows(), cols = grid.cols();
    std::vector<int> decoded;
    for (const auto& s : view.splats) {
        if (cells_covered(s, grid, rows, cols).empty()) continue;
        view.slot[static_cast<std::size_t>(s.index)] = static_cast<int>(decoded.size());
        decoded.push_back(s.index);
    }
    view.weights.resize(static_cast<Eigen::Index>(decoded.size()), field.K());
    for (std::size_t r = 0; r < decoded.size(); ++r) {
        const auto row = static_cast<Eigen::Index>(r);
        view.weights.row(row) = mixture_weights(field[static_cast<std::size_t>(decoded[r])].logits).transpose();
        view.features.row(decoded[r]).noalias() = view.weights.row(row) * codebook.E;
    }
    return view;
}

CompactFeatureMap render_features_grid(const FeatureView& view, const RasterConfig& config, RenderStats* stats) {
    CompactFeatureMap out;
    out.grid = view.grid;
    if (view.grid.empty()) {
        out.data = Tensor3(static_cast<int>(view.features.cols()), view.grid.rows(), view.grid.cols());
        return out;
    }
    out.data = composite_grid(view.splats, view.features, view.grid, config, nullptr, stats);
    return out;
}

CompactFeatureMap render_features_grid(const GaussianField& field, const Codebook& codebook,
                                       const CameraPose& pose, const CameraIntrinsics& intrinsics,
                                       const GridSpec& grid, const RasterConfig& config, RenderStats* stats) {
    require_nonempty(field, "render_features_grid");
    if (grid.height() != intrinsics.height || grid.width() != intrinsics.width) {
        throw InvalidInput("render_features_grid: grid resolution does not match intrinsics");
    }
    return render_features_grid(prepare_feature_view(field, codebook, pose, intrinsics, grid, config), config,
                                stats);
}

Tensor3 render_features_dense(const GaussianField& field, const Codebook& codebook,
                              const CameraPose& pose, const CameraIntrinsics& intrinsics,
                              const RasterConfig& config, RenderStats* stats) {
    return render_features_grid(field, codebook, pose, intrinsics,
                                GridSpec::dense(intrinsics.height, intrinsics.width), config, stats)
        .data;
}

Tensor3 render_weights_grid(const GaussianField& field, const CameraPose& pose,
                            const CameraIntrinsics& intrinsics, const GridSpec& grid,
                            const RasterConfig& config) {
    require_nonempty(field, "render_weights_grid");
    const auto splats = project_field(field, pose, intrinsics, config);
    Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(field.size()), field.K());
    for (const auto& s : splats) weights.row(s.index) = mixture_weights(field[s.index].logits).transpose();
    return composite_grid(splats, weights, grid, config);
}

std::vector<int> dominant_contributors(const GaussianField& field, const CameraPose& pose,
                                       const CameraIntrinsics& intrinsics, const RasterConfig& config) {
    require_nonempty(field, "dominant_contributors");
    const int H = intrinsics.height;
    const int W = intrinsics.width;
    const auto splats = project_field(field, pose, intrinsics, config);
    const GridSpec grid = GridSpec::dense(H, W);
    const CellBins bins = bin_splats(splats, grid);
    std::vector<int> out(static_cast<std::size_t>(H) * W, -1);
    std::uint64_t steps = 0;
    for (int u = 0; u < H; ++u) {
        for (int v = 0; v < W; ++v) {
            double best = 0.0;
            int who = -1;
            walk_pixel(splats, bins.cell(u * W + v), v, u, config, steps,
                       [&](int si, double a, double, double T, double, double) {
                           if (a * T > best) {
                               best = a * T;
                               who = splats[si].index;
                           }
                       });
            out[static_cast<std::size_t>(u) * W + v] = who;
        }
    }
    return out;
}

namespace {

// d loss / d f_i for every Gaussian reached by a sampled pixel.
Eigen::MatrixXd feature_cotangents(const FeatureView& view, const Codebook& codebook, const Tensor3& upstream,
                                   const RasterConfig& config) {
    const GridSpec& grid = view.grid;
    const int rows = grid.rows();
    const int cols = grid.cols();
    const int D = codebook.D();
    if (view.features.cols() != D || view.weights.cols() != codebook.K()) {
        throw InvalidInput("feature_gradients: view does not match the codebook");
    }
    if (upstream.channels() != D || upstream.height() != rows || upstream.width() != cols) {
        throw InvalidInput("feature_gradients: upstream shape does not match the grid");
    }
    Eigen::MatrixXd features = Eigen::MatrixXd::Zero(view.features.rows(), D);
    if (rows == 0 || cols == 0) return features;

    const CellBins bins = bin_splats(view.splats, grid);
    std::uint64_t steps = 0;
    Eigen::VectorXd cot(D);
    for (int m = 0; m < rows; ++m) {
        for (int n = 0; n < cols; ++n) {
            for (int c = 0; c < D; ++c) cot(c) = upstream(c, m, n);
            if (cot.isZero(0.0)) continue;
            const PixelCoord px = grid.pixel(m, n);
            walk_pixel(view.splats, bins.cell(m * cols + n), px.v, px.u, config, steps,
                       [&](int si, double a, double, double T_before, double, double) {
                           features.row(view.splats[si].index) += (a * T_before) * cot.transpose();
                       });
        }
    }
    return features;
}

// Chains d loss / d f_i through f_i = E^T softmax(z_i).
template <class Row>
void softmax_chain(const FeatureView& view, const Codebook& codebook, Eigen::Index i,
                   const Eigen::MatrixXd& features, Row&& out) {
    const auto w = view.weights.row(view.slot[static_cast<std::size_t>(i)]);
    const Eigen::RowVectorXd g = features.row(i) * codebook.E.transpose();
    out = w.array() * (g.array() - w.dot(g));
}

}  // namespace

FeatureGradients feature_gradients(const FeatureView& view, const Codebook& codebook, const Tensor3& upstream,
                                   const RasterConfig& config) {
    FeatureGradients out;
    out.features = feature_cotangents(view, codebook, upstream, config);
    out.logits = Eigen::MatrixXd::Zero(out.features.rows(), codebook.K());
    for (Eigen::Index i = 0; i < out.features.rows(); ++i) {
        if (out.features.row(i).isZero(0.0)) continue;
        softmax_chain(view, codebook, i, out.features, out.logits.row(i));
    }
    return out;
}

void feature_logit_gradients(const FeatureView& view, const Codebook& codebook, const Tensor3& upstream,
                             Eigen::Ref<Eigen::VectorXd> logit_grad, const RasterConfig& config) {
    const Eigen::MatrixXd features = feature_cotangents(view, codebook, upstream, config);
    const Eigen::Index K = codebook.K();
    if (logit_grad.size() != features.rows() * K) {
        throw InvalidInput("feature_logit_gradients: output size must be N * K");
    }
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        auto seg = logit_grad.segment(i * K, K).transpose();
        if (features.row(i).isZero(0.0))
            seg.setZero();
        else
            softmax_chain(view, codebook, i, features, seg);
    }
}

FeatureGradients feature_gradients(const GaussianField& field, const Codebook& codebook,
                                   const CameraPose& pose, const CameraIntrinsics& intrinsics,
                                   const GridSpec& grid, const Tensor3& upstream,
                                   const RasterConfig& config) {
    require_nonempty(field, "feature_gradients");
    if (field.K() != codebook.K()) throw InvalidInput("feature_gradients: field K does not match codebook K");
    if (upstream.channels() != codebook.D() || upstream.height() != grid.rows() || upstream.width() != grid.cols()) {
        throw InvalidInput("feature_gradients: upstream shape does not match the grid");
    }
    return feature_gradients(prepare_feature_view(field, codebook, pose, intrinsics, grid, config), codebook,
                             upstream, config);
}

Tensor3 surface_depth(const RenderOutput& out) {
    Tensor3 d(1, out.depth.height(), out.depth.width());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double a = out.alpha.data()[i];
        if (a > kSurfaceAlpha) d.data()[i] = out.depth.data()[i] / a;
    }
    return d;
}

void render_backward(const GaussianField& field, const CameraPose& pose,
                     const CameraIntrinsics& intrinsics, const Tensor3& grad_color,
                     const Tensor3& grad_depth, RadianceGradients& grads, const RasterConfig& config) {
    render_backward(field, pose, intrinsics, grad_color, grad_depth, Tensor3(), grads, config);
}

void render_backward(const GaussianField& field, const CameraPose& pose,
                     const CameraIntrinsics& intrinsics, const Tensor3& grad_color,
                     const Tensor3& grad_depth, const Tensor3& grad_alpha, RadianceGradients& grads,
                     const RasterConfig& config) {
    require_nonempty(field, "render_backward");
    const int H = intrinsics.height;
    const int W = intrinsics.width;
    if (grad_color.channels() != 3 || grad_color.height() != H || grad_color.width() != W) {
        throw InvalidInput("render_backward: color cotangent must be 3 x H x W");
    }
    const bool use_depth = !grad_depth.empty();
    if (use_depth && (grad_depth.channels() != 1 || grad_depth.height() != H || grad_depth.width() != W)) {
        throw InvalidInput("render_backward: depth cotangent must be 1 x H x W");
    }
    const bool use_alpha = !grad_alpha.empty();
    if (use_alpha && (grad_alpha.channels() != 1 || grad_alpha.height() != H || grad_alpha.width() != W)) {
        throw InvalidInput("render_backward: alpha cotangent must be 1 x H x W");
    }
    if (grads.mu.size() != field.size()) grads = RadianceGradients(field.size());

    const auto splats = project_field(field, pose, intrinsics, config);
    const GridSpec grid = GridSpec::dense(H, W);
    const CellBins bins = bin_splats(splats, grid);

    const std::size_t S = splats.size();
    std::vector<Eigen::Vector2d> g_mean(S, Eigen::Vector2d::Zero());
    std::vector<Eigen::Matrix2d> g_conic(S, Eigen::Matrix2d::Zero());
    std::vector<double> g_opacity(S, 0.0);
    std::vector<double> g_depth(S, 0.0);
    std::vector<Eigen::Vector3d> g_color(S, Eigen::Vector3d::Zero());

    struct Entry {
        int si;
        double a, G, T, dx, dy;
    };
    std::vector<Entry> entries;
    std::uint64_t steps = 0;

    for (int u = 0; u < H; ++u) {
        for (int v = 0; v < W; ++v) {
            const Eigen::Vector3d gc(grad_color(0, u, v), grad_color(1, u, v), grad_color(2, u, v));
            const double gd = use_depth ? grad_depth(0, u, v) : 0.0;
            const double ga = use_alpha ? grad_alpha(0, u, v) : 0.0;
            if (gc.isZero(0.0) && gd == 0.0 && ga == 0.0) continue;

            entries.clear();
            walk_pixel(splats, bins.cell(u * W + v), v, u, config, steps,
                       [&](int si, double a, double G, double T, double dx, double dy) {
                           entries.push_back({si, a, G, T, dx, dy});
                       });

            // Back to front; `behind_*` is what lies behind entry i, normalised
            // by the transmittance just after i.
            Eigen::Vector3d behind_c = Eigen::Vector3d::Zero();
            double behind_d = 0.0;
            double behind_a = 0.0;
            for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
                const Entry& e = *it;
                const ProjectedSplat& s = splats[e.si];
                const Eigen::Vector3d& c = field[s.index].color;
                const double w = e.a * e.T;
                g_color[e.si] += w * gc;
                g_depth[e.si] += w * gd;
                const double dL_da =
                    e.T * (gc.dot(c - behind_c) + gd * (s.depth - behind_d) + ga * (1.0 - behind_a));
                behind_c = e.a * c + (1.0 - e.a) * behind_c;
                behind_d = e.a * s.depth + (1.0 - e.a) * behind_d;
                behind_a = e.a + (1.0 - e.a) * behind_a;

                g_opacity[e.si] += e.G * dL_da;
                // a = o exp(-q/2), q = d^T Q d with d = pixel - mean.
                const double dL_dq = -0.5 * e.a * dL_da;
                const Eigen::Vector2d d(e.dx, e.dy);
                g_mean[e.si] += dL_dq * (-2.0 * (s.conic * d));
                g_conic[e.si] += dL_dq * (d * d.transpose());
            }
        }
    }

    for (std::size_t si = 0; si < S; ++si) {
        const ProjectedSplat& s = splats[si];
        const int i = s.index;
        const Gaussian& g = field[i];
        grads.color[i] += g_color[si];
        grads.opacity[i] += g_opacity[si];

        // conic = cov^-1  ->  dL/dcov = -Q G Q
        Eigen::Matrix2d gq = 0.5 * (g_conic[si] + g_conic[si].transpose());
        Eigen::Matrix2d g_cov = -s.conic * gq * s.conic;
        g_cov = floor_backward(s.cov_raw, config.covariance_floor, g_cov);

        const Eigen::Vector3d& p = s.p_cam;
        const Eigen::Matrix<double, 2, 3> J = projection_jacobian(p, intrinsics);
        const Eigen::Matrix3d& Wr = pose.rotation;
        const Eigen::Quaterniond qn = g.rotation.normalized();
        const Eigen::Matrix3d R = qn.toRotationMatrix();
        const Eigen::Matrix3d RS = R * g.scale.asDiagonal();
        const Eigen::Matrix3d sigma = RS * RS.transpose();
        const Eigen::Matrix3d A = Wr * sigma * Wr.transpose();

        // cov_raw = J A J^T
        const Eigen::Matrix3d g_A = J.transpose() * g_cov * J;
        const Eigen::Matrix<double, 2, 3> g_J = 2.0 * g_cov * J * A;
        const Eigen::Matrix3d g_sigma = Wr.transpose() * g_A * Wr;

        // Camera-space position: mean, depth and the Jacobian all depend on p.
        Eigen::Vector3d g_p = J.transpose() * g_mean[si];
        g_p.z() += g_depth[si];
        const double iz = 1.0 / p.z();
        const double iz2 = iz * iz;
        const double iz3 = iz2 * iz;
        const double fx = intrinsics.fx, fy = intrinsics.fy;
        g_p.x() += g_J(0, 2) * (-fx * iz2);
        g_p.y() += g_J(1, 2) * (-fy * iz2);
        g_p.z() += g_J(0, 0) * (-fx * iz2) + g_J(0, 2) * (2.0 * fx * p.x() * iz3) +
                   g_J(1, 1) * (-fy * iz2) + g_J(1, 2) * (2.0 * fy * p.y() * iz3);
        grads.mu[i] += Wr.transpose() * g_p;

        // sigma = M M^T, M = R S
        const Eigen::Matrix3d g_M = 2.0 * g_sigma * RS;
        for (int j = 0; j < 3; ++j) grads.scale[i](j) += g_M.col(j).dot(R.col(j));
        const Eigen::Matrix3d g_R = g_M * g.scale.asDiagonal();
        const auto dR = rotation_partials(qn);
        Eigen::Vector4d g_q;
        for (int c = 0; c < 4; ++c) g_q(c) = (g_R.array() * dR[c].array()).sum();
        const Eigen::Vector4d qv(qn.w(), qn.x(), qn.y(), qn.z());
        g_q -= g_q.dot(qv) * qv;
        grads.rotation[i] += g_q / g.rotation.norm();
    }
}

}  // namespace xgs
