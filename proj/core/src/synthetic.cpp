#include "xgs/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "xgs/error.hpp"
#include "xgs/rasterizer.hpp"

namespace xgs {

std::string to_string(TrajectoryKind kind) {
    switch (kind) {
        case TrajectoryKind::Orbit: return "orbit";
        case TrajectoryKind::Line: return "line";
        case TrajectoryKind::RandomWalk: return "random-walk";
    }
    return "orbit";
}

TrajectoryKind trajectory_kind_from_string(const std::string& s) {
    if (s == "orbit") return TrajectoryKind::Orbit;
    if (s == "line") return TrajectoryKind::Line;
    if (s == "random-walk" || s == "random_walk") return TrajectoryKind::RandomWalk;
    throw InvalidInput("unknown trajectory kind '" + s + "'");
}

std::string to_string(SensorMode mode) { return mode == SensorMode::Rgbd ? "rgbd" : "rgb"; }

SensorMode sensor_mode_from_string(const std::string& s) {
    if (s == "rgb") return SensorMode::Rgb;
    if (s == "rgbd") return SensorMode::Rgbd;
    throw InvalidInput("unknown sensor mode '" + s + "'");
}

CameraIntrinsics SceneRecipe::intrinsics() const {
    CameraIntrinsics k;
    k.fx = focal;
    k.fy = focal;
    k.cx = (width - 1) / 2.0;
    k.cy = (height - 1) / 2.0;
    k.width = width;
    k.height = height;
    return k;
}

namespace {

Json vec3(const Eigen::Vector3d& v) { return Json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3_from(const Json& j, const char* key) {
    if (!j.is_array() || j.size() != 3) throw ParseError(std::string("recipe: '") + key + "' must be a 3-array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void validate(const SceneRecipe& r) {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw InvalidInput(std::string("recipe: ") + what);
    };
    need(r.n_gaussians >= 1, "n_gaussians must be >= 1");
    need(r.regions >= 1, "regions must be >= 1");
    need(r.feature_dim >= 1, "feature_dim must be >= 1");
    need(r.codebook_size >= r.regions, "codebook_size must be >= regions");
    need(r.frames >= 2, "frames must be >= 2");
    need(r.width >= 1 && r.height >= 1, "image size must be positive");
    need(r.focal > 0.0, "focal must be positive");
    need((r.box_max.array() >= r.box_min.array()).all(), "box_max must dominate box_min");
    need(r.orbit_radius > 0.0, "orbit_radius must be positive");
    need(r.scale_factor > 0.0, "scale_factor must be positive");
    need(r.anisotropy >= 0.0 && r.anisotropy < 1.0, "anisotropy must lie in [0,1)");
    need(r.opacity > 0.0 && r.opacity <= 1.0, "opacity must lie in (0,1]");
    need(r.generic_share >= 0.0 && r.generic_share < 1.0, "generic_share must lie in [0,1)");
    need(r.max_feature_cosine > -1.0 && r.max_feature_cosine <= 1.0, "max_feature_cosine must lie in (-1,1]");
    need(r.pixel_noise >= 0.0 && r.color_noise >= 0.0, "noise levels must be non-negative");
    need(r.feature_downsample >= 0, "feature_downsample must be >= 0");
    need(r.walk_max_step >= 0.0 && r.walk_max_rotation >= 0.0, "random walk bounds must be non-negative");
}

}  // namespace

Json SceneRecipe::to_json() const {
    return Json{{"seed", seed},
                {"n_gaussians", n_gaussians},
                {"box_min", vec3(box_min)},
                {"box_max", vec3(box_max)},
                {"regions", regions},
                {"feature_dim", feature_dim},
                {"codebook_size", codebook_size},
                {"trajectory", xgs::to_string(trajectory)},
                {"frames", frames},
                {"width", width},
                {"height", height},
                {"focal", focal},
                {"orbit_radius", orbit_radius},
                {"arc_degrees", arc_degrees},
                {"elevation", elevation},
                {"line_step", line_step},
                {"walk_max_step", walk_max_step},
                {"walk_max_rotation", walk_max_rotation},
                {"scale_factor", scale_factor},
                {"anisotropy", anisotropy},
                {"opacity", opacity},
                {"color_noise", color_noise},
                {"generic_share", generic_share},
                {"max_feature_cosine", max_feature_cosine},
                {"pixel_noise", pixel_noise},
                {"feature_downsample", feature_downsample}};
}

SceneRecipe SceneRecipe::from_json(const Json& j) {
    if (!j.is_object()) throw ParseError("recipe: expected a JSON object");
    SceneRecipe r;
    const Json defaults = r.to_json();
    for (const auto& [key, value] : j.items()) {
        if (!defaults.contains(key)) throw ParseError("recipe: unknown key '" + key + "'");
    }
    try {
        auto get = [&](const char* key, auto& out) {
            if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
        };
        get("seed", r.seed);
        get("n_gaussians", r.n_gaussians);
        if (j.contains("box_min")) r.box_min = vec3_from(j["box_min"], "box_min");
        if (j.contains("box_max")) r.box_max = vec3_from(j["box_max"], "box_max");
        get("regions", r.regions);
        get("feature_dim", r.feature_dim);
        get("codebook_size", r.codebook_size);
        if (j.contains("trajectory")) r.trajectory = trajectory_kind_from_string(j["trajectory"].get<std::string>());
        get("frames", r.frames);
        get("width", r.width);
        get("height", r.height);
        get("focal", r.focal);
        get("orbit_radius", r.orbit_radius);
        get("arc_degrees", r.arc_degrees);
        get("elevation", r.elevation);
        get("line_step", r.line_step);
        get("walk_max_step", r.walk_max_step);
        get("walk_max_rotation", r.walk_max_rotation);
        get("scale_factor", r.scale_factor);
        get("anisotropy", r.anisotropy);
        get("opacity", r.opacity);
        get("color_noise", r.color_noise);
        get("generic_share", r.generic_share);
        get("max_feature_cosine", r.max_feature_cosine);
        get("pixel_noise", r.pixel_noise);
        get("feature_downsample", r.feature_downsample);
    } catch (const Json::exception& e) {
        throw ParseError(std::string("recipe: ") + e.what());
    }
    validate(r);
    return r;
}

namespace {

Eigen::VectorXd random_unit(std::mt19937_64& rng, int dim) {
    std::normal_distribution<double> normal;
    Eigen::VectorXd v(dim);
    do {
        for (int i = 0; i < dim; ++i) v(i) = normal(rng);
    } while (v.norm() < 1e-9);
    return v.normalized();
}

// Region rows share `share` of a common direction g; the rest is drawn
// orthogonal to g and rejected until every pair meets the cosine bound.
void draw_region_features(const SceneRecipe& r, std::mt19937_64& rng, Eigen::MatrixXd& phi,
                          Eigen::VectorXd& generic) {
    constexpr int kMaxAttempts = 10000;
    const int D = r.feature_dim;
    const double share = D >= 2 ? r.generic_share : 0.0;
    generic = random_unit(rng, D);
    phi.resize(r.regions, D);
    for (int row = 0; row < r.regions; ++row) {
        bool placed = false;
        for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
            Eigen::VectorXd u = random_unit(rng, D);
            if (share > 0.0) {
                u -= u.dot(generic) * generic;
                if (u.norm() < 1e-9) continue;
                u.normalize();
            }
            const Eigen::VectorXd cand = (share * generic + std::sqrt(1.0 - share * share) * u).normalized();
            placed = true;
            for (int prev = 0; prev < row && placed; ++prev) {
                if (cand.dot(phi.row(prev).transpose()) >= r.max_feature_cosine) placed = false;
            }
            if (placed) phi.row(row) = cand.transpose();
        }
        if (!placed) {
            throw GenerationError("cannot draw " + std::to_string(r.regions) + " region features in D=" +
                                  std::to_string(D) + " with pairwise cosine < " +
                                  std::to_string(r.max_feature_cosine));
        }
    }
}

Eigen::Vector3d region_color(int region, int R) {
    // Evenly spaced hues at fixed saturation/value.
    const double h = 6.0 * static_cast<double>(region) / std::max(R, 1);
    const double s = 0.7, v = 0.85;
    const double c = v * s;
    const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
    Eigen::Vector3d rgb;
    switch (static_cast<int>(h) % 6) {
        case 0: rgb << c, x, 0; break;
        case 1: rgb << x, c, 0; break;
        case 2: rgb << 0, c, x; break;
        case 3: rgb << 0, x, c; break;
        case 4: rgb << x, 0, c; break;
        default: rgb << c, 0, x; break;
    }
    return rgb.array() + (v - c);
}

int sector_of(const Eigen::Vector3d& p, const Eigen::Vector3d& center, int R) {
    const double angle = std::atan2(p.y() - center.y(), p.x() - center.x()) + std::numbers::pi;
    const int r = static_cast<int>(angle / (2.0 * std::numbers::pi) * R);
    return std::clamp(r, 0, R - 1);
}

}  // namespace

GeneratedScene generate_scene(const SceneRecipe& recipe) {
    validate(recipe);
    std::mt19937_64 rng(recipe.seed);
    GeneratedScene out;
    draw_region_features(recipe, rng, out.phi, out.generic);

    const int K = recipe.codebook_size;
    out.codebook = Codebook(K, recipe.feature_dim);
    out.codebook.N.head(recipe.regions).setOnes();
    for (int r = 0; r < recipe.regions; ++r) out.codebook.seed_codeword(r, out.phi.row(r).transpose());

    const Eigen::Vector3d lo = recipe.box_min, hi = recipe.box_max;
    const Eigen::Vector3d center = 0.5 * (lo + hi);
    const Eigen::Vector3d extent = hi - lo;
    const int n = recipe.n_gaussians;
    const int cols = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)))));
    const int rows = (n + cols - 1) / cols;
    const double dx = extent.x() / cols, dy = extent.y() / rows;
    const double spacing = std::max(std::sqrt(std::max(dx * dy, 1e-12)), 1e-3);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    std::normal_distribution<double> normal;

    out.field = GaussianField(K);
    for (int i = 0; i < n; ++i) {
        Gaussian g;
        if (n == 1) {
            g.mu = center;
        } else {
            const int cx = i % cols, cy = i / cols;
            g.mu.x() = lo.x() + (cx + unit(rng)) * dx;
            g.mu.y() = lo.y() + (cy + unit(rng)) * dy;
            g.mu.z() = lo.z() + unit(rng) * extent.z();
        }
        const double base = recipe.scale_factor * spacing;
        for (int a = 0; a < 3; ++a) g.scale(a) = base * (1.0 + recipe.anisotropy * sym(rng));
        g.rotation = Eigen::Quaterniond(normal(rng), normal(rng), normal(rng), normal(rng)).normalized();
        g.opacity = recipe.opacity;
        const int region = n == 1 ? 0 : sector_of(g.mu, center, recipe.regions);
        Eigen::Vector3d noise(normal(rng), normal(rng), normal(rng));
        g.color = (region_color(region, recipe.regions) + recipe.color_noise * noise).cwiseMax(0.0).cwiseMin(1.0);
        g.logits = Eigen::VectorXd::Zero(K);
        g.logits(region) = 20.0;
        out.field.add(std::move(g));
        out.regions.push_back(region);
    }
    return out;
}

std::vector<CameraPose> generate_trajectory(const SceneRecipe& recipe) {
    validate(recipe);
    const Eigen::Vector3d center = 0.5 * (recipe.box_min + recipe.box_max);
    const double r = recipe.orbit_radius;
    std::vector<CameraPose> poses;
    poses.reserve(recipe.frames);

    switch (recipe.trajectory) {
        case TrajectoryKind::Orbit: {
            const double step = recipe.arc_degrees / recipe.frames * std::numbers::pi / 180.0;
            for (int i = 0; i < recipe.frames; ++i) {
                const double th = i * step;
                const Eigen::Vector3d eye = center + Eigen::Vector3d(r * std::sin(th), recipe.elevation, -r * std::cos(th));
                poses.push_back(CameraPose::look_at(eye, center));
            }
            break;
        }
        case TrajectoryKind::Line: {
            const double start = -0.5 * recipe.line_step * (recipe.frames - 1);
            const CameraPose base = CameraPose::look_at(center + Eigen::Vector3d(0, recipe.elevation, -r), center);
            for (int i = 0; i < recipe.frames; ++i) {
                const Eigen::Vector3d eye = center + Eigen::Vector3d(start + i * recipe.line_step, recipe.elevation, -r);
                CameraPose p = base;
                p.translation = -p.rotation * eye;
                poses.push_back(p);
            }
            break;
        }
        case TrajectoryKind::RandomWalk: {
            std::mt19937_64 rng(recipe.seed ^ 0x9e3779b97f4a7c15ULL);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            Eigen::Vector3d eye = center + Eigen::Vector3d(0, recipe.elevation, -r);
            Eigen::Matrix3d R = CameraPose::look_at(eye, center).rotation;
            const double max_rot = recipe.walk_max_rotation * std::numbers::pi / 180.0;
            for (int i = 0; i < recipe.frames; ++i) {
                if (i > 0) {
                    eye += random_unit(rng, 3) * (recipe.walk_max_step * unit(rng));
                    R = so3_exp(Eigen::Vector3d(random_unit(rng, 3) * (max_rot * unit(rng)))) * R;
                }
                CameraPose p;
                p.rotation = R;
                p.translation = -R * eye;
                poses.push_back(p);
            }
            break;
        }
    }
    return poses;
}

std::vector<int> render_region_map(const GaussianField& field, const std::vector<int>& regions,
                                   const CameraPose& pose, const CameraIntrinsics& intrinsics) {
    if (regions.size() != field.size()) throw InvalidInput("render_region_map: one region id per Gaussian required");
    std::vector<int> labels = dominant_contributors(field, pose, intrinsics);
    for (int& l : labels) l = l < 0 ? -1 : regions[static_cast<std::size_t>(l)];
    return labels;
}

CameraFrame render_ground_truth_frame(const GeneratedScene& scene, const CameraPose& pose, int frame_id,
                                      const SceneRecipe& recipe, SensorMode mode) {
    const CameraIntrinsics k = recipe.intrinsics();
    CameraFrame frame;
    frame.frame_id = frame_id;
    frame.gt_pose = pose;

    RenderOutput out = render(scene.field, pose, k);
    frame.color = std::move(out.color);
    if (recipe.pixel_noise > 0.0) {
        std::mt19937_64 rng(recipe.seed * 1000003ULL + static_cast<std::uint64_t>(frame_id));
        std::normal_distribution<double> normal(0.0, recipe.pixel_noise);
        for (double& x : frame.color.data()) x = std::clamp(x + normal(rng), 0.0, 1.0);
    }
    if (mode == SensorMode::Rgbd) frame.depth = surface_depth(out);

    frame.annotation.height = k.height;
    frame.annotation.width = k.width;
    frame.annotation.labels = render_region_map(scene.field, scene.regions, pose, k);
    frame.annotation.phi = scene.phi;

    if (recipe.feature_downsample > 0) {
        const int hf = std::max(1, k.height / recipe.feature_downsample);
        const int wf = std::max(1, k.width / recipe.feature_downsample);
        const CameraIntrinsics kf = k.resized(wf, hf);
        const std::vector<int> low = render_region_map(scene.field, scene.regions, pose, kf);
        Tensor3 p(recipe.feature_dim, hf, wf);
        for (int u = 0; u < hf; ++u) {
            for (int v = 0; v < wf; ++v) {
                const int l = low[static_cast<std::size_t>(u) * wf + v];
                if (l >= 0) p.set_pixel(u, v, scene.phi.row(l).transpose());
            }
        }
        frame.continuous.features = std::move(p);
    }
    return frame;
}

std::vector<CameraFrame> render_ground_truth(const GeneratedScene& scene, const std::vector<CameraPose>& poses,
                                             const SceneRecipe& recipe, SensorMode mode) {
    std::vector<CameraFrame> frames;
    frames.reserve(poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i) {
        frames.push_back(render_ground_truth_frame(scene, poses[i], static_cast<int>(i), recipe, mode));
    }
    return frames;
}

double psnr(const Tensor3& a, const Tensor3& b, double max_value) {
    if (!a.same_shape(b)) throw InvalidInput("psnr: shape mismatch");
    if (a.empty()) throw InvalidInput("psnr: empty image");
    double sse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        sse += d * d;
    }
    const double mse = sse / static_cast<double>(a.size());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(max_value * max_value / mse));
}

double ate_rmse(const std::vector<CameraPose>& estimate, const std::vector<CameraPose>& ground_truth) {
    if (estimate.size() != ground_truth.size()) throw InvalidInput("ate_rmse: trajectory length mismatch");
    const auto n = static_cast<Eigen::Index>(estimate.size());
    if (n == 0) return 0.0;
    Eigen::Matrix3Xd src(3, n), dst(3, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        src.col(i) = estimate[static_cast<std::size_t>(i)].center();
        dst.col(i) = ground_truth[static_cast<std::size_t>(i)].center();
    }
    const Eigen::Matrix4d T = Eigen::umeyama(src, dst, false);
    const Eigen::Matrix3Xd aligned = (T.topLeftCorner<3, 3>() * src).colwise() + T.topRightCorner<3, 1>();
    return std::sqrt((aligned - dst).colwise().squaredNorm().mean());
}

Metrics compute_metrics(const std::vector<CameraPose>& estimate, const std::vector<CameraPose>& ground_truth,
                        const std::vector<Tensor3>& renders, const std::vector<Tensor3>& gt_images) {
    if (estimate.size() != ground_truth.size()) throw InvalidInput("compute_metrics: trajectory length mismatch");
    if (renders.size() != gt_images.size()) throw InvalidInput("compute_metrics: image count mismatch");
    Metrics m;
    m.ate_rmse = ate_rmse(estimate, ground_truth);
    if (!renders.empty()) {
        double sum = 0.0;
        for (std::size_t i = 0; i < renders.size(); ++i) sum += psnr(renders[i], gt_images[i]);
        m.psnr = sum / static_cast<double>(renders.size());
    }
    return m;
}

}  // namespace xgs
