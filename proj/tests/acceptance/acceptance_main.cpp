// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when everything passes). Pass criterion
// numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "oracles.hpp"
#include "xgs/grid.hpp"
#include "xgs/hash.hpp"
#include "xgs/online_vq.hpp"
#include "xgs/pipeline.hpp"
#include "xgs/rasterizer.hpp"
#include "xgs/slam.hpp"
#include "xgs/supervision.hpp"
#include "xgs/synthetic.hpp"
#include "xgs/thinker.hpp"

using namespace xgs;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double max_abs(const Tensor3& a, const oracle::Image& img, int c0 = 0) {
    double worst = 0.0;
    for (int c = 0; c < a.channels(); ++c)
        for (int u = 0; u < a.height(); ++u)
            for (int v = 0; v < a.width(); ++v) worst = std::max(worst, std::abs(a(c, u, v) - img.at(c0 + c, u, v)));
    return worst;
}

fs::path work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "xgs_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

// ---------------------------------------------------------------- 1

Outcome rasterizer_oracle() {
    double worst = 0.0;
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> count(1, 32);
    for (int scene = 0; scene < 50; ++scene) {
        const auto s = oracle::random_scene(1000 + scene, count(rng), 16, 16);
        const RenderOutput out = render(s.field, s.pose, s.intrinsics);
        const oracle::Image img = oracle::render_color_depth(s.field, s.pose, s.intrinsics);
        worst = std::max(worst, max_abs(out.color, img));
        worst = std::max(worst, max_abs(out.depth, img, 3));
        for (int u = 0; u < 16; ++u)
            for (int v = 0; v < 16; ++v) worst = std::max(worst, std::abs(out.alpha(0, u, v) - img.alpha_at(u, v)));
        const Tensor3 feat = render_features_dense(s.field, s.codebook, s.pose, s.intrinsics);
        worst = std::max(worst, max_abs(feat, oracle::render_features(s.field, s.codebook, s.pose, s.intrinsics)));
    }
    return {worst <= 1e-6, fmt("50 scenes, max |render - oracle| = %.3g (tol 1e-6)", worst)};
}

// ---------------------------------------------------------------- 2

Outcome grid_dense_equivalence() {
    double worst = 0.0;
    int grids = 0;
    for (int scene = 0; scene < 10; ++scene) {
        const auto s = oracle::random_scene(2000 + scene, 24, 16, 16);
        const Tensor3 dense = render_features_dense(s.field, s.codebook, s.pose, s.intrinsics);
        for (int st = 1; st <= 4; ++st) {
            for (int oh = 0; oh < st; ++oh) {
                for (int ow = 0; ow < st; ++ow) {
                    const GridSpec grid(16, 16, st, oh, ow);
                    const CompactFeatureMap m = render_features_grid(s.field, s.codebook, s.pose, s.intrinsics, grid);
                    ++grids;
                    for (int c = 0; c < m.data.channels(); ++c)
                        for (int r = 0; r < grid.rows(); ++r)
                            for (int q = 0; q < grid.cols(); ++q)
                                worst = std::max(worst, std::abs(m.data(c, r, q) - dense(c, oh + st * r, ow + st * q)));
                }
            }
        }
    }

    // Exhaustive resolution / coordinate enumeration.
    long mismatches = 0, checked = 0;
    for (int H = 1; H <= 64; ++H) {
        for (int W = 1; W <= 64; ++W) {
            for (int st = 1; st <= 8; ++st) {
                for (int oh = 0; oh < st; ++oh) {
                    for (int ow = 0; ow < st; ++ow) {
                        const GridSpec grid(H, W, st, oh, ow);
                        const std::vector<PixelCoord> coords = sample_coordinates(grid);
                        std::size_t j = 0;
                        bool ok = true;
                        int rows = 0, cols = 0;
                        for (int u = 0; u < H; ++u) rows += u % st == oh;
                        for (int v = 0; v < W; ++v) cols += v % st == ow;
                        ok = ok && grid_resolution(H, st, oh) == rows && grid_resolution(W, st, ow) == cols;
                        ok = ok && coords.size() == static_cast<std::size_t>(rows) * cols;
                        for (int u = oh; ok && u < H; u += st) {
                            for (int v = ow; ok && v < W; v += st, ++j) ok = coords[j].u == u && coords[j].v == v;
                        }
                        ++checked;
                        mismatches += !ok;
                    }
                }
            }
        }
    }
    return {worst <= 1e-7 && mismatches == 0,
            fmt("%d grids, max |grid - dense| = %.3g (tol 1e-7); %ld/%ld resolution/enumeration mismatches", grids,
                worst, mismatches, checked)};
}

// ---------------------------------------------------------------- 3

Outcome semantic_gradients() {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> N;
    std::bernoulli_distribution keep(0.75);
    double worst = 0.0;
    long compared = 0, skipped = 0;
    for (int inst = 0; inst < 20; ++inst) {
        const int side = 6 + inst % 5;
        auto s = oracle::random_scene(3000 + inst, 2 + inst % 7, side, side + 1, 5, 3);
        const int st = 1 + inst % 3;
        const GridSpec grid(side, side + 1, st, inst % st, (inst / 2) % st);
        Tensor3 t(s.codebook.D(), grid.rows(), grid.cols()), valid(1, grid.rows(), grid.cols());
        for (double& x : t.data()) x = N(rng);
        for (double& x : valid.data()) x = keep(rng) ? 1.0 : 0.0;
        const SupervisionTarget target{t, valid, grid};
        const double lambda = 0.5 + 0.1 * (inst % 6);

        auto loss = [&] {
            return masked_semantic_loss(render_features_grid(s.field, s.codebook, s.pose, s.intrinsics, grid), target,
                                        lambda)
                .value;
        };
        const CompactFeatureMap pred = render_features_grid(s.field, s.codebook, s.pose, s.intrinsics, grid);
        const SemanticLoss l = masked_semantic_loss(pred, target, lambda);

        // Cotangent of the loss w.r.t. the prediction. Central differences are
        // meaningless at the kinks: uncovered cells (p = 0, where the cosine
        // is singular) and components within a few steps of the L1 corner.
        Tensor3 p = pred.data;
        const int D = p.channels();
        const int cells = grid.rows() * grid.cols();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const std::size_t cell = i % static_cast<std::size_t>(cells);
            double norm = 0.0;
            for (int c = 0; c < D; ++c) norm += std::abs(p.data()[static_cast<std::size_t>(c) * cells + cell]);
            if (norm == 0.0 || std::abs(p.data()[i] - t.data()[i]) < 1e-4) {
                ++skipped;
                continue;
            }
            const double fd = oracle::central_difference(
                [&] { return masked_semantic_loss(CompactFeatureMap{p, grid}, target, lambda).value; }, p.data()[i],
                1e-6);
            worst = std::max(worst, oracle::relative_error(l.cotangent.data()[i], fd, 1e-6));
            ++compared;
        }
        // Chained through the rasterizer to the logits.
        const FeatureGradients g = feature_gradients(s.field, s.codebook, s.pose, s.intrinsics, grid, l.cotangent);
        for (std::size_t i = 0; i < s.field.size(); ++i) {
            for (int k = 0; k < s.field.K(); ++k) {
                const double fd = oracle::central_difference(loss, s.field[i].logits(k), 1e-5);
                worst = std::max(worst, oracle::relative_error(g.logits(static_cast<Eigen::Index>(i), k), fd, 1e-6));
                ++compared;
            }
        }
    }
    return {worst <= 1e-3, fmt("20 instances, %ld partials, max relative error %.3g (tol 1e-3); %ld cotangent entries "
                               "at non-differentiable points not compared",
                               compared, worst, skipped)};
}

// ---------------------------------------------------------------- 4

Outcome vq_convergence() {
    const std::vector<Eigen::Vector2d> centers = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    VqConfig cfg;
    cfg.K = 4;
    cfg.lambda = 0.96;
    OnlineQuantizer vq(cfg, 2);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> noise(0.0, 0.01);
    std::uniform_int_distribution<int> pick(0, 3);
    std::vector<Eigen::VectorXd> all;
    for (int step = 0; step < 200; ++step) {
        std::vector<Eigen::VectorXd> batch;
        for (int i = 0; i < 64; ++i) batch.push_back(centers[pick(rng)] + Eigen::Vector2d(noise(rng), noise(rng)));
        vq.observe(batch);
        all.insert(all.end(), batch.begin(), batch.end());
    }
    std::vector<Eigen::VectorXd> init;
    for (const auto& c : centers) init.push_back(c + Eigen::Vector2d(0.1, -0.1));
    const auto centroids = oracle::kmeans(all, init);

    const Codebook& cb = vq.codebook();
    Eigen::MatrixXd cost(4, 4);
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 4; ++j) cost(k, j) = (cb.E.row(k).transpose() - centroids[j]).norm();
    const std::vector<int> match = oracle::brute_force_matching(cost);
    double worst = 0.0;
    for (int k = 0; k < 4; ++k)
        worst = std::max(worst, (cb.E.row(k).transpose() - centroids[match[k]]).cwiseAbs().maxCoeff());
    return {worst <= 0.05, fmt("200 steps x 64 samples, max per-coordinate codeword error %.3g (tol 0.05)", worst)};
}

// ---------------------------------------------------------------- 5

struct RevivalTrial {
    int crossing = 0;
    int revived_at = -1;
    int covered_at = -1;
    double codeword_error = 0.0;  // reintroduced cluster to its codeword after the coverage check
};

RevivalTrial revival_trial(std::uint64_t seed) {
    const std::vector<Eigen::Vector2d> centers = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    VqConfig cfg;
    cfg.K = 4;
    cfg.seed = seed;
    OnlineQuantizer vq(cfg, 2);
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> noise(0.0, 0.01);
    auto batch = [&](bool with_last) {
        std::vector<Eigen::VectorXd> b;
        for (int i = 0; i < 32; ++i) {
            const int c = i % 4;
            if (c == 3 && !with_last) continue;
            b.push_back(centers[c] + Eigen::Vector2d(noise(rng), noise(rng)));
        }
        return b;
    };
    for (int t = 0; t < 100; ++t) vq.observe(batch(true));

    RevivalTrial out;
    const int code = assign(centers[3], vq.codebook());
    const double n0 = vq.codebook().N(code);
    // First t with n0 * lambda^t < delta.
    out.crossing = static_cast<int>(std::floor(std::log(cfg.delta_dead / n0) / std::log(cfg.lambda))) + 1;
    for (int t = 1; t <= out.crossing + 50 && out.revived_at < 0; ++t) {
        const auto rv = vq.observe(batch(false));
        if (std::find(rv.begin(), rv.end(), code) != rv.end()) out.revived_at = t;
    }
    if (out.revived_at < 0) return out;

    // Assignment coverage: each cluster's samples in the latest batch all go
    // to one codeword, and no two clusters share a codeword.
    auto covered = [&](const std::vector<Eigen::VectorXd>& b) {
        std::map<int, int> code_of;  // cluster -> codeword
        std::set<int> used;
        for (std::size_t i = 0; i < b.size(); ++i) {
            const int c = static_cast<int>(i % 4);
            const int k = assign(b[i], vq.codebook());
            const auto [it, fresh] = code_of.emplace(c, k);
            if (!fresh && it->second != k) return false;
            if (fresh) used.insert(k);
        }
        return code_of.size() == centers.size() && used.size() == centers.size();
    };
    for (int t = 1; t <= 10 && out.covered_at < 0; ++t) {
        const auto b = batch(true);
        vq.observe(b);
        if (covered(b)) out.covered_at = t;
    }
    const int k = assign(centers[3], vq.codebook());
    out.codeword_error = (vq.codebook().E.row(k).transpose() - centers[3]).norm();
    return out;
}

Outcome dead_code_revival() {
    int on_time = 0, restored = 0;
    const int trials = 20;
    std::string first;
    for (int seed = 0; seed < trials; ++seed) {
        const RevivalTrial r = revival_trial(static_cast<std::uint64_t>(seed));
        on_time += r.revived_at > 0 && r.revived_at <= r.crossing;
        restored += r.covered_at > 0;
        if (seed == 0)
            first = fmt("seed 0: crossing step %d, revived at %d, coverage after %d step(s), codeword %.3f from "
                        "the cluster center",
                        r.crossing, r.revived_at, r.covered_at, r.codeword_error);
    }
    return {on_time == trials && restored == trials,
            fmt("%d/%d revived by the analytic crossing step, %d/%d coverage restored within 10 steps; %s", on_time,
                trials, restored, trials, first.c_str())};
}

// ---------------------------------------------------------------- standard scene helpers

struct StandardScene {
    SceneRecipe recipe;
    GeneratedScene scene;
    std::vector<CameraPose> poses;
    std::vector<CameraFrame> frames;
};

StandardScene standard_scene(int frames) {
    StandardScene s;
    s.recipe.frames = frames;
    s.scene = generate_scene(s.recipe);
    s.poses = generate_trajectory(s.recipe);
    s.frames = render_ground_truth(s.scene, s.poses, s.recipe, SensorMode::Rgbd);
    return s;
}

// ---------------------------------------------------------------- 6

Outcome freezing_contract() {
    const StandardScene s = standard_scene(4);
    const CameraIntrinsics k = s.recipe.intrinsics();
    KeyframeWindow w(8);
    for (std::size_t i = 0; i < s.frames.size(); ++i) w.push({s.frames[i], s.poses[i]});

    // Start away from the optimum so that both phases have work to do.
    GaussianField field = s.scene.field;
    std::mt19937_64 rng(6);
    std::normal_distribution<double> N;
    for (Gaussian& g : field.gaussians()) {
        g.mu += 0.02 * Eigen::Vector3d(N(rng), N(rng), N(rng));
        for (Eigen::Index j = 0; j < g.logits.size(); ++j) g.logits(j) = N(rng);
    }
    const Codebook& cb = s.scene.codebook;

    TargetCache cache;
    std::uint64_t step = 0;
    SemanticConfig scfg;
    scfg.iters = 5;
    const std::string geometry = geometry_checksum(field);
    const std::string semantics_before = semantic_checksum(field, cb);
    bool geometry_kept = true;
    for (int phase = 0; phase < 50; ++phase) {
        semantic_phase(field, cb, w, k, cache, step, scfg);
        geometry_kept = geometry_kept && geometry_checksum(field) == geometry;
    }
    const bool semantics_moved = semantic_checksum(field, cb) != semantics_before;

    MappingConfig mcfg;
    mcfg.iters = 3;
    const std::string semantics = semantic_checksum(field, cb);
    const std::string geometry_before = geometry_checksum(field);
    bool semantics_kept = true;
    for (int phase = 0; phase < 50; ++phase) {
        map_window(field, w, k, mcfg);
        semantics_kept = semantics_kept && semantic_checksum(field, cb) == semantics;
    }
    const bool geometry_moved = geometry_checksum(field) != geometry_before;
    return {geometry_kept && semantics_kept && semantics_moved && geometry_moved,
            fmt("geometry unchanged over 50 semantic phases: %s; logits+codebook unchanged over 50 radiance phases: "
                "%s (each phase did update its own parameters: %s/%s)",
                geometry_kept ? "yes" : "no", semantics_kept ? "yes" : "no", semantics_moved ? "yes" : "no",
                geometry_moved ? "yes" : "no")};
}

// ---------------------------------------------------------------- 7

Outcome tracking_recovery() {
    const StandardScene s = standard_scene(30);
    const CameraIntrinsics k = s.recipe.intrinsics();
    std::mt19937_64 rng(7);
    std::normal_distribution<double> N;
    std::uniform_real_distribution<double> mag(0.0, 1.0);
    const TrackingConfig cfg;  // default tracker, at most 100 Jacobian evaluations
    int recovered = 0, max_iters = 0;
    double worst_ratio = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t f = static_cast<std::size_t>(trial) % s.frames.size();
        const CameraPose& gt = s.poses[f];
        const double deg = 2.0 * mag(rng), trans = 0.05 * mag(rng);
        Eigen::Vector3d axis(N(rng), N(rng), N(rng)), dir(N(rng), N(rng), N(rng));
        CameraPose d;
        d.rotation = so3_exp(axis.normalized() * deg * kDeg);
        d.translation = dir.normalized() * trans;
        const CameraPose init = d * gt;
        const double r0 = rotation_distance(init, gt), t0 = translation_distance(init, gt);

        const TrackResult r = track_frame(s.scene.field, s.frames[f], init, k, cfg);
        const double ratio =
            std::max(rotation_distance(r.pose, gt) / std::max(r0, 1e-12), translation_distance(r.pose, gt) / std::max(t0, 1e-12));
        worst_ratio = std::max(worst_ratio, ratio);
        max_iters = std::max(max_iters, r.iterations);
        recovered += !r.failed && ratio < 0.1 && r.iterations <= 100;
    }
    return {recovered >= 18, fmt("%d/20 perturbations (<= 2 deg / 0.05) reduced below 10%% residual; worst residual "
                                 "%.3g, max %d Jacobian evaluations",
                                 recovered, worst_ratio, max_iters)};
}

// ---------------------------------------------------------------- 8

const fs::path& standard_run_dir() {
    static const fs::path dir = [] {
        const fs::path d = work_dir() / "standard_orbit";
        SceneRecipe r;
        r.frames = 30;
        generate_run(r, d);
        return d;
    }();
    return dir;
}

Outcome rgbd_vs_rgb() {
    RunConfig cfg;
    cfg.deterministic = true;
    const RunResult rgbd = run_pipeline(load_sequence(standard_run_dir(), SensorMode::Rgbd), cfg);
    cfg.mode = SensorMode::Rgb;
    const RunResult rgb = run_pipeline(load_sequence(standard_run_dir(), SensorMode::Rgb), cfg);
    const bool ok = rgbd.metrics.ate_rmse <= rgb.metrics.ate_rmse && rgbd.metrics.psnr >= rgb.metrics.psnr - 0.5;
    return {ok, fmt("30-frame orbit: RGB-D ATE %.4g PSNR %.2f dB; RGB ATE %.4g PSNR %.2f dB", rgbd.metrics.ate_rmse,
                    rgbd.metrics.psnr, rgb.metrics.ate_rmse, rgb.metrics.psnr)};
}

// ---------------------------------------------------------------- converged semantics (9, 10)

// Ground-truth geometry and poses with every logit reset to zero; the
// codebook is learned online from the per-pixel region features and the
// logits by the semantic phase, one keyframe at a time through an 8-frame
// window.
struct ConvergedScene {
    StandardScene base;
    GaussianField field;
    Codebook codebook;
};

const ConvergedScene& converged_scene() {
    static const ConvergedScene c = [] {
        ConvergedScene out;
        out.base = standard_scene(30);
        const StandardScene& s = out.base;
        out.field = s.scene.field;
        for (Gaussian& g : out.field.gaussians()) g.logits.setZero();
        OnlineQuantizer vq(VqConfig{}, s.recipe.feature_dim);
        KeyframeWindow window(8);
        TargetCache cache;
        std::uint64_t step = 0;
        const SemanticConfig cfg;
        for (std::size_t f = 0; f < s.frames.size(); ++f) {
            const RegionAnnotation& a = s.frames[f].annotation;
            std::vector<Eigen::VectorXd> batch;
            for (int label : a.labels)
                if (label >= 0) batch.push_back(a.phi.row(label).transpose());
            vq.observe(batch);
            if (const auto evicted = window.push({s.frames[f], s.poses[f]})) cache.evict(*evicted);
            semantic_phase(out.field, vq.codebook(), window, s.recipe.intrinsics(), cache, step, cfg);
        }
        out.codebook = vq.snapshot();
        return out;
    }();
    return c;
}

Outcome relevance_recall() {
    const ConvergedScene& c = converged_scene();
    const GeneratedScene& scene = c.base.scene;
    TextEncoder encoder(c.base.recipe.feature_dim, c.base.recipe.seed);
    encoder.set_regions(scene.phi, scene.generic);
    double worst_recall = 1.0, worst_other = 0.0;
    for (int r = 0; r < c.base.recipe.regions; ++r) {
        const TextQuery q = make_query(encoder, "region_" + std::to_string(r), 0.6);
        const RelevanceResult res = mask_gaussians(relevance_per_gaussian(c.field, c.codebook, q), q.delta);
        int in = 0, in_hit = 0, out = 0, out_hit = 0;
        for (std::size_t i = 0; i < c.field.size(); ++i) {
            if (scene.regions[i] == r) {
                ++in;
                in_hit += res.mask[i];
            } else {
                ++out;
                out_hit += res.mask[i];
            }
        }
        worst_recall = std::min(worst_recall, in ? double(in_hit) / in : 1.0);
        worst_other = std::max(worst_other, out ? double(out_hit) / out : 0.0);
    }
    return {worst_recall >= 0.95 && worst_other <= 0.05,
            fmt("delta 0.6: worst region recall %.3f (>= 0.95), worst share of other regions masked %.3f (<= 0.05)",
                worst_recall, worst_other)};
}

// ---------------------------------------------------------------- 10

std::vector<int> oracle_token_order(const GaussianField& field, int M) {
    std::vector<std::pair<double, int>> h;
    for (std::size_t i = 0; i < field.size(); ++i) {
        const Eigen::VectorXd p = oracle::softmax(field[i].logits);
        double e = 0.0;
        for (Eigen::Index k = 0; k < p.size(); ++k)
            if (p(k) > 0.0) e -= p(k) * std::log(p(k));
        h.emplace_back(-e, static_cast<int>(i));
    }
    std::sort(h.begin(), h.end());
    std::vector<int> out;
    for (int j = 0; j < M && j < static_cast<int>(h.size()); ++j) out.push_back(h[j].second);
    return out;
}

Outcome entropy_sampling() {
    int matched = 0;
    std::mt19937_64 rng(10);
    std::normal_distribution<double> N;
    std::uniform_int_distribution<int> size(1, 60);
    for (int t = 0; t < 100; ++t) {
        auto s = oracle::random_scene(10000 + t, size(rng), 4, 4, 8, 3);
        for (Gaussian& g : s.field.gaussians())
            for (Eigen::Index k = 0; k < g.logits.size(); ++k) g.logits(k) = 2.0 * N(rng);
        // A few exact ties exercise the index rule.
        if (s.field.size() > 3 && t % 3 == 0) s.field[3].logits = s.field[1].logits;
        const int M = 1 + t % static_cast<int>(s.field.size());
        matched += sample_tokens(s.field, s.codebook, M).indices == oracle_token_order(s.field, M);
    }

    const ConvergedScene& c = converged_scene();
    const GaussianField& f = c.field;
    const std::vector<int>& regions = c.base.scene.regions;
    // Boundary: some Gaussian of another region lies within 1.5 nearest-neighbour spacings.
    std::vector<double> nn(f.size(), 1e300);
    for (std::size_t i = 0; i < f.size(); ++i)
        for (std::size_t j = 0; j < f.size(); ++j)
            if (i != j) nn[i] = std::min(nn[i], (f[i].mu - f[j].mu).norm());
    std::vector<double> sorted = nn;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double radius = 1.5 * sorted[sorted.size() / 2];
    std::vector<bool> boundary(f.size(), false);
    int n_boundary = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        for (std::size_t j = 0; j < f.size() && !boundary[i]; ++j)
            boundary[i] = regions[j] != regions[i] && (f[i].mu - f[j].mu).norm() <= radius;
        n_boundary += boundary[i];
    }
    const int M = std::max(1, static_cast<int>(std::lround(0.1 * f.size())));
    const TokenSample tok = sample_tokens(f, c.codebook, M);
    int picked = 0;
    for (int i : tok.indices) picked += boundary[static_cast<std::size_t>(i)];
    const double base_rate = double(n_boundary) / f.size();
    const double ratio = (double(picked) / M) / base_rate;
    return {matched == 100 && ratio >= 2.0,
            fmt("%d/100 random fields match the exhaustive sort; boundary share %d/%d selected vs %.3f uniform -> "
                "%.2fx (>= 2x)",
                matched, picked, M, base_rate, ratio)};
}

// ---------------------------------------------------------------- 11

Outcome offset_coverage() {
    long bad_cycles = 0, cycles = 0;
    for (int st = 1; st <= 6; ++st) {
        for (std::uint64_t seed : {0ull, 1ull, 42ull, 9001ull}) {
            const int n = st * st;
            for (int cycle = 0; cycle < 20; ++cycle) {
                std::set<std::pair<int, int>> seen;
                for (int i = 0; i < n; ++i) {
                    const auto o = next_offset(static_cast<std::uint64_t>(cycle * n + i), st, seed);
                    if (o.first >= 0 && o.first < st && o.second >= 0 && o.second < st) seen.insert(o);
                }
                ++cycles;
                bad_cycles += seen.size() != static_cast<std::size_t>(n);
            }
        }
    }
    return {bad_cycles == 0, fmt("s = 1..6, 4 seeds, %ld cycles: %ld missed a phase", cycles, bad_cycles)};
}

// ---------------------------------------------------------------- 12

Outcome work_reduction() {
    struct View {
        GaussianField field;
        Codebook codebook;
        CameraPose pose;
        CameraIntrinsics k;
    };
    std::vector<View> views;
    const StandardScene s = standard_scene(4);
    for (std::size_t f = 0; f < s.poses.size(); ++f) views.push_back({s.scene.field, s.scene.codebook, s.poses[f], s.recipe.intrinsics()});
    for (int seed = 0; views.size() < 10 && seed < 100; ++seed) {
        auto r = oracle::random_scene(12000 + seed, 150, 48, 48);
        views.push_back({r.field, r.codebook, r.pose, r.intrinsics});
    }
    const double bound = 1.0 / 16.0 + 0.10;
    double worst = 0.0;
    int scenes = 0;
    for (const View& v : views) {
        const RenderOutput out = render(v.field, v.pose, v.k);
        double covered = 0.0;
        for (double a : out.alpha.data()) covered += a > 0.5;
        if (covered / out.alpha.size() < 0.5) continue;
        ++scenes;
        RenderStats dense;
        render_features_dense(v.field, v.codebook, v.pose, v.k, {}, &dense);
        for (int oh = 0; oh < 4; ++oh) {
            for (int ow = 0; ow < 4; ++ow) {
                RenderStats st;
                render_features_grid(v.field, v.codebook, v.pose, v.k, GridSpec(v.k.height, v.k.width, 4, oh, ow), {}, &st);
                worst = std::max(worst, double(st.blend_steps) / double(dense.blend_steps));
            }
        }
    }
    return {scenes >= 5 && worst <= bound,
            fmt("%d scenes with >= 50%% coverage, worst stride-4 blend-step ratio %.4f (bound 1/16 + 0.10 = %.4f)",
                scenes, worst, bound)};
}

// ---------------------------------------------------------------- 13

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
    const fs::path run = standard_run_dir();
    auto metrics_for = [&](const std::string& name, int threads) -> std::string {
        const fs::path out = work_dir() / name;
#ifdef XGS_BIN
        const std::string cmd = std::string("\"") + XGS_BIN + "\" -q run \"" + run.string() + "\" -o \"" +
                                out.string() + "\" --deterministic -j " + std::to_string(threads) + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {};
#else
        RunConfig cfg;
        cfg.deterministic = true;
        cfg.threads = threads;
        write_run_outputs(out, run_pipeline(load_sequence(run, SensorMode::Rgbd), cfg), cfg);
#endif
        return slurp(out / "metrics.json");
    };
    const std::string a = metrics_for("det_a", 1);
    const std::string b = metrics_for("det_b", 1);
    const std::string c = metrics_for("det_c", 8);
    const bool ok = !a.empty() && a == b && a == c;
    return {ok, fmt("metrics.json sha256 %s / %s / %s (two runs at 1 thread, one at 8)",
                    sha256_hex(a).substr(0, 12).c_str(), sha256_hex(b).substr(0, 12).c_str(),
                    sha256_hex(c).substr(0, 12).c_str())};
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria = {
        {1, "rasterizer oracle equivalence", 10, rasterizer_oracle},
        {2, "grid/dense equivalence", 5, grid_dense_equivalence},
        {3, "semantic gradient check", 30, semantic_gradients},
        {4, "online VQ convergence", 5, vq_convergence},
        {5, "dead-code revival", 5, dead_code_revival},
        {6, "freezing contract", 60, freezing_contract},
        {7, "tracking recovery", 120, tracking_recovery},
        {8, "RGB-D vs RGB-only ordering", 300, rgbd_vs_rgb},
        {9, "relevance recall", 30, relevance_recall},
        {10, "entropy sampling", 10, entropy_sampling},
        {11, "offset coverage", 1, offset_coverage},
        {12, "work reduction", 10, work_reduction},
        {13, "determinism", 600, determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    const auto suite_start = std::chrono::steady_clock::now();
    for (const Criterion& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < c.budget_s;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::printf("%s %2d %s: %s [%.2f s, budget %.0f s%s]\n", pass ? "PASS" : "FAIL", c.id, c.name,
                    o.detail.c_str(), secs, c.budget_s, in_time ? "" : ", over budget");
        std::fflush(stdout);
    }
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - suite_start).count();
    std::printf("%d failed, total %.1f s\n", failed, total);
    return failed;
}
