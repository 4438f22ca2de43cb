#include "xgs/slam.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <spdlog/spdlog.h>

#include "xgs/error.hpp"
#include "xgs/grid.hpp"

namespace xgs {

// ---------------------------------------------------------------- tracking

void TrackState::accept(const CameraPose& pose) {
    previous = current;
    current = pose;
    velocity = previous ? relative_twist(*previous, *current) : Twist::Zero();
}

Prediction predict_pose(const TrackState& track) {
    if (!track.current) return {CameraPose::identity(), true};
    if (!track.previous) return {*track.current, false};
    return {apply_twist(track.velocity, *track.current), false};
}

std::string to_string(PoseOptimizer o) { return o == PoseOptimizer::GradientDescent ? "gd" : "lm"; }

PoseOptimizer pose_optimizer_from_string(const std::string& s) {
    if (s == "lm") return PoseOptimizer::LevenbergMarquardt;
    if (s == "gd") return PoseOptimizer::GradientDescent;
    throw InvalidInput("unknown pose optimizer '" + s + "'");
}

namespace {

// Residuals r and per-entry loss weights c so that loss = sum c_j |r_j|.
struct Residuals {
    Eigen::VectorXd r;
    Eigen::VectorXd c;
    double coverage = 0.0;

    double loss() const { return c.dot(r.cwiseAbs()); }
};

bool depth_active(const CameraFrame& frame, bool use_depth) { return use_depth && frame.has_depth(); }

Residuals tracking_residuals(const GaussianField& field, const CameraFrame& frame, const CameraPose& pose,
                             const CameraIntrinsics& k, const TrackingConfig& cfg) {
    const int H = k.height, W = k.width;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const bool use_d = depth_active(frame, cfg.use_depth);
    Residuals out;
    out.r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * hw + (use_d ? hw : 0)));
    out.c = Eigen::VectorXd::Zero(out.r.size());

    RenderOutput img;
    if (!field.empty()) {
        img = render(field, pose, k);
    } else {
        img.color = Tensor3(3, H, W);
        img.depth = Tensor3(1, H, W);
        img.alpha = Tensor3(1, H, W);
    }
    const double wc = 1.0 / static_cast<double>(3 * hw);
    for (std::size_t i = 0; i < 3 * hw; ++i) {
        out.r(static_cast<Eigen::Index>(i)) = img.color.data()[i] - frame.color.data()[i];
        out.c(static_cast<Eigen::Index>(i)) = wc;
    }
    if (use_d) {
        std::size_t valid = 0;
        for (std::size_t i = 0; i < hw; ++i) valid += frame.depth.data()[i] > 0.0;
        const double wd = valid ? cfg.lambda_d / static_cast<double>(valid) : 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
            if (frame.depth.data()[i] <= 0.0) continue;
            const auto j = static_cast<Eigen::Index>(3 * hw + i);
            const double a = img.alpha.data()[i];
            // Uncovered pixels carry no rendered surface; the photometric term handles them.
            out.r(j) = a > kSurfaceAlpha ? img.depth.data()[i] / a - frame.depth.data()[i] : 0.0;
            out.c(j) = wd;
        }
    }
    std::size_t covered = 0;
    for (double a : img.alpha.data()) covered += a > 0.5;
    out.coverage = static_cast<double>(covered) / static_cast<double>(hw);
    return out;
}

}  // namespace

TrackingLoss tracking_loss(const GaussianField& field, const CameraFrame& frame, const CameraPose& pose,
                           const CameraIntrinsics& intrinsics, const TrackingConfig& cfg) {
    const Residuals res = tracking_residuals(field, frame, pose, intrinsics, cfg);
    const auto n_color = static_cast<Eigen::Index>(3 * frame.color.plane());
    TrackingLoss l;
    l.photo = res.c.head(n_color).dot(res.r.head(n_color).cwiseAbs());
    l.depth = res.c.tail(res.r.size() - n_color).dot(res.r.tail(res.r.size() - n_color).cwiseAbs());
    l.total = l.photo + l.depth;
    l.coverage = res.coverage;
    return l;
}

namespace {

TrackResult track_lm(const GaussianField& field, const CameraFrame& frame, const CameraIntrinsics& k,
                     const TrackingConfig& cfg, ThreadPool* pool, TrackResult result) {
    CameraPose pose = result.pose;
    Residuals cur = tracking_residuals(field, frame, pose, k, cfg);
    double loss = cur.loss();
    double mu = 1e-3;
    const double h = cfg.fd_step;

    while (result.iterations < cfg.max_iters && loss > 0.0) {
        ++result.iterations;
        Eigen::MatrixXd J(cur.r.size(), 6);
        auto column = [&](std::size_t a) {
            Twist e = Twist::Zero();
            e(static_cast<Eigen::Index>(a)) = h;
            const Eigen::VectorXd rp = tracking_residuals(field, frame, apply_twist(e, pose), k, cfg).r;
            const Eigen::VectorXd rm = tracking_residuals(field, frame, apply_twist(-e, pose), k, cfg).r;
            auto col = J.col(static_cast<Eigen::Index>(a));
            if (!cfg.limit_jacobian) {
                col = (rp - rm) / (2.0 * h);
                return;
            }
            // minmod of the one-sided slopes: a cutoff edge crossed on one side
            // only would otherwise show up as a huge spurious derivative.
            for (Eigen::Index j = 0; j < col.size(); ++j) {
                const double fwd = (rp(j) - cur.r(j)) / h, bwd = (cur.r(j) - rm(j)) / h;
                col(j) = fwd * bwd <= 0.0 ? 0.0 : (std::abs(fwd) < std::abs(bwd) ? fwd : bwd);
            }
        };
        if (pool) pool->parallel_for(6, column);
        else for (std::size_t a = 0; a < 6; ++a) column(a);

        // IRLS weights turn sum c|r| into a weighted least-squares problem.
        const Eigen::VectorXd w = cur.c.array() / cur.r.cwiseAbs().cwiseMax(cfg.irls_floor).array();
        const Eigen::Matrix<double, 6, 6> A = J.transpose() * w.asDiagonal() * J;
        const Twist g = J.transpose() * w.cwiseProduct(cur.r);
        if (g.norm() < 1e-14) break;

        bool accepted = false;
        while (mu < 1e10) {
            Eigen::Matrix<double, 6, 6> damped = A;
            damped.diagonal() += mu * A.diagonal() + Twist::Constant(1e-12);
            const Twist delta = -damped.ldlt().solve(g);
            const CameraPose cand = apply_twist(delta, pose);
            Residuals next = tracking_residuals(field, frame, cand, k, cfg);
            const double next_loss = next.loss();
            if (next_loss < loss) {
                pose = cand;
                cur = std::move(next);
                loss = next_loss;
                mu = std::max(mu / 3.0, 1e-9);
                accepted = true;
                if (delta.norm() < 1e-10) mu = 1e10;  // converged
                break;
            }
            mu *= 4.0;
        }
        if (!accepted || mu >= 1e10) break;
    }
    result.pose = pose;
    result.final_loss = loss;
    return result;
}

TrackResult track_gd(const GaussianField& field, const CameraFrame& frame, const CameraIntrinsics& k,
                     const TrackingConfig& cfg, ThreadPool* pool, TrackResult result) {
    CameraPose pose = result.pose, best = pose;
    double best_loss = result.initial_loss;
    int worse = 0;
    const double h = cfg.fd_step;
    while (result.iterations < cfg.max_iters) {
        ++result.iterations;
        Twist g;
        auto component = [&](std::size_t a) {
            Twist e = Twist::Zero();
            e(static_cast<Eigen::Index>(a)) = h;
            const double lp = tracking_residuals(field, frame, apply_twist(e, pose), k, cfg).loss();
            const double lm = tracking_residuals(field, frame, apply_twist(-e, pose), k, cfg).loss();
            g(static_cast<Eigen::Index>(a)) = (lp - lm) / (2.0 * h);
        };
        if (pool) pool->parallel_for(6, component);
        else for (std::size_t a = 0; a < 6; ++a) component(a);
        if (g.norm() < 1e-14) {
            // Flat away from the best pose means the steps left the basin.
            if (worse > 0) {
                result.failed = true;
                result.failure = "diverged";
            }
            break;
        }

        pose = apply_twist(Twist(-cfg.lr_pose * g), pose);
        const double loss = tracking_residuals(field, frame, pose, k, cfg).loss();
        if (loss < best_loss) {
            best_loss = loss;
            best = pose;
            worse = 0;
        } else if (++worse >= cfg.patience) {
            result.failed = true;
            result.failure = "diverged";
            break;
        }
    }
    result.pose = best;
    result.final_loss = best_loss;
    return result;
}

}  // namespace

TrackResult track_frame(const GaussianField& field, const CameraFrame& frame, const CameraPose& init,
                        const CameraIntrinsics& intrinsics, const TrackingConfig& cfg, ThreadPool* pool) {
    if (field.empty()) throw EmptyScene("track_frame: empty field");
    TrackResult result;
    result.pose = init;
    const Residuals start = tracking_residuals(field, frame, init, intrinsics, cfg);
    result.initial_loss = result.final_loss = start.loss();
    if (start.coverage < cfg.min_coverage) {
        result.failed = true;
        result.failure = "no coverage";
        return result;
    }
    if (cfg.optimizer == PoseOptimizer::GradientDescent) return track_gd(field, frame, intrinsics, cfg, pool, result);
    return track_lm(field, frame, intrinsics, cfg, pool, result);
}

// ---------------------------------------------------------------- keyframes

KeyframeWindow::KeyframeWindow(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw InvalidInput("KeyframeWindow: capacity must be >= 1");
}

std::vector<int> KeyframeWindow::frame_ids() const {
    std::vector<int> ids;
    for (const auto& kf : frames_) ids.push_back(kf.frame.frame_id);
    return ids;
}

std::optional<int> KeyframeWindow::push(Keyframe kf) {
    std::optional<int> evicted;
    if (frames_.size() == capacity_) {
        evicted = frames_.front().frame.frame_id;
        log_.push_back({*evicted, false});
        frames_.pop_front();
    }
    log_.push_back({kf.frame.frame_id, true});
    frames_.push_back(std::move(kf));
    return evicted;
}

KeyframeDecision manage_keyframes(KeyframeWindow& window, const CameraFrame& frame, const CameraPose& pose,
                                  const KeyframeConfig& cfg) {
    KeyframeDecision d;
    if (!window.empty()) {
        const CameraPose& last = window.newest().pose;
        const bool moved = translation_distance(last, pose) > cfg.translation_threshold ||
                           rotation_distance(last, pose) > cfg.rotation_threshold_deg * std::numbers::pi / 180.0;
        if (!moved) return d;
    }
    d.inserted = true;
    d.evicted = window.push({frame, pose});
    return d;
}

// ---------------------------------------------------------------- mapping

namespace {

// Deviations below this fraction of the mean scale count as zero, so
// rounding in the mean does not produce a sign gradient on isotropic splats.
constexpr double kIsoDeadZone = 1e-9;

Eigen::Vector3d scale_deviation(const Eigen::Vector3d& s) {
    const double mean = s.mean();
    Eigen::Vector3d dev = s.array() - mean;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dev(a)) <= kIsoDeadZone * mean) dev(a) = 0.0;
    }
    return dev;
}

double sign(double x) { return static_cast<double>((x > 0) - (x < 0)); }

// L1 subgradient with residuals at round-off level treated as zero. The
// optimizer's reparametrizations (sigmoid/logit, exp/log) do not round-trip
// exactly, and an adaptive step would otherwise blow that noise up.
constexpr double kResidualDeadZone = 1e-12;
double l1_sign(double r) { return std::abs(r) <= kResidualDeadZone ? 0.0 : sign(r); }

}  // namespace

double isotropy_loss(const GaussianField& field) {
    double l = 0.0;
    for (const auto& g : field.gaussians()) l += scale_deviation(g.scale).cwiseAbs().sum();
    return l;
}

namespace {

class Adam {
public:
    Adam(Eigen::Index n, double lr, bool adaptive)
        : lr_(lr), adaptive_(adaptive), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

    void step(Eigen::Ref<Eigen::VectorXd> x, const Eigen::VectorXd& g, double lr_scale = 1.0) {
        const double lr = lr_ * lr_scale;
        if (!adaptive_) {
            x -= lr * g;
            return;
        }
        ++t_;
        m_ = b1_ * m_ + (1.0 - b1_) * g;
        v_ = b2_ * v_ + (1.0 - b2_) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
        x.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
    }

private:
    double lr_;
    bool adaptive_;
    Eigen::VectorXd m_, v_;
    int t_ = 0;
    double b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
};

constexpr double kOpacityClamp = 1e-6;

double logit(double p) {
    p = std::clamp(p, kOpacityClamp, 1.0 - kOpacityClamp);
    return std::log(p / (1.0 - p));
}
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct KeyframeLoss {
    double value = 0.0;
    RadianceGradients grads;
};

KeyframeLoss keyframe_loss(const GaussianField& field, const Keyframe& kf, const CameraIntrinsics& k,
                           const MappingConfig& cfg) {
    KeyframeLoss out{0.0, RadianceGradients(field.size())};
    const RenderOutput img = render(field, kf.pose, k);
    const CameraFrame& f = kf.frame;
    Tensor3 gc(3, k.height, k.width);
    const double wc = 1.0 / static_cast<double>(gc.size());
    for (std::size_t i = 0; i < gc.size(); ++i) {
        const double r = img.color.data()[i] - f.color.data()[i];
        out.value += wc * std::abs(r);
        gc.data()[i] = wc * l1_sign(r);
    }
    Tensor3 gd, ga;
    if (depth_active(f, cfg.use_depth)) {
        std::size_t valid = 0;
        for (double d : f.depth.data()) valid += d > 0.0;
        if (valid > 0) {
            gd = Tensor3(1, k.height, k.width);
            ga = Tensor3(1, k.height, k.width);
            const double wd = cfg.lambda_d / static_cast<double>(valid);
            for (std::size_t i = 0; i < gd.size(); ++i) {
                const double a = img.alpha.data()[i];
                if (f.depth.data()[i] <= 0.0 || !(a > kSurfaceAlpha)) continue;
                // Surface depth D / alpha against the sensor.
                const double r = img.depth.data()[i] / a - f.depth.data()[i];
                out.value += wd * std::abs(r);
                const double g = wd * l1_sign(r);
                gd.data()[i] = g / a;
                ga.data()[i] = -g * img.depth.data()[i] / (a * a);
            }
        }
    }
    render_backward(field, kf.pose, k, gc, gd, ga, out.grads);
    return out;
}

}  // namespace

MappingResult map_window(GaussianField& field, const KeyframeWindow& window, const CameraIntrinsics& intrinsics,
                         const MappingConfig& cfg, ThreadPool* pool) {
    if (window.empty()) throw InvalidInput("map_window: empty keyframe window");
    MappingResult result;
    if (field.empty()) return result;

    const auto n = static_cast<Eigen::Index>(field.size());
    Adam opt_mu(3 * n, cfg.lr_mu, cfg.adam), opt_rot(4 * n, cfg.lr_rotation, cfg.adam),
        opt_scale(3 * n, cfg.lr_scale, cfg.adam), opt_opacity(n, cfg.lr_opacity, cfg.adam),
        opt_color(3 * n, cfg.lr_color, cfg.adam);

    std::vector<KeyframeLoss> per_kf(window.size());
    for (int it = 0; it < cfg.iters; ++it) {
        auto eval = [&](std::size_t j) { per_kf[j] = keyframe_loss(field, window[j], intrinsics, cfg); };
        if (pool) pool->parallel_for(window.size(), eval);
        else for (std::size_t j = 0; j < window.size(); ++j) eval(j);

        double loss = cfg.lambda_iso * isotropy_loss(field);
        Eigen::VectorXd x_mu(3 * n), x_rot(4 * n), x_scale(3 * n), x_op(n), x_col(3 * n);
        Eigen::VectorXd g_mu = Eigen::VectorXd::Zero(3 * n), g_rot = Eigen::VectorXd::Zero(4 * n),
                        g_scale = Eigen::VectorXd::Zero(3 * n), g_op = Eigen::VectorXd::Zero(n),
                        g_col = Eigen::VectorXd::Zero(3 * n);
        for (const auto& kl : per_kf) {  // reduced in window order
            loss += kl.value;
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto s = static_cast<std::size_t>(i);
                g_mu.segment<3>(3 * i) += kl.grads.mu[s];
                g_rot.segment<4>(4 * i) += kl.grads.rotation[s];
                g_scale.segment<3>(3 * i) += kl.grads.scale[s];
                g_op(i) += kl.grads.opacity[s];
                g_col.segment<3>(3 * i) += kl.grads.color[s];
            }
        }
        result.trace.push_back(loss);

        for (Eigen::Index i = 0; i < n; ++i) {
            const Gaussian& g = field[static_cast<std::size_t>(i)];
            x_mu.segment<3>(3 * i) = g.mu;
            x_rot.segment<4>(4 * i) << g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z();
            x_scale.segment<3>(3 * i) = g.scale.array().log();
            x_op(i) = logit(g.opacity);
            x_col.segment<3>(3 * i) = g.color;
            // Chain rules into the optimized parametrizations.
            // d/ds_b sum_a |s_a - mean| = sign(dev_b) - mean_a sign(dev_a)
            const Eigen::Vector3d dev = scale_deviation(g.scale);
            const Eigen::Vector3d sg(sign(dev(0)), sign(dev(1)), sign(dev(2)));
            const Eigen::Vector3d iso = sg.array() - sg.mean();
            g_scale.segment<3>(3 * i) += cfg.lambda_iso * iso;
            g_scale.segment<3>(3 * i) = g_scale.segment<3>(3 * i).cwiseProduct(g.scale);
            const double a = std::clamp(g.opacity, kOpacityClamp, 1.0 - kOpacityClamp);
            g_op(i) *= a * (1.0 - a);
        }

        const double decay =
            cfg.iters > 1 ? std::pow(cfg.lr_final_ratio, static_cast<double>(it) / (cfg.iters - 1)) : 1.0;
        opt_mu.step(x_mu, g_mu, decay);
        opt_rot.step(x_rot, g_rot, decay);
        opt_scale.step(x_scale, g_scale, decay);
        opt_opacity.step(x_op, g_op, decay);
        opt_color.step(x_col, g_col, decay);

        for (Eigen::Index i = 0; i < n; ++i) {
            Gaussian& g = field[static_cast<std::size_t>(i)];
            g.mu = x_mu.segment<3>(3 * i);
            g.rotation = Eigen::Quaterniond(x_rot(4 * i), x_rot(4 * i + 1), x_rot(4 * i + 2), x_rot(4 * i + 3));
            g.scale = x_scale.segment<3>(3 * i).array().exp();
            g.opacity = sigmoid(x_op(i));
            g.color = x_col.segment<3>(3 * i);
        }
        field.renormalize();
    }

    double final_loss = cfg.lambda_iso * isotropy_loss(field);
    for (std::size_t j = 0; j < window.size(); ++j) final_loss += keyframe_loss(field, window[j], intrinsics, cfg).value;
    result.final_loss = final_loss;
    return result;
}

// ---------------------------------------------------------------- semantics

SupervisionTarget build_target(const CameraFrame& frame, const GridSpec& grid, SemanticSource source) {
    if (source == SemanticSource::Continuous) {
        if (frame.continuous.features.empty()) throw InvalidInput("build_target: frame has no continuous features");
        return build_target_continuous(frame.continuous, grid);
    }
    return build_target_discrete(frame.annotation, grid);
}

void TargetCache::put(int frame_id, const SupervisionTarget& target) {
    std::lock_guard lock(mutex_);
    const GridSpec& g = target.grid;
    targets_.insert_or_assign(Key{frame_id, g.stride(), g.offset_h(), g.offset_w()}, target);
}

std::optional<SupervisionTarget> TargetCache::find(int frame_id, const GridSpec& grid) const {
    std::lock_guard lock(mutex_);
    const auto it = targets_.find(Key{frame_id, grid.stride(), grid.offset_h(), grid.offset_w()});
    if (it == targets_.end()) return std::nullopt;
    return it->second;
}

SupervisionTarget TargetCache::get_or_build(const CameraFrame& frame, const GridSpec& grid, SemanticSource source) {
    if (auto hit = find(frame.frame_id, grid)) return *hit;
    SupervisionTarget t = build_target(frame, grid, source);
    {
        std::lock_guard lock(mutex_);
        std::string msg = "stall: frame " + std::to_string(frame.frame_id) + " offset (" +
                          std::to_string(grid.offset_h()) + "," + std::to_string(grid.offset_w()) + ")";
        spdlog::debug("{}", msg);
        stall_log_.push_back(std::move(msg));
    }
    put(frame.frame_id, t);
    return t;
}

void TargetCache::evict(int frame_id) {
    std::lock_guard lock(mutex_);
    std::erase_if(targets_, [&](const auto& kv) { return std::get<0>(kv.first) == frame_id; });
}

std::size_t TargetCache::size() const {
    std::lock_guard lock(mutex_);
    return targets_.size();
}

std::size_t TargetCache::stalls() const {
    std::lock_guard lock(mutex_);
    return stall_log_.size();
}

std::vector<std::string> TargetCache::stall_log() const {
    std::lock_guard lock(mutex_);
    return stall_log_;
}

void prefetch_targets(TargetCache& cache, const CameraFrame& frame, int stride, SemanticSource source) {
    const int H = frame.color.height(), W = frame.color.width();
    for (int oh = 0; oh < stride; ++oh) {
        for (int ow = 0; ow < stride; ++ow) {
            cache.put(frame.frame_id, build_target(frame, GridSpec(H, W, stride, oh, ow), source));
        }
    }
}

SemanticResult semantic_phase(GaussianField& field, const Codebook& codebook, const KeyframeWindow& window,
                              const CameraIntrinsics& intrinsics, TargetCache& targets, std::uint64_t& step,
                              const SemanticConfig& cfg) {
    SemanticResult result;
    if (window.empty() || field.empty() || cfg.iters <= 0) {
        step += static_cast<std::uint64_t>(std::max(cfg.iters, 0));
        return result;
    }
    const std::size_t stalls_before = targets.stalls();
    const auto n = static_cast<Eigen::Index>(field.size());
    const Eigen::Index K = field.K();
    Adam opt(n * K, cfg.lr, true);
    Eigen::VectorXd x(n * K), g(n * K);

    for (int t = 0; t < cfg.iters; ++t, ++step) {
        const auto [oh, ow] = next_offset(step, cfg.stride, cfg.offset_seed);
        const Keyframe& kf = window[static_cast<std::size_t>(step % window.size())];
        const GridSpec grid(intrinsics.height, intrinsics.width, cfg.stride, oh, ow);
        if (grid.empty()) {
            result.trace.push_back(0.0);
            continue;
        }
        const SupervisionTarget target = targets.get_or_build(kf.frame, grid, cfg.source);
        RenderStats stats;
        const FeatureView view = prepare_feature_view(field, codebook, kf.pose, intrinsics, grid);
        const CompactFeatureMap pred = render_features_grid(view, {}, &stats);
        result.blend_steps += stats.blend_steps;
        const SemanticLoss loss = masked_semantic_loss(pred, target, cfg.lambda_sem);
        result.trace.push_back(loss.value);
        if (loss.valid_cells == 0) continue;

        feature_logit_gradients(view, codebook, loss.cotangent, g);
        for (Eigen::Index i = 0; i < n; ++i) x.segment(i * K, K) = field[static_cast<std::size_t>(i)].logits;
        opt.step(x, g);
        for (Eigen::Index i = 0; i < n; ++i) field[static_cast<std::size_t>(i)].logits = x.segment(i * K, K);
    }
    result.stalls = targets.stalls() - stalls_before;
    return result;
}

// ---------------------------------------------------------------- map growth

DensifyResult densify_and_prune(GaussianField& field, const Keyframe& kf, const CameraIntrinsics& k,
                                const DensifyConfig& cfg, std::vector<int>* regions) {
    if (cfg.stride < 1) throw InvalidInput("densify_and_prune: stride must be >= 1");
    if (regions && regions->size() != field.size()) throw InvalidInput("densify_and_prune: regions size mismatch");
    DensifyResult result;

    if (regions) {
        std::vector<int> kept;
        for (std::size_t i = 0; i < field.size(); ++i) {
            if (!(field[i].opacity < cfg.prune_opacity)) kept.push_back((*regions)[i]);
        }
        *regions = std::move(kept);
    }
    result.pruned = static_cast<int>(field.remove_if([&](const Gaussian& g) { return g.opacity < cfg.prune_opacity; }));

    const int H = k.height, W = k.width;
    Tensor3 alpha(1, H, W, 0.0);
    double fallback_depth = cfg.init_depth;
    if (!field.empty()) {
        const RenderOutput img = render(field, kf.pose, k);
        alpha = img.alpha;
        std::vector<double> depths;
        for (std::size_t i = 0; i < img.alpha.size(); ++i) {
            if (img.alpha.data()[i] > 0.5) depths.push_back(img.depth.data()[i] / img.alpha.data()[i]);
        }
        if (!depths.empty()) {
            auto mid = depths.begin() + static_cast<std::ptrdiff_t>(depths.size() / 2);
            std::nth_element(depths.begin(), mid, depths.end());
            fallback_depth = *mid;
        }
    }

    const CameraFrame& f = kf.frame;
    const CameraPose world_from_cam = kf.pose.inverse();
    const bool labelled = f.annotation.labels.size() == static_cast<std::size_t>(H) * W;
    for (int u = 0; u < H; u += cfg.stride) {
        for (int v = 0; v < W; v += cfg.stride) {
            if (!(alpha(0, u, v) < cfg.coverage_threshold)) continue;
            double d = fallback_depth;
            if (f.has_depth()) {
                d = f.depth(0, u, v);
                if (!(d > 0.0)) continue;
            }
            Gaussian g;
            const Eigen::Vector3d p_cam((v - k.cx) / k.fx * d, (u - k.cy) / k.fy * d, d);
            g.mu = world_from_cam.transform(p_cam);
            g.scale = Eigen::Vector3d::Constant(cfg.scale_factor * cfg.stride * d / k.fx);
            g.opacity = cfg.init_opacity;
            g.color = f.color.pixel(u, v);
            g.logits = Eigen::VectorXd::Zero(field.K());
            field.add(std::move(g));
            if (regions) regions->push_back(labelled ? f.annotation.label(u, v) : -1);
            ++result.inserted;
        }
    }
    return result;
}

}  // namespace xgs
