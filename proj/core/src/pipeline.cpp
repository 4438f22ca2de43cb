#include "xgs/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <future>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "xgs/error.hpp"
#include "xgs/hash.hpp"
#include "xgs/rasterizer.hpp"

namespace xgs {

namespace {

std::string frame_stem(int id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06d", id);
    return buf;
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j, const char* what) {
    if (!j.is_array() || j.empty() || !j.front().is_array()) throw ParseError(std::string(what) + ": expected a 2-d array");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j.front().size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw ParseError(std::string(what) + ": ragged rows");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

Json vector_to_json(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

void write_depth_png(const fs::path& path, const Tensor3& depth) {
    std::vector<std::uint16_t> values(depth.size());
    for (std::size_t i = 0; i < depth.size(); ++i) {
        const double d = std::round(depth.data()[i] * kDepthScale);
        values[i] = static_cast<std::uint16_t>(std::clamp(d, 0.0, 65535.0));
    }
    write_png_gray16(path, depth.height(), depth.width(), values);
}

Tensor3 read_depth_png(const fs::path& path) {
    int h = 0, w = 0;
    const std::vector<std::uint16_t> values = read_png_gray16(path, h, w);
    Tensor3 depth(1, h, w);
    for (std::size_t i = 0; i < values.size(); ++i) depth.data()[i] = values[i] / kDepthScale;
    return depth;
}

// ---------------------------------------------------------------- timing

class PhaseClock {
public:
    void add(const std::string& name, double ms) {
        std::lock_guard lock(mutex_);
        totals_[name] += ms;
    }
    double total(const std::string& name) const {
        std::lock_guard lock(mutex_);
        const auto it = totals_.find(name);
        return it == totals_.end() ? 0.0 : it->second;
    }

private:
    mutable std::mutex mutex_;
    std::map<std::string, double> totals_;
};

class ScopedPhase {
public:
    ScopedPhase(PhaseClock& clock, std::string name)
        : clock_(clock), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
    ~ScopedPhase() {
        const std::chrono::duration<double, std::milli> d = std::chrono::steady_clock::now() - start_;
        clock_.add(name_, d.count());
    }
    ScopedPhase(const ScopedPhase&) = delete;
    ScopedPhase& operator=(const ScopedPhase&) = delete;

private:
    PhaseClock& clock_;
    std::string name_;
    std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------- mapping agent

struct MappingJob {
    std::shared_ptr<const Keyframe> keyframe;
    KeyframeWindow window;
    std::optional<int> evicted;
};

/// Stand-in for the vision encoder: the per-pixel region features of the
/// annotation, or the cells of the continuous map.
std::vector<Eigen::VectorXd> encode_frame(const CameraFrame& frame, SemanticSource source) {
    std::vector<Eigen::VectorXd> out;
    if (source == SemanticSource::Continuous) {
        const Tensor3& f = frame.continuous.features;
        for (int u = 0; u < f.height(); ++u) {
            for (int v = 0; v < f.width(); ++v) {
                Eigen::VectorXd x = f.pixel(u, v);
                if (x.squaredNorm() > 0.0) out.push_back(std::move(x));
            }
        }
        return out;
    }
    const RegionAnnotation& a = frame.annotation;
    for (int label : a.labels) {
        if (label >= 0) out.push_back(a.phi.row(label).transpose());
    }
    return out;
}

class MappingAgent {
public:
    MappingAgent(const RunConfig& cfg, const CameraIntrinsics& k, int D, ThreadPool* compute, ThreadPool* background,
                 PhaseClock& clock)
        : cfg_(cfg),
          k_(k),
          compute_(compute),
          background_(background),
          clock_(clock),
          field_(cfg.vq.K),
          vq_(cfg.vq, D),
          snapshot_(std::make_shared<const GaussianField>(cfg.vq.K)) {}

    void ingest(const MappingJob& job) {
        const std::shared_ptr<const Keyframe> kf = job.keyframe;
        const CameraFrame& frame = kf->frame;

        std::shared_ptr<std::vector<Eigen::VectorXd>> batch;
        {
            ScopedPhase p(clock_, "Vision Encoding");
            batch = std::make_shared<std::vector<Eigen::VectorXd>>(encode_frame(frame, cfg_.semantic.source));
        }
        std::future<void> vq_done = background_->submit([this, batch] {
            ScopedPhase p(clock_, "VQ Codebook Update");
            vq_.observe(*batch);
        });
        std::vector<std::future<void>> prefetched;
        const int s = cfg_.semantic.stride;
        for (int oh = 0; oh < s; ++oh) {
            for (int ow = 0; ow < s; ++ow) {
                prefetched.push_back(background_->submit([this, kf, s, oh, ow] {
                    ScopedPhase p(clock_, "Grid-Sampled Target Prefetching");
                    const GridSpec grid(k_.height, k_.width, s, oh, ow);
                    if (!grid.empty()) targets_.put(kf->frame.frame_id, build_target(kf->frame, grid, cfg_.semantic.source));
                }));
            }
        }
        if (job.evicted) targets_.evict(*job.evicted);

        if (field_.empty()) {
            // Bootstrap: nothing to optimize until the first keyframe is back-projected.
            ScopedPhase p(clock_, "Densification");
            densify_and_prune(field_, *kf, k_, cfg_.densify, &regions_);
        }
        {
            ScopedPhase p(clock_, "Radiance Mapping");
            map_window(field_, job.window, k_, mapping_config(), compute_);
        }
        vq_done.get();
        const Codebook codebook = vq_.snapshot();
        if (cfg_.deterministic) {
            for (auto& f : prefetched) f.wait();
        }
        {
            ScopedPhase p(clock_, "Semantic Optimization");
            const SemanticResult r = semantic_phase(field_, codebook, job.window, k_, targets_, step_, cfg_.semantic);
            blend_steps_ += r.blend_steps;
        }
        for (auto& f : prefetched) f.get();
        {
            ScopedPhase p(clock_, "Densification");
            densify_and_prune(field_, *kf, k_, cfg_.densify, &regions_);
        }
        ++keyframes_;
        publish();
    }

    std::shared_ptr<const GaussianField> snapshot() const {
        std::lock_guard lock(snapshot_mutex_);
        return snapshot_;
    }

    /// Blocks until the first keyframe has been mapped or `stop` is set.
    std::shared_ptr<const GaussianField> wait_for_map() const {
        std::unique_lock lock(snapshot_mutex_);
        published_cv_.wait(lock, [&] { return !snapshot_->empty() || stopped_; });
        return snapshot_;
    }

    void stop() {
        std::lock_guard lock(snapshot_mutex_);
        stopped_ = true;
        published_cv_.notify_all();
    }

    void finish(RunResult& out) {
        out.field = field_;
        out.regions = regions_;
        out.codebook = vq_.snapshot();
        out.audit = vq_.audit();
        out.keyframes = keyframes_;
        out.stalls = targets_.stalls();
        out.stall_log = targets_.stall_log();
        out.semantic_blend_steps = blend_steps_;
    }

private:
    MappingConfig mapping_config() const {
        MappingConfig m = cfg_.mapping;
        m.use_depth = cfg_.mode == SensorMode::Rgbd;
        return m;
    }

    void publish() {
        auto next = std::make_shared<const GaussianField>(field_);
        std::lock_guard lock(snapshot_mutex_);
        snapshot_ = std::move(next);
        published_cv_.notify_all();
    }

    const RunConfig& cfg_;
    CameraIntrinsics k_;
    ThreadPool* compute_;
    ThreadPool* background_;
    PhaseClock& clock_;

    GaussianField field_;
    std::vector<int> regions_;
    OnlineQuantizer vq_;
    TargetCache targets_;
    std::uint64_t step_ = 0;
    std::uint64_t blend_steps_ = 0;
    int keyframes_ = 0;

    mutable std::mutex snapshot_mutex_;
    mutable std::condition_variable published_cv_;
    std::shared_ptr<const GaussianField> snapshot_;
    bool stopped_ = false;
};

std::vector<std::string> list_files(const fs::path& dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string rel = fs::relative(e.path(), dir).generic_string();
        if (rel != "manifest.json") files.push_back(rel);
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

// ---------------------------------------------------------------- run directory

Json build_manifest(const fs::path& dir) {
    Json files = Json::object();
    for (const std::string& rel : list_files(dir)) files[rel] = sha256_file(dir / rel);
    return Json{{"files", files}};
}

Json generate_run(const SceneRecipe& recipe, const fs::path& dir, bool force) {
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!force) throw InvalidInput("gen: output directory " + dir.string() + " is not empty (use --force)");
        fs::remove_all(dir);
    }
    fs::create_directories(dir / "frames");

    const GeneratedScene scene = generate_scene(recipe);
    const std::vector<CameraPose> poses = generate_trajectory(recipe);
    const std::vector<CameraFrame> frames = render_ground_truth(scene, poses, recipe, SensorMode::Rgbd);

    write_json_file(dir / "recipe.json", recipe.to_json());
    write_json_file(dir / "intrinsics.json", intrinsics_to_json(recipe.intrinsics()));
    write_json_file(dir / "encoder.json", Json{{"dim", recipe.feature_dim},
                                              {"seed", recipe.seed},
                                              {"phi", matrix_to_json(scene.phi)},
                                              {"generic", vector_to_json(scene.generic)}});
    write_json_file(dir / "scene_gt.json", scene_to_json(scene.field, recipe.feature_dim, scene.regions));
    write_json_file(dir / "codebook_gt.json", codebook_to_json(scene.codebook));

    std::vector<std::pair<int, CameraPose>> traj;
    for (const CameraFrame& f : frames) {
        traj.emplace_back(f.frame_id, f.gt_pose);
        const fs::path stem = dir / "frames" / frame_stem(f.frame_id);
        write_png_rgb(stem.string() + "_color.png", f.color);
        write_depth_png(stem.string() + "_depth.png", f.depth);
        write_region_annotation(stem.string() + "_labels.png", stem.string() + "_labels.json", f.annotation);
        if (!f.continuous.features.empty()) write_xgsf(stem.string() + "_features.xgsf", f.continuous.features);
    }
    write_trajectory_csv(dir / "trajectory_gt.csv", traj);

    const Json manifest = build_manifest(dir);
    write_json_file(dir / "manifest.json", manifest);
    return manifest;
}

std::vector<CameraPose> Sequence::ground_truth() const {
    std::vector<CameraPose> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(f.gt_pose);
    return out;
}

Sequence load_sequence(const fs::path& dir, SensorMode mode) {
    if (!fs::is_directory(dir)) throw InvalidInput("run directory " + dir.string() + " does not exist");
    Sequence seq;
    seq.recipe = SceneRecipe::from_json(read_json_file(dir / "recipe.json"));
    seq.intrinsics = intrinsics_from_json(read_json_file(dir / "intrinsics.json"));
    const Json enc = read_json_file(dir / "encoder.json");
    seq.phi = matrix_from_json(enc.at("phi"), "encoder.json phi");
    const auto generic = enc.at("generic").get<std::vector<double>>();
    seq.generic = Eigen::Map<const Eigen::VectorXd>(generic.data(), static_cast<Eigen::Index>(generic.size()));

    for (const auto& [id, pose] : read_trajectory_csv(dir / "trajectory_gt.csv")) {
        CameraFrame f;
        f.frame_id = id;
        f.gt_pose = pose;
        const std::string stem = (dir / "frames" / frame_stem(id)).string();
        f.color = read_png_rgb(stem + "_color.png");
        if (f.color.height() != seq.intrinsics.height || f.color.width() != seq.intrinsics.width) {
            throw InvalidInput("frame " + std::to_string(id) + ": image size does not match intrinsics");
        }
        if (mode == SensorMode::Rgbd) f.depth = read_depth_png(stem + "_depth.png");
        f.annotation = read_region_annotation(stem + "_labels.png", stem + "_labels.json");
        if (fs::exists(stem + "_features.xgsf")) f.continuous.features = read_xgsf(stem + "_features.xgsf");
        seq.frames.push_back(std::move(f));
    }
    if (seq.frames.empty()) throw InvalidInput("run directory has no frames");
    return seq;
}

TextEncoder load_encoder(const fs::path& dir) {
    const Json enc = read_json_file(dir / "encoder.json");
    TextEncoder encoder(enc.at("dim").get<int>(), enc.at("seed").get<std::uint64_t>());
    const auto generic = enc.at("generic").get<std::vector<double>>();
    encoder.set_regions(matrix_from_json(enc.at("phi"), "encoder.json phi"),
                        Eigen::Map<const Eigen::VectorXd>(generic.data(), static_cast<Eigen::Index>(generic.size())));
    return encoder;
}

// ---------------------------------------------------------------- run loop

RunResult run_pipeline(const Sequence& seq, const RunConfig& cfg) {
    cfg.validate();
    const auto wall_start = std::chrono::steady_clock::now();
    const CameraIntrinsics& k = seq.intrinsics;

    ThreadPool compute(static_cast<std::size_t>(cfg.threads));
    // Deterministic mode runs background work inline on the mapping agent.
    ThreadPool background(cfg.deterministic ? 0 : static_cast<std::size_t>(cfg.prefetch_threads));
    PhaseClock clock;
    MappingAgent mapper(cfg, k, seq.recipe.feature_dim, &compute, &background, clock);

    BoundedChannel<MappingJob> jobs(2);
    std::thread mapping_thread;
    std::exception_ptr mapping_error;
    if (!cfg.deterministic) {
        mapping_thread = std::thread([&] {
            try {
                while (auto job = jobs.pop()) mapper.ingest(*job);
            } catch (...) {
                mapping_error = std::current_exception();
                jobs.close();
            }
            mapper.stop();
        });
    }

    TrackingConfig tcfg = cfg.tracking;
    tcfg.use_depth = cfg.mode == SensorMode::Rgbd;

    RunResult result;
    TrackState track;
    KeyframeWindow window(static_cast<std::size_t>(cfg.window));
    try {
        for (std::size_t t = 0; t < seq.frames.size(); ++t) {
            const CameraFrame& frame = seq.frames[t];
            CameraPose pose = frame.gt_pose;  // frame 0 fixes the gauge
            if (t > 0) {
                const Prediction pred = predict_pose(track);
                const std::shared_ptr<const GaussianField> map =
                    cfg.deterministic ? mapper.snapshot() : mapper.wait_for_map();
                ScopedPhase p(clock, "Tracking");
                TrackResult tr;
                if (map->empty()) {
                    tr.failed = true;
                    tr.failure = "empty map";
                } else {
                    tr = track_frame(*map, frame, pred.pose, k, tcfg, &compute);
                }
                if (tr.failed) {
                    spdlog::warn("frame {}: tracking failed ({}); keeping the predicted pose", frame.frame_id,
                                 tr.failure);
                    result.failures.push_back({frame.frame_id, tr.failure});
                    pose = pred.pose;
                } else {
                    pose = tr.pose;
                }
            }
            track.accept(pose);
            result.estimates.push_back(pose);

            const KeyframeDecision d = manage_keyframes(window, frame, pose, cfg.keyframes);
            if (!d.inserted) continue;
            MappingJob job{std::make_shared<const Keyframe>(window.newest()), window, d.evicted};
            if (cfg.deterministic) {
                mapper.ingest(job);
            } else if (!jobs.push(std::move(job))) {
                break;  // mapping agent failed
            }
        }
    } catch (...) {
        jobs.close();
        if (mapping_thread.joinable()) mapping_thread.join();
        throw;
    }
    jobs.close();
    if (mapping_thread.joinable()) mapping_thread.join();
    if (mapping_error) std::rethrow_exception(mapping_error);

    mapper.finish(result);
    result.keyframe_log = window.log();
    result.ground_truth = seq.ground_truth();

    std::vector<Tensor3> renders, images;
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        images.push_back(seq.frames[t].color);
        renders.push_back(result.field.empty() ? Tensor3(3, k.height, k.width)
                                               : render(result.field, result.estimates[t], k).color);
    }
    result.metrics = compute_metrics(result.estimates, result.ground_truth, renders, images);

    for (const std::string& name : timing_components()) result.timing_ms.emplace_back(name, clock.total(name));
    const std::chrono::duration<double, std::milli> wall = std::chrono::steady_clock::now() - wall_start;
    result.wall_ms = wall.count();
    return result;
}

Json metrics_json(const RunResult& r, const RunConfig& cfg) {
    Json j;
    j["psnr"] = r.metrics.psnr;
    j["ate_rmse"] = r.metrics.ate_rmse;
    if (cfg.deterministic) {
        j["per_phase_ms"] = nullptr;
        j["fps_equivalent"] = nullptr;
    } else {
        Json phases = Json::object();
        for (const auto& [name, ms] : r.timing_ms) phases[name] = ms;
        j["per_phase_ms"] = phases;
        j["fps_equivalent"] = r.wall_ms > 0.0 ? 1000.0 * static_cast<double>(r.estimates.size()) / r.wall_ms : 0.0;
    }
    j["frames"] = r.estimates.size();
    j["keyframes"] = r.keyframes;
    j["tracking_failures"] = r.failures.size();
    j["gaussians"] = r.field.size();
    j["mode"] = to_string(cfg.mode);
    return j;
}

std::string timing_csv(const RunResult& r) {
    std::ostringstream out;
    out << "component,total_ms,per_keyframe_ms\n";
    const double kfs = std::max(r.keyframes, 1);
    char buf[128];
    for (const auto& [name, ms] : r.timing_ms) {
        std::snprintf(buf, sizeof buf, "%s,%.3f,%.3f\n", name.c_str(), ms, ms / kfs);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "Total (wall),%.3f,%.3f\n", r.wall_ms, r.wall_ms / kfs);
    out << buf;
    return out.str();
}

void write_run_outputs(const fs::path& out_dir, const RunResult& r, const RunConfig& cfg) {
    fs::create_directories(out_dir);
    write_json_file(out_dir / "metrics.json", metrics_json(r, cfg));
    write_text_file(out_dir / "timing.csv", timing_csv(r));
    std::vector<std::pair<int, CameraPose>> est, gt;
    for (std::size_t i = 0; i < r.estimates.size(); ++i) {
        est.emplace_back(static_cast<int>(i), r.estimates[i]);
        gt.emplace_back(static_cast<int>(i), r.ground_truth[i]);
    }
    write_trajectory_csv(out_dir / "trajectory_est.csv", est);
    write_trajectory_csv(out_dir / "trajectory_gt.csv", gt);
    write_text_file(out_dir / "vq_audit.csv", r.audit.to_csv());
    write_json_file(out_dir / "map_scene.json", scene_to_json(r.field, r.codebook.D(), r.regions));
    write_json_file(out_dir / "map_codebook.json", codebook_to_json(r.codebook));
    write_text_file(out_dir / "config.toml", cfg.to_text());
    if (fs::exists(out_dir / "manifest.json")) fs::remove(out_dir / "manifest.json");
    write_json_file(out_dir / "manifest.json", build_manifest(out_dir));
}

// ---------------------------------------------------------------- map queries

LoadedMap load_map(const fs::path& out_dir) {
    LoadedMap m;
    SceneData scene = scene_from_json(read_json_file(out_dir / "map_scene.json"));
    m.field = std::move(scene.field);
    m.regions = std::move(scene.regions);
    m.codebook = codebook_from_json(read_json_file(out_dir / "map_codebook.json"));
    if (m.codebook.K() != m.field.K()) throw InvalidInput("map: codebook size does not match the logits");
    m.trajectory = read_trajectory_csv(out_dir / "trajectory_est.csv");
    return m;
}

Json query_json(const std::string& prompt, double delta, const std::vector<double>& scores, const RelevanceResult& r) {
    double lo = 0.0, hi = 0.0, mean = 0.0;
    if (!scores.empty()) {
        lo = *std::min_element(scores.begin(), scores.end());
        hi = *std::max_element(scores.begin(), scores.end());
        for (double s : scores) mean += s;
        mean /= static_cast<double>(scores.size());
    }
    return Json{{"prompt", prompt},
                {"delta", delta},
                {"scores_summary", {{"min", lo}, {"max", hi}, {"mean", mean}}},
                {"mask_count", r.mask_count()},
                {"fallback_used", r.fallback_used},
                {"gaussians", scores.size()}};
}

Json tokens_json(const TokenSample& s, int requested) {
    Json tokens = Json::array();
    for (std::size_t i = 0; i < s.indices.size(); ++i) {
        tokens.push_back({{"index", s.indices[i]}, {"entropy", s.entropies[i]}, {"feature", vector_to_json(s.features[i])}});
    }
    return Json{{"requested", requested}, {"M", s.indices.size()}, {"clamped", s.clamped}, {"tokens", tokens}};
}

GaussianField masked_field(const GaussianField& field, const std::vector<bool>& mask) {
    if (mask.size() != field.size()) throw InvalidInput("masked_field: mask size does not match the field");
    GaussianField out(field.K());
    for (std::size_t i = 0; i < field.size(); ++i) {
        if (mask[i]) out.add(field[i]);
    }
    return out;
}

}  // namespace xgs
