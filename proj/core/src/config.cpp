#include "xgs/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>
#include <utility>

#include "xgs/error.hpp"
#include "xgs/io.hpp"

namespace xgs {

namespace {

std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    std::string s(buf, res.ptr);
    // Keep a decimal point so the value reads back as a float.
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw ConfigError("config: bad value '" + std::string(text) + "' for " + std::string(key));
    }
    return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("config: expected true/false for " + std::string(key) + ", got '" + std::string(text) + "'");
}

std::string to_string(SemanticSource s) { return s == SemanticSource::Continuous ? "continuous" : "discrete"; }

SemanticSource semantic_source_from_string(std::string_view key, std::string_view s) {
    if (s == "discrete") return SemanticSource::Discrete;
    if (s == "continuous") return SemanticSource::Continuous;
    throw ConfigError("config: " + std::string(key) + " must be discrete or continuous");
}

struct Entry {
    ConfigKey info;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;
};

template <typename T>
using Field = T& (*)(RunConfig&);

template <typename T>
Entry number(std::string key, std::string help, Field<T> field) {
    Entry e{{key, std::move(help)}, nullptr, nullptr};
    e.get = [field](const RunConfig& c) {
        const T v = field(const_cast<RunConfig&>(c));
        if constexpr (std::is_floating_point_v<T>) return format_double(v);
        else return std::to_string(v);
    };
    e.set = [field, key](RunConfig& c, std::string_view v) { field(c) = parse_number<T>(key, v); };
    return e;
}

Entry boolean(std::string key, std::string help, Field<bool> field) {
    Entry e{{key, std::move(help)}, nullptr, nullptr};
    e.get = [field](const RunConfig& c) -> std::string { return field(const_cast<RunConfig&>(c)) ? "true" : "false"; };
    e.set = [field, key](RunConfig& c, std::string_view v) { field(c) = parse_bool(key, v); };
    return e;
}

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = [] {
        std::vector<Entry> t;
        // clang-format off
        t.push_back(number<int>("vq.K", "codebook size", [](RunConfig& c) -> int& { return c.vq.K; }));
        t.push_back(number<double>("vq.lambda", "EMA decay", [](RunConfig& c) -> double& { return c.vq.lambda; }));
        t.push_back(number<double>("vq.tau_warm", "warm-start temperature", [](RunConfig& c) -> double& { return c.vq.tau_warm; }));
        t.push_back(number<double>("vq.gamma", "warm-start confidence threshold", [](RunConfig& c) -> double& { return c.vq.gamma; }));
        t.push_back(number<double>("vq.delta_dead", "dead-code mass threshold", [](RunConfig& c) -> double& { return c.vq.delta_dead; }));
        t.push_back(number<double>("vq.epsilon", "EMA denominator guard", [](RunConfig& c) -> double& { return c.vq.epsilon; }));
        t.push_back(number<int>("vq.reservoir_capacity", "revival reservoir size", [](RunConfig& c) -> int& { return c.vq.reservoir_capacity; }));
        t.push_back(boolean("vq.kmeanspp_seeding", "k-means++ seeding instead of first-K distinct", [](RunConfig& c) -> bool& { return c.vq.kmeanspp_seeding; }));
        t.push_back(boolean("vq.online_confidence_mask", "drop low-confidence samples from EMA updates", [](RunConfig& c) -> bool& { return c.vq.online_confidence_mask; }));
        t.push_back(number<std::uint64_t>("vq.seed", "revival RNG seed", [](RunConfig& c) -> std::uint64_t& { return c.vq.seed; }));

        Entry opt{{"tracking.optimizer", "lm or gd"}, nullptr, nullptr};
        opt.get = [](const RunConfig& c) { return to_string(c.tracking.optimizer); };
        opt.set = [](RunConfig& c, std::string_view v) {
            try {
                c.tracking.optimizer = pose_optimizer_from_string(std::string(v));
            } catch (const InvalidInput& e) {
                throw ConfigError(std::string("config: tracking.optimizer: ") + e.what());
            }
        };
        t.push_back(opt);
        t.push_back(number<int>("tracking.max_iters", "gradient evaluations per frame", [](RunConfig& c) -> int& { return c.tracking.max_iters; }));
        t.push_back(number<double>("tracking.fd_step", "finite-difference step on the twist", [](RunConfig& c) -> double& { return c.tracking.fd_step; }));
        t.push_back(number<double>("tracking.lr_pose", "gradient-descent step (gd only)", [](RunConfig& c) -> double& { return c.tracking.lr_pose; }));
        t.push_back(number<int>("tracking.patience", "tolerated loss increases (gd only)", [](RunConfig& c) -> int& { return c.tracking.patience; }));
        t.push_back(number<double>("tracking.lambda_d", "depth weight", [](RunConfig& c) -> double& { return c.tracking.lambda_d; }));
        t.push_back(number<double>("tracking.min_coverage", "required fraction of covered pixels", [](RunConfig& c) -> double& { return c.tracking.min_coverage; }));
        t.push_back(number<double>("tracking.irls_floor", "residual floor for L1 reweighting", [](RunConfig& c) -> double& { return c.tracking.irls_floor; }));
        t.push_back(boolean("tracking.limit_jacobian", "minmod of one-sided differences", [](RunConfig& c) -> bool& { return c.tracking.limit_jacobian; }));

        t.push_back(number<double>("keyframe.translation", "insertion threshold, scene units", [](RunConfig& c) -> double& { return c.keyframes.translation_threshold; }));
        t.push_back(number<double>("keyframe.rotation_deg", "insertion threshold, degrees", [](RunConfig& c) -> double& { return c.keyframes.rotation_threshold_deg; }));
        t.push_back(number<int>("keyframe.window", "keyframe window capacity", [](RunConfig& c) -> int& { return c.window; }));

        t.push_back(number<int>("mapping.iters", "radiance iterations per keyframe", [](RunConfig& c) -> int& { return c.mapping.iters; }));
        t.push_back(number<double>("mapping.lr_mu", "position rate", [](RunConfig& c) -> double& { return c.mapping.lr_mu; }));
        t.push_back(number<double>("mapping.lr_color", "color rate", [](RunConfig& c) -> double& { return c.mapping.lr_color; }));
        t.push_back(number<double>("mapping.lr_opacity", "opacity-logit rate", [](RunConfig& c) -> double& { return c.mapping.lr_opacity; }));
        t.push_back(number<double>("mapping.lr_scale", "log-scale rate", [](RunConfig& c) -> double& { return c.mapping.lr_scale; }));
        t.push_back(number<double>("mapping.lr_rotation", "quaternion rate", [](RunConfig& c) -> double& { return c.mapping.lr_rotation; }));
        t.push_back(number<double>("mapping.lambda_d", "depth weight", [](RunConfig& c) -> double& { return c.mapping.lambda_d; }));
        t.push_back(number<double>("mapping.lambda_iso", "isotropy weight", [](RunConfig& c) -> double& { return c.mapping.lambda_iso; }));
        t.push_back(boolean("mapping.adam", "Adam (false: plain gradient descent)", [](RunConfig& c) -> bool& { return c.mapping.adam; }));
        t.push_back(number<double>("mapping.lr_final_ratio", "rate multiplier reached at the last iteration", [](RunConfig& c) -> double& { return c.mapping.lr_final_ratio; }));

        t.push_back(number<int>("semantic.iters", "semantic iterations per keyframe", [](RunConfig& c) -> int& { return c.semantic.iters; }));
        t.push_back(number<int>("semantic.stride", "grid stride s", [](RunConfig& c) -> int& { return c.semantic.stride; }));
        t.push_back(number<double>("semantic.lr", "logit rate", [](RunConfig& c) -> double& { return c.semantic.lr; }));
        t.push_back(number<double>("semantic.lambda_sem", "semantic loss weight", [](RunConfig& c) -> double& { return c.semantic.lambda_sem; }));
        t.push_back(number<std::uint64_t>("semantic.offset_seed", "grid offset shuffle seed", [](RunConfig& c) -> std::uint64_t& { return c.semantic.offset_seed; }));
        Entry src{{"semantic.source", "discrete or continuous"}, nullptr, nullptr};
        src.get = [](const RunConfig& c) { return to_string(c.semantic.source); };
        src.set = [](RunConfig& c, std::string_view v) { c.semantic.source = semantic_source_from_string("semantic.source", v); };
        t.push_back(src);

        t.push_back(number<double>("densify.coverage_threshold", "insert where alpha is below", [](RunConfig& c) -> double& { return c.densify.coverage_threshold; }));
        t.push_back(number<int>("densify.stride", "insertion lattice stride", [](RunConfig& c) -> int& { return c.densify.stride; }));
        t.push_back(number<double>("densify.prune_opacity", "prune below this opacity", [](RunConfig& c) -> double& { return c.densify.prune_opacity; }));
        t.push_back(number<double>("densify.init_depth", "depth used before anything is rendered (rgb)", [](RunConfig& c) -> double& { return c.densify.init_depth; }));
        t.push_back(number<double>("densify.init_opacity", "opacity of inserted Gaussians", [](RunConfig& c) -> double& { return c.densify.init_opacity; }));
        t.push_back(number<double>("densify.scale_factor", "scale = factor * stride * depth / fx", [](RunConfig& c) -> double& { return c.densify.scale_factor; }));

        Entry mode{{"run.mode", "rgb or rgbd"}, nullptr, nullptr};
        mode.get = [](const RunConfig& c) { return to_string(c.mode); };
        mode.set = [](RunConfig& c, std::string_view v) {
            try {
                c.mode = sensor_mode_from_string(std::string(v));
            } catch (const InvalidInput& e) {
                throw ConfigError(std::string("config: run.mode: ") + e.what());
            }
        };
        t.push_back(mode);
        t.push_back(number<int>("run.threads", "compute workers (XGS_THREADS overrides)", [](RunConfig& c) -> int& { return c.threads; }));
        t.push_back(number<int>("run.prefetch_threads", "background workers for VQ and prefetch", [](RunConfig& c) -> int& { return c.prefetch_threads; }));
        t.push_back(boolean("run.deterministic", "serialize agents; metrics omit timings", [](RunConfig& c) -> bool& { return c.deterministic; }));
        t.push_back(number<int>("run.tokens", "default token count M", [](RunConfig& c) -> int& { return c.tokens; }));
        // clang-format on
        return t;
    }();
    return table;
}

const Entry& find_entry(std::string_view key, int line = 0) {
    for (const auto& e : entries()) {
        if (e.info.key == key) return e;
    }
    throw ConfigError("config: unknown key '" + std::string(key) + "'", line);
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// Cuts a trailing "# ..." comment that is not inside quotes.
std::string_view strip_comment(std::string_view s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        for (const auto& e : entries()) k.push_back(e.info);
        return k;
    }();
    return keys;
}

void RunConfig::validate() const {
    try {
        vq.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    auto require = [](bool ok, const char* msg) {
        if (!ok) throw ConfigError(std::string("config: ") + msg);
    };
    require(tracking.max_iters >= 1, "tracking.max_iters must be >= 1");
    require(tracking.fd_step > 0.0, "tracking.fd_step must be positive");
    require(tracking.patience >= 1, "tracking.patience must be >= 1");
    require(tracking.min_coverage >= 0.0 && tracking.min_coverage <= 1.0, "tracking.min_coverage must lie in [0,1]");
    require(tracking.irls_floor > 0.0, "tracking.irls_floor must be positive");
    require(keyframes.translation_threshold >= 0.0, "keyframe.translation must be >= 0");
    require(keyframes.rotation_threshold_deg >= 0.0, "keyframe.rotation_deg must be >= 0");
    require(window >= 1, "keyframe.window must be >= 1");
    require(mapping.iters >= 0, "mapping.iters must be >= 0");
    require(mapping.lr_final_ratio > 0.0 && mapping.lr_final_ratio <= 1.0, "mapping.lr_final_ratio must lie in (0,1]");
    require(semantic.iters >= 0, "semantic.iters must be >= 0");
    require(semantic.stride >= 1, "semantic.stride must be >= 1");
    require(densify.stride >= 1, "densify.stride must be >= 1");
    require(densify.init_depth > 0.0, "densify.init_depth must be positive");
    require(densify.init_opacity > 0.0 && densify.init_opacity < 1.0, "densify.init_opacity must lie in (0,1)");
    require(threads >= 0, "run.threads must be >= 0");
    require(prefetch_threads >= 0, "run.prefetch_threads must be >= 0");
    require(tokens >= 1, "run.tokens must be >= 1");
}

void RunConfig::set(std::string_view key, std::string_view value) {
    RunConfig next = *this;
    find_entry(key).set(next, value);
    next.validate();
    *this = std::move(next);
}

std::string RunConfig::get(std::string_view key) const { return find_entry(key).get(*this); }

std::string RunConfig::to_text() const {
    std::ostringstream out;
    std::string section;
    for (const auto& e : entries()) {
        const auto dot = e.info.key.find('.');
        const std::string sec = e.info.key.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out << '\n';
            out << '[' << sec << "]\n";
            section = sec;
        }
        out << e.info.key.substr(dot + 1) << " = " << e.get(*this) << "  # " << e.info.help << '\n';
    }
    return out.str();
}

RunConfig RunConfig::parse(std::string_view text) {
    RunConfig cfg;
    std::string section;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const std::string_view line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("config: unterminated section header", line_no);
            section = std::string(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError("config: expected key = value", line_no);
        const std::string_view name = trim(line.substr(0, eq));
        std::string_view value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        const std::string key = section.empty() ? std::string(name) : section + "." + std::string(name);
        try {
            find_entry(key, line_no);
            cfg.set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(e.what(), line_no);
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return parse(text);
}

}  // namespace xgs
