#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "xgs/online_vq.hpp"
#include "xgs/slam.hpp"
#include "xgs/synthetic.hpp"

namespace xgs {

/// Every tunable of a run. Keys are "section.name"; see config_keys().
struct RunConfig {
    VqConfig vq;
    TrackingConfig tracking;
    KeyframeConfig keyframes;
    int window = 8;
    MappingConfig mapping;
    SemanticConfig semantic;
    DensifyConfig densify;

    SensorMode mode = SensorMode::Rgbd;
    int threads = 0;            // compute workers for per-keyframe loops; 0 runs inline
    int prefetch_threads = 16;  // background pool for VQ updates and target prefetch
    bool deterministic = false; // serialize tracking and mapping onto one agent
    int tokens = 64;            // default M for token extraction

    /// Throws ConfigError on an out-of-range value.
    void validate() const;

    /// Sets one key from its text form and re-validates. Throws ConfigError
    /// and leaves the config unchanged on failure.
    void set(std::string_view key, std::string_view value);
    std::string get(std::string_view key) const;

    /// "key = value" lines grouped by section, in config_keys() order.
    std::string to_text() const;

    /// TOML-style subset: "[section]" headers, "key = value" pairs, "#"
    /// comments, optional double quotes around values. Errors carry the line.
    static RunConfig parse(std::string_view text);
    static RunConfig load(const std::string& path);
};

/// All recognised keys with a one-line description each.
struct ConfigKey {
    std::string key;
    std::string help;
};
const std::vector<ConfigKey>& config_keys();

}  // namespace xgs
