#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xgs/camera.hpp"
#include "xgs/codebook.hpp"
#include "xgs/gaussian.hpp"
#include "xgs/supervision.hpp"
#include "xgs/tensor.hpp"

namespace xgs {

namespace fs = std::filesystem;
using Json = nlohmann::json;

std::string read_text_file(const fs::path& path);
void write_text_file(const fs::path& path, std::string_view text);
std::vector<std::uint8_t> read_binary_file(const fs::path& path);

/// Parses JSON text; malformed input raises ParseError with a 1-based line.
Json parse_json(std::string_view text);
Json read_json_file(const fs::path& path);
/// Pretty-printed with a trailing newline.
void write_json_file(const fs::path& path, const Json& j);

/// Field plus the per-Gaussian region tags some scenes carry (-1 if untagged).
struct SceneData {
    GaussianField field;
    int D = 0;
    std::vector<int> regions;
};

/// {"K","D","gaussians":[{"mu","quat"(w,x,y,z),"scale","opacity","color","logits"[,"region"]}]}
Json scene_to_json(const GaussianField& field, int D, const std::vector<int>& regions = {});
SceneData scene_from_json(const Json& j);

/// {"E","N","M","lambda","epsilon"}; the reservoir is not persisted.
Json codebook_to_json(const Codebook& codebook);
Codebook codebook_from_json(const Json& j, int reservoir_capacity = 4096);

/// Raw float32 little-endian planar tensor: "XGSF", u32 D, u32 H, u32 W, data.
void write_xgsf(const fs::path& path, const Tensor3& tensor);
Tensor3 read_xgsf(const fs::path& path);

/// 8-bit RGB PNG from a 3 x H x W tensor in [0,1] (values are clamped).
void write_png_rgb(const fs::path& path, const Tensor3& color);
Tensor3 read_png_rgb(const fs::path& path);

/// 16-bit grayscale PNG, row-major.
void write_png_gray16(const fs::path& path, int height, int width, const std::vector<std::uint16_t>& values);
std::vector<std::uint16_t> read_png_gray16(const fs::path& path, int& height, int& width);

/// Label PNG (65535 encodes -1) plus {"R","D","phi"} side file.
void write_region_annotation(const fs::path& png_path, const fs::path& json_path,
                             const RegionAnnotation& annotation);
RegionAnnotation read_region_annotation(const fs::path& png_path, const fs::path& json_path);

/// frame_id,qw,qx,qy,qz,tx,ty,tz with a header row.
void write_trajectory_csv(const fs::path& path, const std::vector<std::pair<int, CameraPose>>& poses);
std::vector<std::pair<int, CameraPose>> read_trajectory_csv(const fs::path& path);

Json pose_to_json(const CameraPose& pose);
CameraPose pose_from_json(const Json& j);
Json intrinsics_to_json(const CameraIntrinsics& k);
CameraIntrinsics intrinsics_from_json(const Json& j);

}  // namespace xgs
