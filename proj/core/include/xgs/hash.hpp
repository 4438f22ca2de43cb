#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "xgs/codebook.hpp"
#include "xgs/gaussian.hpp"

namespace xgs {

/// Lower-case hex SHA-256.
std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

/// Digest over the raw bytes of mu, rotation, scale, opacity and color.
std::string geometry_checksum(const GaussianField& field);
/// Digest over every Gaussian's logits and the codebook E, N, M.
std::string semantic_checksum(const GaussianField& field, const Codebook& codebook);

}  // namespace xgs
