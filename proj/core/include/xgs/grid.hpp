#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace xgs {

/// Number of lattice samples u = offset + m*stride inside [0, extent):
/// max(0, 1 + floor((extent - 1 - offset) / stride)) with floored division.
/// Throws InvalidInput when stride < 1 or offset is outside [0, stride).
int grid_resolution(int extent, int stride, int offset);

struct PixelCoord {
    int u = 0;  // row
    int v = 0;  // column
    friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

/// Stride/offset lattice over an H x W image. The compact resolution is
/// always derived, never cached.
class GridSpec {
public:
    GridSpec() = default;
    GridSpec(int height, int width, int stride = 1, int offset_h = 0, int offset_w = 0);

    static GridSpec dense(int height, int width) { return {height, width, 1, 0, 0}; }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int stride() const noexcept { return stride_; }
    int offset_h() const noexcept { return offset_h_; }
    int offset_w() const noexcept { return offset_w_; }

    int rows() const { return grid_resolution(height_, stride_, offset_h_); }
    int cols() const { return grid_resolution(width_, stride_, offset_w_); }
    int cell_count() const { return rows() * cols(); }
    bool empty() const { return cell_count() == 0; }

    PixelCoord pixel(int m, int n) const { return {offset_h_ + m * stride_, offset_w_ + n * stride_}; }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    int stride_ = 1;
    int offset_h_ = 0;
    int offset_w_ = 0;
};

/// All sampled pixels in row-major (m, n) order.
std::vector<PixelCoord> sample_coordinates(const GridSpec& grid);

/// Offset for optimization step `step`: each block of s^2 consecutive steps
/// visits every phase once, in an order shuffled per block from `seed`.
std::pair<int, int> next_offset(std::uint64_t step, int stride, std::uint64_t seed);

}  // namespace xgs
