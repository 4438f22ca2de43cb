#include "xgs/grid.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

#include "xgs/error.hpp"

namespace xgs {
namespace {

int floor_div(int a, int b) {
    int q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

}  // namespace

int grid_resolution(int extent, int stride, int offset) {
    if (stride < 1) throw InvalidInput("grid_resolution: stride must be >= 1");
    if (offset < 0 || offset >= stride) {
        throw InvalidInput("grid_resolution: offset " + std::to_string(offset) + " outside [0, " +
                           std::to_string(stride) + ")");
    }
    if (extent < 0) throw InvalidInput("grid_resolution: negative extent");
    return std::max(0, 1 + floor_div(extent - 1 - offset, stride));
}

GridSpec::GridSpec(int height, int width, int stride, int offset_h, int offset_w)
    : height_(height), width_(width), stride_(stride), offset_h_(offset_h), offset_w_(offset_w) {
    // Validates stride and offsets.
    (void)grid_resolution(height, stride, offset_h);
    (void)grid_resolution(width, stride, offset_w);
}

std::vector<PixelCoord> sample_coordinates(const GridSpec& grid) {
    const int rows = grid.rows();
    const int cols = grid.cols();
    std::vector<PixelCoord> out;
    out.reserve(static_cast<std::size_t>(rows) * cols);
    for (int m = 0; m < rows; ++m) {
        for (int n = 0; n < cols; ++n) out.push_back(grid.pixel(m, n));
    }
    return out;
}

std::pair<int, int> next_offset(std::uint64_t step, int stride, std::uint64_t seed) {
    if (stride < 1) throw InvalidInput("next_offset: stride must be >= 1");
    if (stride == 1) return {0, 0};
    const auto phases = static_cast<std::uint64_t>(stride) * stride;
    const std::uint64_t cycle = step / phases;
    const std::uint64_t position = step % phases;

    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(cycle), static_cast<std::uint32_t>(cycle >> 32)};
    std::mt19937_64 rng(seq);
    std::vector<int> order(phases);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const int phase = order[position];
    return {phase / stride, phase % stride};
}

}  // namespace xgs
