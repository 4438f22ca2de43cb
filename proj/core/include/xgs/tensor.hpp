#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace xgs {

/// Dense planar C x H x W array of doubles.
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(int channels, int height, int width, double fill = 0.0)
        : channels_(channels),
          height_(height),
          width_(width),
          data_(static_cast<std::size_t>(channels) * height * width, fill) {}

    int channels() const noexcept { return channels_; }
    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t plane() const noexcept { return static_cast<std::size_t>(height_) * width_; }

    double& operator()(int c, int u, int v) { return data_[index(c, u, v)]; }
    double operator()(int c, int u, int v) const { return data_[index(c, u, v)]; }

    /// Channel vector at one pixel.
    Eigen::VectorXd pixel(int u, int v) const {
        Eigen::VectorXd out(channels_);
        for (int c = 0; c < channels_; ++c) out(c) = (*this)(c, u, v);
        return out;
    }
    void set_pixel(int u, int v, const Eigen::VectorXd& x) {
        for (int c = 0; c < channels_; ++c) (*this)(c, u, v) = x(c);
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool same_shape(const Tensor3& o) const noexcept {
        return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
    }
    friend bool operator==(const Tensor3&, const Tensor3&) = default;

private:
    std::size_t index(int c, int u, int v) const noexcept {
        return (static_cast<std::size_t>(c) * height_ + u) * width_ + v;
    }

    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

}  // namespace xgs
