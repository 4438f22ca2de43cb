#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace xgs {

/// One anisotropic 3D Gaussian with base RGB appearance and codebook logits.
struct Gaussian {
    Eigen::Vector3d mu = Eigen::Vector3d::Zero();
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Eigen::Vector3d scale = Eigen::Vector3d::Ones();
    double opacity = 1.0;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    Eigen::VectorXd logits;
};

/// Ordered collection of Gaussians sharing one codebook size K.
///
/// Element mutation through operator[] is non-structural; add/remove bump
/// the generation counter so snapshot readers can detect topology changes.
class GaussianField {
public:
    explicit GaussianField(int K = 1);

    int K() const noexcept { return K_; }
    std::size_t size() const noexcept { return gaussians_.size(); }
    bool empty() const noexcept { return gaussians_.empty(); }
    std::uint64_t generation() const noexcept { return generation_; }

    const Gaussian& operator[](std::size_t i) const { return gaussians_[i]; }
    Gaussian& operator[](std::size_t i) { return gaussians_[i]; }
    std::span<const Gaussian> gaussians() const noexcept { return gaussians_; }
    std::span<Gaussian> gaussians() noexcept { return gaussians_; }

    /// Appends `g`; an empty logit vector is replaced by zeros of length K.
    void add(Gaussian g);

    /// Removes every Gaussian matching `pred`, returns how many were removed.
    std::size_t remove_if(const std::function<bool(const Gaussian&)>& pred);

    /// Re-imposes the per-Gaussian invariants after an optimizer step:
    /// unit quaternions, positive scales, opacity in [0,1].
    void renormalize();

private:
    int K_;
    std::vector<Gaussian> gaussians_;
    std::uint64_t generation_ = 0;
};

inline constexpr double kQuaternionTolerance = 1e-6;
inline constexpr double kMinScale = 1e-6;

/// Sigma = R S S^T R^T. Throws InvalidInput for a non-unit quaternion or a
/// non-positive scale component.
Eigen::Matrix3d covariance_from_parts(const Eigen::Quaterniond& rotation,
                                      const Eigen::Vector3d& scale);

/// Max-subtracted softmax. Throws InvalidInput on NaN/inf.
Eigen::VectorXd mixture_weights(const Eigen::VectorXd& logits);

}  // namespace xgs
