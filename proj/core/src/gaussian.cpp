#include "xgs/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xgs/error.hpp"

namespace xgs {

GaussianField::GaussianField(int K) : K_(K) {
    if (K < 1) throw InvalidInput("GaussianField: K must be >= 1");
}

void GaussianField::add(Gaussian g) {
    if (g.logits.size() == 0) g.logits = Eigen::VectorXd::Zero(K_);
    if (g.logits.size() != K_) {
        throw InvalidInput("GaussianField::add: logits length " + std::to_string(g.logits.size()) +
                           " != K " + std::to_string(K_));
    }
    gaussians_.push_back(std::move(g));
    ++generation_;
}

std::size_t GaussianField::remove_if(const std::function<bool(const Gaussian&)>& pred) {
    auto it = std::remove_if(gaussians_.begin(), gaussians_.end(), pred);
    const auto removed = static_cast<std::size_t>(std::distance(it, gaussians_.end()));
    gaussians_.erase(it, gaussians_.end());
    if (removed > 0) ++generation_;
    return removed;
}

void GaussianField::renormalize() {
    for (auto& g : gaussians_) {
        const double n = g.rotation.norm();
        if (n > 0.0) {
            g.rotation.coeffs() /= n;
        } else {
            g.rotation = Eigen::Quaterniond::Identity();
        }
        g.scale = g.scale.cwiseMax(kMinScale);
        g.opacity = std::clamp(g.opacity, 0.0, 1.0);
    }
}

Eigen::Matrix3d covariance_from_parts(const Eigen::Quaterniond& rotation,
                                      const Eigen::Vector3d& scale) {
    if (std::abs(rotation.norm() - 1.0) > kQuaternionTolerance) {
        throw InvalidInput("covariance_from_parts: quaternion is not unit-norm");
    }
    if ((scale.array() <= 0.0).any() || !scale.allFinite()) {
        throw InvalidInput("covariance_from_parts: scale must be strictly positive");
    }
    const Eigen::Matrix3d R = rotation.toRotationMatrix();
    const Eigen::Matrix3d RS = R * scale.asDiagonal();
    return RS * RS.transpose();
}

Eigen::VectorXd mixture_weights(const Eigen::VectorXd& logits) {
    if (logits.size() == 0) throw InvalidInput("mixture_weights: empty logits");
    if (!logits.allFinite()) throw InvalidInput("mixture_weights: non-finite logits");
    const double peak = logits.maxCoeff();
    Eigen::VectorXd w = (logits.array() - peak).exp();
    w /= w.sum();
    return w;
}

}  // namespace xgs
