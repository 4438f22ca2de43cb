#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace xgs {

/// Rigid world-to-camera transform: x_cam = rotation * x_world + translation.
struct CameraPose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    static CameraPose identity() { return {}; }
    static CameraPose from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& t);
    /// Pose of a camera at `eye` looking at `target`; camera +z points forward, +y down.
    static CameraPose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                              const Eigen::Vector3d& up = Eigen::Vector3d(0, 1, 0));

    Eigen::Vector3d transform(const Eigen::Vector3d& world) const {
        return rotation * world + translation;
    }
    /// Camera center in world coordinates.
    Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
    CameraPose inverse() const;
    CameraPose operator*(const CameraPose& rhs) const;

    /// Throws InvalidInput unless R R^T = I and det R = +1 within 1e-6.
    void validate() const;
};

/// Pinhole intrinsics. Pixel (row u, col v) is centred at image coordinate (x=v, y=u).
struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    double near = 0.01;
    double far = 100.0;

    void validate() const;
    /// Same field of view resampled to a new resolution.
    CameraIntrinsics resized(int new_width, int new_height) const;
};

inline constexpr double kCovarianceFloor = 0.3;

Eigen::Vector2d project_point(const Eigen::Vector3d& p_cam, const CameraIntrinsics& intrinsics);

/// Jacobian of the pinhole projection at a camera-space point.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Vector3d& p_cam,
                                                const CameraIntrinsics& intrinsics);

/// Screen-space covariance J W Sigma W^T J^T with eigenvalues clamped from
/// below at `floor`. Throws BehindCamera when the center is not beyond `near`.
Eigen::Matrix2d project_covariance(const Eigen::Matrix3d& sigma, const CameraPose& pose,
                                   const CameraIntrinsics& intrinsics,
                                   const Eigen::Vector3d& mu, double floor = kCovarianceFloor);

/// Clamp the eigenvalues of a symmetric 2x2 matrix from below.
Eigen::Matrix2d floor_eigenvalues(const Eigen::Matrix2d& m, double floor);

// SE(3) helpers. A twist is (omega, v): axis-angle rotation in radians and a
// translation, applied on the left of a world-to-camera pose:
//   apply_twist(xi, T) = (Exp(omega) R, Exp(omega) t + v)
using Twist = Eigen::Matrix<double, 6, 1>;

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega);
Eigen::Vector3d so3_log(const Eigen::Matrix3d& rotation);
CameraPose apply_twist(const Twist& xi, const CameraPose& pose);
/// The twist xi with apply_twist(xi, from) == to.
Twist relative_twist(const CameraPose& from, const CameraPose& to);

/// Geodesic angle between two rotations, radians.
double rotation_distance(const CameraPose& a, const CameraPose& b);
/// Distance between camera centers.
double translation_distance(const CameraPose& a, const CameraPose& b);

}  // namespace xgs
