#include "xgs/camera.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "xgs/error.hpp"

namespace xgs {

CameraPose CameraPose::from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& t) {
    CameraPose pose;
    pose.rotation = q.normalized().toRotationMatrix();
    pose.translation = t;
    return pose;
}

CameraPose CameraPose::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                               const Eigen::Vector3d& up) {
    const Eigen::Vector3d z = (target - eye).normalized();
    Eigen::Vector3d x = z.cross(up);
    if (x.norm() < 1e-12) x = z.unitOrthogonal();
    x.normalize();
    const Eigen::Vector3d y = z.cross(x);
    CameraPose pose;
    pose.rotation.row(0) = x.transpose();
    pose.rotation.row(1) = y.transpose();
    pose.rotation.row(2) = z.transpose();
    pose.translation = -pose.rotation * eye;
    return pose;
}

CameraPose CameraPose::inverse() const {
    CameraPose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -inv.rotation * translation;
    return inv;
}

CameraPose CameraPose::operator*(const CameraPose& rhs) const {
    CameraPose out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
}

void CameraPose::validate() const {
    const double ortho = (rotation * rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-6 || std::abs(rotation.determinant() - 1.0) > 1e-6) {
        throw InvalidInput("CameraPose: rotation is not a proper orthonormal matrix");
    }
    if (!translation.allFinite()) throw InvalidInput("CameraPose: non-finite translation");
}

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidInput("CameraIntrinsics: focal lengths must be positive");
    if (!(near > 0.0) || !(near < far)) throw InvalidInput("CameraIntrinsics: require 0 < near < far");
    if (width < 1 || height < 1) throw InvalidInput("CameraIntrinsics: empty image");
}

CameraIntrinsics CameraIntrinsics::resized(int new_width, int new_height) const {
    const double sx = static_cast<double>(new_width) / width;
    const double sy = static_cast<double>(new_height) / height;
    CameraIntrinsics out = *this;
    out.fx = fx * sx;
    out.fy = fy * sy;
    out.cx = (cx + 0.5) * sx - 0.5;
    out.cy = (cy + 0.5) * sy - 0.5;
    out.width = new_width;
    out.height = new_height;
    return out;
}

Eigen::Vector2d project_point(const Eigen::Vector3d& p, const CameraIntrinsics& k) {
    return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Vector3d& p, const CameraIntrinsics& k) {
    const double iz = 1.0 / p.z();
    Eigen::Matrix<double, 2, 3> J;
    J << k.fx * iz, 0.0, -k.fx * p.x() * iz * iz,
         0.0, k.fy * iz, -k.fy * p.y() * iz * iz;
    return J;
}

Eigen::Matrix2d floor_eigenvalues(const Eigen::Matrix2d& m, double floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(m);
    const Eigen::Vector2d lambda = eig.eigenvalues();
    if (lambda.minCoeff() >= floor) return m;
    const Eigen::Vector2d clamped = lambda.cwiseMax(floor);
    const Eigen::Matrix2d V = eig.eigenvectors();
    Eigen::Matrix2d out = V * clamped.asDiagonal() * V.transpose();
    out(0, 1) = out(1, 0) = 0.5 * (out(0, 1) + out(1, 0));
    return out;
}

Eigen::Matrix2d project_covariance(const Eigen::Matrix3d& sigma, const CameraPose& pose,
                                   const CameraIntrinsics& intrinsics, const Eigen::Vector3d& mu,
                                   double floor) {
    const Eigen::Vector3d p = pose.transform(mu);
    if (!(p.z() > intrinsics.near)) {
        throw BehindCamera("project_covariance: Gaussian center is not in front of the near plane");
    }
    const Eigen::Matrix<double, 2, 3> JW = projection_jacobian(p, intrinsics) * pose.rotation;
    Eigen::Matrix2d cov = JW * sigma * JW.transpose();
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
    return floor_eigenvalues(cov, floor);
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega) {
    const double angle = omega.norm();
    if (angle < 1e-15) return Eigen::Matrix3d::Identity();
    return Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
}

Eigen::Vector3d so3_log(const Eigen::Matrix3d& rotation) {
    const Eigen::AngleAxisd aa(rotation);
    return aa.angle() * aa.axis();
}

CameraPose apply_twist(const Twist& xi, const CameraPose& pose) {
    const Eigen::Matrix3d dR = so3_exp(xi.head<3>());
    CameraPose out;
    out.rotation = dR * pose.rotation;
    out.translation = dR * pose.translation + xi.tail<3>();
    return out;
}

Twist relative_twist(const CameraPose& from, const CameraPose& to) {
    const Eigen::Matrix3d dR = to.rotation * from.rotation.transpose();
    Twist xi;
    xi.head<3>() = so3_log(dR);
    xi.tail<3>() = to.translation - dR * from.translation;
    return xi;
}

double rotation_distance(const CameraPose& a, const CameraPose& b) {
    const Eigen::Matrix3d d = a.rotation * b.rotation.transpose();
    const double c = std::clamp((d.trace() - 1.0) * 0.5, -1.0, 1.0);
    return std::acos(c);
}

double translation_distance(const CameraPose& a, const CameraPose& b) {
    return (a.center() - b.center()).norm();
}

}  // namespace xgs
