#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "xgs/camera.hpp"
#include "xgs/codebook.hpp"
#include "xgs/error.hpp"
#include "xgs/gaussian.hpp"

using namespace xgs;

namespace {

Eigen::Quaterniond random_quaternion(std::mt19937_64& rng) {
    std::normal_distribution<double> N;
    return Eigen::Quaterniond(N(rng), N(rng), N(rng), N(rng)).normalized();
}

}  // namespace

TEST_CASE("covariance_from_parts examples") {
    const Eigen::Matrix3d I = covariance_from_parts(Eigen::Quaterniond::Identity(), Eigen::Vector3d(1, 1, 1));
    CHECK(I.isApprox(Eigen::Matrix3d::Identity(), 1e-12));

    const Eigen::Matrix3d s = covariance_from_parts(Eigen::Quaterniond::Identity(), Eigen::Vector3d(2, 1, 1));
    CHECK(s.isApprox(Eigen::Vector3d(4, 1, 1).asDiagonal().toDenseMatrix(), 1e-12));

    const Eigen::Quaterniond qz(Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitZ()));
    const Eigen::Matrix3d r = covariance_from_parts(qz, Eigen::Vector3d(2, 1, 1));
    const Eigen::Matrix3d R = oracle::rotation_from_quaternion(qz.w(), qz.x(), qz.y(), qz.z());
    const Eigen::Matrix3d expected = R * Eigen::Vector3d(4, 1, 1).asDiagonal() * R.transpose();
    CHECK((r - expected).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r - Eigen::Vector3d(1, 4, 1).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("covariance_from_parts rejects bad input") {
    CHECK_THROWS_AS(covariance_from_parts(Eigen::Quaterniond(2, 0, 0, 0), Eigen::Vector3d(1, 1, 1)), InvalidInput);
    CHECK_THROWS_AS(covariance_from_parts(Eigen::Quaterniond::Identity(), Eigen::Vector3d(1, 0, 1)), InvalidInput);
}

TEST_CASE("covariance eigenvalues are the squared scales") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(0.1, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Vector3d s(U(rng), U(rng), U(rng));
        const Eigen::Matrix3d sigma = covariance_from_parts(random_quaternion(rng), s);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(sigma);
        Eigen::Vector3d sq = s.cwiseProduct(s);
        std::sort(sq.data(), sq.data() + 3);
        CHECK((eig.eigenvalues() - sq).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("project_covariance examples") {
    CameraIntrinsics k;
    k.fx = k.fy = 2.0;
    k.width = k.height = 4;
    // fx = fy = z makes J the identity on the optical axis.
    const Eigen::Matrix2d a =
        project_covariance(Eigen::Matrix3d::Identity(), CameraPose::identity(), k, Eigen::Vector3d(0, 0, 2));
    CHECK(a.isApprox(Eigen::Matrix2d::Identity(), 1e-12));

    k.fx = k.fy = 1.0;
    const Eigen::Matrix2d b = project_covariance(Eigen::Vector3d(4, 1, 1).asDiagonal(), CameraPose::identity(), k,
                                                 Eigen::Vector3d(0, 0, 1));
    CHECK(b.isApprox(Eigen::Vector2d(4, 1).asDiagonal().toDenseMatrix(), 1e-12));

    CHECK_THROWS_AS(project_covariance(Eigen::Matrix3d::Identity(), CameraPose::identity(), k,
                                       Eigen::Vector3d(0, 0, -1)),
                    BehindCamera);
}

TEST_CASE("project_covariance is symmetric with floored eigenvalues") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    CameraIntrinsics k;
    k.fx = k.fy = 50.0;
    k.width = k.height = 64;
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Matrix3d sigma = covariance_from_parts(
            random_quaternion(rng), Eigen::Vector3d(0.001 + std::abs(U(rng)), 0.001 + std::abs(U(rng)), 0.01));
        CameraPose pose = CameraPose::from_quaternion(random_quaternion(rng), Eigen::Vector3d(U(rng), U(rng), 5.0));
        const Eigen::Vector3d mu = pose.inverse().transform(Eigen::Vector3d(U(rng), U(rng), 3.0 + U(rng)));
        const Eigen::Matrix2d c = project_covariance(sigma, pose, k, mu);
        CHECK(std::abs(c(0, 1) - c(1, 0)) < 1e-9);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(c);
        CHECK(eig.eigenvalues().minCoeff() >= kCovarianceFloor - 1e-9);
        // The floor only ever raises eigenvalues; the oracle agrees.
        const Eigen::Vector3d p = pose.transform(mu);
        Eigen::Matrix<double, 2, 3> J;
        J << k.fx / p.z(), 0, -k.fx * p.x() / (p.z() * p.z()), 0, k.fy / p.z(), -k.fy * p.y() / (p.z() * p.z());
        const Eigen::Matrix2d raw = J * pose.rotation * sigma * pose.rotation.transpose() * J.transpose();
        CHECK((c - oracle::floor_2x2(raw, kCovarianceFloor)).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("mixture_weights examples and stability") {
    const Eigen::VectorXd u = mixture_weights(Eigen::VectorXd::Zero(4));
    CHECK((u.array() - 0.25).abs().maxCoeff() < 1e-12);

    Eigen::VectorXd z(2);
    z << std::log(2.0), 0.0;
    const Eigen::VectorXd w = mixture_weights(z);
    CHECK(w(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(w(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    Eigen::VectorXd big(3);
    big << 1000.0, 0.0, 0.0;
    const Eigen::VectorXd b = mixture_weights(big);
    CHECK(b.allFinite());
    CHECK(b(0) == doctest::Approx(1.0));
    CHECK(b(1) < 1e-300);

    Eigen::VectorXd bad(2);
    bad << 0.0, std::nan("");
    CHECK_THROWS_AS(mixture_weights(bad), InvalidInput);
    bad << 0.0, INFINITY;
    CHECK_THROWS_AS(mixture_weights(bad), InvalidInput);
}

TEST_CASE("mixture_weights is shift invariant and normalised") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> N(0.0, 5.0);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd z(16);
        for (int k = 0; k < 16; ++k) z(k) = N(rng);
        const Eigen::VectorXd w = mixture_weights(z);
        CHECK(std::abs(w.sum() - 1.0) < 1e-9);
        CHECK(w.minCoeff() >= 0.0);
        const Eigen::VectorXd shifted = mixture_weights((z.array() + N(rng)).matrix());
        CHECK((w - shifted).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((w - oracle::softmax(z)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("decode_feature examples") {
    Codebook cb(3, 2);
    cb.M << 1, 2, 3, 4, 5, 6;
    cb.N.setOnes();
    cb.refresh();
    Eigen::VectorXd z = Eigen::VectorXd::Zero(3);
    z(1) = 40.0;
    CHECK((decode_feature(z, cb) - cb.E.row(1).transpose()).cwiseAbs().maxCoeff() < 1e-12);

    Codebook two(2, 2);
    two.E << 1, 0, 0, 1;
    const Eigen::VectorXd mean = decode_feature(Eigen::VectorXd::Zero(2), two);
    CHECK(mean.isApprox(Eigen::Vector2d(0.5, 0.5), 1e-12));

    CHECK_THROWS_AS(decode_feature(Eigen::VectorXd::Zero(4), cb), InvalidInput);
}

TEST_CASE("decode_feature matches a dense loop and is linear in the codebook") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> N;
    for (int trial = 0; trial < 50; ++trial) {
        Codebook a(8, 5), b(8, 5);
        for (int k = 0; k < 8; ++k) {
            for (int d = 0; d < 5; ++d) {
                a.E(k, d) = N(rng);
                b.E(k, d) = N(rng);
            }
        }
        Eigen::VectorXd z(8);
        for (int k = 0; k < 8; ++k) z(k) = 3.0 * N(rng);
        const Eigen::VectorXd w = oracle::softmax(z);
        Eigen::VectorXd expected = Eigen::VectorXd::Zero(5);
        for (int k = 0; k < 8; ++k) {
            for (int d = 0; d < 5; ++d) expected(d) += w(k) * a.E(k, d);
        }
        CHECK((decode_feature(z, a) - expected).cwiseAbs().maxCoeff() < 1e-9);

        const double alpha = N(rng), beta = N(rng);
        Codebook mix = a;
        mix.E = alpha * a.E + beta * b.E;
        const Eigen::VectorXd lhs = decode_feature(z, mix);
        const Eigen::VectorXd rhs = alpha * decode_feature(z, a) + beta * decode_feature(z, b);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("codebook keeps its EMA identity") {
    Codebook cb(4, 3, 0.9, 1e-5, 8);
    cb.N << 0, 1, 2, 3;
    cb.M.setRandom();
    cb.refresh();
    CHECK(cb.consistency_error() < 1e-12);
    cb.seed_codeword(2, Eigen::Vector3d(1, 2, 3));
    CHECK(cb.consistency_error() < 1e-12);
    CHECK(cb.E.row(2).transpose().isApprox(Eigen::Vector3d(1, 2, 3), 1e-12));
    CHECK_THROWS_AS(Codebook(0, 3), InvalidInput);
    CHECK_THROWS_AS(Codebook(2, 3, 1.0), InvalidInput);
}

TEST_CASE("reservoir is a bounded FIFO") {
    Reservoir r(1, 3);
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(r.sample(rng), InvalidState);
    for (int i = 0; i < 5; ++i) r.push(Eigen::VectorXd::Constant(1, i));
    CHECK(r.size() == 3);
    CHECK(r.at(0)(0) == 2.0);
    CHECK(r.at(2)(0) == 4.0);
    for (int i = 0; i < 20; ++i) {
        const double x = r.sample(rng)(0);
        CHECK(x >= 2.0);
        CHECK(x <= 4.0);
    }
}

TEST_CASE("field generation and invariants") {
    GaussianField f(3);
    CHECK(f.generation() == 0);
    Gaussian g;
    f.add(g);
    CHECK(f.generation() == 1);
    CHECK(f[0].logits.size() == 3);
    g.logits = Eigen::VectorXd::Zero(2);
    CHECK_THROWS_AS(f.add(g), InvalidInput);
    CHECK(f.generation() == 1);

    f[0].rotation = Eigen::Quaterniond(2, 0, 0, 0);
    f[0].scale = Eigen::Vector3d(-1, 0.5, 0);
    f[0].opacity = 1.5;
    f.renormalize();
    CHECK(std::abs(f[0].rotation.norm() - 1.0) < 1e-12);
    CHECK(f[0].scale.minCoeff() > 0.0);
    CHECK(f[0].opacity == 1.0);

    CHECK(f.remove_if([](const Gaussian&) { return false; }) == 0);
    CHECK(f.generation() == 1);
    CHECK(f.remove_if([](const Gaussian&) { return true; }) == 1);
    CHECK(f.generation() == 2);
}

TEST_CASE("pose helpers") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> N(0.0, 0.3);
    for (int trial = 0; trial < 50; ++trial) {
        const CameraPose a = CameraPose::from_quaternion(random_quaternion(rng), Eigen::Vector3d(N(rng), N(rng), N(rng)));
        Twist xi;
        for (int i = 0; i < 6; ++i) xi(i) = N(rng);
        const CameraPose b = apply_twist(xi, a);
        CHECK_NOTHROW(b.validate());
        const Twist back = relative_twist(a, b);
        CHECK((back - xi).cwiseAbs().maxCoeff() < 1e-9);
        const CameraPose id = a * a.inverse();
        CHECK((id.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(id.translation.norm() < 1e-12);
    }
    const CameraPose look = CameraPose::look_at(Eigen::Vector3d(0, 0, -3), Eigen::Vector3d::Zero());
    CHECK(look.transform(Eigen::Vector3d::Zero()).isApprox(Eigen::Vector3d(0, 0, 3), 1e-12));
    CHECK(look.center().isApprox(Eigen::Vector3d(0, 0, -3), 1e-12));
    CHECK(std::abs(look.rotation.determinant() - 1.0) < 1e-12);

    CameraPose bad;
    bad.rotation(0, 0) = 2.0;
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("intrinsics validation") {
    CameraIntrinsics k;
    CHECK_NOTHROW(k.validate());
    k.near = 0.0;
    CHECK_THROWS_AS(k.validate(), InvalidInput);
    k.near = 1.0;
    k.far = 0.5;
    CHECK_THROWS_AS(k.validate(), InvalidInput);
}
