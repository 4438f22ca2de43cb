#include "xgs/codebook.hpp"

#include <algorithm>
#include <string>

#include "xgs/error.hpp"
#include "xgs/gaussian.hpp"

namespace xgs {

Reservoir::Reservoir(int dim, int capacity) : rows_(Eigen::MatrixXd::Zero(std::max(capacity, 0), dim)) {
    if (capacity < 1 && dim > 0) throw InvalidInput("Reservoir: capacity must be positive");
}

void Reservoir::push(const Eigen::VectorXd& x) {
    if (x.size() != dim()) throw InvalidInput("Reservoir::push: dimension mismatch");
    rows_.row(head_) = x.transpose();
    head_ = (head_ + 1) % capacity();
    count_ = std::min(count_ + 1, capacity());
}

Eigen::VectorXd Reservoir::at(int i) const {
    const int oldest = (head_ - count_ + capacity()) % capacity();
    return rows_.row((oldest + i) % capacity()).transpose();
}

Eigen::VectorXd Reservoir::sample(std::mt19937_64& rng) const {
    if (count_ == 0) throw InvalidState("Reservoir::sample: reservoir is empty");
    std::uniform_int_distribution<int> pick(0, count_ - 1);
    return at(pick(rng));
}

Codebook::Codebook(int K, int D, double lambda_, double epsilon_, int reservoir_capacity)
    : E(Eigen::MatrixXd::Zero(K, D)),
      N(Eigen::VectorXd::Zero(K)),
      M(Eigen::MatrixXd::Zero(K, D)),
      lambda(lambda_),
      epsilon(epsilon_),
      reservoir(D, reservoir_capacity) {
    if (K < 1 || D < 1) throw InvalidInput("Codebook: K and D must be >= 1");
    if (!(lambda_ >= 0.0 && lambda_ < 1.0)) throw InvalidInput("Codebook: lambda must lie in [0,1)");
    if (!(epsilon_ > 0.0)) throw InvalidInput("Codebook: epsilon must be positive");
}

void Codebook::refresh() {
    for (int k = 0; k < K(); ++k) E.row(k) = M.row(k) / (N(k) + epsilon);
}

void Codebook::seed_codeword(int k, const Eigen::VectorXd& x) {
    if (x.size() != D()) throw InvalidInput("Codebook::seed_codeword: dimension mismatch");
    M.row(k) = x.transpose() * (N(k) + epsilon);
    E.row(k) = M.row(k) / (N(k) + epsilon);
}

double Codebook::consistency_error() const {
    double worst = 0.0;
    for (int k = 0; k < K(); ++k) {
        worst = std::max(worst, (E.row(k) - M.row(k) / (N(k) + epsilon)).cwiseAbs().maxCoeff());
    }
    return worst;
}

Eigen::VectorXd decode_feature(const Eigen::VectorXd& logits, const Codebook& codebook) {
    if (logits.size() != codebook.K()) {
        throw InvalidInput("decode_feature: logits length " + std::to_string(logits.size()) +
                           " != K " + std::to_string(codebook.K()));
    }
    return codebook.E.transpose() * mixture_weights(logits);
}

}  // namespace xgs
