#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace xgs {

/// Bounded FIFO of recent D-vectors, stored as a ring in one matrix so that
/// codebook snapshots copy cheaply.
class Reservoir {
public:
    Reservoir(int dim = 0, int capacity = 4096);

    int dim() const noexcept { return static_cast<int>(rows_.cols()); }
    int capacity() const noexcept { return static_cast<int>(rows_.rows()); }
    int size() const noexcept { return count_; }
    bool empty() const noexcept { return count_ == 0; }

    /// Appends x, evicting the oldest entry at capacity.
    void push(const Eigen::VectorXd& x);
    /// i-th entry counted from the oldest.
    Eigen::VectorXd at(int i) const;
    /// Uniform draw without removal.
    Eigen::VectorXd sample(std::mt19937_64& rng) const;
    void clear() noexcept { head_ = 0; count_ = 0; }

private:
    Eigen::MatrixXd rows_;
    int head_ = 0;  // next write slot
    int count_ = 0;
};

/// K x D shared semantic atoms plus the EMA statistics that produce them.
///
/// Invariant: after refresh() (and every public update in online_vq),
/// E.row(k) == M.row(k) / (N(k) + epsilon).
struct Codebook {
    Eigen::MatrixXd E;  // K x D codewords
    Eigen::VectorXd N;  // EMA counts
    Eigen::MatrixXd M;  // EMA sums, K x D
    double lambda = 0.96;
    double epsilon = 1e-5;
    Reservoir reservoir;

    Codebook() = default;
    Codebook(int K, int D, double lambda = 0.96, double epsilon = 1e-5,
             int reservoir_capacity = 4096);

    int K() const noexcept { return static_cast<int>(E.rows()); }
    int D() const noexcept { return static_cast<int>(E.cols()); }

    /// e_k <- M_k / (N_k + epsilon) for all k.
    void refresh();
    /// Seeds codeword k with x while keeping the EMA identity: M_k = x (N_k + eps).
    void seed_codeword(int k, const Eigen::VectorXd& x);
    /// Largest |e_k - M_k/(N_k+eps)| over all entries.
    double consistency_error() const;
};

/// f = E^T softmax(logits). Throws InvalidInput when logits.size() != K.
Eigen::VectorXd decode_feature(const Eigen::VectorXd& logits, const Codebook& codebook);

}  // namespace xgs
