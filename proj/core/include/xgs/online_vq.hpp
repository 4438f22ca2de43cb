#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xgs/codebook.hpp"

namespace xgs {

struct VqConfig {
    int K = 256;
    double lambda = 0.96;
    double tau_warm = 0.7;
    double gamma = 0.5;        // confidence threshold for warm start
    double delta_dead = 1e-2;  // dead-code mass threshold
    double epsilon = 1e-5;
    int reservoir_capacity = 4096;
    bool kmeanspp_seeding = false;
    /// Also drop low-confidence samples from the online EMA statistics.
    bool online_confidence_mask = false;
    std::uint64_t seed = 0;

    void validate() const;
    Codebook make_codebook(int D) const;
};

/// Per-batch hard-assignment statistics (counts and feature sums per codeword).
struct VqBatchStats {
    Eigen::VectorXi counts;
    Eigen::MatrixXd sums;

    int assigned() const { return counts.sum(); }
};

/// Nearest codeword by Euclidean distance, ties to the lowest index.
int assign(const Eigen::VectorXd& x, const Codebook& codebook);

/// Counts/sums of `batch` under hard nearest-codeword assignment. When
/// `mask` is non-empty, entries with mask[n] == false are skipped.
VqBatchStats accumulate(std::span<const Eigen::VectorXd> batch, const Codebook& codebook,
                        std::span<const bool> mask = {});

/// N <- lambda N + (1-lambda) c; M <- lambda M + (1-lambda) s; E <- M / (N + eps).
Codebook ema_step(const Codebook& codebook, const VqBatchStats& stats);

/// softmax_k(-|x - e_k| / tau).
Eigen::VectorXd confidence_scores(const Eigen::VectorXd& x, const Codebook& codebook, double tau);

/// Seeds codewords from the first K distinct samples (or k-means++ when
/// requested). Codewords beyond the number of distinct samples keep their
/// value. Returns the number of codewords seeded.
int seed_codewords(std::span<const Eigen::VectorXd> buffer, Codebook& codebook, const VqConfig& config);

struct WarmStartResult {
    Codebook codebook;
    int accepted = 0;         // samples passing the confidence filter
    bool degenerate = false;  // nothing passed; codebook left at its seed
};

/// Confidence-filtered initialisation of N and M from `buffer` against the
/// seeded codewords. Codewords that receive no confident sample keep their
/// seeded statistics.
WarmStartResult warm_start(std::span<const Eigen::VectorXd> buffer, const Codebook& seeded,
                           const VqConfig& config);

struct ReviveResult {
    Codebook codebook;
    std::vector<int> revived;
    bool skipped = false;  // dead codes existed but the reservoir was empty
};

/// Reinitialises every codeword with N_k < delta from a uniform reservoir draw:
/// M_k <- x, N_k <- 1 + eps.
ReviveResult revive_dead_codes(const Codebook& codebook, const VqConfig& config, std::mt19937_64& rng);

/// Dead-code monitoring rows: step, revived indices, min_N, max_N.
class VqAuditLog {
public:
    void record(std::uint64_t step, const std::vector<int>& revived, const Codebook& codebook);
    std::string to_csv() const;
    std::size_t size() const { return rows_.size(); }

private:
    struct Row {
        std::uint64_t step;
        std::vector<int> revived;
        double min_n;
        double max_n;
    };
    std::vector<Row> rows_;
};

/// Streaming codebook owner: applies warm start on the first batch, then
/// accumulate/ema_step/revive per batch. Single writer; snapshot() returns
/// an immutable copy for concurrent readers.
class OnlineQuantizer {
public:
    OnlineQuantizer(const VqConfig& config, int D);

    /// Feeds one batch of observed features. Returns indices revived this step.
    std::vector<int> observe(std::span<const Eigen::VectorXd> batch);

    const Codebook& codebook() const { return codebook_; }
    Codebook snapshot() const { return codebook_; }
    const VqAuditLog& audit() const { return audit_; }
    bool warm_started() const { return warm_started_; }
    bool warm_start_degenerate() const { return degenerate_; }
    std::uint64_t steps() const { return step_; }

private:
    VqConfig config_;
    Codebook codebook_;
    VqAuditLog audit_;
    std::mt19937_64 rng_;
    std::uint64_t step_ = 0;
    bool warm_started_ = false;
    bool degenerate_ = false;
};

}  // namespace xgs
