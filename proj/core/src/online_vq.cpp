#include "xgs/online_vq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include "xgs/error.hpp"

namespace xgs {

void VqConfig::validate() const {
    if (K < 1) throw InvalidInput("VqConfig: K must be >= 1");
    if (!(lambda >= 0.0 && lambda < 1.0)) throw InvalidInput("VqConfig: lambda must lie in [0,1)");
    if (!(tau_warm > 0.0)) throw InvalidInput("VqConfig: tau_warm must be positive");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidInput("VqConfig: gamma must lie in [0,1]");
    if (!(delta_dead >= 0.0)) throw InvalidInput("VqConfig: delta_dead must be >= 0");
    if (!(epsilon > 0.0)) throw InvalidInput("VqConfig: epsilon must be positive");
    if (reservoir_capacity < 1) throw InvalidInput("VqConfig: reservoir_capacity must be >= 1");
}

Codebook VqConfig::make_codebook(int D) const {
    validate();
    return Codebook(K, D, lambda, epsilon, reservoir_capacity);
}

int assign(const Eigen::VectorXd& x, const Codebook& codebook) {
    if (codebook.K() == 0) throw InvalidState("assign: empty codebook");
    if (x.size() != codebook.D()) throw InvalidInput("assign: feature dimension does not match codebook");
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < codebook.K(); ++k) {
        const double d = (codebook.E.row(k).transpose() - x).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

VqBatchStats accumulate(std::span<const Eigen::VectorXd> batch, const Codebook& codebook,
                        std::span<const bool> mask) {
    if (!mask.empty() && mask.size() != batch.size()) {
        throw InvalidInput("accumulate: mask length does not match batch");
    }
    VqBatchStats s{Eigen::VectorXi::Zero(codebook.K()), Eigen::MatrixXd::Zero(codebook.K(), codebook.D())};
    for (std::size_t n = 0; n < batch.size(); ++n) {
        if (!mask.empty() && !mask[n]) continue;
        const int k = assign(batch[n], codebook);
        s.counts(k) += 1;
        s.sums.row(k) += batch[n].transpose();
    }
    return s;
}

Codebook ema_step(const Codebook& codebook, const VqBatchStats& stats) {
    if (stats.counts.size() != codebook.K() || stats.sums.rows() != codebook.K() ||
        stats.sums.cols() != codebook.D()) {
        throw InvalidInput("ema_step: batch statistics do not match codebook shape");
    }
    Codebook out = codebook;
    const double l = codebook.lambda;
    out.N = l * codebook.N + (1.0 - l) * stats.counts.cast<double>();
    out.M = l * codebook.M + (1.0 - l) * stats.sums;
    out.refresh();
    return out;
}

Eigen::VectorXd confidence_scores(const Eigen::VectorXd& x, const Codebook& codebook, double tau) {
    if (x.size() != codebook.D()) throw InvalidInput("confidence_scores: dimension mismatch");
    Eigen::VectorXd logits(codebook.K());
    for (int k = 0; k < codebook.K(); ++k) logits(k) = -(codebook.E.row(k).transpose() - x).norm() / tau;
    const double mx = logits.maxCoeff();
    Eigen::VectorXd p = (logits.array() - mx).exp().matrix();
    return p / p.sum();
}

namespace {

int seed_first_distinct(std::span<const Eigen::VectorXd> buffer, Codebook& cb) {
    std::vector<const Eigen::VectorXd*> picked;
    for (const auto& x : buffer) {
        if (static_cast<int>(picked.size()) == cb.K()) break;
        const bool seen = std::any_of(picked.begin(), picked.end(), [&](const Eigen::VectorXd* p) { return *p == x; });
        if (!seen) picked.push_back(&x);
    }
    for (std::size_t k = 0; k < picked.size(); ++k) cb.seed_codeword(static_cast<int>(k), *picked[k]);
    return static_cast<int>(picked.size());
}

int seed_kmeanspp(std::span<const Eigen::VectorXd> buffer, Codebook& cb, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const int n = static_cast<int>(buffer.size());
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::uniform_int_distribution<int> first(0, n - 1);
    int chosen = first(rng);
    int seeded = 0;
    for (int k = 0; k < cb.K(); ++k) {
        cb.seed_codeword(k, buffer[chosen]);
        ++seeded;
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], (buffer[i] - buffer[chosen]).squaredNorm());
            total += d2[i];
        }
        if (k + 1 == cb.K() || total <= 0.0) break;
        std::discrete_distribution<int> pick(d2.begin(), d2.end());
        chosen = pick(rng);
    }
    return seeded;
}

}  // namespace

int seed_codewords(std::span<const Eigen::VectorXd> buffer, Codebook& codebook, const VqConfig& config) {
    if (buffer.empty()) return 0;
    for (const auto& x : buffer) {
        if (x.size() != codebook.D()) throw InvalidInput("seed_codewords: dimension mismatch");
    }
    return config.kmeanspp_seeding ? seed_kmeanspp(buffer, codebook, config.seed)
                                   : seed_first_distinct(buffer, codebook);
}

WarmStartResult warm_start(std::span<const Eigen::VectorXd> buffer, const Codebook& seeded,
                           const VqConfig& config) {
    WarmStartResult r{seeded, 0, false};
    const int K = seeded.K();
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(K);
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, seeded.D());
    for (const auto& x : buffer) {
        const Eigen::VectorXd p = confidence_scores(x, seeded, config.tau_warm);
        Eigen::Index k = 0;
        const double pmax = p.maxCoeff(&k);
        if (pmax < config.gamma) continue;
        counts(k) += 1;
        sums.row(k) += x.transpose();
        ++r.accepted;
    }
    if (r.accepted == 0) {
        r.degenerate = true;
        return r;
    }
    for (int k = 0; k < K; ++k) {
        if (counts(k) == 0) continue;
        r.codebook.N(k) = counts(k);
        r.codebook.M.row(k) = sums.row(k);
    }
    r.codebook.refresh();
    return r;
}

ReviveResult revive_dead_codes(const Codebook& codebook, const VqConfig& config, std::mt19937_64& rng) {
    ReviveResult r{codebook, {}, false};
    for (int k = 0; k < codebook.K(); ++k) {
        if (!(codebook.N(k) < config.delta_dead)) continue;
        if (codebook.reservoir.empty()) {
            r.skipped = true;
            return r;
        }
        r.revived.push_back(k);
    }
    for (int k : r.revived) {
        r.codebook.M.row(k) = r.codebook.reservoir.sample(rng).transpose();
        r.codebook.N(k) = 1.0 + codebook.epsilon;
        r.codebook.E.row(k) = r.codebook.M.row(k) / (r.codebook.N(k) + codebook.epsilon);
    }
    return r;
}

void VqAuditLog::record(std::uint64_t step, const std::vector<int>& revived, const Codebook& codebook) {
    rows_.push_back({step, revived, codebook.N.minCoeff(), codebook.N.maxCoeff()});
}

std::string VqAuditLog::to_csv() const {
    std::ostringstream os;
    os.precision(9);
    os << "step,revived_indices,min_N,max_N\n";
    for (const auto& row : rows_) {
        os << row.step << ',';
        for (std::size_t i = 0; i < row.revived.size(); ++i) os << (i ? ";" : "") << row.revived[i];
        os << ',' << row.min_n << ',' << row.max_n << '\n';
    }
    return os.str();
}

OnlineQuantizer::OnlineQuantizer(const VqConfig& config, int D)
    : config_(config), codebook_(config.make_codebook(D)), rng_(config.seed) {}

std::vector<int> OnlineQuantizer::observe(std::span<const Eigen::VectorXd> batch) {
    if (batch.empty()) return {};
    if (!warm_started_) {
        seed_codewords(batch, codebook_, config_);
        WarmStartResult ws = warm_start(batch, codebook_, config_);
        codebook_ = std::move(ws.codebook);
        degenerate_ = ws.degenerate;
        warm_started_ = true;
    }
    std::unique_ptr<bool[]> mask;
    std::span<const bool> mask_view;
    if (config_.online_confidence_mask) {
        mask = std::make_unique<bool[]>(batch.size());
        for (std::size_t n = 0; n < batch.size(); ++n) {
            mask[n] = confidence_scores(batch[n], codebook_, config_.tau_warm).maxCoeff() >= config_.gamma;
        }
        mask_view = std::span<const bool>(mask.get(), batch.size());
    }
    codebook_ = ema_step(codebook_, accumulate(batch, codebook_, mask_view));
    for (const auto& x : batch) codebook_.reservoir.push(x);
    ReviveResult rv = revive_dead_codes(codebook_, config_, rng_);
    codebook_ = std::move(rv.codebook);
    audit_.record(step_, rv.revived, codebook_);
    ++step_;
    return rv.revived;
}

}  // namespace xgs
