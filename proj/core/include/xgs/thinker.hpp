#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xgs/codebook.hpp"
#include "xgs/gaussian.hpp"
#include "xgs/tensor.hpp"

namespace xgs {

/// Deterministic stand-in for a text encoder. Prompts hash to seeded unit
/// vectors; "region_<r>" maps to row r of the registered region table and
/// the four generic negative phrases get fixed vectors near the shared
/// direction.
class TextEncoder {
public:
    explicit TextEncoder(int dim, std::uint64_t seed = 0);

    /// Registers the region table (R x D) and the shared direction that
    /// generic phrases are built from.
    void set_regions(const Eigen::MatrixXd& phi, const Eigen::VectorXd& generic);

    int dim() const noexcept { return dim_; }
    Eigen::VectorXd encode(const std::string& prompt) const;

    static const std::vector<std::string>& negative_phrases();

private:
    int dim_;
    std::uint64_t seed_;
    Eigen::MatrixXd phi_;
    Eigen::VectorXd generic_;
};

struct TextQuery {
    Eigen::VectorXd positive;
    std::vector<Eigen::VectorXd> negatives;
    double tau = 10.0;
    double delta = 0.5;

    /// Throws InvalidInput for empty negatives, non-unit embeddings,
    /// mismatched dimensions or delta outside [0,1).
    void validate() const;
};

/// Positive prompt plus the encoder's default negatives.
TextQuery make_query(const TextEncoder& encoder, const std::string& prompt, double delta = 0.5, double tau = 10.0);

inline constexpr double kNormalizeEpsilon = 1e-12;

/// min_n softmax([tau g.t+, tau g.t_n])_0 for a unit-normalized feature g.
double relevance_score(const Eigen::VectorXd& feature, const TextQuery& query);

std::vector<double> relevance_per_gaussian(const GaussianField& field, const Codebook& codebook,
                                           const TextQuery& query);

/// Per-level K_l x H_s x W_s blended codeword weights and codebooks; the
/// result is the per-pixel max over levels, as a 1 x H_s x W_s tensor.
Tensor3 relevance_per_pixel(const std::vector<Tensor3>& weights, const std::vector<Codebook>& codebooks,
                            const TextQuery& query);

struct RelevanceResult {
    std::vector<double> scores;
    std::vector<bool> mask;
    bool fallback_used = false;

    std::size_t mask_count() const;
};

/// m_i = [r_i > delta]; with no survivor keeps the max(1, ceil(frac N))
/// best scores, ties to the lowest index.
RelevanceResult mask_gaussians(const std::vector<double>& scores, double delta, double fallback_frac = 0.01);

/// -sum p ln p of the mixture weights, 0 ln 0 = 0.
double semantic_entropy(const Eigen::VectorXd& logits);

struct TokenSample {
    std::vector<int> indices;
    std::vector<double> entropies;
    std::vector<Eigen::VectorXd> features;
    bool clamped = false;  // M exceeded the field size
};

/// The M highest-entropy Gaussians, ties to the lower index. Throws
/// InvalidInput for M < 1.
TokenSample sample_tokens(const GaussianField& field, const Codebook& codebook, int M);

}  // namespace xgs
