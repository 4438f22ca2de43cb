#include "xgs/thinker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "xgs/error.hpp"

namespace xgs {

namespace {

std::uint64_t fnv1a(const std::string& s, std::uint64_t seed) {
    std::uint64_t h = 1469598103934665603ULL ^ seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

Eigen::VectorXd hashed_unit(const std::string& s, std::uint64_t seed, int dim) {
    std::mt19937_64 rng(fnv1a(s, seed));
    std::normal_distribution<double> normal;
    Eigen::VectorXd v(dim);
    do {
        for (int i = 0; i < dim; ++i) v(i) = normal(rng);
    } while (v.norm() < 1e-9);
    return v.normalized();
}

Eigen::VectorXd safe_normalized(const Eigen::VectorXd& v) { return v / std::max(v.norm(), kNormalizeEpsilon); }

}  // namespace

TextEncoder::TextEncoder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim < 1) throw InvalidInput("TextEncoder: dim must be >= 1");
}

void TextEncoder::set_regions(const Eigen::MatrixXd& phi, const Eigen::VectorXd& generic) {
    if (phi.cols() != dim_ || generic.size() != dim_) throw InvalidInput("TextEncoder: dimension mismatch");
    phi_ = phi;
    generic_ = generic;
}

const std::vector<std::string>& TextEncoder::negative_phrases() {
    static const std::vector<std::string> phrases{"object", "things", "stuff", "texture"};
    return phrases;
}

Eigen::VectorXd TextEncoder::encode(const std::string& prompt) const {
    const auto& neg = negative_phrases();
    if (std::find(neg.begin(), neg.end(), prompt) != neg.end()) {
        const Eigen::VectorXd h = hashed_unit(prompt, seed_, dim_);
        if (generic_.size() == dim_) return safe_normalized(generic_ + 0.3 * h);
        return h;
    }
    if (prompt.rfind("region_", 0) == 0 && phi_.rows() > 0) {
        const std::string tail = prompt.substr(7);
        if (!tail.empty() && std::all_of(tail.begin(), tail.end(), [](char c) { return c >= '0' && c <= '9'; }) &&
            tail.size() < 9) {
            const int r = std::stoi(tail);
            if (r < phi_.rows()) return safe_normalized(phi_.row(r).transpose());
        }
    }
    return hashed_unit(prompt, seed_, dim_);
}

void TextQuery::validate() const {
    auto unit = [](const Eigen::VectorXd& v) { return std::abs(v.norm() - 1.0) <= 1e-6; };
    if (negatives.empty()) throw InvalidInput("TextQuery: at least one negative is required");
    if (positive.size() == 0 || !unit(positive)) throw InvalidInput("TextQuery: positive must be unit-norm");
    for (const auto& n : negatives) {
        if (n.size() != positive.size()) throw InvalidInput("TextQuery: negative dimension mismatch");
        if (!unit(n)) throw InvalidInput("TextQuery: negatives must be unit-norm");
    }
    if (!(tau > 0.0)) throw InvalidInput("TextQuery: tau must be positive");
    if (!(delta >= 0.0 && delta < 1.0)) throw InvalidInput("TextQuery: delta must lie in [0,1)");
}

TextQuery make_query(const TextEncoder& encoder, const std::string& prompt, double delta, double tau) {
    TextQuery q;
    q.positive = encoder.encode(prompt);
    for (const auto& n : TextEncoder::negative_phrases()) q.negatives.push_back(encoder.encode(n));
    q.tau = tau;
    q.delta = delta;
    return q;
}

double relevance_score(const Eigen::VectorXd& feature, const TextQuery& query) {
    const Eigen::VectorXd g = safe_normalized(feature);
    const double pos = query.tau * g.dot(query.positive);
    double r = 1.0;
    for (const auto& n : query.negatives) {
        // softmax([a, b])_0 = 1 / (1 + exp(b - a))
        r = std::min(r, 1.0 / (1.0 + std::exp(query.tau * g.dot(n) - pos)));
    }
    return r;
}

std::vector<double> relevance_per_gaussian(const GaussianField& field, const Codebook& codebook,
                                           const TextQuery& query) {
    query.validate();
    if (field.empty()) throw EmptyScene("relevance_per_gaussian: empty field");
    if (codebook.D() != query.positive.size()) throw InvalidInput("relevance_per_gaussian: dimension mismatch");
    std::vector<double> out(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) {
        out[i] = relevance_score(decode_feature(field[i].logits, codebook), query);
    }
    return out;
}

Tensor3 relevance_per_pixel(const std::vector<Tensor3>& weights, const std::vector<Codebook>& codebooks,
                            const TextQuery& query) {
    query.validate();
    if (weights.empty() || weights.size() != codebooks.size()) {
        throw InvalidInput("relevance_per_pixel: need one codebook per level and at least one level");
    }
    const int H = weights[0].height(), W = weights[0].width();
    Tensor3 out(1, H, W, 0.0);
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const Tensor3& w = weights[l];
        const Codebook& cb = codebooks[l];
        if (w.height() != H || w.width() != W) throw InvalidInput("relevance_per_pixel: level shape mismatch");
        if (w.channels() != cb.K()) throw InvalidInput("relevance_per_pixel: weight channels != K");
        if (cb.D() != query.positive.size()) throw InvalidInput("relevance_per_pixel: dimension mismatch");
        for (int u = 0; u < H; ++u) {
            for (int v = 0; v < W; ++v) {
                const Eigen::VectorXd f = cb.E.transpose() * w.pixel(u, v);
                const double r = relevance_score(f, query);
                if (l == 0 || r > out(0, u, v)) out(0, u, v) = r;
            }
        }
    }
    return out;
}

std::size_t RelevanceResult::mask_count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

RelevanceResult mask_gaussians(const std::vector<double>& scores, double delta, double fallback_frac) {
    RelevanceResult res;
    res.scores = scores;
    res.mask.resize(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) res.mask[i] = scores[i] > delta;
    if (scores.empty() || res.mask_count() > 0) return res;

    const auto n = scores.size();
    const auto keep = std::min(n, std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fallback_frac * n))));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    for (std::size_t i = 0; i < keep; ++i) res.mask[order[i]] = true;
    res.fallback_used = true;
    return res;
}

double semantic_entropy(const Eigen::VectorXd& logits) {
    const Eigen::VectorXd p = mixture_weights(logits);
    double h = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        if (p(k) > 0.0) h -= p(k) * std::log(p(k));
    }
    return std::clamp(h, 0.0, std::log(static_cast<double>(p.size())));
}

TokenSample sample_tokens(const GaussianField& field, const Codebook& codebook, int M) {
    if (M < 1) throw InvalidInput("sample_tokens: M must be >= 1");
    TokenSample out;
    const int n = static_cast<int>(field.size());
    if (M > n) {
        M = n;
        out.clamped = true;
    }
    std::vector<double> h(field.size());
    for (int i = 0; i < n; ++i) h[i] = semantic_entropy(field[i].logits);
    std::vector<int> order(field.size());
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + M, order.end(),
                      [&](int a, int b) { return h[a] > h[b] || (h[a] == h[b] && a < b); });
    for (int j = 0; j < M; ++j) {
        const int i = order[j];
        out.indices.push_back(i);
        out.entropies.push_back(h[i]);
        out.features.push_back(decode_feature(field[i].logits, codebook));
    }
    return out;
}

}  // namespace xgs
