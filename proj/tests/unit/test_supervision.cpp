#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "oracles.hpp"
#include "xgs/error.hpp"
#include "xgs/grid.hpp"
#include "xgs/supervision.hpp"

using namespace xgs;

namespace {

int enumerate_count(int extent, int stride, int offset) {
    int n = 0;
    for (int u = 0; u < extent; ++u) n += (u % stride == offset) ? 1 : 0;
    return n;
}

RegionAnnotation random_annotation(std::mt19937_64& rng, int H, int W, int R, int D) {
    std::uniform_int_distribution<int> label(-1, R - 1);
    std::normal_distribution<double> N;
    RegionAnnotation a{H, W, std::vector<int>(static_cast<std::size_t>(H) * W), Eigen::MatrixXd(R, D)};
    for (int& l : a.labels) l = label(rng);
    for (int r = 0; r < R; ++r) {
        for (int d = 0; d < D; ++d) a.phi(r, d) = N(rng);
    }
    return a;
}

CompactFeatureMap as_prediction(const Tensor3& t, const GridSpec& g) { return {t, g}; }

}  // namespace

TEST_CASE("grid_resolution examples") {
    CHECK(grid_resolution(480, 4, 0) == 120);
    CHECK(grid_resolution(5, 2, 1) == 2);
    CHECK(grid_resolution(3, 5, 4) == 0);
    CHECK_THROWS_AS(grid_resolution(10, 2, 2), InvalidInput);
    CHECK_THROWS_AS(grid_resolution(10, 0, 0), InvalidInput);
    CHECK_THROWS_AS(grid_resolution(10, 2, -1), InvalidInput);
}

TEST_CASE("grid_resolution matches enumeration") {
    for (int H = 1; H <= 40; ++H) {
        for (int s = 1; s <= 8; ++s) {
            for (int o = 0; o < s; ++o) CHECK(grid_resolution(H, s, o) == enumerate_count(H, s, o));
        }
    }
}

TEST_CASE("sample_coordinates examples") {
    using V = std::vector<PixelCoord>;
    CHECK(sample_coordinates(GridSpec(2, 2)) == V{{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    CHECK(sample_coordinates(GridSpec(4, 4, 2, 1, 1)) == V{{1, 1}, {1, 3}, {3, 1}, {3, 3}});
    CHECK(sample_coordinates(GridSpec(3, 1, 3, 2, 0)) == V{{2, 0}});
}

TEST_CASE("sample_coordinates size and bounds") {
    for (int H = 1; H <= 12; ++H) {
        for (int W = 1; W <= 12; W += 3) {
            for (int s = 1; s <= 5; ++s) {
                for (int oh = 0; oh < s; ++oh) {
                    for (int ow = 0; ow < s; ++ow) {
                        const GridSpec g(H, W, s, oh, ow);
                        const auto px = sample_coordinates(g);
                        CHECK(px.size() == static_cast<std::size_t>(grid_resolution(H, s, oh) * grid_resolution(W, s, ow)));
                        for (const auto& p : px) {
                            CHECK(p.u >= 0);
                            CHECK(p.u < H);
                            CHECK(p.v >= 0);
                            CHECK(p.v < W);
                            CHECK(p.u % s == oh);
                            CHECK(p.v % s == ow);
                        }
                    }
                }
            }
        }
    }
}

TEST_CASE("next_offset covers every phase once per cycle") {
    for (int i = 0; i < 5; ++i) CHECK(next_offset(i, 1, 99) == std::pair<int, int>(0, 0));
    for (std::uint64_t seed : {0ull, 1ull, 12345ull}) {
        std::set<std::pair<int, int>> first;
        for (int i = 0; i < 4; ++i) first.insert(next_offset(i, 2, seed));
        CHECK(first.size() == 4);
    }
    std::map<std::pair<int, int>, int> counts;
    for (int i = 0; i < 18; ++i) counts[next_offset(i, 3, 7)]++;
    CHECK(counts.size() == 9);
    for (const auto& [phase, n] : counts) CHECK(n == 2);
    CHECK(next_offset(5, 3, 7) == next_offset(5, 3, 7));
}

TEST_CASE("discrete targets") {
    SUBCASE("pure background") {
        RegionAnnotation a{4, 4, std::vector<int>(16, -1), Eigen::MatrixXd::Ones(2, 3)};
        const SupervisionTarget t = build_target_discrete(a, GridSpec(4, 4, 2));
        CHECK(t.valid_count() == 0);
        for (double x : t.features.data()) CHECK(x == 0.0);
    }
    SUBCASE("table lookup") {
        RegionAnnotation a{3, 3, std::vector<int>(9, -1), Eigen::MatrixXd::Zero(3, 2)};
        a.phi.row(2) << 0.5, -0.25;
        a.labels[1 * 3 + 1] = 2;
        const SupervisionTarget t = build_target_discrete(a, GridSpec(3, 3, 1));
        CHECK(t.valid(0, 1, 1) == 1.0);
        CHECK(t.features(0, 1, 1) == 0.5);
        CHECK(t.features(1, 1, 1) == -0.25);
        CHECK(t.valid_count() == 1);
    }
    SUBCASE("corrupt index") {
        RegionAnnotation a{2, 2, {0, 1, 2, 5}, Eigen::MatrixXd::Zero(3, 2)};
        CHECK_THROWS_AS(build_target_discrete(a, GridSpec(2, 2)), CorruptAnnotation);
        CHECK_THROWS_AS(a.validate(), CorruptAnnotation);
    }
    SUBCASE("resolution mismatch") {
        RegionAnnotation a{2, 2, {0, 0, 0, 0}, Eigen::MatrixXd::Zero(1, 2)};
        CHECK_THROWS_AS(build_target_discrete(a, GridSpec(3, 2)), InvalidInput);
    }
    SUBCASE("random annotation against a cell loop") {
        std::mt19937_64 rng(3);
        const RegionAnnotation a = random_annotation(rng, 17, 13, 5, 4);
        const GridSpec g(17, 13, 3, 1, 2);
        const SupervisionTarget t = build_target_discrete(a, g);
        for (int m = 0; m < g.rows(); ++m) {
            for (int n = 0; n < g.cols(); ++n) {
                const int r = a.labels[(1 + 3 * m) * 13 + (2 + 3 * n)];
                CHECK(t.valid(0, m, n) == (r >= 0 ? 1.0 : 0.0));
                for (int d = 0; d < 4; ++d) CHECK(t.features(d, m, n) == (r >= 0 ? a.phi(r, d) : 0.0));
            }
        }
    }
}

TEST_CASE("continuous targets") {
    SUBCASE("same resolution is the identity map") {
        Tensor3 P(2, 6, 5);
        for (std::size_t i = 0; i < P.size(); ++i) P.data()[i] = static_cast<double>(i);
        const GridSpec g(6, 5, 2, 1, 0);
        const SupervisionTarget t = build_target_continuous({P}, g);
        CHECK(t.valid_count() == g.cell_count());
        for (int m = 0; m < g.rows(); ++m) {
            for (int n = 0; n < g.cols(); ++n) {
                const PixelCoord px = g.pixel(m, n);
                CHECK(t.features(1, m, n) == P(1, px.u, px.v));
            }
        }
    }
    SUBCASE("single-row image maps to row 0") {
        Tensor3 P(1, 4, 4, 0.0);
        P(0, 0, 0) = 7.0;
        const SupervisionTarget t = build_target_continuous({P}, GridSpec(1, 1));
        CHECK(t.features(0, 0, 0) == 7.0);
    }
    SUBCASE("endpoint mapping") {
        CHECK(round_half_away(479.0 * 29.0 / 479.0) == 29);
        CHECK(round_half_away(2.5) == 3);
        CHECK(round_half_away(-2.5) == -3);
        Tensor3 P(1, 30, 1);
        for (int u = 0; u < 30; ++u) P(0, u, 0) = u;
        const SupervisionTarget t = build_target_continuous({P}, GridSpec(480, 1));
        CHECK(t.features(0, 479, 0) == 29.0);
        CHECK(t.features(0, 0, 0) == 0.0);
    }
    SUBCASE("broadcast features agree with the region table") {
        std::mt19937_64 rng(8);
        const RegionAnnotation a = random_annotation(rng, 9, 11, 4, 3);
        Tensor3 P(3, 9, 11);
        for (int u = 0; u < 9; ++u) {
            for (int v = 0; v < 11; ++v) {
                const int r = a.labels[u * 11 + v];
                if (r >= 0) P.set_pixel(u, v, a.phi.row(r).transpose());
            }
        }
        for (int s = 1; s <= 3; ++s) {
            const GridSpec g(9, 11, s, s - 1, 0);
            const SupervisionTarget d = build_target_discrete(a, g);
            const SupervisionTarget c = build_target_continuous({P}, g);
            for (int m = 0; m < g.rows(); ++m) {
                for (int n = 0; n < g.cols(); ++n) {
                    if (d.valid(0, m, n) == 0.0) continue;
                    for (int k = 0; k < 3; ++k) CHECK(d.features(k, m, n) == c.features(k, m, n));
                }
            }
        }
    }
}

TEST_CASE("masked loss examples") {
    const GridSpec g(2, 2);
    SUBCASE("identical prediction") {
        Tensor3 t(3, 2, 2);
        for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = 0.1 * static_cast<double>(i) - 0.4;
        const SemanticLoss l = masked_semantic_loss(as_prediction(t, g), {t, Tensor3(1, 2, 2, 1.0), g});
        CHECK(std::abs(l.value) < 1e-12);
    }
    SUBCASE("everything masked") {
        Tensor3 p(3, 2, 2, 5.0);
        const SemanticLoss l = masked_semantic_loss(as_prediction(p, g), {Tensor3(3, 2, 2), Tensor3(1, 2, 2), g});
        CHECK(l.value == 0.0);
        CHECK(l.valid_cells == 0);
        for (double x : l.cotangent.data()) CHECK(x == 0.0);
    }
    SUBCASE("opposite unit vectors") {
        const GridSpec one(1, 1);
        const SemanticLoss l = masked_semantic_loss(as_prediction(Tensor3(1, 1, 1, -1.0), one),
                                                    {Tensor3(1, 1, 1, 1.0), Tensor3(1, 1, 1, 1.0), one}, 1.0);
        CHECK(l.value == doctest::Approx(4.0).epsilon(1e-7));
    }
    SUBCASE("zero against zero") {
        const GridSpec one(1, 1);
        const SemanticLoss l = masked_semantic_loss(as_prediction(Tensor3(2, 1, 1), one),
                                                    {Tensor3(2, 1, 1), Tensor3(1, 1, 1, 1.0), one});
        CHECK(l.value == 0.0);
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(masked_semantic_loss(as_prediction(Tensor3(2, 2, 2), g),
                                             {Tensor3(3, 2, 2), Tensor3(1, 2, 2), g}),
                        InvalidInput);
    }
}

TEST_CASE("masked loss cotangent matches finite differences") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> N;
    std::bernoulli_distribution keep(0.7);
    for (int trial = 0; trial < 10; ++trial) {
        const int D = 1 + trial % 5;
        const GridSpec g(3, 4);
        Tensor3 p(D, 3, 4), t(D, 3, 4), V(1, 3, 4);
        for (double& x : p.data()) x = N(rng);
        for (double& x : t.data()) x = N(rng);
        for (double& x : V.data()) x = keep(rng) ? 1.0 : 0.0;
        const SupervisionTarget target{t, V, g};
        const double lam = 0.5 + trial * 0.1;
        const SemanticLoss l = masked_semantic_loss(as_prediction(p, g), target, lam);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double fd = oracle::central_difference(
                [&] { return masked_semantic_loss(as_prediction(p, g), target, lam).value; }, p.data()[i], 1e-6);
            CHECK(oracle::relative_error(l.cotangent.data()[i], fd, 1e-6) < 1e-4);
        }
        for (int m = 0; m < 3; ++m) {
            for (int n = 0; n < 4; ++n) {
                if (V(0, m, n) != 0.0) continue;
                for (int d = 0; d < D; ++d) CHECK(l.cotangent(d, m, n) == 0.0);
            }
        }
    }
}

TEST_CASE("masking more cells never increases the summed loss") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> N;
    const GridSpec g(4, 4);
    Tensor3 p(3, 4, 4), t(3, 4, 4), V(1, 4, 4, 1.0);
    for (double& x : p.data()) x = N(rng);
    for (double& x : t.data()) x = N(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (int cell = 0; cell <= 16; ++cell) {
        const SemanticLoss l = masked_semantic_loss(as_prediction(p, g), {t, V, g});
        const double summed = l.value * l.valid_cells;
        CHECK(summed <= prev + 1e-12);
        prev = summed;
        if (cell < 16) V.data()[cell] = 0.0;
    }
}

TEST_CASE("batched targets pad with invalid cells") {
    std::mt19937_64 rng(2);
    RegionAnnotation a = random_annotation(rng, 10, 7, 3, 2);
    for (int& l : a.labels) l = std::max(l, 0);
    const BatchedTargets b = build_batched_discrete(a, 4, {{0, 0}, {3, 3}});
    CHECK(b.rows == 3);
    CHECK(b.cols == 2);
    REQUIRE(b.padded.size() == 2);
    // offset (3,3): rows {3,7}, cols {3}
    const SupervisionTarget& t = b.padded[1];
    CHECK(t.features.height() == 3);
    CHECK(t.valid(0, 2, 0) == 0.0);
    CHECK(t.valid(0, 0, 1) == 0.0);
    CHECK(t.valid(0, 1, 0) == 1.0);
    CHECK(b.padded[0].valid_count() == 3 * 2);
}
