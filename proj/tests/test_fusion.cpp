// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "cobev/fusion.hpp"
#include "cobev/rng.hpp"

using namespace cobev;

namespace {

const GridSpec kSpec = GridSpec::make_centered(8.0, 1.0);  // 16x16

BevGrid random_grid(Rng& rng, const GridSpec& spec, int channels) {
    BevGrid g = BevGrid::make(spec, channels, 0.0);
    for (double& v : g.values) v = rng.uniform(-2.0, 2.0);
    return g;
}

std::vector<VpePoint> random_points(Rng& rng, const GridSpec& spec, int count) {
    std::vector<VpePoint> points;
    for (int i = 0; i < count; ++i)
        points.push_back({static_cast<int>(rng.uniform_int(spec.rows + 6)) - 3,
                          static_cast<int>(rng.uniform_int(spec.cols + 6)) - 3,
                          rng.uniform01()});
    return points;
}

// Dense oracle: loop over every cell and every point.
BevGrid vpe_oracle(const std::vector<VpePoint>& points, const VpeParams& params,
                   const GridSpec& spec) {
    BevGrid g = BevGrid::make(spec, static_cast<int>(params.q.size()), 0.0);
    for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.cols; ++c) {
            double best = -1.0;
            for (const VpePoint& p : points)
                if (p.row == r && p.col == c) best = std::max(best, p.confidence);
            if (best < 0.0) continue;
            for (std::size_t ch = 0; ch < params.q.size(); ++ch)
                g.at(r, c, static_cast<int>(ch)) = best * params.q[ch];
        }
    }
    return g;
}

}  // namespace

TEST_CASE("build_vpe trivial cases") {
    const VpeParams params{std::vector<double>(4, 1.0)};

    SUBCASE("no points -> all zero") {
        const BevGrid g = build_vpe({}, params, kSpec);
        for (const double v : g.values) CHECK(v == 0.0);
    }
    SUBCASE("zero confidence annihilates the embedding") {
        const BevGrid g = build_vpe({{5, 5, 0.0}}, params, kSpec);
        for (const double v : g.values) CHECK(v == 0.0);
    }
    SUBCASE("two points, distinct cells") {
        const BevGrid g = build_vpe({{2, 3, 0.5}, {7, 9, 1.0}}, params, kSpec);
        for (int ch = 0; ch < 4; ++ch) {
            CHECK(g.at(2, 3, ch) == 0.5);
            CHECK(g.at(7, 9, ch) == 1.0);
        }
    }
    SUBCASE("same cell keeps the maximum confidence") {
        const BevGrid g = build_vpe({{2, 3, 0.4}, {2, 3, 0.9}, {2, 3, 0.1}}, params, kSpec);
        CHECK(g.at(2, 3, 0) == 0.9);
    }
    SUBCASE("out-of-range points are skipped and counted") {
        RasterStats stats;
        const BevGrid g = build_vpe({{-1, 0, 0.5}, {0, 99, 0.5}, {3, 3, 0.5}},
                                    params, kSpec, &stats);
        CHECK(stats.skipped_out_of_range == 2);
        CHECK(g.at(3, 3, 0) == 0.5);
    }
}

TEST_CASE("build_vpe matches the dense rasterization oracle") {
    Rng rng(70);
    for (int trial = 0; trial < 100; ++trial) {
        VpeParams params{std::vector<double>()};
        const int channels = 1 + static_cast<int>(rng.uniform_int(6));
        for (int c = 0; c < channels; ++c) params.q.push_back(rng.uniform(-2.0, 2.0));
        const auto points = random_points(rng, kSpec, 20);
        CHECK(build_vpe(points, params, kSpec) == vpe_oracle(points, params, kSpec));
    }
}

TEST_CASE("build_vpe sparsity and confidence scaling") {
    Rng rng(71);
    VpeParams params{std::vector<double>{1.0, -0.5, 2.0}};
    for (int trial = 0; trial < 50; ++trial) {
        auto points = random_points(rng, kSpec, 15);
        const BevGrid base = build_vpe(points, params, kSpec);

        // Nonzero cells never exceed the number of distinct in-range cells.
        std::size_t nonzero_cells = 0;
        std::set<std::pair<int, int>> distinct;
        for (const VpePoint& p : points)
            if (p.row >= 0 && p.row < kSpec.rows && p.col >= 0 && p.col < kSpec.cols)
                distinct.insert({p.row, p.col});
        for (int r = 0; r < kSpec.rows; ++r)
            for (int c = 0; c < kSpec.cols; ++c)
                if (base.at(r, c, 0) != 0.0 || base.at(r, c, 1) != 0.0 ||
                    base.at(r, c, 2) != 0.0)
                    ++nonzero_cells;
        CHECK(nonzero_cells <= distinct.size());

        // Scaling all confidences by lambda scales the grid by lambda.
        const double lambda = rng.uniform01();
        auto scaled_points = points;
        for (VpePoint& p : scaled_points) p.confidence *= lambda;
        const BevGrid scaled = build_vpe(scaled_points, params, kSpec);
        for (std::size_t i = 0; i < base.values.size(); ++i)
            CHECK(scaled.values[i] == doctest::Approx(lambda * base.values[i]).epsilon(1e-12));
    }
}

TEST_CASE("refine_features adds elementwise") {
    Rng rng(72);
    const BevGrid f = random_grid(rng, kSpec, 5);
    const BevGrid zero = BevGrid::make(kSpec, 5, 0.0);
    CHECK(refine_features(f, zero) == f);
    CHECK(refine_features(zero, f) == f);

    const BevGrid g = random_grid(rng, kSpec, 5);
    const BevGrid sum = refine_features(f, g);
    for (std::size_t i = 0; i < sum.values.size(); ++i)
        CHECK(sum.values[i] == f.values[i] + g.values[i]);

    const BevGrid wrong = BevGrid::make(kSpec, 4, 0.0);
    CHECK_THROWS_AS(refine_features(f, wrong), std::invalid_argument);
}

TEST_CASE("refine_features is additive in the embedding") {
    Rng rng(73);
    const BevGrid f = random_grid(rng, kSpec, 3);
    const BevGrid a = random_grid(rng, kSpec, 3);
    const BevGrid b = random_grid(rng, kSpec, 3);
    BevGrid ab = a;
    for (std::size_t i = 0; i < ab.values.size(); ++i) ab.values[i] += b.values[i];
    const BevGrid once = refine_features(f, ab);
    const BevGrid twice = refine_features(refine_features(f, a), b);
    for (std::size_t i = 0; i < once.values.size(); ++i)
        CHECK(once.values[i] == doctest::Approx(twice.values[i]).epsilon(1e-12));
}

TEST_CASE("build_bobev places box attributes at center cells") {
    SUBCASE("no boxes -> all-zero five-channel grid") {
        const BevGrid g = build_bobev({}, kSpec);
        CHECK(g.channels == 5);
        for (const double v : g.values) CHECK(v == 0.0);
    }
    SUBCASE("definitional placement") {
        const Box3D box{0.5, 0.5, 1.5, 2.0, 1.5, 4.5, 0.0, 0.9};
        const BevGrid g = build_bobev({box}, kSpec);
        const auto cell = ego_to_bev({0.5, 0.5, 0}, kSpec);
        REQUIRE(cell.has_value());
        CHECK(g.at(cell->row, cell->col, 0) == 2.0);
        CHECK(g.at(cell->row, cell->col, 1) == 1.5);
        CHECK(g.at(cell->row, cell->col, 2) == 4.5);
        CHECK(g.at(cell->row, cell->col, 3) == 0.0);
        CHECK(g.at(cell->row, cell->col, 4) == 0.9);
    }
    SUBCASE("cell collisions keep the higher confidence") {
        const Box3D weak{0.5, 0.5, 1.5, 1.0, 1.0, 1.0, 0.1, 0.4};
        const Box3D strong{0.6, 0.6, 1.5, 2.0, 2.0, 2.0, 0.2, 0.8};
        const BevGrid g = build_bobev({weak, strong}, kSpec);
        const auto cell = ego_to_bev({0.5, 0.5, 0}, kSpec);
        CHECK(g.at(cell->row, cell->col, 4) == 0.8);
        CHECK(g.at(cell->row, cell->col, 0) == 2.0);
    }
    SUBCASE("out-of-range centers are skipped and counted") {
        RasterStats stats;
        const Box3D outside{100.0, 0.0, 1.5, 1, 1, 1, 0, 0.5};
        build_bobev({outside}, kSpec, &stats);
        CHECK(stats.skipped_out_of_range == 1);
    }
}

TEST_CASE("build_bobev matches a dense brute-force oracle") {
    Rng rng(74);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Box3D> boxes;
        for (int i = 0; i < 15; ++i)
            boxes.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10), 1.5,
                             rng.uniform(1, 3), rng.uniform(1, 2), rng.uniform(3, 5),
                             rng.uniform(-3, 3), rng.uniform01()});
        const BevGrid g = build_bobev(boxes, kSpec);

        for (int r = 0; r < kSpec.rows; ++r) {
            for (int c = 0; c < kSpec.cols; ++c) {
                const Box3D* best = nullptr;
                for (const Box3D& b : boxes) {
                    const auto cell = ego_to_bev({b.x, b.y, 0}, kSpec);
                    if (!cell || cell->row != r || cell->col != c) continue;
                    if (!best || b.s > best->s) best = &b;
                }
                if (!best) {
                    for (int ch = 0; ch < 5; ++ch) CHECK(g.at(r, c, ch) == 0.0);
                } else {
                    CHECK(g.at(r, c, 0) == best->w);
                    CHECK(g.at(r, c, 1) == best->h);
                    CHECK(g.at(r, c, 2) == best->l);
                    CHECK(g.at(r, c, 3) == best->yaw);
                    CHECK(g.at(r, c, 4) == best->s);
                }
            }
        }
    }
}

TEST_CASE("fuse concatenates channels losslessly") {
    Rng rng(75);
    const BevGrid f = random_grid(rng, kSpec, 16);
    const BevGrid b = random_grid(rng, kSpec, 5);
    const BevGrid h = fuse(f, b);
    CHECK(h.channels == 21);
    for (int r = 0; r < kSpec.rows; ++r) {
        for (int c = 0; c < kSpec.cols; ++c) {
            for (int ch = 0; ch < 16; ++ch) CHECK(h.at(r, c, ch) == f.at(r, c, ch));
            for (int ch = 0; ch < 5; ++ch) CHECK(h.at(r, c, 16 + ch) == b.at(r, c, ch));
        }
    }

    BevGrid other = b;
    other.spec = GridSpec::make_centered(8.0, 2.0);
    other.values.resize(static_cast<std::size_t>(other.spec.cell_count()) * 5);
    CHECK_THROWS_AS(fuse(f, other), std::invalid_argument);
}

TEST_CASE("zero-message fusion reduces to the zero-augmented single grid") {
    Rng rng(76);
    const BevGrid f = random_grid(rng, kSpec, 8);
    const BevGrid vpe = build_vpe({}, VpeParams{std::vector<double>(8, 0.7)}, kSpec);
    const BevGrid fused = fuse(refine_features(f, vpe), build_bobev({}, kSpec));
    for (int r = 0; r < kSpec.rows; ++r) {
        for (int c = 0; c < kSpec.cols; ++c) {
            for (int ch = 0; ch < 8; ++ch) CHECK(fused.at(r, c, ch) == f.at(r, c, ch));
            for (int ch = 8; ch < 13; ++ch) CHECK(fused.at(r, c, ch) == 0.0);
        }
    }
}

TEST_CASE("dedupe_received keeps the strongest of close duplicates") {
    SUBCASE("disjoint boxes all survive") {
        const std::vector<Box3D> boxes{{0, 0, 0, 1, 1, 1, 0, 0.5},
                                       {5, 5, 0, 1, 1, 1, 0, 0.4},
                                       {-5, 3, 0, 1, 1, 1, 0, 0.9}};
        CHECK(dedupe_received(boxes, 1.0).size() == 3);
    }
    SUBCASE("identical boxes collapse to the higher confidence") {
        const Box3D a{1, 1, 0, 2, 2, 2, 0.3, 0.9};
        Box3D b = a;
        b.s = 0.8;
        const auto kept = dedupe_received({b, a}, 1.0);
        REQUIRE(kept.size() == 1);
        CHECK(kept[0].s == 0.9);
    }
    SUBCASE("greedy brute-force oracle agrees on random clusters") {
        Rng rng(77);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<Box3D> boxes;
            for (int i = 0; i < 12; ++i)
                boxes.push_back({rng.uniform(-4, 4), rng.uniform(-4, 4), 0, 1, 1, 1,
                                 0, rng.uniform01()});
            const double radius = rng.uniform(0.5, 3.0);
            const auto kept = dedupe_received(boxes, radius);

            // Oracle: sort a copy by confidence, greedily accept.
            std::vector<Box3D> sorted = boxes;
            std::stable_sort(sorted.begin(), sorted.end(),
                             [](const Box3D& a, const Box3D& b) { return a.s > b.s; });
            std::vector<Box3D> expected;
            for (const Box3D& b : sorted) {
                bool close = false;
                for (const Box3D& k : expected)
                    if (std::hypot(b.x - k.x, b.y - k.y) < radius) close = true;
                if (!close) expected.push_back(b);
            }
            CHECK(kept == expected);
        }
    }
}
