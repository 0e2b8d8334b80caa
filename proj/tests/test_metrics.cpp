// Copyright the cobev contributors. Licensed under the Apache 2.0 license.
// See LICENSE in the project root.
#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cobev/metrics.hpp"
#include "cobev/rng.hpp"

using namespace cobev;

namespace {

GroundTruthBox gt_at(double x, double y, int id) {
    return {x, y, 1.5, 1.9, 1.6, 4.5, 0.3, id};
}

Box3D pred_from(const GroundTruthBox& g, double conf) {
    return {g.x, g.y, g.z, g.w, g.h, g.l, g.yaw, conf};
}

std::vector<FrameDetections> self_eval_frames(Rng& rng, int frames, int boxes) {
    std::vector<FrameDetections> out;
    for (int f = 0; f < frames; ++f) {
        FrameDetections fd;
        for (int i = 0; i < boxes; ++i) {
            fd.gts.push_back(gt_at(rng.uniform(-30, 30), rng.uniform(-30, 30), i));
            fd.preds.push_back(pred_from(fd.gts.back(), 1.0));
        }
        out.push_back(fd);
    }
    return out;
}

// Quadratic PR-curve oracle: for each grid recall, the best precision among
// confidence cutoffs achieving at least that recall.
double ap_oracle(const std::vector<FrameDetections>& frames, double dist) {
    struct Scored {
        double conf;
        bool tp;
    };
    std::vector<Scored> scored;
    std::size_t total_gt = 0;
    for (const FrameDetections& f : frames) {
        total_gt += f.gts.size();
        const MatchResult m = match_detections(f.preds, f.gts, dist);
        std::vector<bool> tp(f.preds.size(), false);
        for (const auto& pair : m.matches) tp[pair.pred_index] = true;
        for (std::size_t i = 0; i < f.preds.size(); ++i)
            scored.push_back({f.preds[i].s, tp[i]});
    }
    if (total_gt == 0 || scored.empty()) return 0.0;
    std::sort(scored.begin(), scored.end(),
              [](const Scored& a, const Scored& b) { return a.conf > b.conf; });

    double area = 0.0;
    for (int i = 11; i <= 100; ++i) {
        const double r = i / 100.0;
        double best = 0.0;
        std::size_t tp = 0;
        for (std::size_t k = 0; k < scored.size(); ++k) {
            if (scored[k].tp) ++tp;
            const double recall = static_cast<double>(tp) / total_gt;
            const double precision = static_cast<double>(tp) / (k + 1);
            if (recall >= r) best = std::max(best, precision);
        }
        area += std::max(0.0, best - 0.1);
    }
    return area / 90.0 / 0.9;
}

}  // namespace

TEST_CASE("match_detections basics") {
    SUBCASE("self-match leaves nothing unmatched") {
        std::vector<GroundTruthBox> gts{gt_at(0, 0, 0), gt_at(10, 0, 1), gt_at(0, 10, 2)};
        std::vector<Box3D> preds;
        for (const auto& g : gts) preds.push_back(pred_from(g, 1.0));
        const MatchResult m = match_detections(preds, gts, 2.0);
        CHECK(m.matches.size() == 3);
        CHECK(m.unmatched_preds.empty());
        CHECK(m.unmatched_gts.empty());
    }
    SUBCASE("no predictions leaves all ground truth unmatched") {
        std::vector<GroundTruthBox> gts{gt_at(0, 0, 0), gt_at(5, 5, 1)};
        const MatchResult m = match_detections({}, gts, 2.0);
        CHECK(m.matches.empty());
        CHECK(m.unmatched_gts.size() == 2);
    }
    SUBCASE("each ground truth is claimed at most once, by confidence order") {
        std::vector<GroundTruthBox> gts{gt_at(0, 0, 0)};
        std::vector<Box3D> preds{pred_from(gts[0], 0.5), pred_from(gts[0], 0.9)};
        const MatchResult m = match_detections(preds, gts, 2.0);
        REQUIRE(m.matches.size() == 1);
        CHECK(m.matches[0].pred_index == 1);  // the 0.9 one
        CHECK(m.unmatched_preds == std::vector<int>{0});
    }
}

TEST_CASE("match_detections agrees with an exhaustive greedy oracle") {
    Rng rng(95);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<GroundTruthBox> gts;
        std::vector<Box3D> preds;
        const int ng = static_cast<int>(rng.uniform_int(8));
        const int np = static_cast<int>(rng.uniform_int(8));
        for (int i = 0; i < ng; ++i)
            gts.push_back(gt_at(rng.uniform(-10, 10), rng.uniform(-10, 10), i));
        for (int i = 0; i < np; ++i) {
            Box3D p{rng.uniform(-10, 10), rng.uniform(-10, 10), 1.5, 2, 1.5, 4.5,
                    0.1, rng.uniform01()};
            preds.push_back(p);
        }
        const double dist = rng.uniform(0.5, 6.0);
        const MatchResult got = match_detections(preds, gts, dist);

        // Oracle: explicit greedy loop.
        std::vector<int> order(preds.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return preds[a].s > preds[b].s; });
        std::vector<bool> taken(gts.size(), false);
        std::vector<std::pair<int, int>> expected;
        for (const int pi : order) {
            int best = -1;
            double best_d = dist;
            for (std::size_t gi = 0; gi < gts.size(); ++gi) {
                if (taken[gi]) continue;
                const double d = std::hypot(preds[pi].x - gts[gi].x, preds[pi].y - gts[gi].y);
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(gi);
                }
            }
            if (best >= 0) {
                taken[best] = true;
                expected.emplace_back(pi, best);
            }
        }
        REQUIRE(got.matches.size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); ++i) {
            CHECK(got.matches[i].pred_index == expected[i].first);
            CHECK(got.matches[i].gt_index == expected[i].second);
        }
    }
}

TEST_CASE("average_precision trivial endpoints") {
    Rng rng(96);
    SUBCASE("a perfect detector scores 1.0 at every threshold") {
        const auto frames = self_eval_frames(rng, 4, 6);
        for (const double d : kApDistanceThresholds)
            CHECK(average_precision(frames, d) == doctest::Approx(1.0));
    }
    SUBCASE("an all-false detector scores 0.0") {
        std::vector<FrameDetections> frames(3);
        for (auto& f : frames) {
            f.gts.push_back(gt_at(0, 0, 0));
            f.preds.push_back({50, 50, 1.5, 2, 1.5, 4.5, 0, 0.9});
        }
        CHECK(average_precision(frames, 2.0) == 0.0);
    }
    SUBCASE("no ground truth scores 0.0") {
        std::vector<FrameDetections> frames(1);
        frames[0].preds.push_back({0, 0, 1.5, 2, 1.5, 4.5, 0, 0.9});
        CHECK(average_precision(frames, 2.0) == 0.0);
    }
}

TEST_CASE("average_precision matches the brute-force PR oracle") {
    Rng rng(97);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<FrameDetections> frames(2);
        for (auto& f : frames) {
            const int ng = 1 + static_cast<int>(rng.uniform_int(6));
            for (int i = 0; i < ng; ++i)
                f.gts.push_back(gt_at(rng.uniform(-15, 15), rng.uniform(-15, 15), i));
            const int np = static_cast<int>(rng.uniform_int(10));
            for (int i = 0; i < np; ++i) {
                if (rng.bernoulli(0.6) && !f.gts.empty()) {
                    const auto& g = f.gts[rng.uniform_int(f.gts.size())];
                    Box3D p = pred_from(g, rng.uniform01());
                    p.x += rng.uniform(-1.5, 1.5);
                    p.y += rng.uniform(-1.5, 1.5);
                    f.preds.push_back(p);
                } else {
                    f.preds.push_back({rng.uniform(-15, 15), rng.uniform(-15, 15), 1.5, 2,
                                       1.5, 4.5, 0, rng.uniform01()});
                }
            }
        }
        for (const double d : {1.0, 2.0}) {
            CHECK(average_precision(frames, d) ==
                  doctest::Approx(ap_oracle(frames, d)).epsilon(1e-9));
        }
    }
}

TEST_CASE("average_precision properties") {
    Rng rng(98);
    SUBCASE("AP is monotone in the distance threshold") {
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<FrameDetections> frames(1);
            auto& f = frames[0];
            for (int i = 0; i < 6; ++i)
                f.gts.push_back(gt_at(rng.uniform(-15, 15), rng.uniform(-15, 15), i));
            for (int i = 0; i < 8; ++i) {
                Box3D p = pred_from(f.gts[i % 6], rng.uniform01());
                p.x += rng.uniform(-3, 3);
                p.y += rng.uniform(-3, 3);
                f.preds.push_back(p);
            }
            CHECK(average_precision(frames, 4.0) >= average_precision(frames, 0.5) - 1e-12);
        }
    }
    SUBCASE("permutation invariance at distinct confidences") {
        std::vector<FrameDetections> frames(1);
        auto& f = frames[0];
        for (int i = 0; i < 5; ++i) f.gts.push_back(gt_at(6.0 * i, 0, i));
        for (int i = 0; i < 5; ++i)
            f.preds.push_back(pred_from(f.gts[i], 0.1 + 0.15 * i));
        f.preds.push_back({40, 40, 1.5, 2, 1.5, 4.5, 0, 0.33});
        const double base = average_precision(frames, 2.0);
        std::reverse(f.preds.begin(), f.preds.end());
        CHECK(average_precision(frames, 2.0) == doctest::Approx(base).epsilon(1e-12));
    }
    SUBCASE("a weakest-confidence false positive never raises AP") {
        Rng rng2(99);
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<FrameDetections> frames(1);
            auto& f = frames[0];
            for (int i = 0; i < 4; ++i)
                f.gts.push_back(gt_at(rng2.uniform(-15, 15), rng2.uniform(-15, 15), i));
            for (int i = 0; i < 4; ++i)
                f.preds.push_back(pred_from(f.gts[i], rng2.uniform(0.5, 1.0)));
            const double before = average_precision(frames, 2.0);
            f.preds.push_back({99, 99, 1.5, 2, 1.5, 4.5, 0, 0.01});
            CHECK(average_precision(frames, 2.0) <= before + 1e-12);
        }
    }
}

TEST_CASE("tp_errors basics and loop oracle") {
    SUBCASE("exact matches give zero errors") {
        Rng rng(100);
        const auto frames = self_eval_frames(rng, 2, 5);
        const TpErrors e = tp_errors(frames);
        CHECK(e.ate == doctest::Approx(0.0));
        CHECK(e.ase == doctest::Approx(0.0));
        CHECK(e.aoe == doctest::Approx(0.0));
        CHECK(e.match_count == 10);
    }
    SUBCASE("a yaw flipped by pi is the maximal wrapped error") {
        std::vector<FrameDetections> frames(1);
        frames[0].gts.push_back(gt_at(0, 0, 0));
        Box3D p = pred_from(frames[0].gts[0], 1.0);
        p.yaw = frames[0].gts[0].yaw + std::numbers::pi;
        frames[0].preds.push_back(p);
        CHECK(tp_errors(frames).aoe == doctest::Approx(std::numbers::pi));
    }
    SUBCASE("no matches reports maximal errors") {
        std::vector<FrameDetections> frames(1);
        frames[0].gts.push_back(gt_at(0, 0, 0));
        const TpErrors e = tp_errors(frames);
        CHECK(e.match_count == 0);
        CHECK(e.ate == 4.0);
        CHECK(e.ase == 1.0);
        CHECK(e.aoe == doctest::Approx(std::numbers::pi));
    }
    SUBCASE("random perturbations match a per-pair loop") {
        Rng rng(101);
        std::vector<FrameDetections> frames(1);
        auto& f = frames[0];
        for (int i = 0; i < 8; ++i) f.gts.push_back(gt_at(8.0 * i, 0, i));
        double sum_ate = 0, sum_ase = 0, sum_aoe = 0;
        for (int i = 0; i < 8; ++i) {
            Box3D p = pred_from(f.gts[i], rng.uniform(0.5, 1.0));
            p.x += rng.uniform(-0.8, 0.8);
            p.y += rng.uniform(-0.8, 0.8);
            p.w += rng.uniform(-0.2, 0.2);
            p.l += rng.uniform(-0.4, 0.4);
            p.yaw += rng.uniform(-0.5, 0.5);
            f.preds.push_back(p);
            sum_ate += std::hypot(p.x - f.gts[i].x, p.y - f.gts[i].y);
            const double vi = std::min(p.w, f.gts[i].w) * std::min(p.h, f.gts[i].h) *
                              std::min(p.l, f.gts[i].l);
            const double uni =
                p.w * p.h * p.l + f.gts[i].w * f.gts[i].h * f.gts[i].l - vi;
            sum_ase += 1.0 - vi / uni;
            sum_aoe += std::abs(p.yaw - f.gts[i].yaw);
        }
        const TpErrors e = tp_errors(frames);
        CHECK(e.ate == doctest::Approx(sum_ate / 8).epsilon(1e-9));
        CHECK(e.ase == doctest::Approx(sum_ase / 8).epsilon(1e-9));
        CHECK(e.aoe == doctest::Approx(sum_aoe / 8).epsilon(1e-9));
    }
}

TEST_CASE("composite score endpoints and regression fixture") {
    SUBCASE("perfect detector scores 1.0") {
        TpErrors zero;
        zero.match_count = 1;
        CHECK(composite_detection_score(1.0, zero) == doctest::Approx(1.0));
    }
    SUBCASE("zero AP with maximal errors scores 0.0") {
        TpErrors worst;
        worst.ate = 4.0;
        worst.ase = 1.0;
        worst.aoe = std::numbers::pi;
        CHECK(composite_detection_score(0.0, worst) == doctest::Approx(0.0));
    }
    SUBCASE("frozen fixture: mAP 0.72 with small normalized errors") {
        TpErrors e;
        e.ate = 0.0888 * 4.0;
        e.ase = 0.137;
        e.aoe = 0.0286 * std::numbers::pi;
        e.match_count = 1;
        CHECK(composite_detection_score(0.72, e) == doctest::Approx(0.7932).epsilon(2e-4));
    }
}

TEST_CASE("evaluate aggregates a coherent report") {
    Rng rng(102);
    const auto frames = self_eval_frames(rng, 3, 4);
    const EvalReport report = evaluate(frames);
    CHECK(report.map == doctest::Approx(1.0));
    CHECK(report.nds == doctest::Approx(1.0));
    CHECK(report.gt_count == 12);
    CHECK(report.pred_count == 12);
    CHECK(report.tp_count == 12);
    const std::string kv = report.to_key_values();
    CHECK(kv.find("mAP 1.000000") != std::string::npos);
    CHECK(kv.find("tp_count 12") != std::string::npos);
}
