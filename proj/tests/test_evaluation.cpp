#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "pmn/evaluation.hpp"

using namespace pmn;

namespace {

BoundingBox box(double x0, double y0, double x1, double y1) { return {x0, y0, x1, y1, 1.0, 0}; }

HoiDetection det(const std::string& image, BoundingBox h, BoundingBox o, HoiCategory c, double score) {
    return {image, h, o, c, score};
}

GroundTruthHoi gt(const std::string& image, BoundingBox h, BoundingBox o, HoiCategory c) {
    return {image, h, o, c};
}

const BoundingBox kHuman = box(0, 0, 10, 10);
const BoundingBox kObject = box(20, 0, 30, 10);

}  // namespace

TEST_CASE("IoU worked examples") {
    CHECK(iou(box(0, 0, 1, 1), box(0, 0, 1, 1)) == 1.0);
    CHECK(iou(box(0, 0, 1, 1), box(2, 2, 3, 3)) == 0.0);
    CHECK(iou(box(0, 0, 1, 1), box(0.5, 0, 1.5, 1)) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(iou(box(0, 0, 0, 0), box(0, 0, 0, 0)) == 0.0);
    CHECK(iou(box(0, 0, 1, 1), box(1, 0, 2, 1)) == 0.0);
}

TEST_CASE("IoU is symmetric and bounded") {
    Rng rng(1);
    for (int t = 0; t < 300; ++t) {
        const BoundingBox a = testing::random_box(rng, 0, 50);
        const BoundingBox b = testing::random_box(rng, 0, 50);
        const double v = iou(a, b);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(v == iou(b, a));
    }
}

TEST_CASE("matching worked examples") {
    const HoiCategory c{2, 0};
    const std::vector<GroundTruthHoi> one{gt("a", kHuman, kObject, c)};

    CHECK(match_detections(std::vector{det("a", kHuman, kObject, c, 0.9)}, one) == std::vector<bool>{true});

    const std::vector<HoiDetection> twins{det("a", kHuman, kObject, c, 0.4), det("a", kHuman, kObject, c, 0.8)};
    CHECK(match_detections(twins, one) == std::vector<bool>{false, true});

    // human IoU 0.6, object IoU 1/3
    const BoundingBox h6 = box(0, 0, 10, 6);
    const BoundingBox o3 = box(25, 0, 35, 10);
    CHECK(iou(h6, kHuman) == doctest::Approx(0.6));
    CHECK(match_detections(std::vector{det("a", h6, o3, c, 0.9)}, one) == std::vector<bool>{false});
    CHECK(match_detections(std::vector{det("a", h6, kObject, c, 0.9)}, one) == std::vector<bool>{true});
}

TEST_CASE("matching picks the ground truth with the best worse-box overlap") {
    const HoiCategory c{2, 0};
    // first GT is a near miss for the object, second fits both boxes exactly
    const std::vector<GroundTruthHoi> gts{gt("a", kHuman, box(21, 0, 31, 10), c), gt("a", kHuman, kObject, c)};
    const std::vector<HoiDetection> dets{det("a", kHuman, kObject, c, 0.9),
                                         det("a", kHuman, box(21, 0, 31, 10), c, 0.5)};
    CHECK(match_detections(dets, gts) == std::vector<bool>{true, true});
}

TEST_CASE("average precision worked examples") {
    auto ap = [](std::vector<std::pair<double, bool>> v, int n) {
        std::vector<ScoredFlag> flags;
        for (auto [s, f] : v) flags.push_back({s, f});
        return average_precision(flags, n);
    };
    CHECK(ap({{0.9, true}}, 1) == 1.0);
    CHECK(ap({{0.9, true}, {0.8, false}}, 1) == 1.0);
    CHECK(ap({{0.9, false}, {0.8, true}}, 1) == 0.5);
    CHECK(ap({{0.9, true}}, 2) == 0.5);
    CHECK(ap({}, 3) == 0.0);
    CHECK(ap({{0.9, true}}, 0) == 0.0);
    // precision envelope: ranks T F T with two GTs -> (1 + 2/3) / 2
    CHECK(ap({{0.9, true}, {0.8, false}, {0.7, true}}, 2) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
    // input order does not matter, scores do
    CHECK(ap({{0.7, true}, {0.9, true}, {0.8, false}}, 2) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("a perfect detector scores 1 and an empty one 0") {
    Rng rng(2);
    const auto corpus = testing::random_corpus(rng, 20);
    std::vector<HoiDetection> perfect;
    for (const auto& g : corpus.gts) perfect.push_back({g.image_id, g.human_box, g.object_box, g.category, 0.9});
    const EvalReport r = evaluate(perfect, corpus.gts);
    CHECK(r.full_map == 1.0);
    CHECK(evaluate({}, corpus.gts).full_map == 0.0);
}

TEST_CASE("evaluate agrees with the straight-line reference") {
    Rng rng(3);
    for (int t = 0; t < 300; ++t) {
        const auto corpus = testing::random_corpus(rng, 25);
        const EvalReport r = evaluate(corpus.dets, corpus.gts);
        const auto ref = testing::reference_evaluate(corpus.dets, corpus.gts);
        CHECK(std::abs(r.full_map - ref.full_map) <= 1e-9);
        for (const auto& [category, ap] : ref.per_category) {
            REQUIRE(r.per_category.count(category) == 1);
            CHECK(std::abs(r.per_category.at(category).ap - ap) <= 1e-9);
        }
    }
}

TEST_CASE("AP is invariant to monotone score transforms and detection order") {
    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
        auto corpus = testing::random_corpus(rng, 20);
        const double base = evaluate(corpus.dets, corpus.gts).full_map;
        auto squashed = corpus.dets;
        for (auto& d : squashed) d.score = std::sqrt(d.score) * 0.5;
        CHECK(evaluate(squashed, corpus.gts).full_map == base);
        auto shuffled = corpus.dets;
        std::reverse(shuffled.begin(), shuffled.end());
        CHECK(evaluate(shuffled, corpus.gts).full_map == base);
    }
}

TEST_CASE("a lowest-ranked false positive never raises AP, a new true positive never lowers it") {
    Rng rng(5);
    for (int t = 0; t < 100; ++t) {
        auto corpus = testing::random_corpus(rng, 15);
        if (corpus.gts.empty()) continue;
        for (auto& d : corpus.dets) d.score = 0.25 + 0.5 * d.score;
        const double base = evaluate(corpus.dets, corpus.gts).full_map;

        auto with_fp = corpus.dets;
        const auto& g = corpus.gts.front();
        with_fp.push_back({g.image_id, box(500, 500, 510, 510), box(600, 600, 610, 610), g.category, 0.0});
        CHECK(evaluate(with_fp, corpus.gts).full_map <= base + 1e-12);

        // A new TP must cover a ground truth nothing else can claim; an exact
        // duplicate of a covered one only displaces an existing match.
        for (const auto& free : corpus.gts) {
            const bool covered = std::any_of(corpus.dets.begin(), corpus.dets.end(), [&](const HoiDetection& d) {
                return d.image_id == free.image_id && d.category == free.category &&
                       iou(d.human_box, free.human_box) >= kMatchIou && iou(d.object_box, free.object_box) >= kMatchIou;
            });
            if (covered) continue;
            auto with_tp = corpus.dets;
            with_tp.push_back({free.image_id, free.human_box, free.object_box, free.category, 1.0});
            CHECK(evaluate(with_tp, corpus.gts).full_map >= base - 1e-12);
        }
    }
}

TEST_CASE("categories without ground truth are left out of the mean") {
    const std::vector<GroundTruthHoi> gts{gt("a", kHuman, kObject, {2, 0})};
    const std::vector<HoiDetection> dets{det("a", kHuman, kObject, {2, 0}, 0.9),
                                         det("a", kHuman, kObject, {3, 1}, 0.9)};
    const EvalReport r = evaluate(dets, gts);
    CHECK(r.full_map == 1.0);
    CHECK(r.num_full == 1);
}

TEST_CASE("rare and non-rare means follow the split") {
    CategorySplit split = CategorySplit::from_counts({{{2, 0}, 3}, {{2, 1}, 10}, {{3, 0}, 40}});
    CHECK(split.is_rare({2, 0}));
    CHECK_FALSE(split.is_rare({2, 1}));
    CHECK_FALSE(split.is_rare({3, 0}));

    const std::vector<GroundTruthHoi> gts{gt("a", kHuman, kObject, {2, 0}), gt("a", kHuman, kObject, {2, 1}),
                                          gt("a", kHuman, kObject, {3, 0})};
    const std::vector<HoiDetection> dets{det("a", kHuman, kObject, {2, 0}, 0.9),
                                         det("a", kHuman, kObject, {3, 0}, 0.9)};
    const EvalReport r = evaluate(dets, gts, split);
    CHECK(r.num_rare == 1);
    CHECK(r.num_non_rare == 2);
    CHECK(r.num_full == 3);
    CHECK(r.rare_map == 1.0);
    CHECK(r.non_rare_map == 0.5);
    CHECK(r.full_map == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(r.per_category.at({2, 0}).rare);
}

TEST_CASE("records outside the split vocabulary are rejected") {
    CategorySplit split;
    split.add({2, 0}, false);
    const std::vector<GroundTruthHoi> gts{gt("a", kHuman, kObject, {2, 0})};
    const std::vector<HoiDetection> stray{det("a", kHuman, kObject, {9, 9}, 0.5)};
    CHECK_THROWS_AS(evaluate(stray, gts, split), ValidationError);
    const std::vector<GroundTruthHoi> stray_gt{gt("a", kHuman, kObject, {9, 9})};
    CHECK_THROWS_AS(evaluate({}, stray_gt, split), ValidationError);
}

TEST_CASE("split derived from training annotations uses the < 10 rule") {
    std::vector<GroundTruthHoi> train;
    for (int i = 0; i < 9; ++i) train.push_back(gt("t", kHuman, kObject, {2, 0}));
    for (int i = 0; i < 10; ++i) train.push_back(gt("t", kHuman, kObject, {2, 1}));
    const CategorySplit s = CategorySplit::from_ground_truth(train);
    CHECK(s.is_rare({2, 0}));
    CHECK_FALSE(s.is_rare({2, 1}));
    CHECK(s.categories().size() == 2);
}

TEST_CASE("ranking order is total and score-first") {
    const HoiDetection a = det("b", kHuman, kObject, {2, 0}, 0.9);
    const HoiDetection b = det("a", kHuman, kObject, {2, 0}, 0.5);
    const HoiDetection c = det("a", kHuman, kObject, {2, 0}, 0.9);
    CHECK(ranks_before(a, b));
    CHECK_FALSE(ranks_before(b, a));
    CHECK(ranks_before(c, a) != ranks_before(a, c));
    CHECK_FALSE(ranks_before(a, a));
}
