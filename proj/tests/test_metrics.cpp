#include "entroboot/instancer.hpp"
#include "entroboot/metrics.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace entroboot;
using namespace testing;

namespace {

Instance box_instance(int x0, int y0, int x1, int y1)
{
    return Instance{0, BinaryMask(x1 - x0, y1 - y0, 1), BBox{x0, y0, x1, y1}, {}};
}

ScoredPrediction scored(int x0, int y0, int x1, int y1, double score)
{
    return ScoredPrediction{BBox{x0, y0, x1, y1}, BinaryMask(x1 - x0, y1 - y0, 1), score};
}

InstanceSet set_of(Dims d, std::vector<Instance> v)
{
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i].id = static_cast<int>(i) + 1;
    return InstanceSet{d, std::move(v)};
}

} // namespace

TEST_CASE("dice examples")
{
    const BinaryMask a = fill_rect(BinaryMask(6, 6, 0), 0, 0, 2, 2);
    CHECK(dice(a, a) == 1.0);
    CHECK(dice(a, fill_rect(BinaryMask(6, 6, 0), 3, 3, 5, 5)) == 0.0);
    CHECK(dice(a, fill_rect(BinaryMask(6, 6, 0), 1, 0, 3, 2)) == 0.5);
    CHECK(dice(BinaryMask(6, 6, 0), BinaryMask(6, 6, 0)) == 1.0);
    CHECK_THROWS_AS(dice(a, BinaryMask(5, 6, 0)), InvalidArgument);
}

TEST_CASE("iou examples")
{
    CHECK(iou(BBox{0, 0, 3, 3}, BBox{0, 0, 3, 3}) == 1.0);
    CHECK(iou(BBox{0, 0, 3, 3}, BBox{5, 5, 7, 7}) == 0.0);
    CHECK(iou(BBox{0, 0, 2, 2}, BBox{1, 0, 3, 2}) == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(iou(BinaryMask(4, 4, 0), BinaryMask(4, 4, 0)), DomainError);
}

TEST_CASE("iou and dice identity on random mask pairs")
{
    Rng rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
        const int w = 1 + static_cast<int>(rng.below(16)), h = 1 + static_cast<int>(rng.below(16));
        const BinaryMask a = random_mask(rng, w, h, rng.uniform());
        const BinaryMask b = random_mask(rng, w, h, rng.uniform());
        if (popcount(a) + popcount(b) == 0)
            continue;
        const double j = iou(a, b), d = dice(a, b);
        CHECK(j == iou(b, a));
        CHECK(d == dice(b, a));
        CHECK(j <= d + 1e-15);
        CHECK(std::abs(d - 2.0 * j / (1.0 + j)) < 1e-12);
    }
}

TEST_CASE("dice_curve")
{
    SUBCASE("indicator entropy")
    {
        const BinaryMask gt = fill_disk(BinaryMask(20, 20, 0), 10, 10, 5);
        const DiceCurve c = dice_curve(to_grid(gt), gt);
        REQUIRE(c.curve.samples.size() == 101);
        CHECK(c.peak_dice == 1.0);
        CHECK(c.peak_threshold == doctest::Approx(0.01));
        for (std::size_t i = 1; i < c.curve.samples.size(); ++i) {
            CHECK(c.curve.samples[i].threshold > c.curve.samples[i - 1].threshold);
            CHECK(c.curve.samples[i].value == 1.0);
        }
    }
    SUBCASE("constant 0.5")
    {
        const BinaryMask gt = fill_rect(BinaryMask(10, 10, 0), 0, 0, 4, 5);
        const DiceCurve c = dice_curve(ImageGrid(10, 10, 0.5), gt);
        for (const auto& s : c.curve.samples) {
            if (s.threshold <= 0.5 + 1e-12)
                CHECK(s.value == doctest::Approx(2.0 * 20 / (20 + 100)));
            else
                CHECK(s.value == 0.0);
            CHECK(s.value >= 0.0);
            CHECK(s.value <= 1.0);
        }
        CHECK(c.peak_threshold == 0.0);
    }
}

TEST_CASE("roc_auroc")
{
    const BinaryMask gt = fill_rect(BinaryMask(10, 10, 0), 2, 2, 6, 6);
    CHECK(roc_auroc(to_grid(gt), gt).auroc == 1.0);
    CHECK_THROWS_AS(roc_auroc(ImageGrid(10, 10, 0.1), BinaryMask(10, 10, 0)), DomainError);

    Rng rng(17);
    const ImageGrid noise = random_grid(rng, 400, 250);
    const BinaryMask labels = random_mask(rng, 400, 250, 0.3);
    CHECK(std::abs(roc_auroc(noise, labels).auroc - 0.5) < 0.02);
}

TEST_CASE("AUROC equals the Mann-Whitney statistic")
{
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const int w = 2 + static_cast<int>(rng.below(30)), h = 1 + static_cast<int>(rng.below(30));
        ImageGrid s(w, h, 0.0);
        const int levels = 1 + static_cast<int>(rng.below(12)); // coarse levels force ties
        for (std::size_t i = 0; i < s.size(); ++i)
            s[i] = static_cast<double>(rng.below(static_cast<std::uint64_t>(levels))) / levels;
        BinaryMask gt = random_mask(rng, w, h, rng.uniform(0.1, 0.9));
        gt[0] = 1;
        gt[1] = 0;
        const RocCurve r = roc_auroc(s, gt);
        REQUIRE(std::abs(r.auroc - brute_mann_whitney(s, gt)) < 1e-9);
        REQUIRE(r.points.front().fpr == 0.0);
        REQUIRE(r.points.front().tpr == 0.0);
        REQUIRE(r.points.back().fpr == 1.0);
        REQUIRE(r.points.back().tpr == 1.0);
        for (std::size_t i = 1; i < r.points.size(); ++i) {
            CHECK(r.points[i].fpr >= r.points[i - 1].fpr);
            CHECK(r.points[i].tpr >= r.points[i - 1].tpr);
        }
    }
}

TEST_CASE("AUROC is invariant under monotone transforms")
{
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const ImageGrid s = random_grid(rng, 30, 30);
        BinaryMask gt = random_mask(rng, 30, 30, 0.4);
        gt[0] = 1;
        gt[1] = 0;
        ImageGrid sq = s, lg = s;
        for (std::size_t i = 0; i < s.size(); ++i) {
            sq[i] = s[i] * s[i];
            lg[i] = std::log(s[i] + 1.0);
        }
        const double a = roc_auroc(s, gt).auroc;
        CHECK(roc_auroc(sq, gt).auroc == doctest::Approx(a).epsilon(1e-12));
        CHECK(roc_auroc(lg, gt).auroc == doctest::Approx(a).epsilon(1e-12));
    }
}

TEST_CASE("detection_rate examples")
{
    const Dims d{50, 50};
    const InstanceSet gt = set_of(d, {box_instance(0, 0, 10, 10), box_instance(20, 20, 30, 30)});
    CHECK(detection_rate(gt, gt, 0.5).rate == 1.0);
    CHECK(detection_rate(gt, gt, 0.99).rate == 1.0);
    CHECK(detection_rate(set_of(d, {}), gt, 0.5).rate == 0.0);
    CHECK_THROWS_AS(detection_rate(gt, set_of(d, {}), 0.5), DomainError);

    // One prediction spanning two adjacent ground-truth boxes, IoU 0.3 with each.
    const InstanceSet pair = set_of(d, {box_instance(0, 0, 6, 10), box_instance(14, 0, 20, 10)});
    const InstanceSet cluster = set_of(d, {box_instance(0, 0, 20, 10)});
    CHECK(iou(cluster.instances[0], pair.instances[0], IouMode::Box) == doctest::Approx(0.3));
    const DetectionReport low = detection_rate(cluster, pair, 0.25);
    CHECK(low.tp == 1);
    CHECK(low.rate == 0.5);
    CHECK(detection_rate(cluster, pair, 0.5).tp == 0);
}

TEST_CASE("detection curve is nonincreasing and tp is bounded")
{
    Rng rng(77);
    const Dims d{64, 64};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Instance> g, p;
        const int ng = 1 + static_cast<int>(rng.below(8)), np = static_cast<int>(rng.below(10));
        for (int i = 0; i < ng; ++i) {
            const int x = static_cast<int>(rng.below(50)), y = static_cast<int>(rng.below(50));
            g.push_back(box_instance(x, y, x + 4 + static_cast<int>(rng.below(10)), y + 4 + static_cast<int>(rng.below(10))));
        }
        for (int i = 0; i < np; ++i) {
            const int x = static_cast<int>(rng.below(50)), y = static_cast<int>(rng.below(50));
            p.push_back(box_instance(x, y, x + 4 + static_cast<int>(rng.below(10)), y + 4 + static_cast<int>(rng.below(10))));
        }
        const InstanceSet gs = set_of(d, g), ps = set_of(d, p);
        const LabelMap gl = gs.to_label_map();
        if (max_label(compact_labels(gl)) == 0)
            continue;
        const MetricCurve c = detection_curve(ps, compact_labels(gl), default_detection_alphas());
        REQUIRE(c.samples.size() == 11);
        for (std::size_t i = 1; i < c.samples.size(); ++i)
            CHECK(c.samples[i].value <= c.samples[i - 1].value);
        const DetectionReport r = detection_rate(ps, gs, 0.3);
        CHECK(r.tp <= r.n_gt);
        CHECK(r.rate == doctest::Approx(static_cast<double>(r.tp) / r.n_gt));
    }
}

TEST_CASE("average precision hand case")
{
    const Dims d{100, 20};
    const InstanceSet gt = set_of(d, {box_instance(0, 0, 10, 10), box_instance(50, 0, 60, 10)});
    const std::vector<ScoredPrediction> preds{scored(0, 0, 10, 10, 0.9), scored(80, 5, 90, 15, 0.8),
                                              scored(50, 0, 60, 10, 0.7)};
    CHECK(std::abs(average_precision(preds, gt, 0.5) - 0.8350) < 1e-4);
    CHECK(average_precision(preds, gt, 0.5) == doctest::Approx(0.834983498349835).epsilon(1e-12));
    CHECK(average_precision({}, gt, 0.5) == 0.0);
    CHECK(average_precision({scored(0, 0, 10, 10, 1.0), scored(50, 0, 60, 10, 1.0)}, gt, 0.5) == 1.0);
    CHECK_THROWS_AS(average_precision(preds, set_of(d, {}), 0.5), DomainError);
}

TEST_CASE("average precision by brute force over the recall grid")
{
    Rng rng(5150);
    const Dims d{80, 80};
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Instance> g;
        const int ng = 1 + static_cast<int>(rng.below(6));
        for (int i = 0; i < ng; ++i)
            g.push_back(box_instance(i * 13, 0, i * 13 + 10, 10));
        const InstanceSet gt = set_of(d, g);
        std::vector<ScoredPrediction> preds;
        std::vector<int> hit;
        const int np = static_cast<int>(rng.below(9));
        for (int i = 0; i < np; ++i) {
            const double s = static_cast<double>(rng.below(1000) + 1) / 1001.0;
            const int target = static_cast<int>(rng.below(static_cast<std::uint64_t>(ng) + 2));
            if (target < ng)
                preds.push_back(scored(target * 13, 0, target * 13 + 10, 10, s));
            else
                preds.push_back(scored(10, 40, 20, 50, s)); // matches nothing
        }
        // Oracle: walk predictions by score, a hit counts when its target is unclaimed.
        std::vector<std::size_t> order(preds.size());
        for (std::size_t i = 0; i < order.size(); ++i)
            order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
        std::vector<bool> claimed(static_cast<std::size_t>(ng), false);
        std::vector<double> rec, prec;
        int tp = 0;
        for (std::size_t k = 0; k < order.size(); ++k) {
            const auto& p = preds[order[k]];
            if (p.bbox.y0 == 0) {
                const auto t = static_cast<std::size_t>(p.bbox.x0 / 13);
                if (!claimed[t]) {
                    claimed[t] = true;
                    ++tp;
                }
            }
            rec.push_back(static_cast<double>(tp) / ng);
            prec.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
        }
        double ap = 0.0;
        for (int r = 0; r <= 100; ++r) {
            double best = 0.0;
            for (std::size_t k = 0; k < rec.size(); ++k)
                if (rec[k] >= r / 100.0 - 1e-12)
                    best = std::max(best, prec[k]);
            ap += best;
        }
        ap /= 101.0;
        REQUIRE(average_precision(preds, gt, 0.5) == doctest::Approx(ap).epsilon(1e-12));
    }
}

TEST_CASE("map_suite")
{
    const Dims d{100, 20};
    const InstanceSet gt = set_of(d, {box_instance(0, 0, 10, 10), box_instance(50, 0, 60, 10)});
    const MapSuite perfect = map_suite({scored(0, 0, 10, 10, 1.0), scored(50, 0, 60, 10, 1.0)}, gt);
    CHECK(perfect.map50 == 1.0);
    CHECK(perfect.map75 == 1.0);
    CHECK(perfect.map == 1.0);
    const MapSuite none = map_suite({}, gt);
    CHECK(none.map == 0.0);

    // A slightly offset box: AP nonincreasing in alpha, mAP <= mAP50.
    const std::vector<ScoredPrediction> off{scored(1, 1, 11, 11, 0.9), scored(50, 0, 60, 10, 0.5)};
    double prev = 1.0;
    for (int k = 0; k < 10; ++k) {
        const double ap = average_precision(off, gt, 0.5 + 0.05 * k);
        CHECK(ap <= prev);
        prev = ap;
    }
    const MapSuite m = map_suite(off, gt);
    CHECK(m.map <= m.map50);
    CHECK(m.map75 <= m.map50);

    const MapSuite masks = map_suite(off, gt, IouMode::Mask);
    CHECK(masks.map50 == doctest::Approx(m.map50));
}
