#include "entroboot/instancer.hpp"
#include "entroboot/metrics.hpp"
#include "entroboot/sparsify.hpp"
#include "entroboot/synth.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace entroboot;
using namespace testing;

namespace {

PointAnnotationSet random_points(Rng& rng, int n, Dims d)
{
    PointAnnotationSet pts;
    for (int i = 0; i < n; ++i)
        pts.push_back({static_cast<int>(rng.below(static_cast<std::uint64_t>(d.width))),
                       static_cast<int>(rng.below(static_cast<std::uint64_t>(d.height))), {}});
    return pts;
}

struct IdealCase {
    Scene scene;
    PointAnnotationSet points;
    ImageGrid entropy;
};

IdealCase ideal_case(std::uint64_t seed)
{
    SceneConfig sc;
    sc.seed = seed;
    IdealCase c{generate_scene(sc), {}, {}};
    SparsifyConfig sp;
    sp.seed = seed;
    c.points = sample_points(c.scene.labels, sp);
    c.entropy = to_grid(foreground(c.scene.labels));
    return c;
}

} // namespace

TEST_CASE("voronoi_regions examples")
{
    const Dims d{9, 5};
    const LabelMap one = voronoi_regions({{3, 3, {}}}, d);
    CHECK(max_label(one) == 0);

    const LabelMap two = voronoi_regions({{0, 2, {}}, {8, 2, {}}}, d);
    for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 4; ++x)
            CHECK(two.at(x, y) == 0);
        CHECK(two.at(4, y) == 0); // equidistant, lower index wins
        for (int x = 5; x < 9; ++x)
            CHECK(two.at(x, y) == 1);
    }
    CHECK_THROWS_AS(voronoi_regions({}, d), InvalidArgument);
}

TEST_CASE("voronoi_regions agrees with a brute-force nearest-point scan")
{
    Rng rng(99);
    for (int trial = 0; trial < 60; ++trial) {
        const Dims d{1 + static_cast<int>(rng.below(64)), 1 + static_cast<int>(rng.below(64))};
        const int n = 1 + static_cast<int>(rng.below(trial % 3 == 0 ? 80 : 12));
        const auto pts = random_points(rng, n, d);
        const LabelMap got = voronoi_regions(pts, d);
        for (int y = 0; y < d.height; ++y)
            for (int x = 0; x < d.width; ++x) {
                long best = -1;
                std::size_t arg = 0;
                for (std::size_t i = 0; i < pts.size(); ++i) {
                    const long dx = pts[i].x - x, dy = pts[i].y - y;
                    const long d2 = dx * dx + dy * dy;
                    if (best < 0 || d2 < best) {
                        best = d2;
                        arg = i;
                    }
                }
                REQUIRE(got.at(x, y) == static_cast<std::int32_t>(arg));
            }
    }
}

TEST_CASE("voronoi_edges separate the regions")
{
    CHECK(popcount(voronoi_edges(LabelMap(6, 6, 0))) == 0);

    LabelMap half(6, 4, 0);
    for (int y = 0; y < 4; ++y)
        for (int x = 3; x < 6; ++x)
            half.at(x, y) = 1;
    const BinaryMask e = voronoi_edges(half);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 6; ++x)
            CHECK((e.at(x, y) != 0) == (x == 2 || x == 3));

    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const Dims d{10 + static_cast<int>(rng.below(50)), 10 + static_cast<int>(rng.below(50))};
        const auto pts = random_points(rng, 2 + static_cast<int>(rng.below(15)), d);
        const LabelMap regions = voronoi_regions(pts, d);
        const BinaryMask edges = voronoi_edges(regions);
        BinaryMask interior(d, 0);
        for (std::size_t i = 0; i < interior.size(); ++i)
            interior[i] = edges[i] ? 0 : 1;
        // Every 4-connected piece of the non-edge pixels holds a single region.
        const LabelMap cc = flood_fill_labels(interior, 4);
        std::vector<std::int32_t> owner(static_cast<std::size_t>(max_label(cc)) + 1, -1);
        for (std::size_t i = 0; i < cc.size(); ++i) {
            if (!cc[i])
                continue;
            auto& o = owner[static_cast<std::size_t>(cc[i])];
            if (o < 0)
                o = regions[i];
            REQUIRE(o == regions[i]);
        }
    }
}

TEST_CASE("suppress_edges")
{
    Rng rng(6);
    const ImageGrid g = random_grid(rng, 8, 8);
    CHECK(suppress_edges(g, BinaryMask(8, 8, 0)) == g);
    const ImageGrid all = suppress_edges(g, BinaryMask(8, 8, 1));
    for (double v : all.values())
        CHECK(v == 0.0);
    BinaryMask edges(8, 8, 0);
    ImageGrid only(8, 8, 0.0);
    for (int i = 0; i < 8; ++i) {
        edges.at(i, i) = 1;
        only.at(i, i) = 0.7;
    }
    const ImageGrid cleared = suppress_edges(only, edges);
    for (double v : cleared.values())
        CHECK(v == 0.0);
}

TEST_CASE("adaptive_threshold")
{
    CHECK(popcount(adaptive_threshold(ImageGrid(30, 30, 0.4), 21, 0.02)) == 0);

    const ImageGrid disk = to_grid(fill_disk(BinaryMask(64, 64, 0), 32, 32, 12));
    const BinaryMask fg = adaptive_threshold(disk, 21, 0.02);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const int d2 = (x - 32) * (x - 32) + (y - 32) * (y - 32);
            if (d2 <= 11 * 11)
                CHECK(fg.at(x, y) == 1);
            if (d2 > 13 * 13)
                CHECK(fg.at(x, y) == 0);
        }

    Rng rng(12);
    const ImageGrid g = random_grid(rng, 40, 30);
    ImageGrid scaled = g;
    for (std::size_t i = 0; i < g.size(); ++i)
        scaled[i] = 3.0 * g[i] + 0.25;
    CHECK(adaptive_threshold(g, 9, 0.05) == adaptive_threshold(scaled, 9, 0.15));
    CHECK_THROWS_AS(adaptive_threshold(g, 8, 0.0), InvalidArgument);
}

TEST_CASE("extract_rois")
{
    CHECK(extract_rois(BinaryMask(10, 10, 0)).empty());
    BinaryMask m(30, 30, 0);
    m = fill_rect(m, 1, 1, 5, 5);
    m = fill_rect(m, 20, 20, 24, 26);
    const auto rois = extract_rois(m);
    REQUIRE(rois.size() == 2);
    CHECK(rois[0] == BBox{0, 0, 7, 7});
    CHECK(rois[1] == BBox{18, 18, 26, 28});

    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        const BinaryMask r = random_mask(rng, 25, 25, 0.3);
        CHECK(extract_rois(r).size() == static_cast<std::size_t>(max_label(flood_fill_labels(r, 8))));
    }
}

TEST_CASE("watershed splits two disks joined by a neck")
{
    BinaryMask m(60, 30, 0);
    m = fill_disk(m, 15, 15, 9);
    m = fill_disk(m, 44, 15, 9);
    for (int x = 15; x <= 44; ++x)
        m.at(x, 15) = 1;
    const BBox roi{0, 0, 60, 30};
    const ImageGrid flat(60, 30, 0.5);
    const LabelMap l = watershed_roi(flat, m, roi, InstancerConfig{});
    CHECK(max_label(l) == 2);
    const std::int32_t left = l.at(15, 15), right = l.at(44, 15);
    CHECK(left != right);
    CHECK(left > 0);
    CHECK(right > 0);
    for (int y = 0; y < 30; ++y)
        for (int x = 0; x < 60; ++x) {
            CHECK((l.at(x, y) > 0) == (m.at(x, y) != 0));
            if ((x - 15) * (x - 15) + (y - 15) * (y - 15) <= 81)
                CHECK(l.at(x, y) == left);
            if ((x - 44) * (x - 44) + (y - 15) * (y - 15) <= 81)
                CHECK(l.at(x, y) == right);
        }
}

TEST_CASE("watershed of a convex blob is the blob")
{
    const BinaryMask m = fill_disk(BinaryMask(30, 30, 0), 14, 15, 8);
    const LabelMap l = watershed_roi(ImageGrid(30, 30, 0.0), m, BBox{4, 5, 25, 26}, InstancerConfig{});
    CHECK(l.dims() == Dims{21, 21});
    CHECK(max_label(l) == 1);
    std::size_t n = 0;
    for (auto v : l.values())
        n += v > 0;
    CHECK(n == popcount(m));
}

TEST_CASE("watershed partitions the mask on random shapes")
{
    Rng rng(31);
    InstancerConfig c;
    for (int trial = 0; trial < 40; ++trial) {
        BinaryMask m(40, 40, 0);
        for (int k = 0; k < 3; ++k)
            m = fill_disk(m, 8 + static_cast<int>(rng.below(24)), 8 + static_cast<int>(rng.below(24)),
                          3 + static_cast<int>(rng.below(6)));
        const ImageGrid img = random_grid(rng, 40, 40);
        const LabelMap l = watershed_roi(img, m, BBox{0, 0, 40, 40}, c);
        for (std::size_t i = 0; i < m.size(); ++i)
            REQUIRE((l[i] > 0) == (m[i] != 0));
        std::set<std::int32_t> ids(l.values().begin(), l.values().end());
        CHECK(ids.size() == static_cast<std::size_t>(max_label(l)) + 1);
    }
}

TEST_CASE("match_to_points")
{
    LabelMap l(40, 20, 0);
    for (int y = 2; y < 8; ++y)
        for (int x = 2; x < 8; ++x)
            l.at(x, y) = 1;
    for (int y = 2; y < 8; ++y)
        for (int x = 30; x < 36; ++x)
            l.at(x, y) = 2;
    const InstanceSet inst = instances_from_labels(l);

    SUBCASE("point inside one mask")
    {
        const InstanceSet out = match_to_points(inst, {{4, 4, {}}}, 5.0);
        REQUIRE(out.instances.size() == 1);
        CHECK(out.instances[0].bbox == BBox{2, 2, 8, 8});
        CHECK(out.instances[0].matched_point == std::size_t{0});
    }
    SUBCASE("two points in one mask keep the mask once")
    {
        const InstanceSet out = match_to_points(inst, {{5, 5, {}}, {3, 3, {}}}, 5.0);
        REQUIRE(out.instances.size() == 1);
        CHECK(out.instances[0].matched_point == std::size_t{0});
    }
    SUBCASE("far artefacts are dropped")
    {
        const InstanceSet out = match_to_points(inst, {{4, 18, {}}}, 5.0);
        CHECK(out.instances.empty());
    }
    SUBCASE("nearby point matches by distance")
    {
        const InstanceSet out = match_to_points(inst, {{10, 4, {}}}, 5.0);
        REQUIRE(out.instances.size() == 1);
        CHECK(out.instances[0].bbox.x0 == 2);
    }
}

TEST_CASE("run_instancing on a zero map is empty")
{
    const InstanceSet out = run_instancing(ImageGrid(64, 64, 0.0), {{10, 10, {}}}, ImageGrid(64, 64, 0.5),
                                           InstancerConfig{});
    CHECK(out.instances.empty());
    CHECK_THROWS_AS(run_instancing(ImageGrid(64, 64, 0.0), {}, ImageGrid(64, 64, 0.5), InstancerConfig{}),
                    InvalidArgument);
}

TEST_CASE("run_instancing with the ideal entropy recovers every nucleus")
{
    for (std::uint64_t seed = 100; seed < 103; ++seed) {
        const IdealCase c = ideal_case(seed);
        const InstanceSet out = run_instancing(c.entropy, c.points, c.scene.image, InstancerConfig{});
        const InstanceSet gt = instances_from_labels(c.scene.labels);
        for (const auto& g : gt.instances) {
            double best = 0.0;
            for (const auto& p : out.instances)
                best = std::max(best, iou(p, g, IouMode::Mask));
            CHECK(best >= 0.5);
        }
    }
}

TEST_CASE("run_instancing invariants")
{
    const IdealCase c = ideal_case(7);
    const InstancerConfig cfg;
    InstancingStages st;
    const InstanceSet out = run_instancing(c.entropy, c.points, c.scene.image, cfg, &st);

    // deterministic
    const InstanceSet again = run_instancing(c.entropy, c.points, c.scene.image, cfg);
    REQUIRE(again.instances.size() == out.instances.size());
    for (std::size_t i = 0; i < out.instances.size(); ++i) {
        CHECK(again.instances[i].mask == out.instances[i].mask);
        CHECK(again.instances[i].bbox == out.instances[i].bbox);
        CHECK(again.instances[i].matched_point == out.instances[i].matched_point);
    }

    // no double counting
    std::set<std::size_t> used;
    for (const auto& inst : out.instances) {
        REQUIRE(inst.matched_point.has_value());
        CHECK(used.insert(*inst.matched_point).second);
        CHECK(inst.area() >= static_cast<std::size_t>(cfg.min_area));
        // tight bbox
        bool top = false, bottom = false, left = false, right = false;
        for (int y = 0; y < inst.bbox.height(); ++y)
            for (int x = 0; x < inst.bbox.width(); ++x)
                if (inst.mask.at(x, y)) {
                    top |= y == 0;
                    bottom |= y == inst.bbox.height() - 1;
                    left |= x == 0;
                    right |= x == inst.bbox.width() - 1;
                }
        CHECK((top && bottom && left && right));
    }
    CHECK(out.instances.size() <= c.points.size());

    // watershed pieces lie in the cleaned mask
    for (std::size_t i = 0; i < st.watershed.size(); ++i)
        if (st.watershed[i])
            CHECK(st.cleaned[i] == 1);

    // Voronoi separation: away from the edge band each instance has one region.
    PointAnnotationSet sorted = c.points;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return std::tie(a.y, a.x) < std::tie(b.y, b.x); });
    const LabelMap regions = voronoi_regions(sorted, c.entropy.dims());
    for (const auto& inst : out.instances) {
        std::set<std::int32_t> seen;
        for (int y = inst.bbox.y0; y < inst.bbox.y1; ++y)
            for (int x = inst.bbox.x0; x < inst.bbox.x1; ++x)
                if (inst.covers(x, y) && !st.edges.at(x, y))
                    seen.insert(regions.at(x, y));
        CHECK(seen.size() <= 1);
    }
}

TEST_CASE("run_instancing ignores point order except for indices")
{
    const IdealCase c = ideal_case(11);
    const InstanceSet a = run_instancing(c.entropy, c.points, c.scene.image, InstancerConfig{});
    PointAnnotationSet shuffled = c.points;
    std::reverse(shuffled.begin(), shuffled.end());
    Rng rng(3);
    for (std::size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    const InstanceSet b = run_instancing(c.entropy, shuffled, c.scene.image, InstancerConfig{});
    REQUIRE(a.instances.size() == b.instances.size());
    for (std::size_t i = 0; i < a.instances.size(); ++i) {
        CHECK(a.instances[i].mask == b.instances[i].mask);
        CHECK(a.instances[i].bbox == b.instances[i].bbox);
        const auto& pa = c.points[*a.instances[i].matched_point];
        const auto& pb = shuffled[*b.instances[i].matched_point];
        CHECK(pa == pb);
    }
}

TEST_CASE("instancer config validation")
{
    InstancerConfig c;
    c.threshold_window = 20;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = InstancerConfig{};
    c.marker_dt_fraction = 1.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = InstancerConfig{};
    c.min_area = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}
