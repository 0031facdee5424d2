#include "entroboot/bootstrap.hpp"
#include "entroboot/sparsify.hpp"
#include "entroboot/synth.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace entroboot;
using namespace testing;

namespace {

FeatureImage one_feature_image(const std::vector<double>& intensity)
{
    FeatureImage f{Dims{static_cast<int>(intensity.size()), 1}, {}};
    for (double v : intensity)
        f.values.push_back({v, v, 0.0});
    return f;
}

} // namespace

TEST_CASE("extract_features on a constant image")
{
    const FeatureImage f = extract_features(ImageGrid(9, 7, 0.4));
    for (const auto& v : f.values) {
        CHECK(v[0] == doctest::Approx(0.4));
        CHECK(v[1] == doctest::Approx(0.4));
        CHECK(std::abs(v[2]) < 1e-6);
    }
}

TEST_CASE("extract_features local std peaks at a step edge")
{
    ImageGrid g(20, 20, 0.0);
    for (int y = 0; y < 20; ++y)
        for (int x = 10; x < 20; ++x)
            g.at(x, y) = 1.0;
    const FeatureImage f = extract_features(g);
    const double edge = f.values[g.index(9, 10)][2];
    CHECK(edge == doctest::Approx(f.values[g.index(10, 10)][2]));
    for (int x = 0; x < 20; ++x)
        CHECK(f.values[g.index(x, 10)][2] <= edge + 1e-12);
    CHECK(f.values[g.index(2, 10)][2] == doctest::Approx(0.0).scale(1e-6));
}

TEST_CASE("extract_features smoothed intensity within the image range")
{
    Rng rng(1);
    const ImageGrid g = random_grid(rng, 30, 25);
    double lo = 1, hi = 0;
    for (double v : g.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (const auto& v : extract_features(g).values) {
        CHECK(v[1] >= lo - 1e-12);
        CHECK(v[1] <= hi + 1e-12);
    }
}

TEST_CASE("fit_pixel_bayes on separable features")
{
    std::vector<double> v(200);
    BinaryMask lab(200, 1, 0);
    for (int i = 0; i < 200; ++i) {
        v[static_cast<std::size_t>(i)] = i < 100 ? 1.0 : 0.0;
        lab[static_cast<std::size_t>(i)] = i < 100 ? 1 : 0;
    }
    const FeatureImage f = one_feature_image(v);
    const PixelBayesModel m = fit_pixel_bayes(f, lab);
    CHECK(m.prior[1] == doctest::Approx(0.5));
    CHECK(m.prior[0] + m.prior[1] == doctest::Approx(1.0));
    for (int c = 0; c < 2; ++c)
        for (std::size_t ft = 0; ft < kFeatureCount; ++ft) {
            double s = 0.0;
            for (double l : m.likelihood[c][ft])
                s += l;
            CHECK(s == doctest::Approx(1.0));
        }
    // empty bin likelihood = alpha / (N + alpha * bins)
    CHECK(m.likelihood[1][0][10] == doctest::Approx(1.0 / (100.0 + 32.0)));
    const ProbMap p = predict_prob_map(m, f);
    CHECK(p[0] > 0.999);
    CHECK(p[150] < 0.001);
}

TEST_CASE("constant features give the smoothed closed-form posterior")
{
    // Every feature lands in one bin: likelihoods (20+1)/(20+32) and (80+1)/(80+32),
    // so odds = 0.25 * (21/52 / 81/112)^3.
    const FeatureImage f = one_feature_image(std::vector<double>(100, 0.3));
    BinaryMask lab(100, 1, 0);
    for (int i = 0; i < 20; ++i)
        lab[static_cast<std::size_t>(i)] = 1;
    const ProbMap p = predict_prob_map(fit_pixel_bayes(f, lab), f);
    for (double v : p.values())
        CHECK(v == doctest::Approx(0.0417140165627593).epsilon(1e-12));
}

TEST_CASE("posterior is monotone in the likelihood ratio")
{
    // Two bins on feature 0; more positives in the upper bin as the sweep proceeds.
    double prev = 0.0;
    for (int k = 1; k < 10; ++k) {
        std::vector<double> v(20);
        BinaryMask lab(20, 1, 0);
        for (int i = 0; i < 20; ++i)
            v[static_cast<std::size_t>(i)] = i < 10 ? 0.9 : 0.1;
        for (int i = 0; i < k; ++i)
            lab[static_cast<std::size_t>(i)] = 1;
        for (int i = 10; i < 10 + (10 - k); ++i)
            lab[static_cast<std::size_t>(i)] = 1;
        const FeatureImage f = one_feature_image(v);
        const PixelBayesModel m = fit_pixel_bayes(f, lab, 2, 1.0);
        const double p = predict_prob_map(m, f)[0];
        CHECK(p > prev);
        prev = p;
    }
}

TEST_CASE("fit_pixel_bayes rejects single-class labels")
{
    const FeatureImage f = one_feature_image(std::vector<double>(10, 0.5));
    CHECK_THROWS_AS(fit_pixel_bayes(f, BinaryMask(10, 1, 0)), InvalidArgument);
    CHECK_THROWS_AS(fit_pixel_bayes(f, BinaryMask(10, 1, 1)), InvalidArgument);
}

TEST_CASE("binary entropy values and symmetry")
{
    CHECK(binary_entropy(0.5) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
    CHECK(binary_entropy(0.0) == 0.0);
    CHECK(binary_entropy(1.0) == 0.0);
    CHECK(std::abs(binary_entropy(0.05) - 0.198515243345873) < 1e-12);
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) {
        const double p = rng.uniform();
        CHECK(binary_entropy(p) == binary_entropy(1.0 - p));
        CHECK(binary_entropy(p) >= 0.0);
        CHECK(binary_entropy(p) <= std::numbers::ln2 + 1e-15);
    }
}

TEST_CASE("bootstrap on a synthetic scene")
{
    SceneConfig sc;
    sc.seed = 4;
    const Scene s = generate_scene(sc);
    const auto pts = sample_points(s.labels, SparsifyConfig{});
    const BinaryMask lm = rasterize_points(pts, 3, s.labels.dims());
    const BootstrapResult r = bootstrap_entropy(s.image, lm);
    double mn = 0, mb = 0;
    std::size_t cn = 0, cb = 0;
    for (std::size_t i = 0; i < r.entropy.size(); ++i) {
        CHECK(r.prob[i] >= kProbClamp);
        CHECK(r.prob[i] <= 1.0 - kProbClamp);
        CHECK(r.entropy[i] >= 0.0);
        CHECK(r.entropy[i] <= std::numbers::ln2);
        CHECK(r.normalized[i] >= 0.0);
        CHECK(r.normalized[i] <= 1.0);
        (s.labels[i] ? mn : mb) += r.entropy[i];
        ++(s.labels[i] ? cn : cb);
    }
    CHECK(mn / static_cast<double>(cn) > mb / static_cast<double>(cb));
    CHECK(bootstrap_entropy(s.image, lm).entropy == r.entropy);
}

TEST_CASE("closed-form entropy values")
{
    CHECK(std::abs(theory_exact(0.05, 1.0) - 0.198515243345873) < 1e-9);
    CHECK(std::abs(theory_exact(0.01, 1.0) - 0.0560015343548473) < 1e-9);
    CHECK(theory_exact(0.05, 0.0) == 0.0);
    CHECK(std::abs(theory_approx(0.05, 1.0) - 0.149786613677700) < 1e-9);
    CHECK(theory_approx(0.05, 0.0) == 0.0);
    CHECK(std::abs(theory_approx(1.0 / std::numbers::e, 1.0) - 0.367879441171442) < 1e-12);
    CHECK(std::abs(dominance_report(1e-6, 1.0).dominant_fraction - 0.932503201301377) < 1e-9);
    CHECK(std::abs(dominance_report(1e-6, 0.1).dominant_fraction - 0.807070534013775) < 1e-9);
    CHECK_THROWS_AS(theory_exact(0.0, 0.5), InvalidArgument);
    CHECK_THROWS_AS(dominance_report(0.1, 0.0), InvalidArgument);
}

TEST_CASE("exact entropy bounds the dominant term below 1/e")
{
    for (int i = 1; i <= 100; ++i) {
        const double eps = (1.0 / std::numbers::e) * i / 101.0;
        for (int j = 1; j <= 100; ++j) {
            const double x = j / 100.0;
            const TheoryPoint t = dominance_report(eps, x);
            CHECK(t.h_exact >= t.h_approx);
            CHECK(t.h_approx >= 0.0);
            CHECK(t.dominant_fraction >= 0.0);
            CHECK(t.dominant_fraction <= 1.0);
        }
    }
}

TEST_CASE("dominant fraction rises toward 1 as epsilon shrinks")
{
    for (int j = 1; j <= 10; ++j) {
        const double x = j / 10.0;
        double prev = 0.0;
        for (int k = 2; k <= 8; ++k) {
            const double f = dominance_report(std::pow(10.0, -k), x).dominant_fraction;
            CHECK(f > prev);
            CHECK(f < 1.0);
            prev = f;
        }
    }
}

TEST_CASE("monte carlo label simulation")
{
    CHECK(monte_carlo_label_sim(0.3, 0.0, 10000, 1).label_rate == 0.0);
    CHECK(monte_carlo_label_sim(1.0, 1.0, 10000, 1).label_rate == 1.0);
    const auto a = monte_carlo_label_sim(0.3, 0.05, 200000, 7);
    CHECK(a.positives == monte_carlo_label_sim(0.3, 0.05, 200000, 7).positives);
    const double sd = std::sqrt(0.015 * 0.985 / 200000.0);
    CHECK(std::abs(a.label_rate - 0.015) < 4 * sd);
    CHECK(a.entropy == doctest::Approx(binary_entropy(a.label_rate)));
    CHECK_THROWS_AS(monte_carlo_label_sim(0.3, 0.05, 0, 1), InvalidArgument);
}
