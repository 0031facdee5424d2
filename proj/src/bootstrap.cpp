#include "entroboot/bootstrap.hpp"

#include "entroboot/random.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace entroboot {

namespace {

// x ln x with the 0 ln 0 = 0 convention.
double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

void check_theory_domain(double epsilon, double x)
{
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw InvalidArgument("epsilon must lie in (0, 1)");
    if (!(x >= 0.0 && x <= 1.0))
        throw InvalidArgument("x must lie in [0, 1]");
}

constexpr std::uint64_t kMonteCarloBlock = 1u << 16;

} // namespace

FeatureImage extract_features(const ImageGrid& image, const FeatureParams& params)
{
    if (params.std_window < 1 || params.std_window % 2 == 0)
        throw InvalidArgument("std_window must be odd and >= 1");
    const int w = image.width();
    const int h = image.height();
    const ImageGrid smooth = gaussian_blur(image, params.blur_sigma);
    const int r = params.std_window / 2;
    const double n = static_cast<double>(params.std_window) * params.std_window;

    FeatureImage f{image.dims(), std::vector<FeatureVector>(image.size())};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sum = 0.0;
            double sum2 = 0.0;
            for (int dy = -r; dy <= r; ++dy) {
                const int yy = reflect_index(y + dy, h);
                for (int dx = -r; dx <= r; ++dx) {
                    const double v = image.at(reflect_index(x + dx, w), yy);
                    sum += v;
                    sum2 += v * v;
                }
            }
            const double mean = sum / n;
            const double var = std::max(0.0, sum2 / n - mean * mean);
            const std::size_t i = image.index(x, y);
            f.values[i] = {image[i], smooth[i], std::sqrt(var)};
        }
    }
    return f;
}

int PixelBayesModel::bin_of(std::size_t feature, double value) const
{
    const auto& r = ranges[feature];
    const double t = (value - r.lo) / (r.hi - r.lo);
    const int b = static_cast<int>(std::floor(t * bins));
    return std::clamp(b, 0, bins - 1);
}

PixelBayesModel fit_pixel_bayes(const FeatureImage& features, const BinaryMask& labels, int bins,
                                double laplace_alpha)
{
    if (labels.dims() != features.dims)
        throw InvalidArgument("fit_pixel_bayes: dimension mismatch");
    if (bins < 1)
        throw InvalidArgument("fit_pixel_bayes: bins must be >= 1");
    if (!(laplace_alpha > 0.0))
        throw InvalidArgument("fit_pixel_bayes: laplace_alpha must be > 0");

    PixelBayesModel m;
    m.bins = bins;
    m.laplace_alpha = laplace_alpha;
    for (std::size_t i = 0; i < labels.size(); ++i)
        ++m.class_count[labels[i] ? 1 : 0];
    if (m.class_count[0] == 0 || m.class_count[1] == 0)
        throw InvalidArgument("fit_pixel_bayes: labels must contain both classes");

    // Intensity features live on [0,1]; the local std on [0, observed max].
    double std_max = 0.0;
    for (const auto& v : features.values)
        std_max = std::max(std_max, v[2]);
    m.ranges = {FeatureRange{0.0, 1.0}, FeatureRange{0.0, 1.0}, FeatureRange{0.0, std_max > 0.0 ? std_max : 1.0}};

    std::array<std::array<std::vector<double>, kFeatureCount>, 2> counts;
    for (auto& per_class : counts)
        for (auto& hist : per_class)
            hist.assign(static_cast<std::size_t>(bins), 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int c = labels[i] ? 1 : 0;
        for (std::size_t f = 0; f < kFeatureCount; ++f)
            counts[c][f][static_cast<std::size_t>(m.bin_of(f, features.values[i][f]))] += 1.0;
    }
    for (int c = 0; c < 2; ++c) {
        const double denom = static_cast<double>(m.class_count[c]) + laplace_alpha * bins;
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            m.likelihood[c][f].resize(static_cast<std::size_t>(bins));
            for (int b = 0; b < bins; ++b)
                m.likelihood[c][f][static_cast<std::size_t>(b)] = (counts[c][f][static_cast<std::size_t>(b)] + laplace_alpha) / denom;
        }
    }
    const double total = static_cast<double>(labels.size());
    m.prior[1] = static_cast<double>(m.class_count[1]) / total;
    m.prior[0] = 1.0 - m.prior[1];
    return m;
}

ProbMap predict_prob_map(const PixelBayesModel& model, const FeatureImage& features)
{
    ProbMap p(features.dims, 0.0);
    const double prior_logit = std::log(model.prior[1]) - std::log(model.prior[0]);
    for (std::size_t i = 0; i < features.values.size(); ++i) {
        double evidence = 0.0;
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            const auto b = static_cast<std::size_t>(model.bin_of(f, features.values[i][f]));
            evidence += std::log(model.likelihood[1][f][b]) - std::log(model.likelihood[0][f][b]);
        }
        const double logit = prior_logit + evidence;
        const double post = 1.0 / (1.0 + std::exp(-logit));
        p[i] = std::clamp(post, kProbClamp, 1.0 - kProbClamp);
    }
    return p;
}

double binary_entropy(double p)
{
    if (!(p >= 0.0 && p <= 1.0))
        throw InvalidArgument("binary_entropy: p must lie in [0, 1]");
    // Evaluate on min(p, 1-p) so H(p) == H(1-p) bit for bit.
    const double q = std::min(p, 1.0 - p);
    return -xlogx(q) - xlogx(1.0 - q);
}

EntropyMap entropy_map(const ProbMap& p)
{
    EntropyMap h(p.dims(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
        h[i] = binary_entropy(p[i]);
    return h;
}

BootstrapResult bootstrap_entropy(const ImageGrid& image, const BinaryMask& label_mask, const BootstrapParams& params)
{
    const auto features = extract_features(image, params.features);
    const auto model = fit_pixel_bayes(features, label_mask, params.bins, params.laplace_alpha);
    BootstrapResult r;
    r.prob = predict_prob_map(model, features);
    r.entropy = entropy_map(r.prob);
    auto n = normalize_minmax(r.entropy);
    r.normalized = std::move(n.grid);
    r.entropy_min = n.min;
    r.entropy_max = n.max;
    return r;
}

double theory_exact(double epsilon, double x)
{
    check_theory_domain(epsilon, x);
    const double pl = epsilon * x;
    if (pl >= 1.0)
        throw InvalidArgument("theory_exact: epsilon * x must be < 1");
    // -ex ln e - ex ln x - (1 - ex) ln(1 - ex)
    return -pl * std::log(epsilon) - epsilon * xlogx(x) - (1.0 - pl) * std::log1p(-pl);
}

double theory_approx(double epsilon, double x)
{
    check_theory_domain(epsilon, x);
    return -epsilon * std::log(epsilon) * x;
}

TheoryPoint dominance_report(double epsilon, double x)
{
    check_theory_domain(epsilon, x);
    if (!(x > 0.0))
        throw InvalidArgument("dominance_report: x must be > 0");
    TheoryPoint t;
    t.epsilon = epsilon;
    t.x = x;
    t.h_exact = theory_exact(epsilon, x);
    t.h_approx = theory_approx(epsilon, x);
    t.dominant_fraction = t.h_approx / t.h_exact;
    return t;
}

MonteCarloResult monte_carlo_label_sim(double p_ct, double epsilon, std::uint64_t n_trials, std::uint64_t seed)
{
    if (n_trials < 1)
        throw InvalidArgument("monte_carlo_label_sim: n_trials must be >= 1");
    if (!(p_ct >= 0.0 && p_ct <= 1.0) || !(epsilon >= 0.0 && epsilon <= 1.0))
        throw InvalidArgument("monte_carlo_label_sim: probabilities must lie in [0, 1]");

    MonteCarloResult r;
    r.trials = n_trials;
    const std::uint64_t blocks = (n_trials + kMonteCarloBlock - 1) / kMonteCarloBlock;
    for (std::uint64_t b = 0; b < blocks; ++b) {
        Rng rng(splitmix64(seed) ^ splitmix64(b + 1));
        const std::uint64_t n = std::min(kMonteCarloBlock, n_trials - b * kMonteCarloBlock);
        for (std::uint64_t i = 0; i < n; ++i) {
            const bool nucleus = rng.uniform() < p_ct;
            const bool label_draw = rng.uniform() < epsilon;
            if (nucleus && label_draw)
                ++r.positives;
        }
    }
    r.label_rate = static_cast<double>(r.positives) / static_cast<double>(n_trials);
    r.entropy = binary_entropy(r.label_rate);
    return r;
}

} // namespace entroboot
