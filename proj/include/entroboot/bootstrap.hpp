#pragma once

// Entropy bootstrapping: a per-pixel probabilistic classifier trained on the
// sparse point labels, whose prediction entropy stands in for the nucleus
// pixel distribution. Also hosts the closed-form entropy-limit analysis and
// a Monte Carlo check of the sparse labelling model.

#include "entroboot/raster.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace entroboot {

/// Per-pixel posterior P(labelled nucleus | features), values in [0,1].
using ProbMap = ImageGrid;
/// Per-pixel binary entropy in nats, values in [0, ln 2].
using EntropyMap = ImageGrid;

inline constexpr std::size_t kFeatureCount = 3;
using FeatureVector = std::array<double, kFeatureCount>;

struct FeatureParams {
    double blur_sigma = 2.0;
    /// Side of the square window for the local standard deviation (odd).
    int std_window = 5;
};

/// raw intensity, gaussian-smoothed intensity, local standard deviation
struct FeatureImage {
    Dims dims;
    std::vector<FeatureVector> values;
};

FeatureImage extract_features(const ImageGrid& image, const FeatureParams& params = {});

struct FeatureRange {
    double lo = 0.0;
    double hi = 1.0;
};

/// Naive-Bayes model over histogrammed features.
struct PixelBayesModel {
    int bins = 32;
    double laplace_alpha = 1.0;
    std::array<FeatureRange, kFeatureCount> ranges{};
    /// likelihood[c][f][b] = P(bin b of feature f | class c); class 1 = labelled nucleus.
    std::array<std::array<std::vector<double>, kFeatureCount>, 2> likelihood{};
    /// prior[1] = P(C_L), prior[0] = 1 - prior[1].
    std::array<double, 2> prior{};
    std::array<std::size_t, 2> class_count{};

    int bin_of(std::size_t feature, double value) const;
};

PixelBayesModel fit_pixel_bayes(const FeatureImage& features, const BinaryMask& labels, int bins = 32,
                                double laplace_alpha = 1.0);

inline constexpr double kProbClamp = 1e-9;

ProbMap predict_prob_map(const PixelBayesModel& model, const FeatureImage& features);

/// Binary entropy in nats with 0 ln 0 = 0.
double binary_entropy(double p);
EntropyMap entropy_map(const ProbMap& p);

struct BootstrapParams {
    FeatureParams features;
    int bins = 32;
    double laplace_alpha = 1.0;
};

struct BootstrapResult {
    ProbMap prob;
    EntropyMap entropy;
    /// entropy rescaled to [0,1]; entropy_min/max are the constants used.
    ImageGrid normalized;
    double entropy_min = 0.0;
    double entropy_max = 0.0;
};

/// Fits on (image, sparse label mask) and predicts on the same image.
BootstrapResult bootstrap_entropy(const ImageGrid& image, const BinaryMask& label_mask,
                                  const BootstrapParams& params = {});

// --- entropy-limit analysis ----------------------------------------------

/// H = -e x ln e - e x ln x - (1 - e x) ln(1 - e x), with P(C_L) = e x.
double theory_exact(double epsilon, double x);
/// Dominant-term approximation -e ln(e) x.
double theory_approx(double epsilon, double x);

struct TheoryPoint {
    double epsilon = 0.0;
    double x = 0.0;
    double h_exact = 0.0;
    double h_approx = 0.0;
    /// Share of h_exact carried by the -e x ln e term.
    double dominant_fraction = 0.0;
};

TheoryPoint dominance_report(double epsilon, double x);

struct MonteCarloResult {
    double label_rate = 0.0;
    double entropy = 0.0;
    std::uint64_t positives = 0;
    std::uint64_t trials = 0;
};

/// Simulates the sparse labelling model: truth ~ Bernoulli(p_ct); nucleus
/// pixels are labelled with probability epsilon, background never.
MonteCarloResult monte_carlo_label_sim(double p_ct, double epsilon, std::uint64_t n_trials, std::uint64_t seed);

} // namespace entroboot
