#pragma once

// Weak point annotations derived from full instance masks: one dot per
// nucleus, optionally thinned out and displaced, rasterized as small disks.

#include "entroboot/raster.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace entroboot {

struct PointAnnotation {
    int x = 0;
    int y = 0;
    /// Instance the dot was drawn from; empty once jitter moved it off that instance.
    std::optional<std::int32_t> source_id;
    friend bool operator==(const PointAnnotation&, const PointAnnotation&) = default;
};

using PointAnnotationSet = std::vector<PointAnnotation>;

enum class JitterMode {
    /// Uniform over the lattice disk of radius jitter_max.
    Uniform,
    /// Isotropic gaussian with sigma = jitter_max / 2, resampled until it
    /// falls inside the disk of radius jitter_max.
    Gaussian,
};

struct SparsifyConfig {
    int radius = 3;
    double keep_fraction = 1.0;
    int jitter_max = 0;
    JitterMode jitter_mode = JitterMode::Uniform;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpsilonEstimate {
    std::size_t labeled_nucleus_pixels = 0;
    std::size_t total_nucleus_pixels = 0;
    double epsilon = 0.0;
};

PointAnnotationSet sample_points(const LabelMap& gt, const SparsifyConfig& config);

/// Union of lattice disks of the given radius around each point, clipped to dims.
BinaryMask rasterize_points(const PointAnnotationSet& points, int radius, Dims dims);

/// Fraction of ground-truth nucleus pixels covered by the label mask.
EpsilonEstimate estimate_epsilon(const BinaryMask& label_mask, const LabelMap& gt);

} // namespace entroboot
