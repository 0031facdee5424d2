#pragma once

// Deterministic synthetic nucleus scenes: elliptical nuclei on a flat
// background with blur and additive gaussian noise, plus the matching
// ground-truth instance labels.

#include "entroboot/raster.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>

namespace entroboot {

struct SceneConfig {
    int width = 256;
    int height = 256;
    int nucleus_count = 40;
    double radius_min = 6.0;
    double radius_max = 16.0;
    /// Upper bound on ellipse eccentricity, in [0, 1).
    double eccentricity_max = 0.6;
    bool overlap_allowed = false;
    /// Minimum background gap, in pixels, between nuclei when overlap is
    /// not allowed. 0 only requires disjoint masks. Narrower gaps close
    /// under the instancer's blur and merge neighbours.
    int min_gap = 3;
    double nucleus_mean = 0.7;
    double background_mean = 0.3;
    /// Standard deviation of the per-nucleus fill intensity around nucleus_mean.
    double nucleus_spread = 0.0;
    double noise_sigma = 0.05;
    double blur_sigma = 1.0;
    std::uint64_t seed = 0;

    /// Throws InvalidArgument on a violated invariant.
    void validate() const;
};

/// Raised when a nucleus cannot be placed without overlap.
class PlacementError : public std::runtime_error {
public:
    PlacementError(int nucleus_index, const std::string& what)
        : std::runtime_error(what), nucleus_index_(nucleus_index) {}
    int nucleus_index() const { return nucleus_index_; }

private:
    int nucleus_index_;
};

struct Scene {
    ImageGrid image;
    LabelMap labels;
};

inline constexpr int kPlacementAttempts = 1000;

Scene generate_scene(const SceneConfig& config);

} // namespace entroboot
