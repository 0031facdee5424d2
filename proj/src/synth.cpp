#include "entroboot/synth.hpp"

#include "entroboot/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace entroboot {

namespace {

struct Ellipse {
    double cx = 0.0;
    double cy = 0.0;
    double a = 0.0; // semi-major
    double b = 0.0; // semi-minor
    double theta = 0.0;
};

std::vector<std::size_t> rasterize(const Ellipse& e, Dims dims)
{
    std::vector<std::size_t> pixels;
    const double c = std::cos(e.theta);
    const double s = std::sin(e.theta);
    const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - e.a)));
    const int x1 = std::min(dims.width - 1, static_cast<int>(std::ceil(e.cx + e.a)));
    const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - e.a)));
    const int y1 = std::min(dims.height - 1, static_cast<int>(std::ceil(e.cy + e.a)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - e.cx;
            const double dy = y - e.cy;
            const double u = (dx * c + dy * s) / e.a;
            const double v = (-dx * s + dy * c) / e.b;
            if (u * u + v * v <= 1.0)
                pixels.push_back(static_cast<std::size_t>(y) * static_cast<std::size_t>(dims.width)
                                 + static_cast<std::size_t>(x));
        }
    }
    return pixels;
}

Ellipse draw_ellipse(const SceneConfig& cfg, Rng& rng)
{
    Ellipse e;
    e.a = rng.uniform(cfg.radius_min, cfg.radius_max);
    const double ecc = rng.uniform(0.0, cfg.eccentricity_max);
    e.b = std::max(cfg.radius_min, e.a * std::sqrt(1.0 - ecc * ecc));
    e.theta = rng.uniform(0.0, std::numbers::pi);
    // Keep the whole ellipse inside the frame.
    e.cx = rng.uniform(e.a, cfg.width - 1.0 - e.a);
    e.cy = rng.uniform(e.a, cfg.height - 1.0 - e.a);
    return e;
}

} // namespace

void SceneConfig::validate() const
{
    if (width < 1 || height < 1)
        throw InvalidArgument("scene dimensions must be >= 1");
    if (nucleus_count < 0)
        throw InvalidArgument("nucleus_count must be >= 0");
    if (!(radius_min >= 1.0) || !(radius_min <= radius_max))
        throw InvalidArgument("radius range must satisfy 1 <= min <= max");
    if (2.0 * radius_max + 1.0 > std::min(width, height))
        throw InvalidArgument("radius_max too large for the scene dimensions");
    if (!(eccentricity_max >= 0.0 && eccentricity_max < 1.0))
        throw InvalidArgument("eccentricity_max must lie in [0, 1)");
    if (min_gap < 0)
        throw InvalidArgument("min_gap must be >= 0");
    if (nucleus_mean == background_mean)
        throw InvalidArgument("nucleus_mean must differ from background_mean");
    for (double v : {nucleus_mean, background_mean})
        if (!(v >= 0.0 && v <= 1.0))
            throw InvalidArgument("contrast intensities must lie in [0, 1]");
    if (!(noise_sigma >= 0.0) || !(blur_sigma >= 0.0) || !(nucleus_spread >= 0.0))
        throw InvalidArgument("noise_sigma, blur_sigma and nucleus_spread must be >= 0");
}

Scene generate_scene(const SceneConfig& config)
{
    config.validate();
    const Dims dims{config.width, config.height};
    Rng rng(config.seed);

    LabelMap labels(dims, 0);
    // Pixels no new nucleus may touch (existing nuclei grown by min_gap).
    BinaryMask blocked(dims, 0);
    const auto gap_disk = disk_offsets(config.min_gap);
    std::vector<double> fill;

    for (int i = 0; i < config.nucleus_count; ++i) {
        std::vector<std::size_t> pixels;
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
            pixels = rasterize(draw_ellipse(config, rng), dims);
            if (config.overlap_allowed) {
                placed = true;
                break;
            }
            const bool clear = std::none_of(pixels.begin(), pixels.end(),
                                            [&](std::size_t p) { return blocked[p] != 0; });
            if (clear) {
                placed = true;
                break;
            }
        }
        if (!placed)
            throw PlacementError(i, "could not place nucleus " + std::to_string(i) + " after "
                                        + std::to_string(kPlacementAttempts) + " attempts");

        const std::int32_t id = i + 1;
        for (std::size_t p : pixels)
            labels[p] = id;
        if (!config.overlap_allowed) {
            for (std::size_t p : pixels) {
                const int x = static_cast<int>(p % static_cast<std::size_t>(dims.width));
                const int y = static_cast<int>(p / static_cast<std::size_t>(dims.width));
                for (const auto& [dx, dy] : gap_disk)
                    if (dims.contains(x + dx, y + dy))
                        blocked.at(x + dx, y + dy) = 1;
            }
        }
        double level = config.nucleus_mean;
        if (config.nucleus_spread > 0.0)
            level = std::clamp(level + config.nucleus_spread * rng.normal(), 0.0, 1.0);
        fill.push_back(level);
    }

    // Later nuclei win contested pixels; an id fully covered by later ones
    // disappears, so compact.
    if (config.overlap_allowed) {
        std::vector<double> kept;
        std::vector<bool> present(fill.size() + 1, false);
        for (std::int32_t id : labels.pixels())
            present[static_cast<std::size_t>(id)] = true;
        for (std::size_t id = 1; id <= fill.size(); ++id)
            if (present[id])
                kept.push_back(fill[id - 1]);
        fill = std::move(kept);
        labels = compact_labels(labels);
    }

    ImageGrid image(dims, config.background_mean);
    for (std::size_t p = 0; p < labels.size(); ++p)
        if (labels[p] > 0)
            image[p] = fill[static_cast<std::size_t>(labels[p]) - 1];
    if (config.blur_sigma > 0.0)
        image = gaussian_blur(image, config.blur_sigma);
    if (config.noise_sigma > 0.0)
        for (double& v : image.pixels())
            v = std::clamp(v + config.noise_sigma * rng.normal(), 0.0, 1.0);
    return {std::move(image), std::move(labels)};
}

} // namespace entroboot
