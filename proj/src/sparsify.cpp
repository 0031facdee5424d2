#include "entroboot/sparsify.hpp"

#include "entroboot/random.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace entroboot {

void SparsifyConfig::validate() const
{
    if (radius < 1)
        throw InvalidArgument("sparsify radius must be >= 1");
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
        throw InvalidArgument("keep_fraction must lie in (0, 1]");
    if (jitter_max < 0)
        throw InvalidArgument("jitter_max must be >= 0");
}

PointAnnotationSet sample_points(const LabelMap& gt, const SparsifyConfig& config)
{
    config.validate();
    Rng rng(config.seed);

    const std::int32_t k = max_label(gt);
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(k) + 1);
    for (std::size_t p = 0; p < gt.size(); ++p)
        if (gt[p] > 0)
            members[static_cast<std::size_t>(gt[p])].push_back(p);

    PointAnnotationSet points;
    for (std::int32_t id = 1; id <= k; ++id) {
        const auto& pix = members[static_cast<std::size_t>(id)];
        if (pix.empty())
            continue;
        const std::size_t p = pix[rng.below(pix.size())];
        points.push_back({static_cast<int>(p % static_cast<std::size_t>(gt.width())),
                          static_cast<int>(p / static_cast<std::size_t>(gt.width())), id});
    }

    // Uniform subset of floor(keep * K), reported in source order.
    const auto keep = static_cast<std::size_t>(std::floor(config.keep_fraction * static_cast<double>(points.size())
                                                          + 1e-9));
    if (keep < points.size()) {
        std::vector<std::size_t> order(points.size());
        for (std::size_t i = 0; i < order.size(); ++i)
            order[i] = i;
        for (std::size_t i = 0; i < keep; ++i)
            std::swap(order[i], order[i + rng.below(order.size() - i)]);
        order.resize(keep);
        std::sort(order.begin(), order.end());
        PointAnnotationSet kept;
        kept.reserve(keep);
        for (std::size_t i : order)
            kept.push_back(points[i]);
        points = std::move(kept);
    }

    if (config.jitter_max > 0) {
        const auto disk = disk_offsets(config.jitter_max);
        const double sigma = config.jitter_max / 2.0;
        const int r2 = config.jitter_max * config.jitter_max;
        for (auto& pt : points) {
            int dx = 0;
            int dy = 0;
            if (config.jitter_mode == JitterMode::Uniform) {
                std::tie(dx, dy) = disk[rng.below(disk.size())];
            } else {
                do {
                    dx = static_cast<int>(std::lround(sigma * rng.normal()));
                    dy = static_cast<int>(std::lround(sigma * rng.normal()));
                } while (dx * dx + dy * dy > r2);
            }
            pt.x = std::clamp(pt.x + dx, 0, gt.width() - 1);
            pt.y = std::clamp(pt.y + dy, 0, gt.height() - 1);
            if (pt.source_id && gt.at(pt.x, pt.y) != *pt.source_id)
                pt.source_id.reset();
        }
    }
    return points;
}

BinaryMask rasterize_points(const PointAnnotationSet& points, int radius, Dims dims)
{
    if (radius < 1)
        throw InvalidArgument("rasterize_points: radius must be >= 1");
    BinaryMask mask(dims, 0);
    const auto disk = disk_offsets(radius);
    for (const auto& pt : points)
        for (const auto& [dx, dy] : disk)
            if (dims.contains(pt.x + dx, pt.y + dy))
                mask.at(pt.x + dx, pt.y + dy) = 1;
    return mask;
}

EpsilonEstimate estimate_epsilon(const BinaryMask& label_mask, const LabelMap& gt)
{
    if (label_mask.dims() != gt.dims())
        throw InvalidArgument("estimate_epsilon: dimension mismatch");
    EpsilonEstimate e;
    for (std::size_t p = 0; p < gt.size(); ++p) {
        if (gt[p] <= 0)
            continue;
        ++e.total_nucleus_pixels;
        if (label_mask[p])
            ++e.labeled_nucleus_pixels;
    }
    if (e.total_nucleus_pixels == 0)
        throw DomainError("undefined epsilon: ground truth has no nucleus pixels");
    e.epsilon = static_cast<double>(e.labeled_nucleus_pixels) / static_cast<double>(e.total_nucleus_pixels);
    return e;
}

} // namespace entroboot
