#include "entroboot/instancer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <tuple>

namespace entroboot {

namespace {

// Uniform bucket grid over the point set for exact nearest-point queries.
class PointGrid {
public:
    PointGrid(const PointAnnotationSet& points, Dims dims) : points_(points)
    {
        const double per_point = static_cast<double>(dims.area()) / static_cast<double>(points.size());
        cell_ = std::max(4, static_cast<int>(std::ceil(std::sqrt(per_point))));
        cols_ = (dims.width + cell_ - 1) / cell_;
        rows_ = (dims.height + cell_ - 1) / cell_;
        buckets_.resize(static_cast<std::size_t>(cols_) * static_cast<std::size_t>(rows_));
        for (std::size_t i = 0; i < points.size(); ++i) {
            const int cx = std::clamp(points[i].x / cell_, 0, cols_ - 1);
            const int cy = std::clamp(points[i].y / cell_, 0, rows_ - 1);
            buckets_[bucket(cx, cy)].push_back(i);
        }
    }

    // Index of the nearest point, ties to the lower index.
    std::size_t nearest(int x, int y) const
    {
        const int cx = std::clamp(x / cell_, 0, cols_ - 1);
        const int cy = std::clamp(y / cell_, 0, rows_ - 1);
        std::int64_t best_d2 = std::numeric_limits<std::int64_t>::max();
        std::size_t best = 0;
        const int max_ring = std::max(cols_, rows_);
        for (int ring = 0; ring <= max_ring; ++ring) {
            // Every point in ring r or beyond is at least (r-1)*cell away.
            if (ring > 0) {
                const std::int64_t bound = static_cast<std::int64_t>(ring - 1) * cell_;
                if (bound * bound > best_d2)
                    break;
            }
            for (int gy = cy - ring; gy <= cy + ring; ++gy) {
                if (gy < 0 || gy >= rows_)
                    continue;
                const bool edge_row = gy == cy - ring || gy == cy + ring;
                for (int gx = cx - ring; gx <= cx + ring; ++gx) {
                    if (gx < 0 || gx >= cols_)
                        continue;
                    if (!edge_row && gx != cx - ring && gx != cx + ring)
                        continue;
                    for (std::size_t i : buckets_[bucket(gx, gy)]) {
                        const std::int64_t dx = points_[i].x - x;
                        const std::int64_t dy = points_[i].y - y;
                        const std::int64_t d2 = dx * dx + dy * dy;
                        if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
                            best_d2 = d2;
                            best = i;
                        }
                    }
                }
            }
        }
        return best;
    }

private:
    std::size_t bucket(int cx, int cy) const
    {
        return static_cast<std::size_t>(cy) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(cx);
    }

    const PointAnnotationSet& points_;
    int cell_ = 1;
    int cols_ = 1;
    int rows_ = 1;
    std::vector<std::vector<std::size_t>> buckets_;
};

BinaryMask crop(const BinaryMask& mask, const BBox& box)
{
    BinaryMask out(box.width(), box.height(), 0);
    for (int y = box.y0; y < box.y1; ++y)
        for (int x = box.x0; x < box.x1; ++x)
            out.at(x - box.x0, y - box.y0) = mask.at(x, y);
    return out;
}

// Tight instance from the pixels of `id` in a label map cropped at `origin`.
Instance make_instance(const LabelMap& local, std::int32_t id, int origin_x, int origin_y)
{
    BBox b{local.width(), local.height(), -1, -1};
    for (int y = 0; y < local.height(); ++y)
        for (int x = 0; x < local.width(); ++x)
            if (local.at(x, y) == id) {
                b.x0 = std::min(b.x0, x);
                b.y0 = std::min(b.y0, y);
                b.x1 = std::max(b.x1, x + 1);
                b.y1 = std::max(b.y1, y + 1);
            }
    Instance inst;
    if (!b.valid())
        return inst;
    inst.mask = BinaryMask(b.width(), b.height(), 0);
    for (int y = b.y0; y < b.y1; ++y)
        for (int x = b.x0; x < b.x1; ++x)
            if (local.at(x, y) == id)
                inst.mask.at(x - b.x0, y - b.y0) = 1;
    inst.bbox = BBox{b.x0 + origin_x, b.y0 + origin_y, b.x1 + origin_x, b.y1 + origin_y};
    return inst;
}

double point_to_mask_distance(const Instance& inst, const PointAnnotation& pt)
{
    if (inst.covers(pt.x, pt.y))
        return 0.0;
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (int y = 0; y < inst.mask.height(); ++y)
        for (int x = 0; x < inst.mask.width(); ++x)
            if (inst.mask.at(x, y)) {
                const std::int64_t dx = inst.bbox.x0 + x - pt.x;
                const std::int64_t dy = inst.bbox.y0 + y - pt.y;
                best = std::min(best, dx * dx + dy * dy);
            }
    return std::sqrt(static_cast<double>(best));
}

// Lower bound on the distance from a point to anything inside a box.
double point_to_box_distance(const BBox& b, const PointAnnotation& pt)
{
    const double dx = std::max({0, b.x0 - pt.x, pt.x - (b.x1 - 1)});
    const double dy = std::max({0, b.y0 - pt.y, pt.y - (b.y1 - 1)});
    return std::hypot(dx, dy);
}

} // namespace

void InstancerConfig::validate() const
{
    if (!(blur_sigma > 0.0))
        throw InvalidArgument("instancer blur_sigma must be > 0");
    if (threshold_window < 3 || threshold_window % 2 == 0)
        throw InvalidArgument("threshold_window must be odd and >= 3");
    if (min_area < 1)
        throw InvalidArgument("min_area must be >= 1");
    if (open_radius < 0)
        throw InvalidArgument("open_radius must be >= 0");
    if (!(marker_dt_fraction > 0.0 && marker_dt_fraction < 1.0))
        throw InvalidArgument("marker_dt_fraction must lie in (0, 1)");
    if (!(match_max_dist >= 0.0))
        throw InvalidArgument("match_max_dist must be >= 0");
}

LabelMap InstanceSet::to_label_map() const
{
    LabelMap out(dims, 0);
    for (const auto& inst : instances)
        for (int y = 0; y < inst.mask.height(); ++y)
            for (int x = 0; x < inst.mask.width(); ++x)
                if (inst.mask.at(x, y))
                    out.at(inst.bbox.x0 + x, inst.bbox.y0 + y) = inst.id;
    return out;
}

InstanceSet instances_from_labels(const LabelMap& labels)
{
    InstanceSet set{labels.dims(), {}};
    for (const auto& lb : component_bboxes(labels)) {
        Instance inst;
        inst.id = lb.id;
        inst.bbox = lb.box;
        inst.mask = BinaryMask(lb.box.width(), lb.box.height(), 0);
        for (int y = lb.box.y0; y < lb.box.y1; ++y)
            for (int x = lb.box.x0; x < lb.box.x1; ++x)
                if (labels.at(x, y) == lb.id)
                    inst.mask.at(x - lb.box.x0, y - lb.box.y0) = 1;
        set.instances.push_back(std::move(inst));
    }
    return set;
}

LabelMap voronoi_regions(const PointAnnotationSet& points, Dims dims)
{
    if (points.empty())
        throw InvalidArgument("no seeds: voronoi_regions needs at least one point");
    LabelMap regions(dims, 0);
    const PointGrid grid(points, dims);
    for (int y = 0; y < dims.height; ++y)
        for (int x = 0; x < dims.width; ++x)
            regions.at(x, y) = static_cast<std::int32_t>(grid.nearest(x, y));
    return regions;
}

BinaryMask voronoi_edges(const LabelMap& regions)
{
    const int w = regions.width();
    const int h = regions.height();
    BinaryMask edges(w, h, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::int32_t id = regions.at(x, y);
            const bool differs = (x > 0 && regions.at(x - 1, y) != id) || (x + 1 < w && regions.at(x + 1, y) != id)
                || (y > 0 && regions.at(x, y - 1) != id) || (y + 1 < h && regions.at(x, y + 1) != id);
            edges.at(x, y) = differs ? 1 : 0;
        }
    }
    return edges;
}

ImageGrid suppress_edges(const ImageGrid& entropy, const BinaryMask& edges)
{
    if (entropy.dims() != edges.dims())
        throw InvalidArgument("suppress_edges: dimension mismatch");
    ImageGrid out = entropy;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (edges[i])
            out[i] = 0.0;
    return out;
}

BinaryMask adaptive_threshold(const ImageGrid& grid, int window, double offset)
{
    if (window < 3 || window % 2 == 0)
        throw InvalidArgument("adaptive_threshold: window must be odd and >= 3");
    const ImageGrid local = gaussian_blur(grid, window / 6.0, window / 2);
    const double floor = *std::min_element(grid.pixels().begin(), grid.pixels().end()) + offset;
    BinaryMask out(grid.dims(), 0);
    for (std::size_t i = 0; i < grid.size(); ++i)
        out[i] = (grid[i] > local[i] - offset && grid[i] > floor) ? 1 : 0;
    return out;
}

std::vector<BBox> extract_rois(const BinaryMask& mask)
{
    std::vector<BBox> rois;
    for (const auto& lb : component_bboxes(connected_components(mask, Connectivity::Eight))) {
        BBox b = lb.box;
        b.x0 = std::max(0, b.x0 - kRoiMargin);
        b.y0 = std::max(0, b.y0 - kRoiMargin);
        b.x1 = std::min(mask.width(), b.x1 + kRoiMargin);
        b.y1 = std::min(mask.height(), b.y1 + kRoiMargin);
        rois.push_back(b);
    }
    return rois;
}

LabelMap watershed_roi(const ImageGrid& image_smoothed, const BinaryMask& mask, const BBox& roi,
                       const InstancerConfig& config)
{
    if (image_smoothed.dims() != mask.dims())
        throw InvalidArgument("watershed_roi: dimension mismatch");
    if (!roi.valid() || roi.x0 < 0 || roi.y0 < 0 || roi.x1 > mask.width() || roi.y1 > mask.height())
        throw InvalidArgument("watershed_roi: roi outside the image");
    const BinaryMask local = crop(mask, roi);
    if (popcount(local) == 0)
        throw InvalidArgument("watershed_roi: mask is empty inside roi");

    const int w = local.width();
    const int h = local.height();
    const ImageGrid dist = distance_transform(local);
    const double peak = *std::max_element(dist.pixels().begin(), dist.pixels().end());

    BinaryMask seeds(w, h, 0);
    for (std::size_t i = 0; i < local.size(); ++i)
        seeds[i] = (local[i] && dist[i] >= config.marker_dt_fraction * peak) ? 1 : 0;
    LabelMap labels = connected_components(seeds, Connectivity::Eight);
    if (max_label(labels) == 0) {
        // Degenerate region: the whole mask becomes one instance.
        for (std::size_t i = 0; i < local.size(); ++i)
            labels[i] = local[i] ? 1 : 0;
        return labels;
    }

    // Flood by ascending -distance, smoothed intensity as tiebreak, then
    // insertion order.
    using Entry = std::tuple<double, double, std::uint64_t, std::size_t, std::int32_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
    std::uint64_t seq = 0;
    auto push_neighbours = [&](int x, int y, std::int32_t label) {
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0)
                    continue;
                const int nx = x + dx;
                const int ny = y + dy;
                if (nx < 0 || ny < 0 || nx >= w || ny >= h)
                    continue;
                const std::size_t n = labels.index(nx, ny);
                if (!local[n] || labels[n] != 0)
                    continue;
                queue.emplace(-dist[n], image_smoothed.at(nx + roi.x0, ny + roi.y0), seq++, n, label);
            }
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (labels.at(x, y) != 0)
                push_neighbours(x, y, labels.at(x, y));
    while (!queue.empty()) {
        const auto [neg_dist, value, order, n, label] = queue.top();
        queue.pop();
        if (labels[n] != 0)
            continue;
        labels[n] = label;
        push_neighbours(static_cast<int>(n % static_cast<std::size_t>(w)), static_cast<int>(n / static_cast<std::size_t>(w)),
                        label);
    }
    // Mask pieces disconnected from every marker become their own instance.
    BinaryMask orphans(w, h, 0);
    for (std::size_t i = 0; i < local.size(); ++i)
        orphans[i] = (local[i] && labels[i] == 0) ? 1 : 0;
    if (popcount(orphans) > 0) {
        const LabelMap extra = connected_components(orphans, Connectivity::Eight);
        const std::int32_t base = max_label(labels);
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (extra[i] != 0)
                labels[i] = base + extra[i];
    }
    return labels;
}

InstanceSet match_to_points(const InstanceSet& instances, const PointAnnotationSet& points, double max_dist)
{
    struct Candidate {
        double cost;
        std::size_t point;
        std::size_t instance;
    };
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < points.size(); ++p) {
        for (std::size_t i = 0; i < instances.instances.size(); ++i) {
            const auto& inst = instances.instances[i];
            if (point_to_box_distance(inst.bbox, points[p]) > max_dist)
                continue;
            const double cost = point_to_mask_distance(inst, points[p]);
            if (cost <= max_dist)
                candidates.push_back({cost, p, i});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        return std::tie(a.cost, a.point, a.instance) < std::tie(b.cost, b.point, b.instance);
    });

    std::vector<std::optional<std::size_t>> owner(instances.instances.size());
    std::vector<bool> point_used(points.size(), false);
    for (const auto& c : candidates) {
        if (point_used[c.point] || owner[c.instance])
            continue;
        point_used[c.point] = true;
        owner[c.instance] = c.point;
    }

    InstanceSet out{instances.dims, {}};
    for (std::size_t i = 0; i < instances.instances.size(); ++i) {
        if (!owner[i])
            continue;
        Instance inst = instances.instances[i];
        inst.matched_point = owner[i];
        inst.id = static_cast<int>(out.instances.size()) + 1;
        out.instances.push_back(std::move(inst));
    }
    return out;
}

InstanceSet run_instancing(const ImageGrid& entropy, const PointAnnotationSet& points, const ImageGrid& image,
                           const InstancerConfig& config, InstancingStages* stages)
{
    config.validate();
    if (entropy.dims() != image.dims())
        throw InvalidArgument("run_instancing: entropy and image dimensions differ");
    if (points.empty())
        throw InvalidArgument("no seeds: run_instancing needs at least one point");
    for (const auto& pt : points)
        if (!entropy.dims().contains(pt.x, pt.y))
            throw InvalidArgument("run_instancing: point outside the image");
    const Dims dims = entropy.dims();

    // Work on points in raster order so the result does not depend on the
    // order they were supplied in; indices are mapped back at the end.
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(points[a].y, points[a].x) < std::tie(points[b].y, points[b].x);
    });
    PointAnnotationSet canonical;
    canonical.reserve(points.size());
    for (std::size_t i : order)
        canonical.push_back(points[i]);

    const ImageGrid blurred = gaussian_blur(normalize_minmax(entropy).grid, config.blur_sigma);
    const BinaryMask edges = voronoi_edges(voronoi_regions(canonical, dims));
    const ImageGrid suppressed = suppress_edges(blurred, edges);
    const BinaryMask thresholded = adaptive_threshold(suppressed, config.threshold_window, config.threshold_offset);

    BinaryMask opened = config.open_radius > 0 ? morph_open(thresholded, config.open_radius) : thresholded;
    const LabelMap opened_cc = connected_components(opened, Connectivity::Eight);
    std::vector<std::size_t> cc_area(static_cast<std::size_t>(max_label(opened_cc)) + 1, 0);
    for (std::int32_t id : opened_cc.pixels())
        ++cc_area[static_cast<std::size_t>(id)];
    BinaryMask cleaned(dims, 0);
    for (std::size_t i = 0; i < cleaned.size(); ++i)
        cleaned[i] = (opened_cc[i] > 0 && cc_area[static_cast<std::size_t>(opened_cc[i])] >= static_cast<std::size_t>(config.min_area)) ? 1 : 0;

    const ImageGrid smoothed_image = gaussian_blur(image, config.blur_sigma);
    const LabelMap components = connected_components(cleaned, Connectivity::Eight);
    const auto boxes = component_bboxes(components);

    InstanceSet raw{dims, {}};
    std::vector<BBox> rois;
    for (const auto& lb : boxes) {
        BBox roi{std::max(0, lb.box.x0 - kRoiMargin), std::max(0, lb.box.y0 - kRoiMargin),
                 std::min(dims.width, lb.box.x1 + kRoiMargin), std::min(dims.height, lb.box.y1 + kRoiMargin)};
        rois.push_back(roi);
        // Only this component's pixels take part, even where rois overlap.
        const BinaryMask component = select_label(components, lb.id);
        const LabelMap local = watershed_roi(smoothed_image, component, roi, config);
        const std::int32_t pieces = max_label(local);
        for (std::int32_t piece = 1; piece <= pieces; ++piece) {
            Instance inst = make_instance(local, piece, roi.x0, roi.y0);
            if (inst.mask.empty() || inst.area() < static_cast<std::size_t>(config.min_area))
                continue;
            inst.id = static_cast<int>(raw.instances.size()) + 1;
            raw.instances.push_back(std::move(inst));
        }
    }

    InstanceSet matched = match_to_points(raw, canonical, config.match_max_dist);
    for (auto& inst : matched.instances)
        inst.matched_point = order[*inst.matched_point];

    if (stages) {
        stages->blurred = blurred;
        stages->edges = edges;
        stages->suppressed = suppressed;
        stages->thresholded = thresholded;
        stages->cleaned = cleaned;
        stages->rois = std::move(rois);
        stages->watershed = raw.to_label_map();
        stages->matched = matched.to_label_map();
    }
    return matched;
}

} // namespace entroboot
