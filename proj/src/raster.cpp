#include "entroboot/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace entroboot {

namespace {

void require_finite(const ImageGrid& grid)
{
    for (double v : grid.pixels())
        if (!std::isfinite(v))
            throw InvalidArgument("grid contains non-finite values");
}

constexpr std::int64_t kFar = std::int64_t{1} << 50;

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher). f and d have
// the same length; d[q] = min_p (q - p)^2 + f[p].
void edt_1d(const std::vector<std::int64_t>& f, std::vector<std::int64_t>& d,
            std::vector<int>& v, std::vector<double>& z)
{
    const int n = static_cast<int>(f.size());
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    auto intersect = [&](int q, int p) {
        return (static_cast<double>(f[q] + std::int64_t{q} * q) - static_cast<double>(f[p] + std::int64_t{p} * p))
            / (2.0 * (q - p));
    };
    for (int q = 1; q < n; ++q) {
        double s = intersect(q, v[k]);
        while (s <= z[k]) {
            --k;
            s = intersect(q, v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    d.assign(n, 0);
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q)
            ++k;
        const std::int64_t dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

} // namespace

int reflect_index(int i, int n)
{
    if (n == 1)
        return 0;
    const int period = 2 * n;
    i %= period;
    if (i < 0)
        i += period;
    return i < n ? i : period - 1 - i;
}

std::vector<double> gaussian_kernel(double sigma, int radius)
{
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw InvalidArgument("gaussian sigma must be > 0");
    if (radius < 0)
        throw InvalidArgument("gaussian radius must be >= 0");
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (double& w : k)
        w /= sum;
    return k;
}

ImageGrid gaussian_blur(const ImageGrid& grid, double sigma)
{
    if (!(sigma > 0.0))
        throw InvalidArgument("gaussian_blur: sigma must be > 0");
    return gaussian_blur(grid, sigma, static_cast<int>(std::ceil(3.0 * sigma)));
}

ImageGrid gaussian_blur(const ImageGrid& grid, double sigma, int radius)
{
    require_finite(grid);
    const auto kernel = gaussian_kernel(sigma, radius);
    const int w = grid.width();
    const int h = grid.height();

    ImageGrid tmp(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[static_cast<std::size_t>(i + radius)] * grid.at(reflect_index(x + i, w), y);
            tmp.at(x, y) = acc;
        }
    }
    ImageGrid out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.at(x, reflect_index(y + i, h));
            out.at(x, y) = acc;
        }
    }
    return out;
}

LabelMap connected_components(const BinaryMask& mask, Connectivity connectivity)
{
    const int w = mask.width();
    const int h = mask.height();
    LabelMap labels(w, h, 0);
    std::int32_t next = 0;
    std::vector<std::pair<int, int>> stack;

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y) || labels.at(x, y) != 0)
                continue;
            ++next;
            labels.at(x, y) = next;
            stack.assign(1, {x, y});
            while (!stack.empty()) {
                const auto [cx, cy] = stack.back();
                stack.pop_back();
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0)
                            continue;
                        if (connectivity == Connectivity::Four && dx != 0 && dy != 0)
                            continue;
                        const int nx = cx + dx;
                        const int ny = cy + dy;
                        if (!mask.dims().contains(nx, ny) || !mask.at(nx, ny) || labels.at(nx, ny) != 0)
                            continue;
                        labels.at(nx, ny) = next;
                        stack.emplace_back(nx, ny);
                    }
                }
            }
        }
    }
    return labels;
}

Raster<std::int64_t> squared_distance_transform(const BinaryMask& mask)
{
    const int w = mask.width();
    const int h = mask.height();
    Raster<std::int64_t> dist(w, h, 0);

    std::vector<std::int64_t> f;
    std::vector<std::int64_t> d;
    std::vector<int> v;
    std::vector<double> z;

    // Columns, padded with one background pixel at each end.
    f.resize(static_cast<std::size_t>(h) + 2);
    for (int x = 0; x < w; ++x) {
        f.front() = 0;
        f.back() = 0;
        for (int y = 0; y < h; ++y)
            f[static_cast<std::size_t>(y) + 1] = mask.at(x, y) ? kFar : 0;
        edt_1d(f, d, v, z);
        for (int y = 0; y < h; ++y)
            dist.at(x, y) = d[static_cast<std::size_t>(y) + 1];
    }
    // Rows.
    f.resize(static_cast<std::size_t>(w) + 2);
    for (int y = 0; y < h; ++y) {
        f.front() = 0;
        f.back() = 0;
        for (int x = 0; x < w; ++x)
            f[static_cast<std::size_t>(x) + 1] = dist.at(x, y);
        edt_1d(f, d, v, z);
        for (int x = 0; x < w; ++x)
            dist.at(x, y) = d[static_cast<std::size_t>(x) + 1];
    }
    return dist;
}

ImageGrid distance_transform(const BinaryMask& mask)
{
    const auto sq = squared_distance_transform(mask);
    ImageGrid out(mask.width(), mask.height());
    for (std::size_t i = 0; i < sq.size(); ++i)
        out[i] = std::sqrt(static_cast<double>(sq[i]));
    return out;
}

std::vector<std::pair<int, int>> disk_offsets(int radius)
{
    if (radius < 0)
        throw InvalidArgument("disk radius must be >= 0");
    std::vector<std::pair<int, int>> offsets;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dx * dx + dy * dy <= radius * radius)
                offsets.emplace_back(dx, dy);
    return offsets;
}

BinaryMask morph(const BinaryMask& mask, MorphOp op, int radius)
{
    if (radius < 1)
        throw InvalidArgument("morph: radius must be >= 1");
    const auto se = disk_offsets(radius);
    const int w = mask.width();
    const int h = mask.height();
    BinaryMask out(w, h, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (op == MorphOp::Erode) {
                if (!mask.at(x, y))
                    continue;
                bool keep = true;
                for (const auto& [dx, dy] : se) {
                    const int nx = x + dx;
                    const int ny = y + dy;
                    if (!mask.dims().contains(nx, ny) || !mask.at(nx, ny)) {
                        keep = false;
                        break;
                    }
                }
                out.at(x, y) = keep ? 1 : 0;
            } else {
                bool hit = false;
                for (const auto& [dx, dy] : se) {
                    const int nx = x + dx;
                    const int ny = y + dy;
                    if (mask.dims().contains(nx, ny) && mask.at(nx, ny)) {
                        hit = true;
                        break;
                    }
                }
                out.at(x, y) = hit ? 1 : 0;
            }
        }
    }
    return out;
}

BinaryMask morph_open(const BinaryMask& mask, int radius)
{
    return morph(morph(mask, MorphOp::Erode, radius), MorphOp::Dilate, radius);
}

std::vector<LabeledBox> component_bboxes(const LabelMap& labels)
{
    const std::int32_t k = max_label(labels);
    std::vector<BBox> boxes(static_cast<std::size_t>(k) + 1,
                            BBox{labels.width(), labels.height(), -1, -1});
    std::vector<bool> seen(static_cast<std::size_t>(k) + 1, false);
    for (int y = 0; y < labels.height(); ++y) {
        for (int x = 0; x < labels.width(); ++x) {
            const std::int32_t id = labels.at(x, y);
            if (id <= 0)
                continue;
            auto& b = boxes[static_cast<std::size_t>(id)];
            seen[static_cast<std::size_t>(id)] = true;
            b.x0 = std::min(b.x0, x);
            b.y0 = std::min(b.y0, y);
            b.x1 = std::max(b.x1, x + 1);
            b.y1 = std::max(b.y1, y + 1);
        }
    }
    std::vector<LabeledBox> out;
    for (std::int32_t id = 1; id <= k; ++id)
        if (seen[static_cast<std::size_t>(id)])
            out.push_back({id, boxes[static_cast<std::size_t>(id)]});
    return out;
}

std::int32_t max_label(const LabelMap& labels)
{
    std::int32_t k = 0;
    for (std::int32_t id : labels.pixels())
        k = std::max(k, id);
    return k;
}

LabelMap compact_labels(const LabelMap& labels)
{
    const std::int32_t k = max_label(labels);
    std::vector<std::int32_t> present(static_cast<std::size_t>(k) + 1, 0);
    for (std::int32_t id : labels.pixels()) {
        if (id < 0)
            throw InvalidArgument("label map contains negative ids");
        present[static_cast<std::size_t>(id)] = 1;
    }
    std::vector<std::int32_t> remap(static_cast<std::size_t>(k) + 1, 0);
    std::int32_t next = 0;
    for (std::int32_t id = 1; id <= k; ++id)
        if (present[static_cast<std::size_t>(id)])
            remap[static_cast<std::size_t>(id)] = ++next;
    LabelMap out(labels.width(), labels.height(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i)
        out[i] = remap[static_cast<std::size_t>(labels[i])];
    return out;
}

std::size_t popcount(const BinaryMask& mask)
{
    std::size_t n = 0;
    for (auto b : mask.pixels())
        n += b ? 1 : 0;
    return n;
}

BinaryMask foreground(const LabelMap& labels)
{
    BinaryMask out(labels.width(), labels.height(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i)
        out[i] = labels[i] > 0 ? 1 : 0;
    return out;
}

BinaryMask select_label(const LabelMap& labels, std::int32_t id)
{
    BinaryMask out(labels.width(), labels.height(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i)
        out[i] = labels[i] == id ? 1 : 0;
    return out;
}

Normalized normalize_minmax(const ImageGrid& grid)
{
    require_finite(grid);
    const auto [lo, hi] = std::minmax_element(grid.pixels().begin(), grid.pixels().end());
    Normalized n{ImageGrid(grid.width(), grid.height(), 0.0), *lo, *hi};
    const double span = n.max - n.min;
    if (span > 0.0)
        for (std::size_t i = 0; i < grid.size(); ++i)
            n.grid[i] = (grid[i] - n.min) / span;
    return n;
}

} // namespace entroboot
