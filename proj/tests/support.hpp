#pragma once

// Brute-force reference implementations and random inputs shared by the
// unit tests. Everything here is deliberately naive.

#include "entroboot/random.hpp"
#include "entroboot/raster.hpp"
#include "entroboot/sparsify.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace testing {

using namespace entroboot;

inline BinaryMask random_mask(Rng& rng, int w, int h, double density)
{
    BinaryMask m(w, h, 0);
    for (std::size_t i = 0; i < m.size(); ++i)
        m[i] = rng.bernoulli(density) ? 1 : 0;
    return m;
}

inline ImageGrid random_grid(Rng& rng, int w, int h)
{
    ImageGrid g(w, h, 0.0);
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = rng.uniform();
    return g;
}

// Distance to the nearest background pixel, where everything outside the
// grid is background.
inline ImageGrid brute_edt(const BinaryMask& m)
{
    const int w = m.width(), h = m.height();
    ImageGrid out(w, h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!m.at(x, y))
                continue;
            double best = std::numeric_limits<double>::infinity();
            for (int by = -1; by <= h; ++by)
                for (int bx = -1; bx <= w; ++bx) {
                    const bool inside = bx >= 0 && by >= 0 && bx < w && by < h;
                    if (inside && m.at(bx, by))
                        continue;
                    const double d = std::hypot(bx - x, by - y);
                    if (d < best)
                        best = d;
                }
            out.at(x, y) = best;
        }
    return out;
}

// Recursive-free flood fill labelling in raster order of first pixel.
inline LabelMap flood_fill_labels(const BinaryMask& m, int connectivity)
{
    const int w = m.width(), h = m.height();
    LabelMap out(w, h, 0);
    std::int32_t next = 0;
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!m.at(x, y) || out.at(x, y))
                continue;
            ++next;
            out.at(x, y) = next;
            stack.assign(1, {x, y});
            while (!stack.empty()) {
                auto [cx, cy] = stack.back();
                stack.pop_back();
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if ((dx == 0 && dy == 0) || (connectivity == 4 && dx != 0 && dy != 0))
                            continue;
                        const int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h || !m.at(nx, ny) || out.at(nx, ny))
                            continue;
                        out.at(nx, ny) = next;
                        stack.push_back({nx, ny});
                    }
            }
        }
    return out;
}

inline BinaryMask fill_rect(BinaryMask m, int x0, int y0, int x1, int y1)
{
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
            m.at(x, y) = 1;
    return m;
}

inline BinaryMask fill_disk(BinaryMask m, int cx, int cy, int r)
{
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r)
                m.at(x, y) = 1;
    return m;
}

inline ImageGrid to_grid(const BinaryMask& m)
{
    ImageGrid g(m.dims(), 0.0);
    for (std::size_t i = 0; i < m.size(); ++i)
        g[i] = m[i];
    return g;
}

// Mann-Whitney U / (n1 n0) by all-pairs comparison, ties counting half.
inline double brute_mann_whitney(const ImageGrid& score, const BinaryMask& gt)
{
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < gt.size(); ++i)
        (gt[i] ? pos : neg).push_back(score[i]);
    double u = 0.0;
    for (double p : pos)
        for (double n : neg)
            u += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
    return u / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

} // namespace testing
