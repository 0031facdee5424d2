#pragma once

// Deterministic conversion of an entropy map plus point annotations into
// instance masks: blur, Voronoi edge suppression, gaussian adaptive
// thresholding, cleanup, per-ROI marker watershed, and point matching.

#include "entroboot/raster.hpp"
#include "entroboot/sparsify.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace entroboot {

struct InstancerConfig {
    double blur_sigma = 1.5;
    /// Odd window side of the adaptive threshold.
    int threshold_window = 21;
    /// Margin on the normalized entropy scale. A pixel is foreground when it
    /// exceeds both (local gaussian mean - offset) and (grid minimum + offset).
    double threshold_offset = 0.02;
    int min_area = 10;
    int open_radius = 1;
    double marker_dt_fraction = 0.5;
    double match_max_dist = 20.0;

    void validate() const;
};

struct Instance {
    int id = 0;
    /// Mask over bbox; dims == (bbox.width(), bbox.height()).
    BinaryMask mask;
    BBox bbox;
    std::optional<std::size_t> matched_point;

    std::size_t area() const { return popcount(mask); }
    bool covers(int x, int y) const { return bbox.contains(x, y) && mask.at(x - bbox.x0, y - bbox.y0); }
};

struct InstanceSet {
    Dims dims;
    std::vector<Instance> instances;

    /// Paints instances into a label map using each instance's id.
    LabelMap to_label_map() const;
};

/// Builds one instance per positive id of a label map (ids preserved).
InstanceSet instances_from_labels(const LabelMap& labels);

/// Nearest-point partition; region id = point index, ties to the lower index.
LabelMap voronoi_regions(const PointAnnotationSet& points, Dims dims);

/// Pixels with a 4-neighbour in a different region.
BinaryMask voronoi_edges(const LabelMap& regions);

/// Zeroes the grid on edge pixels.
ImageGrid suppress_edges(const ImageGrid& entropy, const BinaryMask& edges);

BinaryMask adaptive_threshold(const ImageGrid& grid, int window, double offset);

/// Bounding boxes of 8-connected components, grown by kRoiMargin and clipped.
inline constexpr int kRoiMargin = 2;
std::vector<BBox> extract_rois(const BinaryMask& mask);

/// Marker-controlled watershed of the mask inside roi. Returns a roi-sized
/// label map whose positive ids partition the mask pixels inside roi.
LabelMap watershed_roi(const ImageGrid& image_smoothed, const BinaryMask& mask, const BBox& roi,
                       const InstancerConfig& config);

/// Greedy ascending-cost one-to-one matching; unmatched instances are dropped.
InstanceSet match_to_points(const InstanceSet& instances, const PointAnnotationSet& points, double max_dist);

/// Intermediate products, one per pipeline panel.
struct InstancingStages {
    ImageGrid blurred;
    BinaryMask edges;
    ImageGrid suppressed;
    BinaryMask thresholded;
    BinaryMask cleaned;
    std::vector<BBox> rois;
    LabelMap watershed;
    LabelMap matched;
};

InstanceSet run_instancing(const ImageGrid& entropy, const PointAnnotationSet& points, const ImageGrid& image,
                           const InstancerConfig& config, InstancingStages* stages = nullptr);

} // namespace entroboot
