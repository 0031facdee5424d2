#pragma once

// Evaluation: Dice-vs-threshold curves, ROC/AUROC of an entropy map against
// a ground-truth foreground, IoU, detection rate and COCO-style AP.

#include "entroboot/instancer.hpp"
#include "entroboot/raster.hpp"

#include <vector>

namespace entroboot {

struct CurveSample {
    double threshold = 0.0;
    double value = 0.0;
};

/// Thresholds strictly increasing, values in [0,1].
struct MetricCurve {
    std::vector<CurveSample> samples;
};

/// Both masks empty counts as perfect agreement (1).
double dice(const BinaryMask& a, const BinaryMask& b);

struct DiceCurve {
    MetricCurve curve;
    double peak_threshold = 0.0;
    double peak_dice = 0.0;
};

/// Dice of (entropy >= t) against gt for t = 0, 1/(n-1), ..., 1. The peak
/// takes the lowest threshold among ties.
DiceCurve dice_curve(const ImageGrid& entropy, const BinaryMask& gt, int n_thresholds = 101);

struct RocPoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    /// Starts at (0,0) and ends at (1,1); one point per distinct score.
    std::vector<RocPoint> points;
    double auroc = 0.0;
};

/// Scores pixels by entropy (higher = nucleus). Tied scores are swept as a
/// group, which makes the area equal to the Mann-Whitney statistic.
RocCurve roc_auroc(const ImageGrid& entropy, const BinaryMask& gt);

/// Intersection over union; throws DomainError when both are empty.
double iou(const BBox& a, const BBox& b);
double iou(const BinaryMask& a, const BinaryMask& b);

enum class IouMode { Box, Mask };

/// IoU of two instances (bbox-local masks) in the requested mode.
double iou(const Instance& a, const Instance& b, IouMode mode);

struct DetectionReport {
    double alpha = 0.0;
    std::size_t tp = 0;
    std::size_t n_gt = 0;
    double rate = 0.0;
};

/// One-to-one greedy matching by descending box IoU; a prediction counts as
/// a true positive when matched to a ground-truth nucleus with IoU >= alpha.
DetectionReport detection_rate(const InstanceSet& preds, const LabelMap& gt, double alpha);
DetectionReport detection_rate(const InstanceSet& preds, const InstanceSet& gt, double alpha);

/// 0.25, 0.30, ..., 0.75
std::vector<double> default_detection_alphas();

MetricCurve detection_curve(const InstanceSet& preds, const LabelMap& gt, const std::vector<double>& alphas);

struct ScoredPrediction {
    BBox bbox;
    /// bbox-local mask; may be empty in box mode.
    BinaryMask mask;
    double score = 0.0;

    Instance as_instance() const { return Instance{0, mask, bbox, {}}; }
};

/// 101-point interpolated average precision at one IoU threshold.
double average_precision(const std::vector<ScoredPrediction>& preds, const InstanceSet& gt, double alpha,
                         IouMode mode = IouMode::Box);

struct MapSuite {
    double map50 = 0.0;
    double map75 = 0.0;
    /// mean over alpha = 0.50, 0.55, ..., 0.95
    double map = 0.0;
};

MapSuite map_suite(const std::vector<ScoredPrediction>& preds, const InstanceSet& gt, IouMode mode = IouMode::Box);

} // namespace entroboot
