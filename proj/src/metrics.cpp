#include "entroboot/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <tuple>

namespace entroboot {

namespace {

void require_same_dims(Dims a, Dims b, const char* what)
{
    if (a != b)
        throw InvalidArgument(std::string(what) + ": dimension mismatch");
}

// Pixels covered by both instances (bbox-local masks in image coordinates).
std::size_t mask_intersection(const Instance& a, const Instance& b)
{
    const int x0 = std::max(a.bbox.x0, b.bbox.x0);
    const int y0 = std::max(a.bbox.y0, b.bbox.y0);
    const int x1 = std::min(a.bbox.x1, b.bbox.x1);
    const int y1 = std::min(a.bbox.y1, b.bbox.y1);
    std::size_t n = 0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
            if (a.mask.at(x - a.bbox.x0, y - a.bbox.y0) && b.mask.at(x - b.bbox.x0, y - b.bbox.y0))
                ++n;
    return n;
}

double ratio(double intersection, double a, double b)
{
    const double uni = a + b - intersection;
    if (uni <= 0.0)
        throw DomainError("IoU undefined: both regions are empty");
    return intersection / uni;
}

} // namespace

double dice(const BinaryMask& a, const BinaryMask& b)
{
    require_same_dims(a.dims(), b.dims(), "dice");
    std::size_t na = 0;
    std::size_t nb = 0;
    std::size_t both = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += a[i] ? 1 : 0;
        nb += b[i] ? 1 : 0;
        both += (a[i] && b[i]) ? 1 : 0;
    }
    if (na + nb == 0)
        return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

DiceCurve dice_curve(const ImageGrid& entropy, const BinaryMask& gt, int n_thresholds)
{
    require_same_dims(entropy.dims(), gt.dims(), "dice_curve");
    if (n_thresholds < 2)
        throw InvalidArgument("dice_curve: n_thresholds must be >= 2");
    DiceCurve out;
    BinaryMask cut(gt.dims(), 0);
    for (int i = 0; i < n_thresholds; ++i) {
        const double t = static_cast<double>(i) / (n_thresholds - 1);
        for (std::size_t p = 0; p < cut.size(); ++p)
            cut[p] = entropy[p] >= t ? 1 : 0;
        const double d = dice(cut, gt);
        out.curve.samples.push_back({t, d});
        if (i == 0 || d > out.peak_dice) {
            out.peak_dice = d;
            out.peak_threshold = t;
        }
    }
    return out;
}

RocCurve roc_auroc(const ImageGrid& entropy, const BinaryMask& gt)
{
    require_same_dims(entropy.dims(), gt.dims(), "roc_auroc");
    const std::size_t pos = popcount(gt);
    const std::size_t neg = gt.size() - pos;
    if (pos == 0 || neg == 0)
        throw DomainError("AUROC undefined: ground truth has a single class");

    std::vector<std::size_t> order(entropy.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return entropy[a] > entropy[b]; });

    RocCurve roc;
    roc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    std::size_t tp = 0;
    std::size_t fp = 0;
    double area = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        const double score = entropy[order[i]];
        const std::size_t tp_before = tp;
        const std::size_t fp_before = fp;
        for (; i < order.size() && entropy[order[i]] == score; ++i)
            (gt[order[i]] ? tp : fp) += 1;
        // Trapezoid over the tie group.
        area += static_cast<double>(fp - fp_before) * static_cast<double>(tp + tp_before) / 2.0;
        roc.points.push_back(
            {score, static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos)});
    }
    roc.auroc = area / (static_cast<double>(pos) * static_cast<double>(neg));
    return roc;
}

double iou(const BBox& a, const BBox& b)
{
    const int ix = std::max(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
    const int iy = std::max(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
    const double inter = static_cast<double>(ix) * iy;
    return ratio(inter, static_cast<double>(std::max(0L, a.area())), static_cast<double>(std::max(0L, b.area())));
}

double iou(const BinaryMask& a, const BinaryMask& b)
{
    require_same_dims(a.dims(), b.dims(), "iou");
    std::size_t na = 0;
    std::size_t nb = 0;
    std::size_t both = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += a[i] ? 1 : 0;
        nb += b[i] ? 1 : 0;
        both += (a[i] && b[i]) ? 1 : 0;
    }
    return ratio(static_cast<double>(both), static_cast<double>(na), static_cast<double>(nb));
}

double iou(const Instance& a, const Instance& b, IouMode mode)
{
    if (mode == IouMode::Box)
        return iou(a.bbox, b.bbox);
    return ratio(static_cast<double>(mask_intersection(a, b)), static_cast<double>(a.area()),
                 static_cast<double>(b.area()));
}

DetectionReport detection_rate(const InstanceSet& preds, const InstanceSet& gt, double alpha)
{
    if (!(alpha > 0.0 && alpha < 1.0))
        throw InvalidArgument("detection_rate: alpha must lie in (0, 1)");
    if (gt.instances.empty())
        throw DomainError("detection rate undefined: no nuclei in ground truth");

    struct Pair {
        double iou;
        std::size_t pred;
        std::size_t gt;
    };
    std::vector<Pair> pairs;
    for (std::size_t p = 0; p < preds.instances.size(); ++p)
        for (std::size_t g = 0; g < gt.instances.size(); ++g) {
            const double v = iou(preds.instances[p].bbox, gt.instances[g].bbox);
            if (v >= alpha)
                pairs.push_back({v, p, g});
        }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.iou != b.iou)
            return a.iou > b.iou;
        return std::tie(a.pred, a.gt) < std::tie(b.pred, b.gt);
    });
    std::vector<bool> pred_used(preds.instances.size(), false);
    std::vector<bool> gt_used(gt.instances.size(), false);
    DetectionReport r;
    r.alpha = alpha;
    r.n_gt = gt.instances.size();
    for (const auto& pr : pairs) {
        if (pred_used[pr.pred] || gt_used[pr.gt])
            continue;
        pred_used[pr.pred] = true;
        gt_used[pr.gt] = true;
        ++r.tp;
    }
    r.rate = static_cast<double>(r.tp) / static_cast<double>(r.n_gt);
    return r;
}

DetectionReport detection_rate(const InstanceSet& preds, const LabelMap& gt, double alpha)
{
    return detection_rate(preds, instances_from_labels(gt), alpha);
}

std::vector<double> default_detection_alphas()
{
    std::vector<double> alphas;
    for (int i = 0; i <= 10; ++i)
        alphas.push_back((25 + 5 * i) / 100.0);
    return alphas;
}

MetricCurve detection_curve(const InstanceSet& preds, const LabelMap& gt, const std::vector<double>& alphas)
{
    const InstanceSet truth = instances_from_labels(gt);
    MetricCurve curve;
    for (double a : alphas) {
        if (!curve.samples.empty() && a <= curve.samples.back().threshold)
            throw InvalidArgument("detection_curve: alphas must be strictly increasing");
        curve.samples.push_back({a, detection_rate(preds, truth, a).rate});
    }
    return curve;
}

double average_precision(const std::vector<ScoredPrediction>& preds, const InstanceSet& gt, double alpha,
                         IouMode mode)
{
    if (gt.instances.empty())
        throw DomainError("average precision undefined: no ground-truth instances");
    if (preds.empty())
        return 0.0;

    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });

    std::vector<bool> claimed(gt.instances.size(), false);
    std::vector<double> precision;
    std::vector<double> recall;
    std::size_t tp = 0;
    const auto n_gt = static_cast<double>(gt.instances.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        const Instance pred = preds[order[k]].as_instance();
        double best = -1.0;
        std::size_t best_gt = 0;
        for (std::size_t g = 0; g < gt.instances.size(); ++g) {
            if (claimed[g])
                continue;
            const double v = iou(pred, gt.instances[g], mode);
            if (v >= alpha && v > best) {
                best = v;
                best_gt = g;
            }
        }
        if (best >= 0.0) {
            claimed[best_gt] = true;
            ++tp;
        }
        precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
        recall.push_back(static_cast<double>(tp) / n_gt);
    }

    // Precision envelope: max precision at any recall >= r.
    for (std::size_t i = precision.size() - 1; i > 0; --i)
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    double sum = 0.0;
    std::size_t j = 0;
    for (int i = 0; i <= 100; ++i) {
        const double r = i / 100.0;
        while (j < recall.size() && recall[j] < r)
            ++j;
        if (j < recall.size())
            sum += precision[j];
    }
    return sum / 101.0;
}

MapSuite map_suite(const std::vector<ScoredPrediction>& preds, const InstanceSet& gt, IouMode mode)
{
    MapSuite s;
    double total = 0.0;
    for (int i = 0; i < 10; ++i) {
        const double alpha = (50 + 5 * i) / 100.0;
        const double ap = average_precision(preds, gt, alpha, mode);
        total += ap;
        if (i == 0)
            s.map50 = ap;
        if (i == 5)
            s.map75 = ap;
    }
    s.map = total / 10.0;
    return s;
}

} // namespace entroboot
