#pragma once

// File formats: grayscale PNG/PGM rasters, label maps with a bbox sidecar,
// point annotations, entropy maps with normalization metadata, and COCO
// instance JSON with RLE masks.

#include "entroboot/bootstrap.hpp"
#include "entroboot/instancer.hpp"
#include "entroboot/metrics.hpp"
#include "entroboot/raster.hpp"
#include "entroboot/sparsify.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace entroboot {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace fs = std::filesystem;

/// 8/16-bit PNG (colour is reduced to luminance) or PGM P2/P5, scaled to [0,1].
ImageGrid read_image(const fs::path& path);
/// Values are clamped to [0,1] and quantized to 16 bits.
void write_image_png16(const fs::path& path, const ImageGrid& grid);

BinaryMask read_mask(const fs::path& path);
/// 8-bit PNG, 0 / 255.
void write_mask_png(const fs::path& path, const BinaryMask& mask);

/// Raw ids from an 8/16-bit grayscale PNG.
LabelMap read_labels(const fs::path& path);
/// 16-bit PNG of ids; ids must fit in 16 bits.
void write_labels_png(const fs::path& path, const LabelMap& labels);
/// Sidecar {"width","height","bboxes":{"<id>":[x0,y0,x1,y1]}}.
void write_labels_json(const fs::path& path, const LabelMap& labels);

PointAnnotationSet read_points(const fs::path& path);
/// [{"x","y","source_id"}] with source_id null when absent.
void write_points(const fs::path& path, const PointAnnotationSet& points);

/// Writes the normalized entropy as 16-bit PNG and {"min","max","units"} JSON.
void write_entropy(const fs::path& png_path, const fs::path& json_path, const BootstrapResult& result);

// --- COCO ---------------------------------------------------------------

/// Column-major run lengths starting with a background run (COCO convention).
struct Rle {
    int height = 0;
    int width = 0;
    std::vector<std::uint32_t> counts;
};

Rle rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(const Rle& rle);
/// COCO compact string form of the counts.
std::string rle_to_string(const Rle& rle);
Rle rle_from_string(const std::string& counts, int height, int width);

struct CocoImage {
    int id = 0;
    std::string file_name;
    InstanceSet instances;
    /// Optional per-instance confidence; empty for watershed output.
    std::vector<double> scores;
};

/// images[], annotations[] (RLE mask, bbox, area, category 1 "nucleus"), categories[].
std::string coco_to_string(const std::vector<CocoImage>& images);
void write_coco(const fs::path& path, const std::vector<CocoImage>& images);

struct CocoPredictions {
    Dims dims;
    std::vector<ScoredPrediction> predictions;
    bool has_scores = false;
};

/// Accepts a full COCO file or a bare results list. Keyed by image_id.
std::map<int, CocoPredictions> read_coco(const fs::path& path);

/// Reads a COCO ground-truth file as per-image instance sets.
std::map<int, InstanceSet> read_coco_ground_truth(const fs::path& path);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

/// printf("%.6g")
std::string format_g6(double v);

} // namespace entroboot
