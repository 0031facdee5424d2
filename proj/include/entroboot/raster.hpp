#pragma once

// Raster containers and the classical image operations the pipeline is
// built from. Everything here is a pure function of its inputs.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace entroboot {

/// Thrown when an argument violates an operation's precondition.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a quantity is mathematically undefined for the given input
/// (e.g. AUROC with a single class).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct Dims {
    int width = 0;
    int height = 0;

    std::size_t area() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
    friend bool operator==(const Dims&, const Dims&) = default;
};

/// Row-major raster with a per-pixel value of type T.
template <typename T>
class Raster {
public:
    using value_type = T;

    Raster() = default;
    Raster(int width, int height, T fill = T{}) : dims_{width, height}
    {
        if (width < 1 || height < 1)
            throw InvalidArgument("raster dimensions must be >= 1");
        data_.assign(dims_.area(), fill);
    }
    Raster(Dims dims, T fill = T{}) : Raster(dims.width, dims.height, fill) {}
    Raster(int width, int height, std::vector<T> data) : dims_{width, height}, data_(std::move(data))
    {
        if (width < 1 || height < 1)
            throw InvalidArgument("raster dimensions must be >= 1");
        if (data_.size() != dims_.area())
            throw InvalidArgument("raster data length does not match width*height");
    }

    int width() const { return dims_.width; }
    int height() const { return dims_.height; }
    Dims dims() const { return dims_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& at(int x, int y) { return data_[index(x, y)]; }
    const T& at(int x, int y) const { return data_[index(x, y)]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::size_t index(int x, int y) const
    {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(dims_.width) + static_cast<std::size_t>(x);
    }

    std::span<T> pixels() { return data_; }
    std::span<const T> pixels() const { return data_; }
    const std::vector<T>& values() const { return data_; }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    Dims dims_{};
    std::vector<T> data_;
};

/// Scalar raster: intensities in [0,1] or entropies in nats.
using ImageGrid = Raster<double>;
/// One boolean (0/1) per pixel.
using BinaryMask = Raster<std::uint8_t>;
/// Instance ids per pixel; 0 is background.
using LabelMap = Raster<std::int32_t>;

/// Half-open box: [x0, x1) x [y0, y1).
struct BBox {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    long area() const { return static_cast<long>(width()) * height(); }
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    bool valid() const { return x0 < x1 && y0 < y1; }
    friend bool operator==(const BBox&, const BBox&) = default;
};

struct LabeledBox {
    std::int32_t id = 0;
    BBox box;
    friend bool operator==(const LabeledBox&, const LabeledBox&) = default;
};

enum class Connectivity { Four = 4, Eight = 8 };
enum class MorphOp { Erode, Dilate };

/// Symmetric border reflection (... c b a | a b c ... | c b a ...).
int reflect_index(int i, int n);

/// Normalized 1-D gaussian kernel of the given half-width.
std::vector<double> gaussian_kernel(double sigma, int radius);

/// Separable gaussian blur, kernel truncated at ceil(3*sigma), reflect border.
ImageGrid gaussian_blur(const ImageGrid& grid, double sigma);

/// Same as gaussian_blur with an explicit truncation radius.
ImageGrid gaussian_blur(const ImageGrid& grid, double sigma, int radius);

/// Labels maximal connected foreground regions 1..K in raster order of each
/// region's first pixel.
LabelMap connected_components(const BinaryMask& mask, Connectivity connectivity);

/// Exact Euclidean distance from each foreground pixel to the nearest
/// background pixel. Pixels outside the image count as background.
ImageGrid distance_transform(const BinaryMask& mask);

/// Squared variant of distance_transform (integer-valued).
Raster<std::int64_t> squared_distance_transform(const BinaryMask& mask);

/// Offsets (dx, dy) with dx*dx + dy*dy <= radius*radius, row-major order.
std::vector<std::pair<int, int>> disk_offsets(int radius);

BinaryMask morph(const BinaryMask& mask, MorphOp op, int radius);
BinaryMask morph_open(const BinaryMask& mask, int radius);

/// Tight box around each positive id, ordered by id.
std::vector<LabeledBox> component_bboxes(const LabelMap& labels);

/// Number of distinct positive ids (assumes compact labelling 1..K).
std::int32_t max_label(const LabelMap& labels);

/// Renumbers positive ids to 1..K preserving their relative order.
LabelMap compact_labels(const LabelMap& labels);

std::size_t popcount(const BinaryMask& mask);
BinaryMask foreground(const LabelMap& labels);
BinaryMask select_label(const LabelMap& labels, std::int32_t id);

/// Affinely rescales values to [0,1]; a constant grid maps to all zeros.
/// Returns the grid together with the (min, max) used.
struct Normalized {
    ImageGrid grid;
    double min = 0.0;
    double max = 0.0;
};
Normalized normalize_minmax(const ImageGrid& grid);

} // namespace entroboot
