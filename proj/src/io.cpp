#include "entroboot/io.hpp"

#include <json.hpp>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace entroboot {

using nlohmann::json;

namespace {

struct RawGray {
    int width = 0;
    int height = 0;
    bool sixteen = false;
    std::vector<std::uint16_t> values;
};

RawGray read_png_raw(const fs::path& path)
{
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str()))
        throw IoError("cannot read PNG " + path.string() + ": " + img.message);
    RawGray raw;
    raw.width = static_cast<int>(img.width);
    raw.height = static_cast<int>(img.height);
    raw.sixteen = (img.format & PNG_FORMAT_FLAG_LINEAR) != 0;
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    raw.values.resize(n);
    if (raw.sixteen) {
        img.format = PNG_FORMAT_LINEAR_Y;
        std::vector<png_uint_16> buf(n);
        if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr))
            throw IoError("cannot decode PNG " + path.string() + ": " + img.message);
        std::copy(buf.begin(), buf.end(), raw.values.begin());
    } else {
        img.format = PNG_FORMAT_GRAY;
        std::vector<png_byte> buf(n);
        if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr))
            throw IoError("cannot decode PNG " + path.string() + ": " + img.message);
        std::copy(buf.begin(), buf.end(), raw.values.begin());
    }
    return raw;
}

void write_png_raw(const fs::path& path, int width, int height, const std::vector<std::uint16_t>& values, bool sixteen)
{
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(width);
    img.height = static_cast<png_uint_32>(height);
    int ok = 0;
    if (sixteen) {
        img.format = PNG_FORMAT_LINEAR_Y;
        std::vector<png_uint_16> buf(values.begin(), values.end());
        ok = png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr);
    } else {
        img.format = PNG_FORMAT_GRAY;
        std::vector<png_byte> buf(values.size());
        for (std::size_t i = 0; i < values.size(); ++i)
            buf[i] = static_cast<png_byte>(std::min<std::uint16_t>(values[i], 255));
        ok = png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr);
    }
    if (!ok)
        throw IoError("cannot write PNG " + path.string() + ": " + img.message);
}

// Next whitespace-delimited PGM header token, skipping '#' comments.
std::string pgm_token(std::istream& in)
{
    std::string tok;
    char c = 0;
    while (in.get(c)) {
        if (c == '#') {
            std::string rest;
            std::getline(in, rest);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty())
                break;
            continue;
        }
        tok.push_back(c);
    }
    return tok;
}

RawGray read_pgm_raw(const fs::path& path, int& maxval)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    const std::string magic = pgm_token(in);
    if (magic != "P2" && magic != "P5")
        throw IoError(path.string() + ": not a P2/P5 PGM file");
    RawGray raw;
    try {
        raw.width = std::stoi(pgm_token(in));
        raw.height = std::stoi(pgm_token(in));
        maxval = std::stoi(pgm_token(in));
    } catch (const std::exception&) {
        throw IoError(path.string() + ": malformed PGM header");
    }
    if (raw.width < 1 || raw.height < 1 || maxval < 1 || maxval > 65535)
        throw IoError(path.string() + ": invalid PGM header values");
    const std::size_t n = static_cast<std::size_t>(raw.width) * static_cast<std::size_t>(raw.height);
    raw.values.resize(n);
    raw.sixteen = maxval > 255;
    if (magic == "P2") {
        for (std::size_t i = 0; i < n; ++i) {
            const std::string tok = pgm_token(in);
            if (tok.empty())
                throw IoError(path.string() + ": truncated PGM data");
            raw.values[i] = static_cast<std::uint16_t>(std::min(std::stoi(tok), maxval));
        }
    } else {
        const std::size_t bpp = raw.sixteen ? 2 : 1;
        std::vector<unsigned char> buf(n * bpp);
        if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
            throw IoError(path.string() + ": truncated PGM data");
        for (std::size_t i = 0; i < n; ++i)
            raw.values[i] = raw.sixteen ? static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]) : buf[i];
    }
    return raw;
}

bool is_pgm(const fs::path& path)
{
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".pgm";
}

json parse_json_file(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_json_file(const fs::path& path, const json& j)
{
    write_text(path, j.dump(1) + "\n");
}

BBox bbox_from_coco(const json& arr)
{
    if (!arr.is_array() || arr.size() != 4)
        throw IoError("COCO bbox must be [x, y, w, h]");
    const double x = arr[0].get<double>();
    const double y = arr[1].get<double>();
    const double w = arr[2].get<double>();
    const double h = arr[3].get<double>();
    return BBox{static_cast<int>(std::floor(x)), static_cast<int>(std::floor(y)), static_cast<int>(std::ceil(x + w)),
                static_cast<int>(std::ceil(y + h))};
}

// Full-image RLE of an instance.
Rle instance_rle(const Instance& inst, Dims dims)
{
    BinaryMask full(dims, 0);
    for (int y = 0; y < inst.mask.height(); ++y)
        for (int x = 0; x < inst.mask.width(); ++x)
            if (inst.mask.at(x, y))
                full.at(inst.bbox.x0 + x, inst.bbox.y0 + y) = 1;
    return rle_encode(full);
}

Rle rle_from_json(const json& seg)
{
    if (!seg.is_object() || !seg.contains("size") || !seg.contains("counts"))
        throw IoError("segmentation must be an RLE object with size and counts");
    const int h = seg["size"][0].get<int>();
    const int w = seg["size"][1].get<int>();
    if (seg["counts"].is_string())
        return rle_from_string(seg["counts"].get<std::string>(), h, w);
    Rle r{h, w, {}};
    for (const auto& c : seg["counts"])
        r.counts.push_back(c.get<std::uint32_t>());
    return r;
}

// Instance (bbox-local mask) from a full-image mask; empty mask when no pixels.
Instance instance_from_full(const BinaryMask& full)
{
    BBox b{full.width(), full.height(), -1, -1};
    for (int y = 0; y < full.height(); ++y)
        for (int x = 0; x < full.width(); ++x)
            if (full.at(x, y)) {
                b.x0 = std::min(b.x0, x);
                b.y0 = std::min(b.y0, y);
                b.x1 = std::max(b.x1, x + 1);
                b.y1 = std::max(b.y1, y + 1);
            }
    Instance inst;
    if (!b.valid())
        return inst;
    inst.bbox = b;
    inst.mask = BinaryMask(b.width(), b.height(), 0);
    for (int y = b.y0; y < b.y1; ++y)
        for (int x = b.x0; x < b.x1; ++x)
            inst.mask.at(x - b.x0, y - b.y0) = full.at(x, y);
    return inst;
}

} // namespace

ImageGrid read_image(const fs::path& path)
{
    if (is_pgm(path)) {
        int maxval = 0;
        const RawGray raw = read_pgm_raw(path, maxval);
        ImageGrid g(raw.width, raw.height);
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] = static_cast<double>(raw.values[i]) / maxval;
        return g;
    }
    const RawGray raw = read_png_raw(path);
    const double scale = raw.sixteen ? 65535.0 : 255.0;
    ImageGrid g(raw.width, raw.height);
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = static_cast<double>(raw.values[i]) / scale;
    return g;
}

void write_image_png16(const fs::path& path, const ImageGrid& grid)
{
    std::vector<std::uint16_t> q(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double v = std::isfinite(grid[i]) ? std::clamp(grid[i], 0.0, 1.0) : 0.0;
        q[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    }
    write_png_raw(path, grid.width(), grid.height(), q, true);
}

BinaryMask read_mask(const fs::path& path)
{
    const RawGray raw = is_pgm(path) ? [&] { int m = 0; return read_pgm_raw(path, m); }() : read_png_raw(path);
    BinaryMask m(raw.width, raw.height, 0);
    for (std::size_t i = 0; i < m.size(); ++i)
        m[i] = raw.values[i] != 0 ? 1 : 0;
    return m;
}

void write_mask_png(const fs::path& path, const BinaryMask& mask)
{
    std::vector<std::uint16_t> q(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i)
        q[i] = mask[i] ? 255 : 0;
    write_png_raw(path, mask.width(), mask.height(), q, false);
}

LabelMap read_labels(const fs::path& path)
{
    const RawGray raw = read_png_raw(path);
    LabelMap labels(raw.width, raw.height, 0);
    for (std::size_t i = 0; i < labels.size(); ++i)
        labels[i] = raw.values[i];
    return labels;
}

void write_labels_png(const fs::path& path, const LabelMap& labels)
{
    std::vector<std::uint16_t> q(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] > 65535)
            throw IoError("label id out of 16-bit range");
        q[i] = static_cast<std::uint16_t>(labels[i]);
    }
    write_png_raw(path, labels.width(), labels.height(), q, true);
}

void write_labels_json(const fs::path& path, const LabelMap& labels)
{
    json boxes = json::object();
    for (const auto& lb : component_bboxes(labels))
        boxes[std::to_string(lb.id)] = {lb.box.x0, lb.box.y0, lb.box.x1, lb.box.y1};
    json j = {{"width", labels.width()}, {"height", labels.height()}, {"bboxes", boxes}};
    write_json_file(path, j);
}

PointAnnotationSet read_points(const fs::path& path)
{
    const json j = parse_json_file(path);
    if (!j.is_array())
        throw IoError(path.string() + ": expected a JSON array of points");
    PointAnnotationSet points;
    try {
        for (const auto& e : j) {
            PointAnnotation p;
            p.x = e.at("x").get<int>();
            p.y = e.at("y").get<int>();
            if (e.contains("source_id") && !e["source_id"].is_null())
                p.source_id = e["source_id"].get<std::int32_t>();
            points.push_back(p);
        }
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    return points;
}

void write_points(const fs::path& path, const PointAnnotationSet& points)
{
    json j = json::array();
    for (const auto& p : points) {
        json e = {{"x", p.x}, {"y", p.y}};
        e["source_id"] = p.source_id ? json(*p.source_id) : json(nullptr);
        j.push_back(e);
    }
    write_json_file(path, j);
}

void write_entropy(const fs::path& png_path, const fs::path& json_path, const BootstrapResult& result)
{
    write_image_png16(png_path, result.normalized);
    json j = {{"min", result.entropy_min}, {"max", result.entropy_max}, {"units", "nats"},
              {"encoding", "value = min + (png / 65535) * (max - min)"}};
    write_json_file(json_path, j);
}

Rle rle_encode(const BinaryMask& mask)
{
    Rle r{mask.height(), mask.width(), {}};
    std::uint8_t current = 0;
    std::uint32_t run = 0;
    for (int x = 0; x < mask.width(); ++x) {
        for (int y = 0; y < mask.height(); ++y) {
            const std::uint8_t v = mask.at(x, y) ? 1 : 0;
            if (v != current) {
                r.counts.push_back(run);
                run = 0;
                current = v;
            }
            ++run;
        }
    }
    r.counts.push_back(run);
    return r;
}

BinaryMask rle_decode(const Rle& rle)
{
    BinaryMask mask(rle.width, rle.height, 0);
    std::size_t pos = 0;
    std::uint8_t v = 0;
    const std::size_t total = mask.size();
    for (std::uint32_t run : rle.counts) {
        if (pos + run > total)
            throw IoError("RLE counts exceed the mask size");
        for (std::uint32_t i = 0; i < run; ++i, ++pos) {
            const auto x = static_cast<int>(pos / static_cast<std::size_t>(rle.height));
            const auto y = static_cast<int>(pos % static_cast<std::size_t>(rle.height));
            mask.at(x, y) = v;
        }
        v ^= 1;
    }
    if (pos != total)
        throw IoError("RLE counts do not cover the mask");
    return mask;
}

std::string rle_to_string(const Rle& rle)
{
    std::string s;
    for (std::size_t i = 0; i < rle.counts.size(); ++i) {
        long long x = rle.counts[i];
        if (i > 2)
            x -= static_cast<long long>(rle.counts[i - 2]);
        bool more = true;
        while (more) {
            long long c = x & 0x1f;
            x >>= 5;
            more = (c & 0x10) ? x != -1 : x != 0;
            if (more)
                c |= 0x20;
            s.push_back(static_cast<char>(c + 48));
        }
    }
    return s;
}

Rle rle_from_string(const std::string& counts, int height, int width)
{
    Rle r{height, width, {}};
    std::size_t p = 0;
    while (p < counts.size()) {
        long long x = 0;
        int k = 0;
        bool more = true;
        while (more) {
            if (p >= counts.size())
                throw IoError("truncated RLE string");
            const long long c = static_cast<long long>(counts[p]) - 48;
            x |= (c & 0x1f) << (5 * k);
            more = (c & 0x20) != 0;
            ++p;
            ++k;
            if (!more && (c & 0x10))
                x |= -1LL << (5 * k);
        }
        if (r.counts.size() > 2)
            x += static_cast<long long>(r.counts[r.counts.size() - 2]);
        if (x < 0)
            throw IoError("negative run in RLE string");
        r.counts.push_back(static_cast<std::uint32_t>(x));
    }
    return r;
}

std::string coco_to_string(const std::vector<CocoImage>& images)
{
    json j_images = json::array();
    json j_annotations = json::array();
    int ann_id = 0;
    for (const auto& img : images) {
        j_images.push_back({{"id", img.id},
                            {"file_name", img.file_name},
                            {"width", img.instances.dims.width},
                            {"height", img.instances.dims.height}});
        for (std::size_t i = 0; i < img.instances.instances.size(); ++i) {
            const auto& inst = img.instances.instances[i];
            const Rle rle = instance_rle(inst, img.instances.dims);
            json ann = {{"id", ++ann_id},
                        {"image_id", img.id},
                        {"category_id", 1},
                        {"segmentation", {{"size", {rle.height, rle.width}}, {"counts", rle_to_string(rle)}}},
                        {"bbox", {inst.bbox.x0, inst.bbox.y0, inst.bbox.width(), inst.bbox.height()}},
                        {"area", inst.area()},
                        {"iscrowd", 0}};
            if (i < img.scores.size())
                ann["score"] = img.scores[i];
            j_annotations.push_back(std::move(ann));
        }
    }
    json j = {{"images", j_images},
              {"annotations", j_annotations},
              {"categories", json::array({{{"id", 1}, {"name", "nucleus"}}})}};
    return j.dump(1) + "\n";
}

void write_coco(const fs::path& path, const std::vector<CocoImage>& images)
{
    write_text(path, coco_to_string(images));
}

std::map<int, CocoPredictions> read_coco(const fs::path& path)
{
    const json j = parse_json_file(path);
    std::map<int, CocoPredictions> out;
    try {
        const json* anns = &j;
        if (j.is_object()) {
            if (j.contains("images"))
                for (const auto& img : j["images"]) {
                    auto& entry = out[img.at("id").get<int>()];
                    entry.dims = Dims{img.at("width").get<int>(), img.at("height").get<int>()};
                }
            anns = &j.at("annotations");
        }
        if (!anns->is_array())
            throw IoError(path.string() + ": annotations must be an array");
        for (const auto& a : *anns) {
            auto& entry = out[a.at("image_id").get<int>()];
            ScoredPrediction pred;
            if (a.contains("segmentation") && !a["segmentation"].is_null()) {
                const Rle rle = rle_from_json(a["segmentation"]);
                entry.dims = Dims{rle.width, rle.height};
                Instance inst = instance_from_full(rle_decode(rle));
                pred.mask = std::move(inst.mask);
                pred.bbox = inst.bbox;
            } else if (a.contains("bbox")) {
                pred.bbox = bbox_from_coco(a["bbox"]);
            }
            if (!pred.bbox.valid())
                continue;
            pred.score = 1.0;
            if (a.contains("score")) {
                pred.score = a["score"].get<double>();
                entry.has_scores = true;
            }
            if (!std::isfinite(pred.score) || pred.score < 0.0 || pred.score > 1.0)
                throw IoError(path.string() + ": score outside [0, 1]");
            entry.predictions.push_back(std::move(pred));
        }
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    return out;
}

std::map<int, InstanceSet> read_coco_ground_truth(const fs::path& path)
{
    std::map<int, InstanceSet> out;
    for (auto& [id, preds] : read_coco(path)) {
        InstanceSet set{preds.dims, {}};
        for (auto& p : preds.predictions) {
            if (p.mask.empty())
                throw IoError(path.string() + ": ground-truth annotations need RLE masks");
            set.instances.push_back(Instance{static_cast<int>(set.instances.size()) + 1, p.mask, p.bbox, {}});
        }
        out.emplace(id, std::move(set));
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << text;
    if (!out)
        throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string format_g6(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

} // namespace entroboot
