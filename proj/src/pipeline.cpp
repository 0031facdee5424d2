#include "entroboot/pipeline.hpp"

#include "entroboot/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>
#include <thread>

namespace entroboot {

using nlohmann::json;

namespace {

// --- value parsing ------------------------------------------------------

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& raw)
{
    const std::string s = trim(raw);
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front())
        return s.substr(1, s.size() - 2);
    return s;
}

template <class T>
T parse_number(const std::string& key, const std::string& raw)
{
    const std::string s = unquote(raw);
    T v{};
    const char* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end || s.empty())
        throw InvalidArgument("config key '" + key + "': cannot parse '" + s + "'");
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(v))
            throw InvalidArgument("config key '" + key + "': value must be finite");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& raw)
{
    const std::string s = unquote(raw);
    if (s == "true" || s == "1")
        return true;
    if (s == "false" || s == "0")
        return false;
    throw InvalidArgument("config key '" + key + "': expected true or false, got '" + s + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& raw)
{
    std::string s = trim(raw);
    if (!s.empty() && s.front() == '[') {
        if (s.back() != ']')
            throw InvalidArgument("config key '" + key + "': unterminated list");
        s = s.substr(1, s.size() - 2);
    }
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!trim(item).empty())
            out.push_back(parse_number<double>(key, item));
    return out;
}

std::string fmt(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, ptr);
    // Keep TOML floats recognizable as floats.
    if (s.find_first_of(".eE") == std::string::npos && s.find("inf") == std::string::npos &&
        s.find("nan") == std::string::npos)
        s += ".0";
    return s;
}

std::string fmt_list(const std::vector<double>& values)
{
    std::string s = "[";
    for (std::size_t i = 0; i < values.size(); ++i)
        s += (i ? ", " : "") + fmt(values[i]);
    return s + "]";
}

std::string quote(const std::string& s)
{
    return "\"" + s + "\"";
}

struct Field {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define EB_INT(name, member)                                                                                 \
    Field                                                                                                    \
    {                                                                                                        \
        name, [](RunConfig& c, const std::string& v) { c.member = parse_number<int>(name, v); },              \
            [](const RunConfig& c) { return std::to_string(c.member); }                                      \
    }
#define EB_U64(name, member)                                                                                 \
    Field                                                                                                    \
    {                                                                                                        \
        name, [](RunConfig& c, const std::string& v) { c.member = parse_number<std::uint64_t>(name, v); },    \
            [](const RunConfig& c) { return std::to_string(c.member); }                                      \
    }
#define EB_DOUBLE(name, member)                                                                              \
    Field                                                                                                    \
    {                                                                                                        \
        name, [](RunConfig& c, const std::string& v) { c.member = parse_number<double>(name, v); },           \
            [](const RunConfig& c) { return fmt(c.member); }                                                 \
    }
#define EB_BOOL(name, member)                                                                                \
    Field                                                                                                    \
    {                                                                                                        \
        name, [](RunConfig& c, const std::string& v) { c.member = parse_bool(name, v); },                     \
            [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }                      \
    }
#define EB_PATH(name, member)                                                                                \
    Field                                                                                                    \
    {                                                                                                        \
        name, [](RunConfig& c, const std::string& v) { c.member = unquote(v); },                              \
            [](const RunConfig& c) { return quote(c.member.string()); }                                      \
    }

const std::vector<Field>& fields()
{
    static const std::vector<Field> table = {
        EB_INT("scene.width", scene.width),
        EB_INT("scene.height", scene.height),
        EB_INT("scene.nucleus_count", scene.nucleus_count),
        EB_DOUBLE("scene.radius_min", scene.radius_min),
        EB_DOUBLE("scene.radius_max", scene.radius_max),
        EB_DOUBLE("scene.eccentricity_max", scene.eccentricity_max),
        EB_BOOL("scene.overlap_allowed", scene.overlap_allowed),
        EB_INT("scene.min_gap", scene.min_gap),
        EB_DOUBLE("scene.nucleus_mean", scene.nucleus_mean),
        EB_DOUBLE("scene.background_mean", scene.background_mean),
        EB_DOUBLE("scene.nucleus_spread", scene.nucleus_spread),
        EB_DOUBLE("scene.noise_sigma", scene.noise_sigma),
        EB_DOUBLE("scene.blur_sigma", scene.blur_sigma),
        EB_INT("sparsify.radius", sparsify.radius),
        EB_DOUBLE("sparsify.keep_fraction", sparsify.keep_fraction),
        EB_INT("sparsify.jitter_max", sparsify.jitter_max),
        Field{"sparsify.jitter_mode",
              [](RunConfig& c, const std::string& v) {
                  const std::string m = unquote(v);
                  if (m == "uniform")
                      c.sparsify.jitter_mode = JitterMode::Uniform;
                  else if (m == "gaussian")
                      c.sparsify.jitter_mode = JitterMode::Gaussian;
                  else
                      throw InvalidArgument("config key 'sparsify.jitter_mode': expected uniform or gaussian");
              },
              [](const RunConfig& c) {
                  return quote(c.sparsify.jitter_mode == JitterMode::Uniform ? "uniform" : "gaussian");
              }},
        EB_INT("bootstrap.bins", bootstrap.bins),
        EB_DOUBLE("bootstrap.laplace_alpha", bootstrap.laplace_alpha),
        EB_DOUBLE("bootstrap.feature_blur_sigma", bootstrap.features.blur_sigma),
        EB_INT("bootstrap.std_window", bootstrap.features.std_window),
        EB_DOUBLE("instancer.blur_sigma", instancer.blur_sigma),
        EB_INT("instancer.threshold_window", instancer.threshold_window),
        EB_DOUBLE("instancer.threshold_offset", instancer.threshold_offset),
        EB_INT("instancer.min_area", instancer.min_area),
        EB_INT("instancer.open_radius", instancer.open_radius),
        EB_DOUBLE("instancer.marker_dt_fraction", instancer.marker_dt_fraction),
        EB_DOUBLE("instancer.match_max_dist", instancer.match_max_dist),
        Field{"eval.alphas",
              [](RunConfig& c, const std::string& v) { c.eval.alphas = parse_list("eval.alphas", v); },
              [](const RunConfig& c) { return fmt_list(c.eval.alphas); }},
        EB_INT("eval.n_thresholds", eval.n_thresholds),
        EB_BOOL("eval.pooled_detection", eval.pooled_detection),
        EB_PATH("run.output_dir", output_dir),
        EB_PATH("run.dataset_dir", dataset_dir),
        EB_INT("run.n_images", n_images),
        EB_U64("run.master_seed", master_seed),
        EB_BOOL("run.debug_stages", debug_stages),
    };
    return table;
}

#undef EB_INT
#undef EB_U64
#undef EB_DOUBLE
#undef EB_BOOL
#undef EB_PATH

const Field& field(const std::string& key)
{
    for (const auto& f : fields())
        if (f.key == key)
            return f;
    throw InvalidArgument("unknown config key '" + key + "'");
}

// --- artifacts ----------------------------------------------------------

BinaryMask mask_of(const LabelMap& labels)
{
    return foreground(labels);
}

std::string csv_field(std::string s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += "\"\"";
        else if (c == '\n')
            out += ' ';
        else
            out += c;
    }
    return out + "\"";
}

std::string alpha_column(const char* prefix, double alpha)
{
    return std::string(prefix) + format_g6(alpha);
}

void require_alpha_list(const std::vector<double>& alphas)
{
    if (alphas.empty())
        throw InvalidArgument("eval.alphas must not be empty");
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        if (!(alphas[i] > 0.0 && alphas[i] < 1.0))
            throw InvalidArgument("eval.alphas must lie in (0, 1)");
        if (i && alphas[i] <= alphas[i - 1])
            throw InvalidArgument("eval.alphas must be strictly increasing");
    }
}

CocoImage coco_image(int id, const std::string& file_name, const InstanceSet& instances)
{
    return CocoImage{id, file_name, instances, {}};
}

} // namespace

// --- RunConfig ----------------------------------------------------------

void RunConfig::validate() const
{
    scene.validate();
    sparsify.validate();
    instancer.validate();
    if (bootstrap.bins < 2)
        throw InvalidArgument("bootstrap.bins must be >= 2");
    if (!(bootstrap.laplace_alpha > 0.0))
        throw InvalidArgument("bootstrap.laplace_alpha must be > 0");
    if (!(bootstrap.features.blur_sigma > 0.0))
        throw InvalidArgument("bootstrap.feature_blur_sigma must be > 0");
    if (bootstrap.features.std_window < 3 || bootstrap.features.std_window % 2 == 0)
        throw InvalidArgument("bootstrap.std_window must be odd and >= 3");
    require_alpha_list(eval.alphas);
    if (eval.n_thresholds < 2)
        throw InvalidArgument("eval.n_thresholds must be >= 2");
    if (n_images < 1)
        throw InvalidArgument("run.n_images must be >= 1");
}

void RunConfig::set(const std::string& key, const std::string& value)
{
    field(trim(key)).set(*this, value);
}

std::string RunConfig::get(const std::string& key) const
{
    return field(trim(key)).get(*this);
}

const std::vector<std::string>& RunConfig::keys()
{
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& f : fields())
            v.push_back(f.key);
        return v;
    }();
    return names;
}

std::string RunConfig::to_text() const
{
    std::string out;
    std::string section;
    for (const auto& f : fields()) {
        const auto dot = f.key.find('.');
        const std::string sec = f.key.substr(0, dot);
        if (sec != section) {
            out += (out.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
            section = sec;
        }
        out += f.key.substr(dot + 1) + " = " + f.get(*this) + "\n";
    }
    return out;
}

RunConfig RunConfig::parse(const std::string& text)
{
    RunConfig c;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // Strip comments outside quotes.
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"')
                quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        line = trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw InvalidArgument("config line " + std::to_string(lineno) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        if (!section.empty())
            key = section + "." + key;
        c.set(key, line.substr(eq + 1));
    }
    return c;
}

RunConfig RunConfig::load(const fs::path& path)
{
    return parse(read_text(path));
}

// --- execution ------------------------------------------------------------

// Mask with ROI outlines drawn at half intensity.
static void write_rois_png(const fs::path& path, const BinaryMask& mask, const std::vector<BBox>& rois)
{
    ImageGrid g(mask.dims(), 0.0);
    for (std::size_t i = 0; i < mask.size(); ++i)
        g[i] = mask[i] ? 1.0 : 0.0;
    for (const auto& b : rois) {
        for (int x = b.x0; x < b.x1; ++x) {
            g.at(x, b.y0) = 0.5;
            g.at(x, b.y1 - 1) = 0.5;
        }
        for (int y = b.y0; y < b.y1; ++y) {
            g.at(b.x0, y) = 0.5;
            g.at(b.x1 - 1, y) = 0.5;
        }
    }
    write_image_png16(path, g);
}

void write_instancing_stages(const fs::path& dir, const ImageGrid& entropy, const InstancingStages& st)
{
    fs::create_directories(dir);
    write_image_png16(dir / "a_entropy.png", entropy);
    write_mask_png(dir / "a_voronoi_edges.png", st.edges);
    write_rois_png(dir / "b_rois.png", st.cleaned, st.rois);
    write_labels_png(dir / "c_watershed.png", st.watershed);
    // Kept instances at full intensity, removed ones at half.
    ImageGrid checked(st.watershed.dims(), 0.0);
    for (std::size_t i = 0; i < checked.size(); ++i)
        if (st.watershed[i])
            checked[i] = st.matched[i] ? 1.0 : 0.5;
    write_image_png16(dir / "d_checked.png", checked);
    write_labels_png(dir / "e_matched.png", st.matched);
}


std::uint64_t image_seed(const RunConfig& config, int index)
{
    return derive_seed(config.master_seed, static_cast<std::uint64_t>(index));
}

std::uint64_t sparsify_seed(std::uint64_t image_seed)
{
    return splitmix64(image_seed ^ 0x5350415253494659ULL);
}

int resolve_threads(int requested)
{
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("ENTROBOOT_THREADS")) {
        int cap = 0;
        const std::string s = trim(env);
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), cap);
        if (ec == std::errc() && ptr == s.data() + s.size() && cap > 0)
            n = std::min(n > 0 ? n : cap, cap);
    }
    return std::max(1, n);
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn)
{
    const int workers = std::min(std::max(1, threads), std::max(1, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++)
                fn(i);
        });
    for (auto& t : pool)
        t.join();
}

std::string scene_dir_name(int index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%04d", index);
    return buf;
}

std::vector<DatasetEntry> load_dataset(const fs::path& dir)
{
    if (!fs::is_directory(dir))
        throw IoError("dataset directory not found: " + dir.string());
    auto entry_of = [](const fs::path& d, std::string name) {
        DatasetEntry e{std::move(name), {}, d / "labels.png"};
        if (fs::exists(d / "image.png"))
            e.image = d / "image.png";
        return e;
    };
    std::vector<DatasetEntry> out;
    if (fs::exists(dir / "labels.png")) {
        out.push_back(entry_of(dir, dir.filename().string()));
        return out;
    }
    for (const auto& de : fs::directory_iterator(dir))
        if (de.is_directory() && fs::exists(de.path() / "labels.png"))
            out.push_back(entry_of(de.path(), de.path().filename().string()));
    std::sort(out.begin(), out.end(), [](const DatasetEntry& a, const DatasetEntry& b) { return a.name < b.name; });
    if (out.empty())
        throw IoError("no labels.png found under " + dir.string());
    return out;
}

ImageResult process_image(const RunConfig& config, int index, const std::optional<fs::path>& scene_dir,
                          const DatasetEntry* entry)
{
    ImageResult r;
    r.index = index;
    r.seed = image_seed(config, index);
    r.name = entry ? entry->name : scene_dir_name(index);
    try {
        Scene scene;
        if (entry) {
            if (entry->image.empty())
                throw IoError(entry->name + ": image.png missing");
            scene.image = read_image(entry->image);
            scene.labels = compact_labels(read_labels(entry->labels));
            if (scene.image.dims() != scene.labels.dims())
                throw InvalidArgument(entry->name + ": image and labels differ in size");
        } else {
            SceneConfig sc = config.scene;
            sc.seed = r.seed;
            scene = generate_scene(sc);
        }
        const Dims dims = scene.image.dims();

        SparsifyConfig sp = config.sparsify;
        sp.seed = sparsify_seed(r.seed);
        const PointAnnotationSet points = sample_points(scene.labels, sp);
        const BinaryMask label_mask = rasterize_points(points, sp.radius, dims);
        const BinaryMask gt = mask_of(scene.labels);
        const InstanceSet gt_instances = instances_from_labels(scene.labels);
        r.n_gt = gt_instances.instances.size();
        r.n_points = points.size();
        r.epsilon = estimate_epsilon(label_mask, scene.labels).epsilon;

        const BootstrapResult boot = bootstrap_entropy(scene.image, label_mask, config.bootstrap);
        r.auroc = roc_auroc(boot.normalized, gt).auroc;
        r.dice = dice_curve(boot.normalized, gt, config.eval.n_thresholds);
        double sum_n = 0.0;
        double sum_b = 0.0;
        std::size_t cnt_n = 0;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            if (gt[i]) {
                sum_n += boot.entropy[i];
                ++cnt_n;
            } else {
                sum_b += boot.entropy[i];
            }
        }
        r.entropy_nucleus = sum_n / static_cast<double>(cnt_n);
        r.entropy_background = sum_b / static_cast<double>(gt.size() - cnt_n);

        InstancingStages stages;
        const bool dump = scene_dir && config.debug_stages;
        r.instances = run_instancing(boot.normalized, points, scene.image, config.instancer, dump ? &stages : nullptr);
        r.n_instances = r.instances.instances.size();
        for (double a : config.eval.alphas)
            r.detection.push_back(detection_rate(r.instances, gt_instances, a));

        if (scene_dir) {
            const fs::path& d = *scene_dir;
            fs::create_directories(d);
            write_image_png16(d / "image.png", scene.image);
            write_labels_png(d / "labels.png", scene.labels);
            write_labels_json(d / "labels.json", scene.labels);
            write_points(d / "points.json", points);
            write_mask_png(d / "label_mask.png", label_mask);
            write_entropy(d / "entropy.png", d / "entropy.json", boot);
            write_labels_png(d / "instances.png", r.instances.to_label_map());
            if (dump)
                write_instancing_stages(d / "stages", boot.normalized, stages);
        }
        r.ok = true;
    } catch (const std::exception& e) {
        r.ok = false;
        r.error = e.what();
    }
    return r;
}

Aggregate aggregate(const std::vector<ImageResult>& results, const EvalParams& eval)
{
    Aggregate a;
    a.detection.assign(eval.alphas.size(), 0.0);
    std::vector<std::size_t> tp(eval.alphas.size(), 0);
    std::size_t n_gt = 0;
    for (const auto& r : results) {
        if (!r.ok) {
            ++a.n_failed;
            continue;
        }
        ++a.n_ok;
        a.auroc += r.auroc;
        a.peak_dice += r.dice.peak_dice;
        a.epsilon += r.epsilon;
        n_gt += r.n_gt;
        for (std::size_t k = 0; k < eval.alphas.size(); ++k) {
            a.detection[k] += r.detection[k].rate;
            tp[k] += r.detection[k].tp;
        }
    }
    if (a.n_ok == 0)
        return a;
    const auto n = static_cast<double>(a.n_ok);
    a.auroc /= n;
    a.peak_dice /= n;
    a.epsilon /= n;
    for (std::size_t k = 0; k < a.detection.size(); ++k)
        a.detection[k] = eval.pooled_detection ? static_cast<double>(tp[k]) / static_cast<double>(n_gt)
                                               : a.detection[k] / n;
    return a;
}

double detection_at(const Aggregate& agg, const EvalParams& eval, double alpha)
{
    for (std::size_t k = 0; k < eval.alphas.size(); ++k)
        if (std::abs(eval.alphas[k] - alpha) < 1e-9)
            return agg.detection.at(k);
    throw InvalidArgument("alpha " + format_g6(alpha) + " is not among eval.alphas");
}

PipelineReport compute_pipeline(const RunConfig& config, int threads)
{
    config.validate();
    std::vector<DatasetEntry> dataset;
    if (!config.dataset_dir.empty())
        dataset = load_dataset(config.dataset_dir);
    const int n = dataset.empty() ? config.n_images : static_cast<int>(dataset.size());
    PipelineReport rep;
    rep.results.resize(static_cast<std::size_t>(n));
    parallel_for(n, resolve_threads(threads), [&](int i) {
        rep.results[static_cast<std::size_t>(i)] =
            process_image(config, i, std::nullopt, dataset.empty() ? nullptr : &dataset[static_cast<std::size_t>(i)]);
    });
    rep.aggregate = aggregate(rep.results, config.eval);
    return rep;
}

PipelineReport run_pipeline(const RunConfig& config, int threads)
{
    config.validate();
    std::vector<DatasetEntry> dataset;
    if (!config.dataset_dir.empty())
        dataset = load_dataset(config.dataset_dir);
    const int n = dataset.empty() ? config.n_images : static_cast<int>(dataset.size());
    const fs::path out = config.output_dir;
    fs::create_directories(out);

    PipelineReport rep;
    rep.results.resize(static_cast<std::size_t>(n));
    parallel_for(n, resolve_threads(threads), [&](int i) {
        const auto idx = static_cast<std::size_t>(i);
        const DatasetEntry* entry = dataset.empty() ? nullptr : &dataset[idx];
        rep.results[idx] = process_image(config, i, out / scene_dir_name(i), entry);
    });
    rep.aggregate = aggregate(rep.results, config.eval);

    write_text(out / "config.toml", config.to_text());
    write_text(out / "metrics.csv", metrics_csv(rep.results, rep.aggregate, config.eval));
    write_text(out / "curves.csv", curves_csv(rep.results));
    write_text(out / "aggregate.json", aggregate_json(rep.results, rep.aggregate, config.eval));
    std::vector<CocoImage> coco;
    for (const auto& r : rep.results)
        coco.push_back(coco_image(r.index, scene_dir_name(r.index) + "/image.png",
                                  r.ok ? r.instances : InstanceSet{r.instances.dims, {}}));
    write_coco(out / "instances_coco.json", coco);
    return rep;
}

std::string metrics_csv(const std::vector<ImageResult>& results, const Aggregate& agg, const EvalParams& eval)
{
    std::string s = "image,name,seed,status,n_gt,n_points,n_instances,epsilon,auroc,peak_dice,peak_threshold,"
                    "entropy_nucleus,entropy_background";
    for (double a : eval.alphas)
        s += "," + alpha_column("detection_", a);
    s += ",error\n";
    std::size_t n_gt = 0;
    std::size_t n_points = 0;
    std::size_t n_inst = 0;
    double ent_n = 0.0;
    double ent_b = 0.0;
    double peak_t = 0.0;
    for (const auto& r : results) {
        s += std::to_string(r.index) + "," + csv_field(r.name) + "," + std::to_string(r.seed) + ",";
        if (!r.ok) {
            s += "failed,,,,,,,,,,";
            for (std::size_t k = 0; k < eval.alphas.size(); ++k)
                s += ",";
            s += csv_field(r.error) + "\n";
            continue;
        }
        n_gt += r.n_gt;
        n_points += r.n_points;
        n_inst += r.n_instances;
        ent_n += r.entropy_nucleus;
        ent_b += r.entropy_background;
        peak_t += r.dice.peak_threshold;
        s += "ok," + std::to_string(r.n_gt) + "," + std::to_string(r.n_points) + "," +
             std::to_string(r.n_instances) + "," + format_g6(r.epsilon) + "," + format_g6(r.auroc) + "," +
             format_g6(r.dice.peak_dice) + "," + format_g6(r.dice.peak_threshold) + "," +
             format_g6(r.entropy_nucleus) + "," + format_g6(r.entropy_background);
        for (const auto& d : r.detection)
            s += "," + format_g6(d.rate);
        s += ",\n";
    }
    s += "mean,,," + std::string(agg.n_failed ? "partial" : "ok") + "," + std::to_string(n_gt) + "," +
         std::to_string(n_points) + "," + std::to_string(n_inst) + ",";
    if (agg.n_ok == 0) {
        s += ",,,,,";
        for (std::size_t k = 0; k < eval.alphas.size(); ++k)
            s += ",";
        return s + "no successful images\n";
    }
    const auto n = static_cast<double>(agg.n_ok);
    s += format_g6(agg.epsilon) + "," + format_g6(agg.auroc) + "," + format_g6(agg.peak_dice) + "," +
         format_g6(peak_t / n) + "," + format_g6(ent_n / n) + "," + format_g6(ent_b / n);
    for (double d : agg.detection)
        s += "," + format_g6(d);
    s += ",\n";
    return s;
}

std::string curves_csv(const std::vector<ImageResult>& results)
{
    std::string s = "image,curve,threshold,value\n";
    for (const auto& r : results) {
        if (!r.ok)
            continue;
        const std::string id = std::to_string(r.index);
        for (const auto& smp : r.dice.curve.samples)
            s += id + ",dice," + format_g6(smp.threshold) + "," + format_g6(smp.value) + "\n";
        for (const auto& d : r.detection)
            s += id + ",detection," + format_g6(d.alpha) + "," + format_g6(d.rate) + "\n";
    }
    return s;
}

std::string aggregate_json(const std::vector<ImageResult>& results, const Aggregate& agg, const EvalParams& eval)
{
    json det = json::object();
    for (std::size_t k = 0; k < eval.alphas.size() && k < agg.detection.size(); ++k)
        det[format_g6(eval.alphas[k])] = agg.detection[k];
    json failures = json::array();
    for (const auto& r : results)
        if (!r.ok)
            failures.push_back({{"image", r.index}, {"name", r.name}, {"error", r.error}});
    json j = {{"n_images", results.size()},
              {"n_ok", agg.n_ok},
              {"n_failed", agg.n_failed},
              {"detection_mode", eval.pooled_detection ? "pooled" : "per_image_mean"},
              {"mean",
               {{"auroc", agg.auroc}, {"peak_dice", agg.peak_dice}, {"epsilon", agg.epsilon}, {"detection", det}}},
              {"failures", failures}};
    return j.dump(1) + "\n";
}

// --- ablation -----------------------------------------------------------

AblationAxis parse_axis(const std::string& name)
{
    if (name == "radius")
        return AblationAxis::Radius;
    if (name == "keep_fraction" || name == "keep")
        return AblationAxis::KeepFraction;
    if (name == "jitter")
        return AblationAxis::Jitter;
    throw InvalidArgument("unknown ablation axis '" + name + "' (radius, keep_fraction, jitter)");
}

std::string axis_name(AblationAxis axis)
{
    switch (axis) {
    case AblationAxis::Radius:
        return "radius";
    case AblationAxis::KeepFraction:
        return "keep_fraction";
    case AblationAxis::Jitter:
        return "jitter";
    }
    return "";
}

namespace {

RunConfig with_value(const RunConfig& base, AblationAxis axis, double v)
{
    RunConfig c = base;
    auto integral = [&](const char* what) {
        if (v != std::floor(v) || v < 0 || v > 1e6)
            throw InvalidArgument(std::string("ablation ") + what + " values must be non-negative integers");
        return static_cast<int>(v);
    };
    switch (axis) {
    case AblationAxis::Radius:
        c.sparsify.radius = integral("radius");
        break;
    case AblationAxis::KeepFraction:
        c.sparsify.keep_fraction = v;
        break;
    case AblationAxis::Jitter:
        c.sparsify.jitter_max = integral("jitter");
        break;
    }
    c.eval.alphas = {0.5};
    return c;
}

} // namespace

void AblationSpec::validate() const
{
    if (values.empty())
        throw InvalidArgument("ablation needs at least one value");
    for (double v : values)
        with_value(base, axis, v).validate();
}

std::vector<AblationRow> compute_ablation(const AblationSpec& spec, int threads)
{
    spec.validate();
    std::vector<AblationRow> rows;
    for (double v : spec.values) {
        const RunConfig c = with_value(spec.base, spec.axis, v);
        const PipelineReport rep = compute_pipeline(c, threads);
        AblationRow row;
        row.value = v;
        row.peak_dice = rep.aggregate.peak_dice;
        row.auroc = rep.aggregate.auroc;
        row.detection_05 = detection_at(rep.aggregate, c.eval, 0.5);
        row.n_failed = rep.aggregate.n_failed;
        rows.push_back(row);
    }
    return rows;
}

std::string ablation_csv(AblationAxis axis, const std::vector<AblationRow>& rows)
{
    std::string s = axis_name(axis) + ",peak_dice,auroc,detection_0.5,n_failed\n";
    for (const auto& r : rows)
        s += format_g6(r.value) + "," + format_g6(r.peak_dice) + "," + format_g6(r.auroc) + "," +
             format_g6(r.detection_05) + "," + std::to_string(r.n_failed) + "\n";
    return s;
}

std::vector<AblationRow> run_ablation(const AblationSpec& spec, int threads)
{
    const auto rows = compute_ablation(spec, threads);
    fs::create_directories(spec.base.output_dir);
    write_text(spec.base.output_dir / "ablation.csv", ablation_csv(spec.axis, rows));
    return rows;
}

// --- theory -------------------------------------------------------------

std::vector<MonteCarloRow> monte_carlo_table(const TheorySpec& spec, int threads)
{
    if (spec.mc_repeats < 1)
        throw InvalidArgument("Monte Carlo repeats must be >= 1");
    std::vector<MonteCarloRow> rows(static_cast<std::size_t>(spec.mc_repeats));
    const double expected = spec.mc_p_ct * spec.mc_epsilon;
    const double sigma = std::sqrt(expected * (1.0 - expected) / static_cast<double>(spec.mc_trials));
    parallel_for(spec.mc_repeats, resolve_threads(threads), [&](int i) {
        MonteCarloRow& row = rows[static_cast<std::size_t>(i)];
        row.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(i));
        row.result = monte_carlo_label_sim(spec.mc_p_ct, spec.mc_epsilon, spec.mc_trials, row.seed);
        row.expected = expected;
        row.sigma = sigma;
        row.z = sigma > 0.0 ? (row.result.label_rate - expected) / sigma : 0.0;
    });
    return rows;
}

void verify_theory(const TheorySpec& spec, const fs::path& out_dir, int threads)
{
    fs::create_directories(out_dir);
    std::string t = "epsilon,x,h_exact,h_approx,dominant_fraction\n";
    for (double e : spec.epsilons)
        for (double x : spec.xs) {
            const TheoryPoint p = dominance_report(e, x);
            t += format_g6(p.epsilon) + "," + format_g6(p.x) + "," + format_g6(p.h_exact) + "," +
                 format_g6(p.h_approx) + "," + format_g6(p.dominant_fraction) + "\n";
        }
    write_text(out_dir / "theory.csv", t);

    std::string m = "seed,p_ct,epsilon,n_trials,positives,label_rate,expected,sigma,z,entropy,expected_entropy\n";
    const double h_expected = binary_entropy(spec.mc_p_ct * spec.mc_epsilon);
    for (const auto& r : monte_carlo_table(spec, threads))
        m += std::to_string(r.seed) + "," + format_g6(spec.mc_p_ct) + "," + format_g6(spec.mc_epsilon) + "," +
             std::to_string(r.result.trials) + "," + std::to_string(r.result.positives) + "," +
             format_g6(r.result.label_rate) + "," + format_g6(r.expected) + "," + format_g6(r.sigma) + "," +
             format_g6(r.z) + "," + format_g6(r.result.entropy) + "," + format_g6(h_expected) + "\n";
    write_text(out_dir / "monte_carlo.csv", m);
}

// --- evaluation ---------------------------------------------------------

namespace {

Instance prediction_instance(const ScoredPrediction& p, int id)
{
    Instance inst{id, p.mask, p.bbox, {}};
    if (inst.mask.empty())
        inst.mask = BinaryMask(p.bbox.width(), p.bbox.height(), 1);
    return inst;
}

} // namespace

EvalReport evaluate_predictions(const fs::path& gt, const fs::path& predictions, const EvalParams& eval)
{
    require_alpha_list(eval.alphas);
    std::map<int, std::pair<std::string, InstanceSet>> truth;
    if (fs::is_directory(gt)) {
        const auto dataset = load_dataset(gt);
        for (std::size_t i = 0; i < dataset.size(); ++i)
            truth[static_cast<int>(i)] = {dataset[i].name, instances_from_labels(read_labels(dataset[i].labels))};
    } else {
        for (auto& [id, set] : read_coco_ground_truth(gt))
            truth[id] = {std::to_string(id), std::move(set)};
    }
    const auto preds = read_coco(predictions);

    EvalReport rep;
    for (const auto& [id, p] : preds)
        rep.has_scores = rep.has_scores || p.has_scores;
    for (const auto& [id, named] : truth) {
        EvalImage img;
        img.id = id;
        img.name = named.first;
        try {
            const InstanceSet& g = named.second;
            static const CocoPredictions none{};
            const auto it = preds.find(id);
            const CocoPredictions& p = it == preds.end() ? none : it->second;
            img.n_gt = g.instances.size();
            img.n_pred = p.predictions.size();
            InstanceSet pred_set{g.dims, {}};
            bool all_masks = true;
            for (const auto& sp : p.predictions) {
                pred_set.instances.push_back(prediction_instance(sp, static_cast<int>(pred_set.instances.size()) + 1));
                all_masks = all_masks && !sp.mask.empty();
            }
            for (double a : eval.alphas)
                img.detection.push_back(detection_rate(pred_set, g, a));
            img.box = map_suite(p.predictions, g, IouMode::Box);
            if (all_masks)
                img.mask = map_suite(p.predictions, g, IouMode::Mask);
            img.ok = true;
        } catch (const std::exception& e) {
            img.error = e.what();
        }
        rep.images.push_back(std::move(img));
    }
    return rep;
}

EvalReport run_eval(const fs::path& gt, const fs::path& predictions, const EvalParams& eval, const fs::path& out_dir)
{
    const EvalReport rep = evaluate_predictions(gt, predictions, eval);
    fs::create_directories(out_dir);

    std::string s = "image,name,status,n_gt,n_pred";
    for (double a : eval.alphas)
        s += "," + alpha_column("detection_", a);
    s += ",map50_box,map75_box,map_box,map50_mask,map75_mask,map_mask,error\n";
    std::string c = "image,curve,threshold,value\n";

    std::size_t n_ok = 0;
    std::size_t n_gt = 0;
    std::size_t n_pred = 0;
    std::size_t n_mask = 0;
    std::vector<double> det(eval.alphas.size(), 0.0);
    std::vector<std::size_t> tp(eval.alphas.size(), 0);
    double box[3] = {0, 0, 0};
    double mask[3] = {0, 0, 0};
    for (const auto& img : rep.images) {
        s += std::to_string(img.id) + "," + csv_field(img.name) + ",";
        if (!img.ok) {
            s += "failed,,";
            for (std::size_t k = 0; k < eval.alphas.size(); ++k)
                s += ",";
            s += ",,,,,," + csv_field(img.error) + "\n";
            continue;
        }
        ++n_ok;
        n_gt += img.n_gt;
        n_pred += img.n_pred;
        s += "ok," + std::to_string(img.n_gt) + "," + std::to_string(img.n_pred);
        for (std::size_t k = 0; k < img.detection.size(); ++k) {
            s += "," + format_g6(img.detection[k].rate);
            det[k] += img.detection[k].rate;
            tp[k] += img.detection[k].tp;
            c += std::to_string(img.id) + ",detection," + format_g6(img.detection[k].alpha) + "," +
                 format_g6(img.detection[k].rate) + "\n";
        }
        s += "," + format_g6(img.box.map50) + "," + format_g6(img.box.map75) + "," + format_g6(img.box.map);
        box[0] += img.box.map50;
        box[1] += img.box.map75;
        box[2] += img.box.map;
        if (img.mask) {
            ++n_mask;
            mask[0] += img.mask->map50;
            mask[1] += img.mask->map75;
            mask[2] += img.mask->map;
            s += "," + format_g6(img.mask->map50) + "," + format_g6(img.mask->map75) + "," + format_g6(img.mask->map);
        } else {
            s += ",,,";
        }
        s += ",\n";
    }
    s += "mean,,";
    s += n_ok == rep.images.size() ? "ok" : "partial";
    s += "," + std::to_string(n_gt) + "," + std::to_string(n_pred);
    if (n_ok == 0) {
        for (std::size_t k = 0; k < eval.alphas.size(); ++k)
            s += ",";
        s += ",,,,,,no successful images\n";
    } else {
        const auto n = static_cast<double>(n_ok);
        for (std::size_t k = 0; k < det.size(); ++k)
            s += "," + format_g6(eval.pooled_detection ? static_cast<double>(tp[k]) / static_cast<double>(n_gt)
                                                        : det[k] / n);
        for (double v : box)
            s += "," + format_g6(v / n);
        for (double v : mask)
            s += "," + (n_mask ? format_g6(v / static_cast<double>(n_mask)) : std::string());
        s += ",\n";
    }
    write_text(out_dir / "metrics.csv", s);
    write_text(out_dir / "curves.csv", c);
    return rep;
}

void export_coco(const fs::path& run_dir, const fs::path& out_path)
{
    if (!fs::is_directory(run_dir))
        throw IoError("run directory not found: " + run_dir.string());
    std::vector<std::string> scenes;
    for (const auto& de : fs::directory_iterator(run_dir))
        if (de.is_directory() && fs::exists(de.path() / "instances.png"))
            scenes.push_back(de.path().filename().string());
    std::sort(scenes.begin(), scenes.end());
    std::vector<CocoImage> images;
    for (std::size_t i = 0; i < scenes.size(); ++i)
        images.push_back(coco_image(static_cast<int>(i), scenes[i] + "/image.png",
                                    instances_from_labels(read_labels(run_dir / scenes[i] / "instances.png"))));
    write_coco(out_path, images);
}

void run_synth(const RunConfig& config, int threads)
{
    config.validate();
    const fs::path out = config.output_dir;
    fs::create_directories(out);
    std::vector<std::string> errors(static_cast<std::size_t>(config.n_images));
    parallel_for(config.n_images, resolve_threads(threads), [&](int i) {
        try {
            SceneConfig sc = config.scene;
            sc.seed = image_seed(config, i);
            const Scene s = generate_scene(sc);
            const fs::path d = out / scene_dir_name(i);
            fs::create_directories(d);
            write_image_png16(d / "image.png", s.image);
            write_labels_png(d / "labels.png", s.labels);
            write_labels_json(d / "labels.json", s.labels);
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(i)] = e.what();
        }
    });
    std::string msg;
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty())
            msg += scene_dir_name(static_cast<int>(i)) + ": " + errors[i] + "\n";
    if (!msg.empty())
        throw std::runtime_error("scene generation failed:\n" + msg);
}

} // namespace entroboot
