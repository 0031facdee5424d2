#include "entroboot/entroboot.h"

#include "entroboot/pipeline.hpp"

#include <cmath>
#include <cstring>
#include <exception>
#include <new>
#include <string>

using namespace entroboot;

struct eb_config {
    RunConfig value;
};
struct eb_image {
    ImageGrid value;
};
struct eb_labels {
    LabelMap value;
};
struct eb_mask {
    BinaryMask value;
};
struct eb_points {
    PointAnnotationSet value;
};
struct eb_instances {
    InstanceSet value;
};

namespace {

thread_local std::string last_error;

eb_status fail(eb_status status, const std::string& message)
{
    last_error = message;
    return status;
}

// Maps exceptions from the core onto status codes.
template <class F>
eb_status guard(F&& fn)
{
    try {
        last_error.clear();
        return fn();
    } catch (const PlacementError& e) {
        return fail(EB_ERR_PLACEMENT, e.what());
    } catch (const DomainError& e) {
        return fail(EB_ERR_DOMAIN, e.what());
    } catch (const InvalidArgument& e) {
        return fail(EB_ERR_INVALID_ARGUMENT, e.what());
    } catch (const IoError& e) {
        return fail(EB_ERR_IO, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(EB_ERR_IO, e.what());
    } catch (const std::bad_alloc&) {
        return fail(EB_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(EB_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(EB_ERR_INTERNAL, "unknown error");
    }
}

#define EB_REQUIRE(ptr)                                                                                      \
    do {                                                                                                     \
        if (!(ptr))                                                                                          \
            return fail(EB_ERR_NULL, #ptr " must not be NULL");                                              \
    } while (0)

eb_status copy_out(const std::string& s, char* buf, std::size_t cap, std::size_t* needed)
{
    if (needed)
        *needed = s.size() + 1;
    if (!buf)
        return EB_OK;
    if (cap < s.size() + 1)
        return fail(EB_ERR_INVALID_ARGUMENT, "buffer too small");
    std::memcpy(buf, s.c_str(), s.size() + 1);
    return EB_OK;
}

const RunConfig& config_or_default(const eb_config* config)
{
    static const RunConfig defaults;
    return config ? config->value : defaults;
}

} // namespace

extern "C" {

const char* eb_status_string(eb_status status)
{
    switch (status) {
    case EB_OK:
        return "ok";
    case EB_ERR_INVALID_ARGUMENT:
        return "invalid argument";
    case EB_ERR_IO:
        return "i/o error";
    case EB_ERR_DOMAIN:
        return "undefined for input";
    case EB_ERR_PLACEMENT:
        return "placement failure";
    case EB_ERR_INTERNAL:
        return "internal error";
    case EB_ERR_NULL:
        return "null argument";
    case EB_ERR_RUN_FAILED:
        return "run had failures";
    }
    return "unknown status";
}

const char* eb_last_error(void)
{
    return last_error.c_str();
}

const char* eb_version(void)
{
    return "0.1.0";
}

// --- configuration ------------------------------------------------------

eb_status eb_config_new(eb_config** out)
{
    EB_REQUIRE(out);
    return guard([&] {
        *out = new eb_config{};
        return EB_OK;
    });
}

eb_status eb_config_load(const char* path, eb_config** out)
{
    EB_REQUIRE(path);
    EB_REQUIRE(out);
    return guard([&] {
        *out = new eb_config{RunConfig::load(path)};
        return EB_OK;
    });
}

eb_status eb_config_set(eb_config* config, const char* key, const char* value)
{
    EB_REQUIRE(config);
    EB_REQUIRE(key);
    EB_REQUIRE(value);
    return guard([&] {
        config->value.set(key, value);
        return EB_OK;
    });
}

eb_status eb_config_get(const eb_config* config, const char* key, char* buf, size_t cap, size_t* needed)
{
    EB_REQUIRE(config);
    EB_REQUIRE(key);
    return guard([&] { return copy_out(config->value.get(key), buf, cap, needed); });
}

eb_status eb_config_dump(const eb_config* config, char* buf, size_t cap, size_t* needed)
{
    EB_REQUIRE(config);
    return guard([&] { return copy_out(config->value.to_text(), buf, cap, needed); });
}

eb_status eb_config_validate(const eb_config* config)
{
    EB_REQUIRE(config);
    return guard([&] {
        config->value.validate();
        return EB_OK;
    });
}

size_t eb_config_key_count(void)
{
    return RunConfig::keys().size();
}

const char* eb_config_key(size_t index)
{
    const auto& keys = RunConfig::keys();
    return index < keys.size() ? keys[index].c_str() : nullptr;
}

void eb_config_free(eb_config* config)
{
    delete config;
}

// --- rasters ------------------------------------------------------------

eb_status eb_image_new(int width, int height, const double* data, eb_image** out)
{
    EB_REQUIRE(out);
    return guard([&] {
        ImageGrid g(width, height, 0.0);
        if (data) {
            std::memcpy(g.pixels().data(), data, g.size() * sizeof(double));
            for (double v : g.pixels())
                if (!std::isfinite(v))
                    throw InvalidArgument("eb_image_new: non-finite pixel");
        }
        *out = new eb_image{std::move(g)};
        return EB_OK;
    });
}

eb_status eb_image_read(const char* path, eb_image** out)
{
    EB_REQUIRE(path);
    EB_REQUIRE(out);
    return guard([&] {
        *out = new eb_image{read_image(path)};
        return EB_OK;
    });
}

eb_status eb_image_write(const eb_image* image, const char* path)
{
    EB_REQUIRE(image);
    EB_REQUIRE(path);
    return guard([&] {
        write_image_png16(path, image->value);
        return EB_OK;
    });
}

eb_status eb_image_dims(const eb_image* image, int* width, int* height)
{
    EB_REQUIRE(image);
    if (width)
        *width = image->value.width();
    if (height)
        *height = image->value.height();
    return EB_OK;
}

eb_status eb_image_copy_data(const eb_image* image, double* out, size_t count)
{
    EB_REQUIRE(image);
    EB_REQUIRE(out);
    if (count < image->value.size())
        return fail(EB_ERR_INVALID_ARGUMENT, "output buffer smaller than width*height");
    std::memcpy(out, image->value.pixels().data(), image->value.size() * sizeof(double));
    return EB_OK;
}

void eb_image_free(eb_image* image)
{
    delete image;
}

eb_status eb_labels_read(const char* path, eb_labels** out)
{
    EB_REQUIRE(path);
    EB_REQUIRE(out);
    return guard([&] {
        *out = new eb_labels{read_labels(path)};
        return EB_OK;
    });
}

eb_status eb_labels_write(const eb_labels* labels, const char* png_path, const char* json_path)
{
    EB_REQUIRE(labels);
    EB_REQUIRE(png_path);
    return guard([&] {
        write_labels_png(png_path, labels->value);
        if (json_path)
            write_labels_json(json_path, labels->value);
        return EB_OK;
    });
}

eb_status eb_labels_dims(const eb_labels* labels, int* width, int* height)
{
    EB_REQUIRE(labels);
    if (width)
        *width = labels->value.width();
    if (height)
        *height = labels->value.height();
    return EB_OK;
}

eb_status eb_labels_count(const eb_labels* labels, size_t* count)
{
    EB_REQUIRE(labels);
    EB_REQUIRE(count);
    return guard([&] {
        *count = component_bboxes(labels->value).size();
        return EB_OK;
    });
}

eb_status eb_labels_foreground(const eb_labels* labels, eb_mask** out)
{
    EB_REQUIRE(labels);
    EB_REQUIRE(out);
    return guard([&] {
        *out = new eb_mask{foreground(labels->value)};
        return EB_OK;
    });
}

void eb_labels_free(eb_labels* labels)
{
    delete labels;
}

eb_status eb_mask_read(const char* path, eb_mask** out)
{
    EB_REQUIRE(path);
    EB_REQUIRE(out);
    return guard([&] {
        *out = new eb_mask{read_mask(path)};
        return EB_OK;
    });
}

eb_status eb_mask_write(const eb_mask* mask, const char* path)
{
    EB_REQUIRE(mask);
    EB_REQUIRE(path);
    return guard([&] {
        write_mask_png(path, mask->value);
        return EB_OK;
    });
}

eb_status eb_mask_popcount(const eb_mask* mask, size_t* count)
{
    EB_REQUIRE(mask);
    EB_REQUIRE(count);
    *count = popcount(mask->value);
    return EB_OK;
}

void eb_mask_free(eb_mask* mask)
{
    delete mask;
}

// --- points -------------------------------------------------------------

eb_status eb_points_read(const char* path, eb_points** out)
{
    EB_REQUIRE(path);
    EB_REQUIRE(out);
    return guard([&] {
        *out = new eb_points{read_points(path)};
        return EB_OK;
    });
}

eb_status eb_points_write(const eb_points* points, const char* path)
{
    EB_REQUIRE(points);
    EB_REQUIRE(path);
    return guard([&] {
        write_points(path, points->value);
        return EB_OK;
    });
}

eb_status eb_points_count(const eb_points* points, size_t* count)
{
    EB_REQUIRE(points);
    EB_REQUIRE(count);
    *count = points->value.size();
    return EB_OK;
}

eb_status eb_points_get(const eb_points* points, size_t index, int* x, int* y, int32_t* source_id)
{
    EB_REQUIRE(points);
    if (index >= points->value.size())
        return fail(EB_ERR_INVALID_ARGUMENT, "point index out of range");
    const auto& p = points->value[index];
    if (x)
        *x = p.x;
    if (y)
        *y = p.y;
    if (source_id)
        *source_id = p.source_id.value_or(-1);
    return EB_OK;
}

void eb_points_free(eb_points* points)
{
    delete points;
}

// --- stages -------------------------------------------------------------

eb_status eb_synth_scene(const eb_config* config, uint64_t seed, eb_image** image, eb_labels** labels)
{
    EB_REQUIRE(config);
    EB_REQUIRE(image);
    EB_REQUIRE(labels);
    return guard([&] {
        SceneConfig sc = config->value.scene;
        sc.seed = seed;
        Scene s = generate_scene(sc);
        *image = new eb_image{std::move(s.image)};
        *labels = new eb_labels{std::move(s.labels)};
        return EB_OK;
    });
}

eb_status eb_sparsify(const eb_labels* labels, const eb_config* config, uint64_t seed, eb_points** points,
                      eb_mask** label_mask, double* epsilon)
{
    EB_REQUIRE(labels);
    EB_REQUIRE(config);
    EB_REQUIRE(points);
    EB_REQUIRE(label_mask);
    return guard([&] {
        SparsifyConfig sp = config->value.sparsify;
        sp.seed = seed;
        PointAnnotationSet pts = sample_points(labels->value, sp);
        BinaryMask mask = rasterize_points(pts, sp.radius, labels->value.dims());
        if (epsilon)
            *epsilon = estimate_epsilon(mask, labels->value).epsilon;
        *points = new eb_points{std::move(pts)};
        *label_mask = new eb_mask{std::move(mask)};
        return EB_OK;
    });
}

eb_status eb_rasterize_points(const eb_points* points, int radius, int width, int height, eb_mask** out)
{
    EB_REQUIRE(points);
    EB_REQUIRE(out);
    return guard([&] {
        *out = new eb_mask{rasterize_points(points->value, radius, Dims{width, height})};
        return EB_OK;
    });
}

eb_status eb_bootstrap(const eb_image* image, const eb_mask* label_mask, const eb_config* config, eb_image** entropy,
                       eb_image** prob, double* entropy_min, double* entropy_max)
{
    EB_REQUIRE(image);
    EB_REQUIRE(label_mask);
    EB_REQUIRE(entropy);
    return guard([&] {
        BootstrapResult r = bootstrap_entropy(image->value, label_mask->value, config_or_default(config).bootstrap);
        if (entropy_min)
            *entropy_min = r.entropy_min;
        if (entropy_max)
            *entropy_max = r.entropy_max;
        if (prob)
            *prob = new eb_image{std::move(r.prob)};
        *entropy = new eb_image{std::move(r.normalized)};
        return EB_OK;
    });
}

eb_status eb_entropy_write(const eb_image* entropy, double entropy_min, double entropy_max, const char* png_path,
                           const char* json_path)
{
    EB_REQUIRE(entropy);
    EB_REQUIRE(png_path);
    EB_REQUIRE(json_path);
    return guard([&] {
        BootstrapResult r;
        r.normalized = entropy->value;
        r.entropy_min = entropy_min;
        r.entropy_max = entropy_max;
        write_entropy(png_path, json_path, r);
        return EB_OK;
    });
}

eb_status eb_instance(const eb_image* entropy, const eb_points* points, const eb_image* image,
                      const eb_config* config, const char* stages_dir, eb_instances** out)
{
    EB_REQUIRE(entropy);
    EB_REQUIRE(points);
    EB_REQUIRE(image);
    EB_REQUIRE(out);
    return guard([&] {
        InstancingStages stages;
        InstanceSet set = run_instancing(entropy->value, points->value, image->value,
                                         config_or_default(config).instancer, stages_dir ? &stages : nullptr);
        if (stages_dir)
            write_instancing_stages(stages_dir, entropy->value, stages);
        *out = new eb_instances{std::move(set)};
        return EB_OK;
    });
}

eb_status eb_instances_count(const eb_instances* instances, size_t* count)
{
    EB_REQUIRE(instances);
    EB_REQUIRE(count);
    *count = instances->value.instances.size();
    return EB_OK;
}

eb_status eb_instances_from_labels(const eb_labels* labels, eb_instances** out)
{
    EB_REQUIRE(labels);
    EB_REQUIRE(out);
    return guard([&] {
        *out = new eb_instances{instances_from_labels(labels->value)};
        return EB_OK;
    });
}

eb_status eb_instances_write_png(const eb_instances* instances, const char* path)
{
    EB_REQUIRE(instances);
    EB_REQUIRE(path);
    return guard([&] {
        write_labels_png(path, instances->value.to_label_map());
        return EB_OK;
    });
}

eb_status eb_instances_write_coco(const eb_instances* instances, int image_id, const char* file_name,
                                  const char* path)
{
    EB_REQUIRE(instances);
    EB_REQUIRE(path);
    return guard([&] {
        write_coco(path, {CocoImage{image_id, file_name ? file_name : "", instances->value, {}}});
        return EB_OK;
    });
}

void eb_instances_free(eb_instances* instances)
{
    delete instances;
}

// --- metrics ------------------------------------------------------------

eb_status eb_dice(const eb_mask* a, const eb_mask* b, double* out)
{
    EB_REQUIRE(a);
    EB_REQUIRE(b);
    EB_REQUIRE(out);
    return guard([&] {
        *out = dice(a->value, b->value);
        return EB_OK;
    });
}

eb_status eb_dice_peak(const eb_image* entropy, const eb_mask* gt, int n_thresholds, double* peak_dice,
                       double* peak_threshold)
{
    EB_REQUIRE(entropy);
    EB_REQUIRE(gt);
    return guard([&] {
        const DiceCurve c = dice_curve(entropy->value, gt->value, n_thresholds);
        if (peak_dice)
            *peak_dice = c.peak_dice;
        if (peak_threshold)
            *peak_threshold = c.peak_threshold;
        return EB_OK;
    });
}

eb_status eb_auroc(const eb_image* entropy, const eb_mask* gt, double* out)
{
    EB_REQUIRE(entropy);
    EB_REQUIRE(gt);
    EB_REQUIRE(out);
    return guard([&] {
        *out = roc_auroc(entropy->value, gt->value).auroc;
        return EB_OK;
    });
}

eb_status eb_detection_rate(const eb_instances* predictions, const eb_labels* gt, double alpha, double* rate)
{
    EB_REQUIRE(predictions);
    EB_REQUIRE(gt);
    EB_REQUIRE(rate);
    return guard([&] {
        *rate = detection_rate(predictions->value, gt->value, alpha).rate;
        return EB_OK;
    });
}

// --- theory -------------------------------------------------------------

eb_status eb_theory_exact(double epsilon, double x, double* out)
{
    EB_REQUIRE(out);
    return guard([&] {
        *out = theory_exact(epsilon, x);
        return EB_OK;
    });
}

eb_status eb_theory_approx(double epsilon, double x, double* out)
{
    EB_REQUIRE(out);
    return guard([&] {
        *out = theory_approx(epsilon, x);
        return EB_OK;
    });
}

eb_status eb_dominance_fraction(double epsilon, double x, double* out)
{
    EB_REQUIRE(out);
    return guard([&] {
        *out = dominance_report(epsilon, x).dominant_fraction;
        return EB_OK;
    });
}

eb_status eb_monte_carlo(double p_ct, double epsilon, uint64_t n_trials, uint64_t seed, double* label_rate,
                         double* entropy)
{
    return guard([&] {
        const MonteCarloResult r = monte_carlo_label_sim(p_ct, epsilon, n_trials, seed);
        if (label_rate)
            *label_rate = r.label_rate;
        if (entropy)
            *entropy = r.entropy;
        return EB_OK;
    });
}

// --- runs ---------------------------------------------------------------

eb_status eb_run_synth(const eb_config* config, const char* out_dir, int threads)
{
    EB_REQUIRE(config);
    return guard([&] {
        RunConfig c = config->value;
        if (out_dir)
            c.output_dir = out_dir;
        run_synth(c, threads);
        return EB_OK;
    });
}

eb_status eb_run_pipeline(const eb_config* config, const char* out_dir, int threads, size_t* n_failed)
{
    EB_REQUIRE(config);
    return guard([&] {
        RunConfig c = config->value;
        if (out_dir)
            c.output_dir = out_dir;
        const PipelineReport rep = run_pipeline(c, threads);
        if (n_failed)
            *n_failed = rep.aggregate.n_failed;
        if (rep.aggregate.n_failed == 0)
            return EB_OK;
        std::string msg = std::to_string(rep.aggregate.n_failed) + " image(s) failed";
        for (const auto& r : rep.results)
            if (!r.ok) {
                msg += "; " + r.name + ": " + r.error;
                break;
            }
        return fail(EB_ERR_RUN_FAILED, msg);
    });
}

eb_status eb_run_ablation(const eb_config* config, const char* axis, const double* values, size_t n_values,
                          const char* out_dir, int threads)
{
    EB_REQUIRE(config);
    EB_REQUIRE(axis);
    if (n_values > 0)
        EB_REQUIRE(values);
    return guard([&] {
        AblationSpec spec;
        spec.axis = parse_axis(axis);
        spec.values.assign(values, values + n_values);
        spec.base = config->value;
        if (out_dir)
            spec.base.output_dir = out_dir;
        const auto rows = run_ablation(spec, threads);
        for (const auto& r : rows)
            if (r.n_failed)
                return fail(EB_ERR_RUN_FAILED, "some images failed during the ablation");
        return EB_OK;
    });
}

eb_status eb_verify_theory(const char* out_dir, double p_ct, double epsilon, uint64_t n_trials, int repeats,
                           uint64_t seed, int threads)
{
    EB_REQUIRE(out_dir);
    return guard([&] {
        TheorySpec spec;
        spec.mc_p_ct = p_ct;
        spec.mc_epsilon = epsilon;
        spec.mc_trials = n_trials;
        spec.mc_repeats = repeats;
        spec.seed = seed;
        verify_theory(spec, out_dir, threads);
        return EB_OK;
    });
}

eb_status eb_run_eval(const char* gt, const char* predictions, const eb_config* config, const char* out_dir)
{
    EB_REQUIRE(gt);
    EB_REQUIRE(predictions);
    EB_REQUIRE(out_dir);
    return guard([&] {
        const EvalReport rep = run_eval(gt, predictions, config_or_default(config).eval, out_dir);
        for (const auto& img : rep.images)
            if (!img.ok)
                return fail(EB_ERR_RUN_FAILED, "image " + img.name + ": " + img.error);
        return EB_OK;
    });
}

eb_status eb_export_coco(const char* run_dir, const char* out_path)
{
    EB_REQUIRE(run_dir);
    EB_REQUIRE(out_path);
    return guard([&] {
        export_coco(run_dir, out_path);
        return EB_OK;
    });
}

} // extern "C"
