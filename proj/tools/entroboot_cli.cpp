// Command-line front end. Talks to the library only through the C API.

#include <entroboot/entroboot.h>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Failure {
    int code;
};

void check(eb_status s, const std::string& what)
{
    if (s == EB_OK)
        return;
    std::fprintf(stderr, "error: %s: %s (%s)\n", what.c_str(), eb_last_error(), eb_status_string(s));
    throw Failure{s == EB_ERR_INVALID_ARGUMENT ? 2 : 1};
}

template <class T, void (*Free)(T*)>
struct Handle {
    T* p = nullptr;
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    ~Handle() { Free(p); }
    T** out() { return &p; }
    T* get() const { return p; }
};

using Config = Handle<eb_config, eb_config_free>;
using Image = Handle<eb_image, eb_image_free>;
using Labels = Handle<eb_labels, eb_labels_free>;
using Mask = Handle<eb_mask, eb_mask_free>;
using Points = Handle<eb_points, eb_points_free>;
using Instances = Handle<eb_instances, eb_instances_free>;

// Config file plus overrides shared by every subcommand that needs one.
struct ConfigArgs {
    std::string file;
    std::vector<std::string> sets;
    std::vector<std::pair<std::string, std::string>> flags;

    void add(CLI::App* app)
    {
        app->add_option("--config", file, "TOML-style config file of dotted keys")->check(CLI::ExistingFile);
        app->add_option("--set", sets, "Override a config key (key=value); repeatable");
    }

    template <class T>
    void flag(CLI::App* app, const std::string& name, const std::string& key, const std::string& help)
    {
        auto value = std::make_shared<T>();
        auto* opt = app->add_option(name, *value, help + " [" + key + "]");
        bindings.push_back([this, opt, value, key] {
            if (opt->count() == 0)
                return;
            if constexpr (std::is_same_v<T, bool>)
                flags.emplace_back(key, *value ? "true" : "false");
            else if constexpr (std::is_same_v<T, std::string>)
                flags.emplace_back(key, *value);
            else
                flags.emplace_back(key, std::to_string(*value));
        });
    }

    void switch_flag(CLI::App* app, const std::string& name, const std::string& key, const std::string& help)
    {
        const std::string text = help + " [" + key + "=true]";
        CLI::Option* opt = app->add_flag(name, text);
        bindings.push_back([this, opt, key] {
            if (opt->count())
                flags.emplace_back(key, "true");
        });
    }

    void build(Config& cfg)
    {
        for (auto& b : bindings)
            b();
        if (!file.empty())
            check(eb_config_load(file.c_str(), cfg.out()), "loading " + file);
        else
            check(eb_config_new(cfg.out()), "creating config");
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) {
                std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", s.c_str());
                throw Failure{2};
            }
            const std::string k = s.substr(0, eq);
            check(eb_config_set(cfg.get(), k.c_str(), s.substr(eq + 1).c_str()), "--set " + k);
        }
        // Flags win over the file and --set.
        for (const auto& [k, v] : flags)
            check(eb_config_set(cfg.get(), k.c_str(), v.c_str()), k);
        check(eb_config_validate(cfg.get()), "config");
    }

    std::vector<std::function<void()>> bindings;
};

std::string path_str(const fs::path& p)
{
    return p.string();
}

int report_failed(size_t n_failed)
{
    std::fprintf(stderr, "warning: %zu image(s) failed: %s\n", n_failed, eb_last_error());
    return 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Entropy bootstrapping for weakly supervised nuclei detection"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(eb_version()));

    // synth
    ConfigArgs synth_cfg;
    std::string synth_out;
    int synth_threads = 0;
    auto* synth = app.add_subcommand("synth", "Generate synthetic scenes (image.png, labels.png, labels.json)");
    synth_cfg.add(synth);
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth_cfg.flag<int>(synth, "--n", "run.n_images", "Number of scenes");
    synth_cfg.flag<std::uint64_t>(synth, "--seed", "run.master_seed", "Master seed");
    synth_cfg.flag<int>(synth, "--count", "scene.nucleus_count", "Nuclei per scene");
    synth_cfg.switch_flag(synth, "--overlap", "scene.overlap_allowed", "Allow overlapping nuclei");
    synth->add_option("--threads", synth_threads, "Worker threads (0 = all cores)");

    // sparsify
    ConfigArgs sp_cfg;
    std::string sp_labels, sp_out;
    std::uint64_t sp_seed = 0;
    auto* sparsify = app.add_subcommand("sparsify", "Sample point annotations from a label map");
    sp_cfg.add(sparsify);
    sparsify->add_option("--labels", sp_labels, "Label map PNG")->required()->check(CLI::ExistingFile);
    sparsify->add_option("--out", sp_out, "Output directory")->required();
    sparsify->add_option("--seed", sp_seed, "Sampling seed");
    sp_cfg.flag<int>(sparsify, "--radius", "sparsify.radius", "Disk radius around each point");
    sp_cfg.flag<double>(sparsify, "--keep", "sparsify.keep_fraction", "Fraction of nuclei annotated");
    sp_cfg.flag<int>(sparsify, "--jitter", "sparsify.jitter_max", "Maximum point displacement");
    sp_cfg.flag<std::string>(sparsify, "--jitter-mode", "sparsify.jitter_mode", "uniform or gaussian");

    // bootstrap
    ConfigArgs bs_cfg;
    std::string bs_image, bs_mask, bs_points, bs_out;
    int bs_radius = 3;
    auto* bootstrap = app.add_subcommand("bootstrap", "Estimate the entropy map from sparse labels");
    bs_cfg.add(bootstrap);
    bootstrap->add_option("--image", bs_image, "Input image")->required()->check(CLI::ExistingFile);
    auto* mask_opt =
        bootstrap->add_option("--label-mask", bs_mask, "Rasterized label mask PNG")->check(CLI::ExistingFile);
    auto* points_opt = bootstrap->add_option("--points", bs_points, "Point JSON (rasterized with --radius)")
                           ->check(CLI::ExistingFile)
                           ->excludes(mask_opt);
    bootstrap->add_option("--radius", bs_radius, "Disk radius used with --points");
    bootstrap->add_option("--out", bs_out, "Output directory")->required();

    // instance
    ConfigArgs in_cfg;
    std::string in_entropy, in_points, in_image, in_out;
    bool in_debug = false;
    auto* instance = app.add_subcommand("instance", "Convert an entropy map into instance masks");
    in_cfg.add(instance);
    instance->add_option("--entropy", in_entropy, "Normalized entropy PNG")->required()->check(CLI::ExistingFile);
    instance->add_option("--points", in_points, "Point JSON")->required()->check(CLI::ExistingFile);
    instance->add_option("--image", in_image, "Input image")->required()->check(CLI::ExistingFile);
    instance->add_option("--out", in_out, "Output directory")->required();
    instance->add_flag("--debug-stages", in_debug, "Write a_entropy.png ... e_matched.png");
    in_cfg.flag<double>(instance, "--blur-sigma", "instancer.blur_sigma", "Entropy blur");
    in_cfg.flag<int>(instance, "--window", "instancer.threshold_window", "Adaptive threshold window");
    in_cfg.flag<double>(instance, "--offset", "instancer.threshold_offset", "Adaptive threshold offset");
    in_cfg.flag<int>(instance, "--min-area", "instancer.min_area", "Minimum instance area");

    // eval
    ConfigArgs ev_cfg;
    std::string ev_gt, ev_pred, ev_out;
    auto* eval = app.add_subcommand("eval", "Score COCO predictions against ground truth");
    ev_cfg.add(eval);
    eval->add_option("--gt", ev_gt, "Dataset directory (labels.png per scene) or COCO file")
        ->required()
        ->check(CLI::ExistingPath);
    eval->add_option("--pred", ev_pred, "COCO predictions, with or without scores")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--out", ev_out, "Output directory")->required();
    ev_cfg.switch_flag(eval, "--pooled", "eval.pooled_detection", "Pool detections over the set");
    ev_cfg.flag<std::string>(eval, "--alphas", "eval.alphas", "Comma-separated IoU thresholds");

    // pipeline
    ConfigArgs pl_cfg;
    int pl_threads = 0;
    auto* pipeline = app.add_subcommand("pipeline", "Run synth, sparsify, bootstrap, instance and metrics");
    pl_cfg.add(pipeline);
    pl_cfg.flag<std::string>(pipeline, "--out", "run.output_dir", "Output directory");
    pl_cfg.flag<int>(pipeline, "--n", "run.n_images", "Number of images");
    pl_cfg.flag<std::uint64_t>(pipeline, "--seed", "run.master_seed", "Master seed");
    pl_cfg.flag<std::string>(pipeline, "--dataset", "run.dataset_dir", "Use image.png/labels.png pairs instead");
    pl_cfg.switch_flag(pipeline, "--debug-stages", "run.debug_stages", "Write per-stage PNGs");
    pl_cfg.flag<int>(pipeline, "--radius", "sparsify.radius", "Disk radius around each point");
    pl_cfg.flag<double>(pipeline, "--keep", "sparsify.keep_fraction", "Fraction of nuclei annotated");
    pl_cfg.flag<int>(pipeline, "--jitter", "sparsify.jitter_max", "Maximum point displacement");
    pipeline->add_option("--threads", pl_threads, "Worker threads (0 = all cores)");

    // ablate
    ConfigArgs ab_cfg;
    std::string ab_axis;
    std::vector<double> ab_values;
    int ab_threads = 0;
    auto* ablate = app.add_subcommand("ablate", "Sweep one annotation knob and write ablation.csv");
    ab_cfg.add(ablate);
    ablate->add_option("--axis", ab_axis, "radius, keep_fraction or jitter")
        ->required()
        ->check(CLI::IsMember({"radius", "keep_fraction", "keep", "jitter"}));
    ablate->add_option("--values", ab_values, "Values to sweep")->required()->delimiter(',');
    ab_cfg.flag<std::string>(ablate, "--out", "run.output_dir", "Output directory");
    ab_cfg.flag<int>(ablate, "--n", "run.n_images", "Images per value");
    ab_cfg.flag<std::uint64_t>(ablate, "--seed", "run.master_seed", "Master seed");
    ablate->add_option("--threads", ab_threads, "Worker threads (0 = all cores)");

    // verify-theory
    std::string th_out;
    double th_pct = 0.3, th_eps = 0.05;
    std::uint64_t th_trials = 1000000, th_seed = 0;
    int th_repeats = 50, th_threads = 0;
    auto* theory = app.add_subcommand("verify-theory", "Tabulate the entropy-limit theory and its Monte Carlo check");
    theory->add_option("--out", th_out, "Output directory")->required();
    theory->add_option("--p-ct", th_pct, "Nucleus pixel probability");
    theory->add_option("--epsilon", th_eps, "Labeling probability");
    theory->add_option("--trials", th_trials, "Pixels per Monte Carlo run");
    theory->add_option("--repeats", th_repeats, "Seeded Monte Carlo runs");
    theory->add_option("--seed", th_seed, "Master seed");
    theory->add_option("--threads", th_threads, "Worker threads (0 = all cores)");

    // export-coco
    std::string ex_run, ex_out;
    auto* exporter = app.add_subcommand("export-coco", "Collect a pipeline run's instances into one COCO file");
    exporter->add_option("--run", ex_run, "Pipeline output directory")->required()->check(CLI::ExistingDirectory);
    exporter->add_option("--out", ex_out, "COCO JSON path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            Config cfg;
            synth_cfg.build(cfg);
            check(eb_run_synth(cfg.get(), synth_out.c_str(), synth_threads), "synth");
        } else if (*sparsify) {
            Config cfg;
            sp_cfg.build(cfg);
            Labels labels;
            check(eb_labels_read(sp_labels.c_str(), labels.out()), "reading labels");
            Points points;
            Mask mask;
            double eps = 0.0;
            check(eb_sparsify(labels.get(), cfg.get(), sp_seed, points.out(), mask.out(), &eps), "sparsify");
            fs::create_directories(sp_out);
            check(eb_points_write(points.get(), path_str(fs::path(sp_out) / "points.json").c_str()), "writing points");
            check(eb_mask_write(mask.get(), path_str(fs::path(sp_out) / "label_mask.png").c_str()), "writing mask");
            size_t n = 0;
            eb_points_count(points.get(), &n);
            std::printf("points=%zu epsilon=%.6g\n", n, eps);
        } else if (*bootstrap) {
            if (bs_mask.empty() && bs_points.empty())
                throw CLI::RequiredError("--label-mask or --points");
            (void)points_opt;
            Config cfg;
            bs_cfg.build(cfg);
            Image image;
            check(eb_image_read(bs_image.c_str(), image.out()), "reading image");
            Mask mask;
            if (!bs_mask.empty()) {
                check(eb_mask_read(bs_mask.c_str(), mask.out()), "reading label mask");
            } else {
                Points pts;
                check(eb_points_read(bs_points.c_str(), pts.out()), "reading points");
                int w = 0, h = 0;
                eb_image_dims(image.get(), &w, &h);
                check(eb_rasterize_points(pts.get(), bs_radius, w, h, mask.out()), "rasterizing points");
            }
            Image entropy, prob;
            double hmin = 0.0, hmax = 0.0;
            check(eb_bootstrap(image.get(), mask.get(), cfg.get(), entropy.out(), prob.out(), &hmin, &hmax),
                  "bootstrap");
            const fs::path out = bs_out;
            fs::create_directories(out);
            check(eb_entropy_write(entropy.get(), hmin, hmax, path_str(out / "entropy.png").c_str(),
                                   path_str(out / "entropy.json").c_str()),
                  "writing entropy");
            check(eb_image_write(prob.get(), path_str(out / "prob.png").c_str()), "writing probabilities");
            std::printf("entropy_min=%.6g entropy_max=%.6g\n", hmin, hmax);
        } else if (*instance) {
            Config cfg;
            in_cfg.build(cfg);
            Image entropy, image;
            Points pts;
            check(eb_image_read(in_entropy.c_str(), entropy.out()), "reading entropy");
            check(eb_image_read(in_image.c_str(), image.out()), "reading image");
            check(eb_points_read(in_points.c_str(), pts.out()), "reading points");
            const fs::path out = in_out;
            fs::create_directories(out);
            const std::string stages = path_str(out / "stages");
            Instances inst;
            check(eb_instance(entropy.get(), pts.get(), image.get(), cfg.get(), in_debug ? stages.c_str() : nullptr,
                              inst.out()),
                  "instancing");
            check(eb_instances_write_png(inst.get(), path_str(out / "instances.png").c_str()), "writing instances");
            check(eb_instances_write_coco(inst.get(), 0, in_image.c_str(),
                                          path_str(out / "instances_coco.json").c_str()),
                  "writing COCO");
            size_t n = 0;
            eb_instances_count(inst.get(), &n);
            std::printf("instances=%zu\n", n);
        } else if (*eval) {
            Config cfg;
            ev_cfg.build(cfg);
            check(eb_run_eval(ev_gt.c_str(), ev_pred.c_str(), cfg.get(), ev_out.c_str()), "eval");
        } else if (*pipeline) {
            Config cfg;
            pl_cfg.build(cfg);
            size_t n_failed = 0;
            const eb_status s = eb_run_pipeline(cfg.get(), nullptr, pl_threads, &n_failed);
            if (s == EB_ERR_RUN_FAILED)
                return report_failed(n_failed);
            check(s, "pipeline");
        } else if (*ablate) {
            Config cfg;
            ab_cfg.build(cfg);
            const eb_status s = eb_run_ablation(cfg.get(), ab_axis.c_str(), ab_values.data(), ab_values.size(),
                                                nullptr, ab_threads);
            if (s == EB_ERR_RUN_FAILED) {
                std::fprintf(stderr, "warning: %s\n", eb_last_error());
                return 1;
            }
            check(s, "ablate");
        } else if (*theory) {
            check(eb_verify_theory(th_out.c_str(), th_pct, th_eps, th_trials, th_repeats, th_seed, th_threads),
                  "verify-theory");
        } else if (*exporter) {
            check(eb_export_coco(ex_run.c_str(), ex_out.c_str()), "export-coco");
        }
    } catch (const Failure& f) {
        return f.code;
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
