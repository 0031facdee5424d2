#pragma once

// Orchestration: run configuration, the end-to-end pipeline over a suite of
// images, ablation sweeps, the theory verifier, evaluation of external
// predictions and COCO export.

#include "entroboot/bootstrap.hpp"
#include "entroboot/instancer.hpp"
#include "entroboot/io.hpp"
#include "entroboot/metrics.hpp"
#include "entroboot/sparsify.hpp"
#include "entroboot/synth.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace entroboot {

struct EvalParams {
    std::vector<double> alphas = default_detection_alphas();
    int n_thresholds = 101;
    /// Pool true positives over the suite instead of averaging per-image rates.
    bool pooled_detection = false;
};

/// Flat dotted keys ("scene.nucleus_count", "run.n_images", ...). Text form
/// is TOML-compatible: `key = value` lines, `#` comments and `[section]`
/// headers that prefix the following keys.
struct RunConfig {
    SceneConfig scene;
    SparsifyConfig sparsify;
    BootstrapParams bootstrap;
    InstancerConfig instancer;
    EvalParams eval;
    fs::path output_dir = "run";
    /// Directory of (image.png, labels.png) pairs used instead of synthetic scenes.
    fs::path dataset_dir;
    int n_images = 1;
    std::uint64_t master_seed = 0;
    bool debug_stages = false;

    void validate() const;
    /// Throws InvalidArgument for unknown keys or unparsable values.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    static const std::vector<std::string>& keys();
    std::string to_text() const;
    static RunConfig parse(const std::string& text);
    static RunConfig load(const fs::path& path);
};

/// Scene seed of image `index`; sparsification draws from a decorrelated
/// stream of the same seed.
std::uint64_t image_seed(const RunConfig& config, int index);
std::uint64_t sparsify_seed(std::uint64_t image_seed);

/// Worker count: `requested` (0 = hardware concurrency) capped by the
/// ENTROBOOT_THREADS environment variable, at least 1.
int resolve_threads(int requested);

/// Runs fn(0..n-1) on a bounded pool. Exceptions must be handled by fn.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

struct DatasetEntry {
    std::string name;
    fs::path image;
    fs::path labels;
};

/// Subdirectories holding image.png and labels.png, sorted by name; the
/// directory itself when it holds the pair directly.
std::vector<DatasetEntry> load_dataset(const fs::path& dir);

struct ImageResult {
    int index = 0;
    std::string name;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;

    std::size_t n_gt = 0;
    std::size_t n_points = 0;
    std::size_t n_instances = 0;
    double epsilon = 0.0;
    double auroc = 0.0;
    DiceCurve dice;
    std::vector<DetectionReport> detection;
    /// Mean raw entropy (nats) over ground-truth nucleus / background pixels.
    double entropy_nucleus = 0.0;
    double entropy_background = 0.0;
    InstanceSet instances;
};

/// Synthesize (or load) -> sparsify -> bootstrap -> instancing -> metrics
/// for one image. Errors are captured in the result. Artifacts are written
/// to scene_dir when given.
ImageResult process_image(const RunConfig& config, int index, const std::optional<fs::path>& scene_dir,
                          const DatasetEntry* entry = nullptr);

struct Aggregate {
    std::size_t n_ok = 0;
    std::size_t n_failed = 0;
    double auroc = 0.0;
    double peak_dice = 0.0;
    double epsilon = 0.0;
    /// One value per eval alpha.
    std::vector<double> detection;
};

Aggregate aggregate(const std::vector<ImageResult>& results, const EvalParams& eval);
double detection_at(const Aggregate& agg, const EvalParams& eval, double alpha);

struct PipelineReport {
    std::vector<ImageResult> results;
    Aggregate aggregate;
};

/// Full suite without writing anything.
PipelineReport compute_pipeline(const RunConfig& config, int threads);

/// Full suite with per-image artifacts, metrics.csv, curves.csv,
/// aggregate.json and instances_coco.json in config.output_dir.
PipelineReport run_pipeline(const RunConfig& config, int threads);

std::string metrics_csv(const std::vector<ImageResult>& results, const Aggregate& agg, const EvalParams& eval);
std::string curves_csv(const std::vector<ImageResult>& results);
std::string aggregate_json(const std::vector<ImageResult>& results, const Aggregate& agg, const EvalParams& eval);

enum class AblationAxis { Radius, KeepFraction, Jitter };
AblationAxis parse_axis(const std::string& name);
std::string axis_name(AblationAxis axis);

struct AblationSpec {
    AblationAxis axis = AblationAxis::Radius;
    std::vector<double> values;
    RunConfig base;
    void validate() const;
};

struct AblationRow {
    double value = 0.0;
    double peak_dice = 0.0;
    double auroc = 0.0;
    double detection_05 = 0.0;
    std::size_t n_failed = 0;
};

std::vector<AblationRow> compute_ablation(const AblationSpec& spec, int threads);
std::string ablation_csv(AblationAxis axis, const std::vector<AblationRow>& rows);
/// Writes ablation.csv into spec.base.output_dir.
std::vector<AblationRow> run_ablation(const AblationSpec& spec, int threads);

struct TheorySpec {
    std::vector<double> epsilons{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
    std::vector<double> xs{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    double mc_p_ct = 0.3;
    double mc_epsilon = 0.05;
    std::uint64_t mc_trials = 1000000;
    int mc_repeats = 50;
    std::uint64_t seed = 0;
};

struct MonteCarloRow {
    std::uint64_t seed = 0;
    MonteCarloResult result;
    double expected = 0.0;
    double sigma = 0.0;
    double z = 0.0;
};

std::vector<MonteCarloRow> monte_carlo_table(const TheorySpec& spec, int threads);
/// Writes theory.csv and monte_carlo.csv.
void verify_theory(const TheorySpec& spec, const fs::path& out_dir, int threads);

struct EvalImage {
    int id = 0;
    std::string name;
    bool ok = false;
    std::string error;
    std::size_t n_gt = 0;
    std::size_t n_pred = 0;
    std::vector<DetectionReport> detection;
    MapSuite box;
    std::optional<MapSuite> mask;
};

struct EvalReport {
    std::vector<EvalImage> images;
    bool has_scores = false;
};

/// gt: dataset directory (image ids = sorted position) or COCO file.
EvalReport evaluate_predictions(const fs::path& gt, const fs::path& predictions, const EvalParams& eval);
/// Writes metrics.csv and curves.csv into out_dir.
EvalReport run_eval(const fs::path& gt, const fs::path& predictions, const EvalParams& eval, const fs::path& out_dir);

/// Collects scene_*/instances.png of a pipeline run into one COCO file.
void export_coco(const fs::path& run_dir, const fs::path& out_path);

/// Writes scene_NNNN/{image.png, labels.png, labels.json} for n_images scenes.
void run_synth(const RunConfig& config, int threads);

std::string scene_dir_name(int index);

/// a_entropy.png ... e_matched.png, one file per instancing stage.
void write_instancing_stages(const fs::path& dir, const ImageGrid& entropy, const InstancingStages& stages);

} // namespace entroboot
