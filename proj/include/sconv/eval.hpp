#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sconv/models.hpp"
#include "sconv/stir_data.hpp"

namespace sconv {

// ---- Training -----------------------------------------------------------------------------

/// The learning-rate grid; other values need `allow_any_lr`.
inline constexpr double kLearningRates[] = {1e-2, 1e-3};

struct TrainConfig {
    Architecture arch = Architecture::Standard;
    Profile profile = Profile::Tiny;
    /// Directory holding train.stir / val.stir / test.stir; empty generates glyphs in memory.
    std::string data_path;
    std::uint64_t data_seed = 0;
    Scenario scenario = Scenario::Mid2Rest;
    std::uint64_t seed = 0;
    double learning_rate = 1e-3;
    bool allow_any_lr = false;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    /// Epochs without a validation improvement before stopping; 0 never stops early.
    std::size_t patience = 5;
    std::size_t scale_stride = 1;
    std::size_t kernel_cap = 0;
    KernelNormalization kernel_normalization = KernelNormalization::None;

    void validate() const;
    /// Canonical text of every field that influences the result.
    std::string canonical() const;
    /// 16 hex digits of FNV-1a over canonical().
    std::string hash() const;
    /// Human-readable identity, e.g. "PixelPool-Mid2Rest-s3-lr0.001".
    std::string run_id() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double seconds = 0.0;
};

struct ScaleAccuracy {
    std::size_t scale = 0;
    std::size_t samples = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
};

struct AccuracyTable {
    std::vector<ScaleAccuracy> rows;  // ascending scale
    std::size_t samples = 0;
    std::size_t correct = 0;
    double mean = 0.0;  // sample-weighted
    double loss = 0.0;  // mean cross-entropy
};

struct RunMetrics {
    std::string run_id;
    std::string config_hash;
    std::string dataset;
    Architecture arch = Architecture::Standard;
    Scenario scenario = Scenario::Mid2Rest;
    std::uint64_t seed = 0;
    double learning_rate = 0.0;
    std::vector<EpochMetrics> epochs;
    std::size_t best_epoch = 0;
    double best_val_accuracy = 0.0;
    bool stopped_early = false;
    AccuracyTable test;
};

/// Equal in everything except wall-clock timings.
bool same_outcome(const RunMetrics& a, const RunMetrics& b);

struct TrainResult {
    Checkpoint checkpoint;  // parameters of the best validation epoch
    RunMetrics metrics;
};

struct TrainData {
    StirSplit train;
    StirSplit val;
    StirSplit test;
    std::string name;
};

/// Loads `config.data_path` or renders the profile's glyph dataset.
TrainData load_train_data(const TrainConfig& config);

/// Model layout for a dataset: profile preset with canvas, classes and channels taken from the data.
ArchSpec arch_spec_for(const TrainConfig& config, const StirSplit& reference);

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Mini-batch Adam on the scenario's train scales; validation uses the same scales of the
/// validation split, test accuracy the test scales of the test split. Deterministic.
TrainResult train(const TrainConfig& config, const TrainData& data, const EpochCallback& on_epoch = {});
TrainResult train(const TrainConfig& config, const EpochCallback& on_epoch = {});

struct LrGridResult {
    double learning_rate = 0.0;
    std::vector<double> mean_val_accuracy;  // one per grid entry
    std::vector<TrainResult> runs;          // grid-major, then seed
};

/// Trains every grid learning rate for each seed and keeps the one with the best mean
/// validation accuracy (earlier grid entry on ties).
LrGridResult select_learning_rate(const TrainConfig& base, std::span<const std::uint64_t> seeds, const TrainData& data);

// ---- Evaluation ---------------------------------------------------------------------------

using Classifier = std::function<Tensor(const Tensor&)>;

/// Accuracy per scale over the samples at `view`; `view` empty means every sample.
AccuracyTable evaluate_per_scale(const Classifier& classify, const StirSplit& split,
                                 std::span<const std::size_t> view = {});
AccuracyTable evaluate_per_scale(const Model& model, const StirSplit& split, std::span<const std::size_t> view = {});

/// Architectures with a single post-pool map per layer (the equivariance metric applies).
bool has_single_feature_map(Architecture arch);

/// Last layer's scale-reduced map before ReLU, [O, F, F].
Tensor last_feature_map(const Model& model, const Tensor& image);

/// Feature-map window of the subject box: each valid layer of kernel k trims (k - 1) / 2.
struct CropWindow {
    std::size_t y0 = 0, x0 = 0, height = 0, width = 0;
};
CropWindow subject_window(const Model& model, const StirSample& sample, std::size_t map_extent);
Tensor crop(const Tensor& map, const CropWindow& window);

/// ||resize(x1 to x2's extent) - x2||^2 / ||x2||^2; nullopt when ||x2|| = 0.
std::optional<double> equivariance_error(const Tensor& x1, const Tensor& x2);
/// Same subject at two scales, through the model's cropped last feature map.
std::optional<double> equivariance_error(const Model& model, const StirSample& at_s1, const StirSample& at_s2);

struct PairError {
    std::size_t s1 = 0, s2 = 0;
    double mean = 0.0;  // over defined subjects
    std::size_t defined = 0;
    std::vector<double> values;  // per defined subject, in subject order
};

struct SkippedSubject {
    std::size_t label = 0, instance = 0, s1 = 0, s2 = 0;
};

struct EquivarianceReport {
    std::vector<PairError> pairs;
    double score = 0.0;  // mean of the per-pair means
    std::size_t subjects = 0;
    std::vector<SkippedSubject> skipped;
};

/// Averages the scenario's equivariance pairs over every (label, instance) subject of
/// `split`; undefined pairs are skipped. Throws when nothing is defined.
EquivarianceReport scenario_equivariance(const Model& model, const StirSplit& split, const ScenarioSpec& spec);
double scenario_equivariance_score(const Model& model, const StirSplit& split, const ScenarioSpec& spec);

struct SelectionProfile {
    PoolKind kind = PoolKind::Slice;
    std::vector<std::size_t> scales;
    /// [channel][scale]: selected kernel size (mean over the map for PixelPool).
    std::vector<std::vector<double>> kernel_size;
    /// PixelPool only: per scale, [O, F, F] kernel-size maps.
    std::vector<Tensor> size_maps;
    /// Per channel Pearson r between scale and kernel size (nullopt if either is constant).
    std::vector<std::optional<double>> r;
};

/// Mean selected kernel size per channel from a pooling selection.
std::vector<double> channel_kernel_sizes(const PoolSelection& selection, const ScaleFeatureStack& stack);

/// The samples of one subject across every scale, ascending.
std::vector<StirSample> subject_samples(const StirSplit& split, std::size_t label, std::size_t instance);

/// One traced forward pass per sample; recorded at the last layer. Throws for models
/// without a scale-pooling head.
SelectionProfile scale_selection_profile(const Model& model, std::span<const StirSample> subject);

// ---- Statistics ---------------------------------------------------------------------------

/// nullopt when either variance is zero.
std::optional<double> pearson_r(std::span<const double> xs, std::span<const double> ys);

struct TrendTest {
    double rho = 0.0;
    double p_value = 1.0;  // two-sided, t approximation with n - 2 degrees of freedom
    std::size_t n = 0;
};

/// Spearman rank correlation with average ranks for ties.
TrendTest spearman_test(std::span<const double> xs, std::span<const double> ys);

/// Distance from `scale` to the nearest training scale (0 inside the band).
std::size_t distance_to_band(const ScenarioSpec& spec, std::size_t scale);

// ---- Operation counts ---------------------------------------------------------------------

/// 2 k^2 (n - k + 1)^2.
std::uint64_t op_count_standard(std::uint64_t k, std::uint64_t n);
/// Sum of op_count_standard over the kernel ladder k, k + 2, ... <= n.
std::uint64_t op_count_scaled(std::uint64_t k, std::uint64_t n);

// ---- Reporting ----------------------------------------------------------------------------

struct ReportInputs {
    std::vector<RunMetrics> runs;
    std::vector<std::pair<std::string, EquivarianceReport>> equivariance;  // keyed by run id
    std::optional<SelectionProfile> selection;
};

/// Writes summary.csv, per_scale.csv, equivariance.csv and selection.csv into `out_dir`
/// (created if missing). Rows follow run-id order.
void emit_report(const ReportInputs& inputs, const std::string& out_dir);

/// Shortest round-trip decimal form with '.' separator.
std::string format_real(double v);

// JSON sidecars so that separate CLI invocations can be merged into one report.
void write_run_metrics(const RunMetrics& metrics, const std::string& path);
RunMetrics read_run_metrics(const std::string& path);
void write_equivariance_report(const std::string& run_id, const EquivarianceReport& report, const std::string& path);
std::pair<std::string, EquivarianceReport> read_equivariance_report(const std::string& path);
void write_selection_profile(const SelectionProfile& profile, const std::string& path);
SelectionProfile read_selection_profile(const std::string& path);

}  // namespace sconv
