#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sconv/tensor.hpp"

namespace sconv {

// ---- Glyphs -------------------------------------------------------------------------------

/// Ten base shapes; ids 10..35 are side-by-side pairs of two base shapes.
enum class GlyphKind { Plus, Cross, Disk, Ring, Square, Frame, Triangle, Diamond, HBar, Checker };

constexpr std::size_t kBaseGlyphs = 10;
constexpr std::size_t kMaxGlyphClasses = 36;

std::string glyph_name(std::size_t class_id);

/// Per-instance proportions. The default style is the canonical glyph.
struct GlyphStyle {
    double stroke = 1.0;  // multiplies bar / ring / frame thickness
    double extent = 1.0;  // shrinks the shape about the box centre (<= 1)

    static GlyphStyle jittered(std::uint64_t seed);
};

/// Rasterises glyph `class_id` into a size x size square by exact area coverage.
Tensor render_glyph(std::size_t class_id, std::size_t size, const GlyphStyle& style = {});

/// Block-average downscale by an integer factor (used to check resolution consistency).
Tensor area_downscale(const Tensor& image, std::size_t factor);

// ---- Samples and splits -------------------------------------------------------------------

enum class Provenance { Glyph, Mnist, External };
std::string_view provenance_name(Provenance p);

struct StirSample {
    Tensor image;  // [C, canvas, canvas], values in [0, 1]
    std::uint16_t label = 0;
    std::uint16_t scale = 0;  // side of the subject box
    std::uint16_t box_x0 = 0;
    std::uint16_t box_y0 = 0;
    /// Index of the rendered instance within its class (same subject across scales).
    std::uint32_t instance = 0;
};

struct StirSplit {
    std::vector<StirSample> samples;
    std::size_t num_classes = 0;
    std::size_t instances = 0;
    std::size_t channels = 1;
    std::size_t canvas = 64;
    Provenance provenance = Provenance::Glyph;

    /// Distinct scales present, ascending.
    std::vector<std::size_t> scales() const;
};

struct DatasetConfig {
    std::size_t num_classes = 10;
    std::size_t instances = 2;
    std::uint64_t seed = 0;
    std::size_t canvas = 64;
    std::size_t min_scale = 17;
    std::size_t max_scale = 64;
    double background = 0.0;

    void validate() const;
};

/// The "stir-tiny" defaults: 32 px canvas, scales 9..32, 10 instances of 10 classes.
DatasetConfig tiny_dataset_config(std::uint64_t seed = 0);

struct StirDataset {
    StirSplit train;
    StirSplit val;
    StirSplit test;
};

/// Each split renders n_i fresh instances per class at every scale, placed uniformly at random.
StirDataset generate_dataset(const DatasetConfig& config);

// ---- MNIST --------------------------------------------------------------------------------

struct IdxImages {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Tensor> images;  // [1, rows, cols], values / 255
};

IdxImages read_idx_images(const std::string& path);
std::vector<std::uint8_t> read_idx_labels(const std::string& path);
IdxImages decode_idx_images(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> decode_idx_labels(const std::vector<std::uint8_t>& bytes);

enum class SharpenMode {
    Corrected,  // (2/pi) atan(0.02 (255 I - 128))
    Literal,    // (2/pi) atan(0.02 * 255 I - 128), as typeset
};

double sharpen(double intensity, SharpenMode mode = SharpenMode::Corrected);

/// Resize a digit to s x s, blur with sigma = (7/8) s / n, sharpen and clamp to [0, 1].
Tensor mnist_subject(const Tensor& digit, std::size_t s, SharpenMode mode = SharpenMode::Corrected);

/// mnist_subject() centred on a canvas; the box is recorded on the returned sample.
StirSample mnist_rescale_pipeline(const Tensor& digit, std::size_t s, std::size_t canvas = 64,
                                  SharpenMode mode = SharpenMode::Corrected);

struct MnistDatasetConfig {
    std::size_t instances = 2;
    std::uint64_t seed = 0;
    std::size_t canvas = 64;
    std::size_t min_scale = 17;
    std::size_t max_scale = 64;
    SharpenMode sharpen = SharpenMode::Corrected;
};

/// Digits are drawn without replacement, so instances never repeat across splits.
StirDataset generate_mnist_dataset(const IdxImages& images, const std::vector<std::uint8_t>& labels,
                                   const MnistDatasetConfig& config);

// ---- STIR container -----------------------------------------------------------------------

constexpr std::size_t kStirHeaderBytes = 19;
constexpr std::size_t kStirRecordHeaderBytes = 8;

std::vector<std::uint8_t> encode_split(const StirSplit& split);
StirSplit decode_split(const std::vector<std::uint8_t>& bytes);
void write_split(const StirSplit& split, const std::string& path);
StirSplit load_split(const std::string& path);

// ---- Scenarios ----------------------------------------------------------------------------

enum class Scenario { All2All, Small2Large, Mid2Rest, Large2Small };
std::string_view scenario_name(Scenario s);
Scenario parse_scenario(std::string_view name);

struct ScaleRange {
    std::size_t lo = 0;
    std::size_t hi = 0;
    bool contains(std::size_t s) const { return s >= lo && s <= hi; }
};

struct ScenarioSpec {
    Scenario scenario = Scenario::Mid2Rest;
    std::vector<ScaleRange> train;
    /// Contiguous test segments; equivariance pairs are built from their endpoints.
    std::vector<ScaleRange> test;

    bool is_train_scale(std::size_t s) const;
    bool is_test_scale(std::size_t s) const;
    std::vector<std::size_t> train_scales() const;
    std::vector<std::size_t> test_scales() const;
};

/// Splits [min_scale, max_scale] into three equal thirds.
ScenarioSpec make_scenario(Scenario scenario, std::size_t min_scale = 17, std::size_t max_scale = 64);

/// Sample indices, in split order, whose scale is in the train / test set.
struct ScenarioViews {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

ScenarioViews scenario_split(const StirSplit& split, const ScenarioSpec& spec);

/// Ordered (s1, s2) pairs: both directions between the endpoints of every test segment.
std::vector<std::pair<std::size_t, std::size_t>> equivariance_pairs(const ScenarioSpec& spec);

}  // namespace sconv
