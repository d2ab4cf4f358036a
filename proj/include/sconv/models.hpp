#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sconv/ops.hpp"
#include "sconv/scale_layers.hpp"
#include "sconv/tensor.hpp"

namespace sconv {

enum class Architecture { Standard, PixelPool, SlicePool, EnergyPool, Conv3d, Ensemble, Xu, Kanazawa };

std::string_view architecture_name(Architecture arch);
/// Accepts canonical names case-insensitively, ignoring '-' and '_' ("pixel_pool", "PixelPool").
Architecture parse_architecture(std::string_view name);
std::vector<Architecture> all_architectures();
/// SConv2d-based architectures whose layers produce a ScaleFeatureStack.
bool uses_scale_stack(Architecture arch);
/// Pooling head of the scale-pooled architectures (PixelPool/SlicePool/EnergyPool).
std::optional<PoolKind> pool_kind(Architecture arch);

/// Desk-scale preset ("tiny": 32-pixel canvas) or the full 64-pixel setting.
enum class Profile { Tiny, Full };
std::string_view profile_name(Profile profile);
Profile parse_profile(std::string_view name);

struct ArchSpec {
    Architecture arch = Architecture::Standard;
    std::size_t canvas = 64;
    std::vector<ConvSpec> layers{{1, 16, 7}, {16, 32, 7}};
    std::size_t num_classes = 10;
    bool conv_bias = false;
    GlobalPoolMode global_pool = GlobalPoolMode::Max;
    PyramidConfig pyramid;

    std::size_t ensemble_levels = 3;
    double ensemble_sigma = 1.0;

    std::vector<std::size_t> xu_sizes{3, 5, 7, 9, 11};

    double kanazawa_base = 1.26;
    std::vector<int> kanazawa_exponents{-2, -1, 0, 1, 2, 3, 4};

    /// Conv3d head: extent of the 3-D kernel along scale, y and x.
    std::size_t conv3d_scale_extent = 3;
    std::size_t conv3d_spatial_extent = 1;

    std::size_t in_channels() const { return layers.front().in_channels; }
    std::size_t feature_count() const { return layers.back().out_channels; }
    /// Throws std::invalid_argument / ShapeError when the spec cannot be built.
    void validate() const;
};

/// Table 1 layer layout with profile-dependent canvas and ensemble depth.
ArchSpec make_arch_spec(Architecture arch, Profile profile, std::size_t num_classes = 10, std::size_t channels = 1);

/// Input extent seen by each layer (and the extent after the last one) for a single column.
std::vector<std::size_t> layer_extents(const ArchSpec& spec, std::size_t canvas);

struct NamedTensor {
    std::string name;
    Tensor value;
};

struct LayerTrace {
    std::optional<ScaleFeatureStack> stack;
    std::optional<PoolSelection> selection;
    /// Layer output after scale reduction and bias, before ReLU.
    Tensor pooled;
};

struct ColumnTrace {
    std::vector<LayerTrace> layers;
    Tensor features;
};

/// Diagnostics for one forward pass; one column per pyramid level for Ensemble.
struct ActivationTrace {
    bool keep_stacks = true;
    std::vector<ColumnTrace> columns;
    Tensor features;
};

struct SampleResult {
    Tensor logits;
    double loss = 0.0;
};

class Model {
public:
    Model(ArchSpec spec, std::vector<NamedTensor> parameters);

    const ArchSpec& spec() const noexcept { return spec_; }
    const std::vector<NamedTensor>& parameters() const noexcept { return params_; }
    /// Mutable access; derived kernels are regenerated on the next forward pass.
    std::vector<NamedTensor>& mutable_parameters() noexcept {
        stale_ = true;
        return params_;
    }
    std::size_t parameter_count() const;

    Tensor forward(const Tensor& image, ActivationTrace* trace = nullptr) const;

    /// Forward + backward for one labelled image; adds d loss / d parameter into `grads`
    /// (same order and shapes as parameters(); zero-initialised on first use if empty).
    SampleResult accumulate_gradients(const Tensor& image, std::size_t label, std::vector<Tensor>& grads) const;

    std::vector<Tensor> zero_gradients() const;

private:
    struct LayerTape;
    struct ColumnTape;

    void refresh() const;
    const Tensor& weight(std::size_t layer) const { return params_[weight_index_[layer]].value; }
    const Tensor* bias(std::size_t layer) const;

    Tensor layer_forward(std::size_t layer, const Tensor& input, LayerTape* tape, LayerTrace* trace,
                         bool keep_stack) const;
    Tensor layer_backward(std::size_t layer, const Tensor& grad_out, const LayerTape& tape,
                          std::vector<Tensor>& grads) const;
    Tensor column_forward(const Tensor& image, ColumnTape* tape, ColumnTrace* trace, bool keep_stack) const;
    void column_backward(const Tensor& grad_features, const ColumnTape& tape, std::vector<Tensor>& grads) const;
    std::vector<Tensor> column_inputs(const Tensor& image) const;
    Tensor run(const Tensor& image, std::vector<ColumnTape>* tapes, ActivationTrace* trace, Tensor* features) const;

    ArchSpec spec_;
    std::vector<NamedTensor> params_;
    std::vector<std::size_t> weight_index_;
    std::vector<std::size_t> bias_index_;  // npos when disabled
    std::size_t fc_weight_ = 0;
    std::size_t fc_bias_ = 0;
    std::vector<std::size_t> extents_;

    mutable bool stale_ = true;
    mutable std::vector<std::optional<KernelPyramid>> pyramids_;
    mutable std::vector<std::vector<Tensor>> xu_kernels_;
};

/// Names and shapes of the learnable tensors in storage order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ArchSpec& spec);

Model build_model(const ArchSpec& spec, std::uint64_t seed);
std::size_t parameter_count(const Model& model);

/// Gaussian pyramid: level 0 is the image, each further level is blurred then halved bicubically.
std::vector<Tensor> gaussian_pyramid(const Tensor& image, std::size_t levels, double sigma = 1.0);

/// Column kernels for the Xu model: bilinear for smaller sizes, nearest for larger ones.
Tensor xu_kernel(const Tensor& reference, std::size_t size);

struct MultiColumnResult {
    Tensor output;
    /// Winning column / scale per output entry (lowest index on ties).
    std::vector<std::uint32_t> selection;
    /// Column kernel sizes (Xu) or resized input extents (Kanazawa) actually used.
    std::vector<std::size_t> sizes;
};

/// One Xu layer: valid convolutions with every column kernel, centre-cropped to the
/// smallest output and reduced by elementwise max.
MultiColumnResult xu_layer_forward(const Tensor& input, const Tensor& reference, const std::vector<std::size_t>& sizes);

/// Resized input extents round(n * base^e); extents below `kernel_size` are dropped.
std::vector<std::size_t> kanazawa_extents(std::size_t n, std::size_t kernel_size, const std::vector<int>& exponents,
                                          double base = 1.26);

/// One Kanazawa layer: resize input, convolve, resize the response back to n - k + 1, max over scales.
MultiColumnResult kanazawa_layer_forward(const Tensor& input, const Tensor& kernel, const std::vector<int>& exponents,
                                         double base = 1.26);

// Checkpoints ("SCKP", little-endian, weights stored as 32-bit reals).

struct Checkpoint {
    std::string architecture;
    std::uint16_t num_classes = 0;
    std::vector<NamedTensor> parameters;
};

Checkpoint make_checkpoint(const Model& model);
void write_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Rebuilds a model; `spec` supplies everything the file does not store (canvas, pyramid setup).
Model model_from_checkpoint(const Checkpoint& checkpoint, ArchSpec spec);

}  // namespace sconv
