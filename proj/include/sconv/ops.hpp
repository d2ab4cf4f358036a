#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "sconv/tensor.hpp"

namespace sconv {

struct ConvSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_size = 3;  // odd; padding is always zero ("valid")

    /// Throws ShapeError when the kernel size is even or zero, or a channel count is zero.
    void validate() const;
    std::size_t weight_count() const { return in_channels * out_channels * kernel_size * kernel_size; }
};

// ---------------------------------------------------------------------------
// Convolution
//
// Implemented as cross-correlation (no kernel flip), valid region only:
//   out[o, y, x] = sum_{c, dy, dx} in[c, y + dy, x + dx] * w[o, c, dy, dx]
// Each output value is summed in (c, dy, dx) order regardless of its position,
// so shifting the input shifts the output bit for bit.
// ---------------------------------------------------------------------------

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels);

struct Conv2dGrads {
    Tensor input;
    Tensor kernels;
};

Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& saved_input, const Tensor& kernels);

/// Valid output extent of a k x k correlation over n samples, or throws if k > n.
std::size_t valid_extent(std::size_t n, std::size_t k, const char* what);

// Activation --------------------------------------------------------------

Tensor relu(const Tensor& input);
/// The derivative at exactly zero is taken to be zero.
Tensor relu_backward(const Tensor& grad_out, const Tensor& saved_input);

// Global pooling ----------------------------------------------------------

enum class GlobalPoolMode { Max, Mean };

struct GlobalPoolResult {
    Tensor output;                    // [C]
    std::vector<std::size_t> argmax;  // per channel, flat offset inside the channel; empty for Mean
};

/// Reduces every trailing axis of a [C, ...] tensor. Max ties go to the first index in scan order.
GlobalPoolResult global_pool(const Tensor& input, GlobalPoolMode mode = GlobalPoolMode::Max);
Tensor global_pool_backward(const Tensor& grad_out, const GlobalPoolResult& forward, const Shape& input_shape,
                            GlobalPoolMode mode = GlobalPoolMode::Max);

inline GlobalPoolResult global_max_pool(const Tensor& input) { return global_pool(input, GlobalPoolMode::Max); }

// Dense head --------------------------------------------------------------

Tensor linear(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct LinearGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

LinearGrads linear_backward(const Tensor& grad_out, const Tensor& saved_input, const Tensor& weights);

struct LossResult {
    double loss;
    Tensor grad_logits;
};

/// -log softmax(logits)[label] computed with max subtraction.
LossResult softmax_cross_entropy(const Tensor& logits, std::size_t label);

// Adam --------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::uint64_t step = 0;
    Tensor first_moment;
    Tensor second_moment;

    explicit AdamState(const Shape& shape) : first_moment(shape), second_moment(shape) {}
};

/// Bias-corrected Adam update in place. Throws NumericError on a non-finite gradient.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& config);

// Gradient checking -------------------------------------------------------

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

struct GradCheckOptions {
    double h = 1e-6;
    /// Subset of flat indices to probe; empty means every entry.
    std::vector<std::size_t> indices;
    /// Entries for which this returns true are skipped (e.g. points too close to a kink).
    std::function<bool(std::size_t)> skip;
};

/// Central differences of `f` at `point` against `analytic`, with relative error
/// |a - b| / max(|a|, |b|, 1e-12) and the worst entry reported.
GradCheckResult finite_difference_check(const std::function<double(const Tensor&)>& f, const Tensor& point,
                                        const Tensor& analytic, const GradCheckOptions& options = {});

}  // namespace sconv
