#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sconv/interpolation.hpp"
#include "sconv/tensor.hpp"

namespace sconv {

/// Number of kernels k, k + 2, ... that still fit an n-wide input: floor((n - k) / 2) + 1.
std::size_t num_scales(std::size_t n, std::size_t k);

/// How enlarged kernels are rescaled after interpolation.
enum class KernelNormalization {
    None,  // used as interpolated
    Area,  // multiplied by (k / k')^2 so that total kernel mass stays comparable
};

struct PyramidConfig {
    /// Take every `scale_stride`-th size of the full ladder (1 = every size).
    std::size_t scale_stride = 1;
    /// Drop sizes above this cap; 0 disables the cap.
    std::size_t max_kernel = 0;
    KernelNormalization normalization = KernelNormalization::None;
};

/// Kernel sizes used on an n-wide input, ascending.
std::vector<std::size_t> pyramid_sizes(std::size_t n, std::size_t k, const PyramidConfig& config = {});

/// A base kernel [O, C, k, k] and its bicubic enlargements. Only the base is a parameter;
/// every enlarged kernel is a fixed linear function of it.
class KernelPyramid {
public:
    KernelPyramid(const Tensor& base, std::size_t input_extent, PyramidConfig config = {});

    std::size_t levels() const noexcept { return sizes_.size(); }
    const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
    std::size_t base_size() const noexcept { return sizes_.front(); }
    std::size_t input_extent() const noexcept { return input_extent_; }
    const PyramidConfig& config() const noexcept { return config_; }
    const Tensor& base() const noexcept { return base_; }
    const Tensor& kernel(std::size_t level) const { return kernels_.at(level); }
    const InterpMatrix& matrix(std::size_t level) const { return matrices_.at(level); }

    /// Replaces the base weights and regenerates every enlarged kernel.
    void set_base(const Tensor& base);

    /// Pulls per-level kernel gradients back onto the base kernel (sum of M_i^T g_i).
    Tensor pull_back(const std::vector<Tensor>& level_grads) const;

private:
    void rebuild();
    double level_gain(std::size_t level) const;

    Tensor base_;
    std::size_t input_extent_;
    PyramidConfig config_;
    std::vector<std::size_t> sizes_;
    std::vector<InterpMatrix> matrices_;
    std::vector<Tensor> kernels_;
};

/// Per-scale feature maps [S, O, Hmax, Wmax]. Slice i holds a valid extent of
/// extents[i] x extents[i], centred, with exact zeros around it.
struct ScaleFeatureStack {
    Tensor data;
    std::vector<std::size_t> extents;
    std::vector<std::size_t> kernel_sizes;

    std::size_t scales() const { return data.dim(0); }
    std::size_t channels() const { return data.dim(1); }
    std::size_t height() const { return data.dim(2); }
    std::size_t width() const { return data.dim(3); }
    /// Zero-padding on each side of slice i.
    std::size_t pad(std::size_t i) const { return (height() - extents.at(i)) / 2; }
};

ScaleFeatureStack sconv2d_forward(const Tensor& input, const KernelPyramid& pyramid);

struct SConvGrads {
    Tensor input;
    Tensor base_kernel;
};

/// Gradients through every level; padding entries of grad_stack are ignored.
SConvGrads sconv2d_backward(const Tensor& grad_stack, const Tensor& saved_input, const KernelPyramid& pyramid);

enum class PoolKind { Pixel, Slice, Energy };

/// Winning scale indices. Pixel: one per (channel, y, x); Slice/Energy: one per channel.
struct PoolSelection {
    PoolKind kind = PoolKind::Pixel;
    std::vector<std::uint32_t> indices;
};

struct PoolResult {
    Tensor output;  // [O, Hmax, Wmax]
    PoolSelection selection;
};

/// Per-pixel maximum over scales (lowest scale wins ties).
PoolResult pixel_pool(const ScaleFeatureStack& stack);
/// Per channel, the whole slice that holds the maximum over (scale, y, x).
PoolResult slice_pool(const ScaleFeatureStack& stack);
/// Per channel, the slice with the largest spatial sum.
PoolResult energy_pool(const ScaleFeatureStack& stack);
PoolResult scale_pool(const ScaleFeatureStack& stack, PoolKind kind);

/// Routes gradients of the pooled map back onto the selected stack entries.
Tensor scale_pool_backward(const Tensor& grad_out, const PoolSelection& selection, const Shape& stack_shape);

/// Kernel size that produced each selected index (k_i for per-channel or per-pixel picks).
std::vector<std::size_t> selected_kernel_sizes(const PoolSelection& selection, const ScaleFeatureStack& stack);

/// Valid 3-D cross-correlation over (scale, y, x) of a stack [S, O, H, W] with kernels
/// [O', O, ks, ky, kx]; output is [O', S - ks + 1, H - ky + 1, W - kx + 1].
Tensor scale_conv3d(const Tensor& stack, const Tensor& kernels);

struct Conv3dGrads {
    Tensor stack;
    Tensor kernels;
};

Conv3dGrads scale_conv3d_backward(const Tensor& grad_out, const Tensor& saved_stack, const Tensor& kernels);

}  // namespace sconv
