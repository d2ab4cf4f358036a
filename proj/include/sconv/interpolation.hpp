#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sconv/tensor.hpp"

namespace sconv {

// All resamplers share one sampling convention: output sample i of n_out reads the
// source at continuous index (i + 0.5) * n_in / n_out - 0.5 (half-pixel centres).
// Taps falling outside the source are clamped to the border sample.

enum class Resample { Cubic, Linear, Nearest };

/// Keys cubic convolution weight with a = -0.5.
double keys_cubic(double x);

/// Dense [n_out x n_in] 1-D resampling matrix. Rows sum to one.
class ResampleMatrix {
public:
    ResampleMatrix(std::size_t n_in, std::size_t n_out, Resample kind);

    std::size_t in_size() const noexcept { return n_in_; }
    std::size_t out_size() const noexcept { return n_out_; }
    double operator()(std::size_t row, std::size_t col) const noexcept { return weights_[row * n_in_ + col]; }
    std::span<const double> row(std::size_t r) const noexcept {
        return std::span<const double>(weights_).subspan(r * n_in_, n_in_);
    }

private:
    std::size_t n_in_;
    std::size_t n_out_;
    std::vector<double> weights_;
};

/// Resizes every channel of [C, H, W] (or a bare [H, W]) to out_h x out_w.
Tensor resize(const Tensor& input, std::size_t out_h, std::size_t out_w, Resample kind);
/// Adjoint of resize(): maps a gradient at the output size back to the input size.
Tensor resize_adjoint(const Tensor& grad, std::size_t in_h, std::size_t in_w, Resample kind);

inline Tensor resize_bicubic(const Tensor& input, std::size_t out_h, std::size_t out_w) {
    return resize(input, out_h, out_w, Resample::Cubic);
}
inline Tensor resize_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w) {
    return resize(input, out_h, out_w, Resample::Linear);
}
/// Ties (source position exactly between two samples) go to the lower index.
inline Tensor resize_nearest(const Tensor& input, std::size_t out_h, std::size_t out_w) {
    return resize(input, out_h, out_w, Resample::Nearest);
}

/// Linear map from a flattened k x k grid to a k' x k' grid (row-major both sides).
/// Each row is the outer product of two 1-D resampling rows.
class InterpMatrix {
public:
    InterpMatrix(std::size_t source, std::size_t target, Resample kind = Resample::Cubic);

    std::size_t source() const noexcept { return source_; }
    std::size_t target() const noexcept { return target_; }

    /// Dense weights, [target^2 x source^2].
    const std::vector<double>& dense() const noexcept { return dense_; }
    double operator()(std::size_t row, std::size_t col) const noexcept {
        return dense_[row * source_ * source_ + col];
    }

    /// out (target^2 values) = M * in (source^2 values).
    void apply(std::span<const double> in, std::span<double> out) const;
    /// out (source^2 values) += M^T * in (target^2 values).
    void apply_transpose_add(std::span<const double> in, std::span<double> out) const;

    bool is_identity() const noexcept { return source_ == target_; }

private:
    std::size_t source_;
    std::size_t target_;
    ResampleMatrix factor_;
    std::vector<double> dense_;
};

InterpMatrix build_interp_matrix(std::size_t k, std::size_t k_target, Resample kind = Resample::Cubic);

/// Separable Gaussian blur with radius ceil(3 sigma), renormalised weights and
/// mirror borders (d c b | a b c d | c b a). sigma == 0 returns the input unchanged.
Tensor gaussian_blur(const Tensor& input, double sigma);

/// Normalised 1-D Gaussian taps for offsets -radius..radius.
std::vector<double> gaussian_taps(double sigma);

/// Scale + translation acting on continuous pixel coordinates (pixel i covers [i, i + 1)):
/// g(x, y) = (s x + tx, s y + ty).
struct TransformParams {
    double scale = 1.0;
    double tx = 0.0;
    double ty = 0.0;

    void validate() const;
};

/// output(p) = input(g^-1(p)), sampled bicubically; points outside the source area read as 0.
Tensor apply_transform(const Tensor& input, const TransformParams& params, std::size_t out_h, std::size_t out_w);

}  // namespace sconv
