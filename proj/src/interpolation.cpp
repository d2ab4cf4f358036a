#include "sconv/interpolation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sconv {

double keys_cubic(double x) {
    constexpr double a = -0.5;
    const double t = std::abs(x);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

namespace {

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
    if (i < 0) return 0;
    if (static_cast<std::size_t>(i) >= n) return n - 1;
    return static_cast<std::size_t>(i);
}

double source_position(std::size_t i, std::size_t n_in, std::size_t n_out) {
    return (static_cast<double>(i) + 0.5) * static_cast<double>(n_in) / static_cast<double>(n_out) - 0.5;
}

}  // namespace

ResampleMatrix::ResampleMatrix(std::size_t n_in, std::size_t n_out, Resample kind)
    : n_in_(n_in), n_out_(n_out), weights_(n_in * n_out, 0.0) {
    if (n_in == 0 || n_out == 0) throw ShapeError("resample: sizes must be at least 1");
    for (std::size_t i = 0; i < n_out; ++i) {
        double* row = weights_.data() + i * n_in;
        if (n_in == n_out) {
            row[i] = 1.0;
            continue;
        }
        const double src = source_position(i, n_in, n_out);
        const double base = std::floor(src);
        const double t = src - base;
        const auto b = static_cast<std::ptrdiff_t>(base);
        switch (kind) {
            case Resample::Cubic:
                for (std::ptrdiff_t d = -1; d <= 2; ++d)
                    row[clamp_index(b + d, n_in)] += keys_cubic(t - static_cast<double>(d));
                break;
            case Resample::Linear:
                row[clamp_index(b, n_in)] += 1.0 - t;
                row[clamp_index(b + 1, n_in)] += t;
                break;
            case Resample::Nearest:
                row[clamp_index(static_cast<std::ptrdiff_t>(std::ceil(src - 0.5)), n_in)] = 1.0;
                break;
        }
    }
}

namespace {

struct Planes {
    std::size_t channels, h, w;
};

Planes planes_of(const Tensor& t, const char* what) {
    if (t.rank() == 2) return {1, t.dim(0), t.dim(1)};
    if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
    throw ShapeError(std::string(what) + ": expected [H, W] or [C, H, W], got " + shape_string(t.shape()));
}

Shape with_planes(const Tensor& like, std::size_t h, std::size_t w) {
    if (like.rank() == 2) return {h, w};
    return {like.dim(0), h, w};
}

// out[c] = rows * in[c] * cols^T
void separable_apply(const double* in, double* out, std::size_t channels, std::size_t h, std::size_t w,
                     const ResampleMatrix& rows, const ResampleMatrix& cols) {
    const std::size_t oh = rows.out_size();
    const std::size_t ow = cols.out_size();
    std::vector<double> tmp(h * ow);
    for (std::size_t c = 0; c < channels; ++c) {
        const double* src = in + c * h * w;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = 0.0;
                const auto wr = cols.row(x);
                for (std::size_t j = 0; j < w; ++j)
                    if (wr[j] != 0.0) acc += wr[j] * src[y * w + j];
                tmp[y * ow + x] = acc;
            }
        double* dst = out + c * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
            const auto wr = rows.row(y);
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (std::size_t i = 0; i < h; ++i)
                    if (wr[i] != 0.0) acc += wr[i] * tmp[i * ow + x];
                dst[y * ow + x] = acc;
            }
        }
    }
}

// out[c] += rows^T * in[c] * cols
void separable_adjoint_add(const double* in, double* out, std::size_t channels, const ResampleMatrix& rows,
                           const ResampleMatrix& cols) {
    const std::size_t oh = rows.out_size();
    const std::size_t ow = cols.out_size();
    const std::size_t h = rows.in_size();
    const std::size_t w = cols.in_size();
    std::vector<double> tmp(h * ow);
    for (std::size_t c = 0; c < channels; ++c) {
        const double* src = in + c * oh * ow;
        std::fill(tmp.begin(), tmp.end(), 0.0);
        for (std::size_t y = 0; y < oh; ++y) {
            const auto wr = rows.row(y);
            for (std::size_t i = 0; i < h; ++i) {
                if (wr[i] == 0.0) continue;
                for (std::size_t x = 0; x < ow; ++x) tmp[i * ow + x] += wr[i] * src[y * ow + x];
            }
        }
        double* dst = out + c * h * w;
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t x = 0; x < ow; ++x) {
                const auto wr = cols.row(x);
                const double g = tmp[i * ow + x];
                for (std::size_t j = 0; j < w; ++j)
                    if (wr[j] != 0.0) dst[i * w + j] += wr[j] * g;
            }
    }
}

}  // namespace

Tensor resize(const Tensor& input, std::size_t out_h, std::size_t out_w, Resample kind) {
    if (out_h < 1 || out_w < 1) throw ShapeError("resize: target size must be at least 1x1");
    const Planes p = planes_of(input, "resize");
    if (p.h == out_h && p.w == out_w) return input;
    const ResampleMatrix rows(p.h, out_h, kind);
    const ResampleMatrix cols(p.w, out_w, kind);
    Tensor out(with_planes(input, out_h, out_w));
    separable_apply(input.data(), out.data(), p.channels, p.h, p.w, rows, cols);
    return out;
}

Tensor resize_adjoint(const Tensor& grad, std::size_t in_h, std::size_t in_w, Resample kind) {
    const Planes p = planes_of(grad, "resize_adjoint");
    if (p.h == in_h && p.w == in_w) return grad;
    const ResampleMatrix rows(in_h, p.h, kind);
    const ResampleMatrix cols(in_w, p.w, kind);
    Tensor out(with_planes(grad, in_h, in_w));
    separable_adjoint_add(grad.data(), out.data(), p.channels, rows, cols);
    return out;
}

InterpMatrix::InterpMatrix(std::size_t source, std::size_t target, Resample kind)
    : source_(source), target_(target), factor_(source, target, kind) {
    if (source < 1 || target < 1) throw ShapeError("InterpMatrix: sizes must be positive");
    const std::size_t ns = source * source;
    dense_.assign(target * target * ns, 0.0);
    for (std::size_t y = 0; y < target; ++y)
        for (std::size_t x = 0; x < target; ++x) {
            double* row = dense_.data() + (y * target + x) * ns;
            for (std::size_t i = 0; i < source; ++i)
                for (std::size_t j = 0; j < source; ++j) row[i * source + j] = factor_(y, i) * factor_(x, j);
        }
}

void InterpMatrix::apply(std::span<const double> in, std::span<double> out) const {
    if (in.size() != source_ * source_ || out.size() != target_ * target_)
        throw ShapeError("InterpMatrix::apply: size mismatch");
    if (is_identity()) {
        std::copy(in.begin(), in.end(), out.begin());
        return;
    }
    separable_apply(in.data(), out.data(), 1, source_, source_, factor_, factor_);
}

void InterpMatrix::apply_transpose_add(std::span<const double> in, std::span<double> out) const {
    if (in.size() != target_ * target_ || out.size() != source_ * source_)
        throw ShapeError("InterpMatrix::apply_transpose_add: size mismatch");
    if (is_identity()) {
        for (std::size_t i = 0; i < in.size(); ++i) out[i] += in[i];
        return;
    }
    separable_adjoint_add(in.data(), out.data(), 1, factor_, factor_);
}

InterpMatrix build_interp_matrix(std::size_t k, std::size_t k_target, Resample kind) {
    return InterpMatrix(k, k_target, kind);
}

std::vector<double> gaussian_taps(double sigma) {
    if (sigma < 0.0 || !std::isfinite(sigma)) throw std::invalid_argument("gaussian_blur: sigma must be >= 0");
    if (sigma == 0.0) return {1.0};
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
        const double v = std::exp(-static_cast<double>(d * d) / (2.0 * sigma * sigma));
        taps[static_cast<std::size_t>(d + radius)] = v;
        total += v;
    }
    for (auto& v : taps) v /= total;
    return taps;
}

namespace {

std::size_t mirror_index(std::ptrdiff_t i, std::size_t n) {
    if (n == 1) return 0;
    const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
    std::ptrdiff_t m = i % period;
    if (m < 0) m += period;
    if (m >= static_cast<std::ptrdiff_t>(n)) m = period - m;
    return static_cast<std::size_t>(m);
}

}  // namespace

Tensor gaussian_blur(const Tensor& input, double sigma) {
    const std::vector<double> taps = gaussian_taps(sigma);
    if (taps.size() == 1) return input;
    const Planes p = planes_of(input, "gaussian_blur");
    const auto radius = static_cast<std::ptrdiff_t>(taps.size() / 2);
    Tensor out(input.shape());
    std::vector<double> tmp(p.h * p.w);
    for (std::size_t c = 0; c < p.channels; ++c) {
        const double* src = input.data() + c * p.h * p.w;
        double* dst = out.data() + c * p.h * p.w;
        for (std::size_t y = 0; y < p.h; ++y)
            for (std::size_t x = 0; x < p.w; ++x) {
                double acc = 0.0;
                for (std::ptrdiff_t d = -radius; d <= radius; ++d)
                    acc += taps[static_cast<std::size_t>(d + radius)] *
                           src[y * p.w + mirror_index(static_cast<std::ptrdiff_t>(x) + d, p.w)];
                tmp[y * p.w + x] = acc;
            }
        for (std::size_t y = 0; y < p.h; ++y)
            for (std::size_t x = 0; x < p.w; ++x) {
                double acc = 0.0;
                for (std::ptrdiff_t d = -radius; d <= radius; ++d)
                    acc += taps[static_cast<std::size_t>(d + radius)] *
                           tmp[mirror_index(static_cast<std::ptrdiff_t>(y) + d, p.h) * p.w + x];
                dst[y * p.w + x] = acc;
            }
    }
    return out;
}

void TransformParams::validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale) || !std::isfinite(tx) || !std::isfinite(ty))
        throw std::invalid_argument("TransformParams: scale must be positive and all values finite");
}

Tensor apply_transform(const Tensor& input, const TransformParams& params, std::size_t out_h, std::size_t out_w) {
    params.validate();
    if (out_h < 1 || out_w < 1) throw ShapeError("apply_transform: target size must be at least 1x1");
    const Planes p = planes_of(input, "apply_transform");
    Tensor out(with_planes(input, out_h, out_w));
    const auto ih = static_cast<double>(p.h);
    const auto iw = static_cast<double>(p.w);

    for (std::size_t y = 0; y < out_h; ++y) {
        // Continuous position of the output pixel centre, mapped through g^-1.
        const double sy = (static_cast<double>(y) + 0.5 - params.ty) / params.scale;
        for (std::size_t x = 0; x < out_w; ++x) {
            const double sx = (static_cast<double>(x) + 0.5 - params.tx) / params.scale;
            if (sy < 0.0 || sy > ih || sx < 0.0 || sx > iw) continue;
            const double fy = sy - 0.5;
            const double fx = sx - 0.5;
            const double by = std::floor(fy);
            const double bx = std::floor(fx);
            double wy[4];
            double wx[4];
            std::size_t iy[4];
            std::size_t ix[4];
            for (int d = 0; d < 4; ++d) {
                wy[d] = keys_cubic(fy - by - (d - 1));
                wx[d] = keys_cubic(fx - bx - (d - 1));
                iy[d] = clamp_index(static_cast<std::ptrdiff_t>(by) + d - 1, p.h);
                ix[d] = clamp_index(static_cast<std::ptrdiff_t>(bx) + d - 1, p.w);
            }
            for (std::size_t c = 0; c < p.channels; ++c) {
                const double* src = input.data() + c * p.h * p.w;
                double acc = 0.0;
                for (int a = 0; a < 4; ++a) {
                    if (wy[a] == 0.0) continue;
                    double row = 0.0;
                    for (int b = 0; b < 4; ++b)
                        if (wx[b] != 0.0) row += wx[b] * src[iy[a] * p.w + ix[b]];
                    acc += wy[a] * row;
                }
                out.data()[(c * out_h + y) * out_w + x] = acc;
            }
        }
    }
    return out;
}

}  // namespace sconv
