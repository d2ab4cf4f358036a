#include "sconv/scale_layers.hpp"

#include <algorithm>
#include <string>

#include "sconv/ops.hpp"

namespace sconv {

std::size_t num_scales(std::size_t n, std::size_t k) {
    if (n < k)
        throw ShapeError("num_scales: input extent " + std::to_string(n) + " is smaller than kernel size " +
                         std::to_string(k));
    return (n - k) / 2 + 1;
}

std::vector<std::size_t> pyramid_sizes(std::size_t n, std::size_t k, const PyramidConfig& config) {
    if (config.scale_stride == 0) throw std::invalid_argument("pyramid_sizes: scale stride must be >= 1");
    const std::size_t s = num_scales(n, k);
    std::vector<std::size_t> sizes;
    for (std::size_t i = 0; i < s; i += config.scale_stride) {
        const std::size_t size = k + 2 * i;
        if (config.max_kernel != 0 && size > config.max_kernel && !sizes.empty()) break;
        sizes.push_back(size);
    }
    return sizes;
}

KernelPyramid::KernelPyramid(const Tensor& base, std::size_t input_extent, PyramidConfig config)
    : base_(base), input_extent_(input_extent), config_(config) {
    require_rank(base, 4, "KernelPyramid base");
    const std::size_t k = base.dim(2);
    if (base.dim(3) != k) throw ShapeError("KernelPyramid: base kernel must be square");
    if (k % 2 == 0) throw ShapeError("KernelPyramid: base kernel size must be odd");
    sizes_ = pyramid_sizes(input_extent, k, config_);
    matrices_.reserve(sizes_.size());
    for (std::size_t size : sizes_) matrices_.emplace_back(k, size, Resample::Cubic);
    rebuild();
}

void KernelPyramid::set_base(const Tensor& base) {
    require_shape(base, base_.shape(), "KernelPyramid::set_base");
    base_ = base;
    rebuild();
}

double KernelPyramid::level_gain(std::size_t level) const {
    if (config_.normalization == KernelNormalization::None) return 1.0;
    const double ratio = static_cast<double>(sizes_.front()) / static_cast<double>(sizes_[level]);
    return ratio * ratio;
}

void KernelPyramid::rebuild() {
    const std::size_t out_ch = base_.dim(0);
    const std::size_t in_ch = base_.dim(1);
    const std::size_t k = base_.dim(2);
    kernels_.clear();
    kernels_.reserve(sizes_.size());
    for (std::size_t level = 0; level < sizes_.size(); ++level) {
        const std::size_t size = sizes_[level];
        if (size == k) {
            kernels_.push_back(base_);
            continue;
        }
        Tensor enlarged({out_ch, in_ch, size, size});
        const double gain = level_gain(level);
        for (std::size_t p = 0; p < out_ch * in_ch; ++p) {
            auto dst = enlarged.values().subspan(p * size * size, size * size);
            matrices_[level].apply(base_.values().subspan(p * k * k, k * k), dst);
            if (gain != 1.0)
                for (auto& v : dst) v *= gain;
        }
        kernels_.push_back(std::move(enlarged));
    }
}

Tensor KernelPyramid::pull_back(const std::vector<Tensor>& level_grads) const {
    if (level_grads.size() != sizes_.size()) throw ShapeError("KernelPyramid::pull_back: level count mismatch");
    const std::size_t pairs = base_.dim(0) * base_.dim(1);
    const std::size_t k = base_.dim(2);
    Tensor grad(base_.shape());
    for (std::size_t level = 0; level < sizes_.size(); ++level) {
        const Tensor& g = level_grads[level];
        if (g.empty()) continue;
        const std::size_t size = sizes_[level];
        require_shape(g, {base_.dim(0), base_.dim(1), size, size}, "KernelPyramid::pull_back level");
        const double gain = level_gain(level);
        std::vector<double> scaled;
        for (std::size_t p = 0; p < pairs; ++p) {
            auto src = g.values().subspan(p * size * size, size * size);
            if (gain != 1.0) {
                scaled.assign(src.begin(), src.end());
                for (auto& v : scaled) v *= gain;
                src = scaled;
            }
            matrices_[level].apply_transpose_add(src, grad.values().subspan(p * k * k, k * k));
        }
    }
    return grad;
}

ScaleFeatureStack sconv2d_forward(const Tensor& input, const KernelPyramid& pyramid) {
    require_rank(input, 3, "sconv2d input");
    if (input.dim(1) != pyramid.input_extent() || input.dim(2) != pyramid.input_extent())
        throw ShapeError("sconv2d: pyramid was built for " + std::to_string(pyramid.input_extent()) +
                         "-wide inputs, got " + shape_string(input.shape()));
    const std::size_t n = pyramid.input_extent();
    const std::size_t out_ch = pyramid.base().dim(0);
    const std::size_t hmax = n - pyramid.base_size() + 1;
    ScaleFeatureStack stack{Tensor({pyramid.levels(), out_ch, hmax, hmax}), {}, pyramid.sizes()};
    for (std::size_t level = 0; level < pyramid.levels(); ++level) {
        const Tensor response = conv2d_forward(input, pyramid.kernel(level));
        const std::size_t e = response.dim(1);
        const std::size_t pad = (hmax - e) / 2;
        stack.extents.push_back(e);
        for (std::size_t o = 0; o < out_ch; ++o)
            for (std::size_t y = 0; y < e; ++y) {
                const double* src = response.data() + (o * e + y) * e;
                double* dst = stack.data.data() + ((level * out_ch + o) * hmax + y + pad) * hmax + pad;
                std::copy(src, src + e, dst);
            }
    }
    return stack;
}

SConvGrads sconv2d_backward(const Tensor& grad_stack, const Tensor& saved_input, const KernelPyramid& pyramid) {
    const std::size_t n = pyramid.input_extent();
    const std::size_t out_ch = pyramid.base().dim(0);
    const std::size_t hmax = n - pyramid.base_size() + 1;
    require_shape(grad_stack, {pyramid.levels(), out_ch, hmax, hmax}, "sconv2d_backward grad_stack");
    require_shape(saved_input, {pyramid.base().dim(1), n, n}, "sconv2d_backward input");

    SConvGrads grads{Tensor(saved_input.shape()), Tensor()};
    std::vector<Tensor> level_grads(pyramid.levels());
    for (std::size_t level = 0; level < pyramid.levels(); ++level) {
        const std::size_t e = n - pyramid.sizes()[level] + 1;
        const std::size_t pad = (hmax - e) / 2;
        Tensor g({out_ch, e, e});
        bool any = false;
        for (std::size_t o = 0; o < out_ch; ++o)
            for (std::size_t y = 0; y < e; ++y) {
                const double* src = grad_stack.data() + ((level * out_ch + o) * hmax + y + pad) * hmax + pad;
                double* dst = g.data() + (o * e + y) * e;
                for (std::size_t x = 0; x < e; ++x) {
                    dst[x] = src[x];
                    any = any || src[x] != 0.0;
                }
            }
        if (!any) continue;
        Conv2dGrads cg = conv2d_backward(g, saved_input, pyramid.kernel(level));
        grads.input += cg.input;
        level_grads[level] = std::move(cg.kernels);
    }
    grads.base_kernel = pyramid.pull_back(level_grads);
    return grads;
}

namespace {

void require_stack(const ScaleFeatureStack& stack) {
    require_rank(stack.data, 4, "scale pool stack");
    if (stack.scales() == 0) throw ShapeError("scale pool: empty stack");
}

PoolResult take_slices(const ScaleFeatureStack& stack, PoolKind kind, const std::vector<std::uint32_t>& picks) {
    const std::size_t out_ch = stack.channels();
    const std::size_t plane = stack.height() * stack.width();
    PoolResult result{Tensor({out_ch, stack.height(), stack.width()}), {kind, picks}};
    for (std::size_t o = 0; o < out_ch; ++o) {
        const double* src = stack.data.data() + (picks[o] * out_ch + o) * plane;
        std::copy(src, src + plane, result.output.data() + o * plane);
    }
    return result;
}

}  // namespace

PoolResult pixel_pool(const ScaleFeatureStack& stack) {
    require_stack(stack);
    const std::size_t s = stack.scales();
    const std::size_t out_ch = stack.channels();
    const std::size_t plane = stack.height() * stack.width();
    PoolResult result{Tensor({out_ch, stack.height(), stack.width()}), {PoolKind::Pixel, {}}};
    result.selection.indices.assign(out_ch * plane, 0);
    const double* d = stack.data.data();
    for (std::size_t o = 0; o < out_ch; ++o)
        for (std::size_t p = 0; p < plane; ++p) {
            std::uint32_t best = 0;
            double best_v = d[o * plane + p];
            for (std::size_t i = 1; i < s; ++i) {
                const double v = d[(i * out_ch + o) * plane + p];
                if (v > best_v) {
                    best_v = v;
                    best = static_cast<std::uint32_t>(i);
                }
            }
            result.output[o * plane + p] = best_v;
            result.selection.indices[o * plane + p] = best;
        }
    return result;
}

PoolResult slice_pool(const ScaleFeatureStack& stack) {
    require_stack(stack);
    const std::size_t s = stack.scales();
    const std::size_t out_ch = stack.channels();
    const std::size_t plane = stack.height() * stack.width();
    std::vector<std::uint32_t> picks(out_ch, 0);
    const double* d = stack.data.data();
    for (std::size_t o = 0; o < out_ch; ++o) {
        double best_v = d[o * plane];
        for (std::size_t i = 0; i < s; ++i) {
            const double* slice = d + (i * out_ch + o) * plane;
            for (std::size_t p = 0; p < plane; ++p)
                if (slice[p] > best_v) {
                    best_v = slice[p];
                    picks[o] = static_cast<std::uint32_t>(i);
                }
        }
    }
    return take_slices(stack, PoolKind::Slice, picks);
}

PoolResult energy_pool(const ScaleFeatureStack& stack) {
    require_stack(stack);
    const std::size_t s = stack.scales();
    const std::size_t out_ch = stack.channels();
    const std::size_t plane = stack.height() * stack.width();
    std::vector<std::uint32_t> picks(out_ch, 0);
    const double* d = stack.data.data();
    for (std::size_t o = 0; o < out_ch; ++o) {
        double best_sum = 0.0;
        for (std::size_t i = 0; i < s; ++i) {
            const double* slice = d + (i * out_ch + o) * plane;
            double sum = 0.0;
            for (std::size_t p = 0; p < plane; ++p) sum += slice[p];
            if (i == 0 || sum > best_sum) {
                best_sum = sum;
                picks[o] = static_cast<std::uint32_t>(i);
            }
        }
    }
    return take_slices(stack, PoolKind::Energy, picks);
}

PoolResult scale_pool(const ScaleFeatureStack& stack, PoolKind kind) {
    switch (kind) {
        case PoolKind::Pixel: return pixel_pool(stack);
        case PoolKind::Slice: return slice_pool(stack);
        case PoolKind::Energy: return energy_pool(stack);
    }
    throw std::invalid_argument("scale_pool: unknown pool kind");
}

Tensor scale_pool_backward(const Tensor& grad_out, const PoolSelection& selection, const Shape& stack_shape) {
    if (stack_shape.size() != 4) throw ShapeError("scale_pool_backward: stack shape must be rank 4");
    const std::size_t out_ch = stack_shape[1];
    const std::size_t plane = stack_shape[2] * stack_shape[3];
    require_shape(grad_out, {out_ch, stack_shape[2], stack_shape[3]}, "scale_pool_backward grad_out");
    Tensor grad(stack_shape);
    if (selection.kind == PoolKind::Pixel) {
        if (selection.indices.size() != out_ch * plane) throw ShapeError("scale_pool_backward: selection size");
        for (std::size_t o = 0; o < out_ch; ++o)
            for (std::size_t p = 0; p < plane; ++p) {
                const std::size_t i = selection.indices[o * plane + p];
                grad[(i * out_ch + o) * plane + p] = grad_out[o * plane + p];
            }
    } else {
        if (selection.indices.size() != out_ch) throw ShapeError("scale_pool_backward: selection size");
        for (std::size_t o = 0; o < out_ch; ++o) {
            const std::size_t i = selection.indices[o];
            std::copy(grad_out.data() + o * plane, grad_out.data() + (o + 1) * plane,
                      grad.data() + (i * out_ch + o) * plane);
        }
    }
    return grad;
}

std::vector<std::size_t> selected_kernel_sizes(const PoolSelection& selection, const ScaleFeatureStack& stack) {
    std::vector<std::size_t> sizes;
    sizes.reserve(selection.indices.size());
    for (auto i : selection.indices) sizes.push_back(stack.kernel_sizes.at(i));
    return sizes;
}

namespace {

struct Conv3dGeometry {
    std::size_t s, o, h, w, oo, ks, ky, kx, so, ho, wo;
};

Conv3dGeometry conv3d_geometry(const Tensor& stack, const Tensor& kernels) {
    require_rank(stack, 4, "scale_conv3d stack");
    require_rank(kernels, 5, "scale_conv3d kernels");
    Conv3dGeometry g{stack.dim(0), stack.dim(1), stack.dim(2), stack.dim(3), kernels.dim(0),
                     kernels.dim(2), kernels.dim(3), kernels.dim(4), 0, 0, 0};
    if (kernels.dim(1) != g.o)
        throw ShapeError("scale_conv3d: kernel expects " + std::to_string(kernels.dim(1)) +
                         " channels, stack has " + std::to_string(g.o));
    g.so = valid_extent(g.s, g.ks, "scale_conv3d scale axis");
    g.ho = valid_extent(g.h, g.ky, "scale_conv3d rows");
    g.wo = valid_extent(g.w, g.kx, "scale_conv3d cols");
    return g;
}

}  // namespace

Tensor scale_conv3d(const Tensor& stack, const Tensor& kernels) {
    const Conv3dGeometry g = conv3d_geometry(stack, kernels);
    Tensor out({g.oo, g.so, g.ho, g.wo});
    const double* in = stack.data();
    const double* w = kernels.data();
    double* dst = out.data();
    for (std::size_t q = 0; q < g.oo; ++q)
        for (std::size_t si = 0; si < g.so; ++si) {
            double* plane = dst + (q * g.so + si) * g.ho * g.wo;
            for (std::size_t c = 0; c < g.o; ++c)
                for (std::size_t ds = 0; ds < g.ks; ++ds)
                    for (std::size_t dy = 0; dy < g.ky; ++dy)
                        for (std::size_t dx = 0; dx < g.kx; ++dx) {
                            const double wv = w[(((q * g.o + c) * g.ks + ds) * g.ky + dy) * g.kx + dx];
                            const double* src = in + ((si + ds) * g.o + c) * g.h * g.w;
                            for (std::size_t y = 0; y < g.ho; ++y)
                                for (std::size_t x = 0; x < g.wo; ++x)
                                    plane[y * g.wo + x] += wv * src[(y + dy) * g.w + x + dx];
                        }
        }
    return out;
}

Conv3dGrads scale_conv3d_backward(const Tensor& grad_out, const Tensor& saved_stack, const Tensor& kernels) {
    const Conv3dGeometry g = conv3d_geometry(saved_stack, kernels);
    require_shape(grad_out, {g.oo, g.so, g.ho, g.wo}, "scale_conv3d_backward grad_out");
    Conv3dGrads grads{Tensor(saved_stack.shape()), Tensor(kernels.shape())};
    const double* in = saved_stack.data();
    const double* w = kernels.data();
    double* gin = grads.stack.data();
    double* gw = grads.kernels.data();
    for (std::size_t q = 0; q < g.oo; ++q)
        for (std::size_t si = 0; si < g.so; ++si) {
            const double* gp = grad_out.data() + (q * g.so + si) * g.ho * g.wo;
            for (std::size_t c = 0; c < g.o; ++c)
                for (std::size_t ds = 0; ds < g.ks; ++ds)
                    for (std::size_t dy = 0; dy < g.ky; ++dy)
                        for (std::size_t dx = 0; dx < g.kx; ++dx) {
                            const std::size_t wi = (((q * g.o + c) * g.ks + ds) * g.ky + dy) * g.kx + dx;
                            const std::size_t base = ((si + ds) * g.o + c) * g.h * g.w;
                            double acc = 0.0;
                            for (std::size_t y = 0; y < g.ho; ++y)
                                for (std::size_t x = 0; x < g.wo; ++x) {
                                    const std::size_t ii = base + (y + dy) * g.w + x + dx;
                                    acc += gp[y * g.wo + x] * in[ii];
                                    gin[ii] += gp[y * g.wo + x] * w[wi];
                                }
                            gw[wi] += acc;
                        }
        }
    return grads;
}

}  // namespace sconv
