#include "sconv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gemm.hpp"

namespace sconv {

void ConvSpec::validate() const {
    if (in_channels == 0 || out_channels == 0) throw ShapeError("ConvSpec: channel counts must be positive");
    if (kernel_size == 0 || kernel_size % 2 == 0)
        throw ShapeError("ConvSpec: kernel size must be odd and positive, got " + std::to_string(kernel_size));
}

std::size_t valid_extent(std::size_t n, std::size_t k, const char* what) {
    if (k > n)
        throw ShapeError(std::string(what) + ": kernel extent " + std::to_string(k) + " exceeds input extent " +
                         std::to_string(n));
    return n - k + 1;
}

namespace {

struct ConvGeometry {
    std::size_t c, h, w, o, k, ho, wo;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernels) {
    require_rank(input, 3, "conv2d input");
    require_rank(kernels, 4, "conv2d kernels");
    const auto& is = input.shape();
    const auto& ks = kernels.shape();
    if (ks[1] != is[0])
        throw ShapeError("conv2d: kernel expects " + std::to_string(ks[1]) + " input channels, input has " +
                         std::to_string(is[0]));
    if (ks[2] != ks[3]) throw ShapeError("conv2d: kernels must be square, got " + shape_string(ks));
    ConvGeometry g{is[0], is[1], is[2], ks[0], ks[2], 0, 0};
    g.ho = valid_extent(g.h, g.k, "conv2d rows");
    g.wo = valid_extent(g.w, g.k, "conv2d cols");
    return g;
}

// col[(c, dy, dx), (y, x)]
std::vector<double> im2col(const Tensor& input, const ConvGeometry& g) {
    const std::size_t j_count = g.ho * g.wo;
    std::vector<double> col(g.c * g.k * g.k * j_count);
    const double* in = input.data();
    double* dst = col.data();
    for (std::size_t c = 0; c < g.c; ++c)
        for (std::size_t dy = 0; dy < g.k; ++dy)
            for (std::size_t dx = 0; dx < g.k; ++dx)
                for (std::size_t y = 0; y < g.ho; ++y) {
                    const double* src = in + (c * g.h + y + dy) * g.w + dx;
                    std::copy(src, src + g.wo, dst);
                    dst += g.wo;
                }
    return col;
}

// colT[(y, x), (c, dy, dx)]
std::vector<double> im2col_transposed(const Tensor& input, const ConvGeometry& g) {
    const std::size_t kk = g.c * g.k * g.k;
    std::vector<double> col(g.ho * g.wo * kk);
    const double* in = input.data();
    for (std::size_t y = 0; y < g.ho; ++y)
        for (std::size_t x = 0; x < g.wo; ++x) {
            double* dst = col.data() + (y * g.wo + x) * kk;
            for (std::size_t c = 0; c < g.c; ++c)
                for (std::size_t dy = 0; dy < g.k; ++dy) {
                    const double* src = in + (c * g.h + y + dy) * g.w + x;
                    std::copy(src, src + g.k, dst);
                    dst += g.k;
                }
        }
    return col;
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels) {
    const ConvGeometry g = conv_geometry(input, kernels);
    const std::size_t kk = g.c * g.k * g.k;
    const std::size_t j_count = g.ho * g.wo;
    const std::vector<double> col = im2col(input, g);
    Tensor out({g.o, g.ho, g.wo});
    detail::gemm_ordered(g.o, j_count, kk, detail::MatView{kernels.data(), kk, 1}, col.data(), j_count, out.data(),
                         j_count, false);
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& saved_input, const Tensor& kernels) {
    const ConvGeometry g = conv_geometry(saved_input, kernels);
    require_shape(grad_out, {g.o, g.ho, g.wo}, "conv2d_backward grad_out");
    const std::size_t kk = g.c * g.k * g.k;
    const std::size_t j_count = g.ho * g.wo;

    Conv2dGrads grads{Tensor(saved_input.shape()), Tensor(kernels.shape())};

    const std::size_t nnz = static_cast<std::size_t>(
        std::count_if(grad_out.values().begin(), grad_out.values().end(), [](double v) { return v != 0.0; }));
    if (nnz == 0) return grads;

    if (nnz * 8 < g.o * j_count) {
        // Sparse upstream gradient (typical behind max pooling): visit non-zeros in scan order.
        const double* in = saved_input.data();
        const double* w = kernels.data();
        double* gin = grads.input.data();
        double* gk = grads.kernels.data();
        for (std::size_t o = 0; o < g.o; ++o)
            for (std::size_t y = 0; y < g.ho; ++y)
                for (std::size_t x = 0; x < g.wo; ++x) {
                    const double go = grad_out[(o * g.ho + y) * g.wo + x];
                    if (go == 0.0) continue;
                    for (std::size_t c = 0; c < g.c; ++c)
                        for (std::size_t dy = 0; dy < g.k; ++dy) {
                            const std::size_t in_off = (c * g.h + y + dy) * g.w + x;
                            const std::size_t k_off = ((o * g.c + c) * g.k + dy) * g.k;
                            for (std::size_t dx = 0; dx < g.k; ++dx) {
                                gk[k_off + dx] += go * in[in_off + dx];
                                gin[in_off + dx] += go * w[k_off + dx];
                            }
                        }
                }
        return grads;
    }

    // grad_kernels[o, kk] = grad_out[o, j] * colT[j, kk]
    const std::vector<double> col_t = im2col_transposed(saved_input, g);
    detail::gemm_ordered(g.o, kk, j_count, detail::MatView{grad_out.data(), j_count, 1}, col_t.data(), kk,
                         grads.kernels.data(), kk, false);

    // grad_col[kk, j] = kernels^T[kk, o] * grad_out[o, j], then scatter back.
    std::vector<double> grad_col(kk * j_count);
    detail::gemm_ordered(kk, j_count, g.o, detail::MatView{kernels.data(), 1, kk}, grad_out.data(), j_count,
                         grad_col.data(), j_count, false);
    double* gin = grads.input.data();
    const double* src = grad_col.data();
    for (std::size_t c = 0; c < g.c; ++c)
        for (std::size_t dy = 0; dy < g.k; ++dy)
            for (std::size_t dx = 0; dx < g.k; ++dx)
                for (std::size_t y = 0; y < g.ho; ++y) {
                    double* dst = gin + (c * g.h + y + dy) * g.w + dx;
                    for (std::size_t x = 0; x < g.wo; ++x) dst[x] += src[x];
                    src += g.wo;
                }
    return grads;
}

Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& saved_input) {
    require_shape(grad_out, saved_input.shape(), "relu_backward");
    Tensor grad = grad_out;
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!(saved_input[i] > 0.0)) grad[i] = 0.0;
    return grad;
}

GlobalPoolResult global_pool(const Tensor& input, GlobalPoolMode mode) {
    if (input.rank() < 2) throw ShapeError("global_pool: expected [C, ...], got " + shape_string(input.shape()));
    const std::size_t channels = input.dim(0);
    GlobalPoolResult result{Tensor({channels}), {}};
    if (mode == GlobalPoolMode::Max) result.argmax.resize(channels);
    for (std::size_t c = 0; c < channels; ++c) {
        const auto slab = input.slab(c);
        if (mode == GlobalPoolMode::Max) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < slab.size(); ++i)
                if (slab[i] > slab[best]) best = i;
            result.output[c] = slab[best];
            result.argmax[c] = best;
        } else {
            double acc = 0.0;
            for (double v : slab) acc += v;
            result.output[c] = acc / static_cast<double>(slab.size());
        }
    }
    return result;
}

Tensor global_pool_backward(const Tensor& grad_out, const GlobalPoolResult& forward, const Shape& input_shape,
                            GlobalPoolMode mode) {
    Tensor grad(input_shape);
    require_shape(grad_out, {input_shape.at(0)}, "global_pool_backward");
    for (std::size_t c = 0; c < input_shape[0]; ++c) {
        auto slab = grad.slab(c);
        if (mode == GlobalPoolMode::Max) {
            slab[forward.argmax.at(c)] = grad_out[c];
        } else {
            const double share = grad_out[c] / static_cast<double>(slab.size());
            for (auto& v : slab) v = share;
        }
    }
    return grad;
}

Tensor linear(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    require_rank(input, 1, "linear input");
    require_rank(weights, 2, "linear weights");
    const std::size_t n_out = weights.dim(0);
    const std::size_t n_in = weights.dim(1);
    require_shape(input, {n_in}, "linear input");
    require_shape(bias, {n_out}, "linear bias");
    Tensor out({n_out});
    for (std::size_t i = 0; i < n_out; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n_in; ++j) acc += weights[i * n_in + j] * input[j];
        out[i] = acc + bias[i];
    }
    return out;
}

LinearGrads linear_backward(const Tensor& grad_out, const Tensor& saved_input, const Tensor& weights) {
    require_rank(weights, 2, "linear weights");
    const std::size_t n_out = weights.dim(0);
    const std::size_t n_in = weights.dim(1);
    require_shape(grad_out, {n_out}, "linear_backward grad_out");
    require_shape(saved_input, {n_in}, "linear_backward input");
    LinearGrads grads{Tensor({n_in}), Tensor(weights.shape()), grad_out};
    for (std::size_t i = 0; i < n_out; ++i)
        for (std::size_t j = 0; j < n_in; ++j) {
            grads.weights[i * n_in + j] = grad_out[i] * saved_input[j];
            grads.input[j] += weights[i * n_in + j] * grad_out[i];
        }
    return grads;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::size_t label) {
    require_rank(logits, 1, "softmax_cross_entropy logits");
    const std::size_t n = logits.size();
    if (label >= n)
        throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) + " out of range for " +
                                std::to_string(n) + " classes");
    const double peak = *std::max_element(logits.values().begin(), logits.values().end());
    double denom = 0.0;
    for (double v : logits.values()) denom += std::exp(v - peak);
    const double log_denom = std::log(denom);
    LossResult result{log_denom - (logits[label] - peak), Tensor({n})};
    for (std::size_t i = 0; i < n; ++i) result.grad_logits[i] = std::exp(logits[i] - peak - log_denom);
    result.grad_logits[label] -= 1.0;
    return result;
}

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& config) {
    require_shape(grad, param.shape(), "adam_step grad");
    require_shape(state.first_moment, param.shape(), "adam_step first moment");
    require_shape(state.second_moment, param.shape(), "adam_step second moment");
    if (!grad.all_finite()) throw NumericError("adam_step: non-finite gradient");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < param.size(); ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = config.beta1 * m + (1.0 - config.beta1) * grad[i];
        v = config.beta2 * v + (1.0 - config.beta2) * grad[i] * grad[i];
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        param[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
}

GradCheckResult finite_difference_check(const std::function<double(const Tensor&)>& f, const Tensor& point,
                                        const Tensor& analytic, const GradCheckOptions& options) {
    require_shape(analytic, point.shape(), "finite_difference_check");
    std::vector<std::size_t> indices = options.indices;
    if (indices.empty()) {
        indices.resize(point.size());
        for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    }
    GradCheckResult result;
    Tensor probe = point;
    for (std::size_t i : indices) {
        if (options.skip && options.skip(i)) continue;
        const double original = probe[i];
        probe[i] = original + options.h;
        const double up = f(probe);
        probe[i] = original - options.h;
        const double down = f(probe);
        probe[i] = original;
        const double numeric = (up - down) / (2.0 * options.h);
        const double a = analytic[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
        const double rel = std::abs(a - numeric) / denom;
        if (result.checked++ == 0 || rel > result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_index = i;
        }
    }
    return result;
}

}  // namespace sconv
