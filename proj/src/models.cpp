#include "sconv/models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iostream>
#include <limits>
#include <string>

#include "sconv/interpolation.hpp"
#include "sconv/rng.hpp"

namespace sconv {

namespace {

constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

struct ArchName {
    Architecture arch;
    std::string_view name;
};

constexpr ArchName kArchNames[] = {
    {Architecture::Standard, "Standard"}, {Architecture::PixelPool, "PixelPool"},
    {Architecture::SlicePool, "SlicePool"}, {Architecture::EnergyPool, "EnergyPool"},
    {Architecture::Conv3d, "Conv3d"},     {Architecture::Ensemble, "Ensemble"},
    {Architecture::Xu, "Xu"},             {Architecture::Kanazawa, "Kanazawa"},
};

std::string fold(std::string_view s) {
    std::string out;
    for (char c : s)
        if (c != '-' && c != '_') out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

void add_channel_bias(Tensor& t, const Tensor& bias) {
    const std::size_t per = t.size() / t.dim(0);
    for (std::size_t c = 0; c < t.dim(0); ++c)
        for (std::size_t i = 0; i < per; ++i) t[c * per + i] += bias[c];
}

Tensor channel_sums(const Tensor& g) {
    Tensor out({g.dim(0)});
    const std::size_t per = g.size() / g.dim(0);
    for (std::size_t c = 0; c < g.dim(0); ++c)
        for (std::size_t i = 0; i < per; ++i) out[c] += g[c * per + i];
    return out;
}

Tensor flatten_pairs(const Tensor& kernel) {
    return kernel.reshaped({kernel.dim(0) * kernel.dim(1), kernel.dim(2), kernel.dim(3)});
}

Resample xu_kind(std::size_t size, std::size_t reference) {
    return size < reference ? Resample::Linear : Resample::Nearest;
}

// Elementwise max over per-column responses [O, e_j, e_j], centre-cropped to the smallest extent.
MultiColumnResult crop_max(const std::vector<Tensor>& responses) {
    std::size_t e_min = std::numeric_limits<std::size_t>::max();
    for (const auto& r : responses) e_min = std::min(e_min, r.dim(1));
    const std::size_t out_ch = responses.front().dim(0);
    MultiColumnResult res{Tensor({out_ch, e_min, e_min}), std::vector<std::uint32_t>(out_ch * e_min * e_min, 0), {}};
    for (std::size_t j = 0; j < responses.size(); ++j) {
        const Tensor& r = responses[j];
        const std::size_t e = r.dim(1), off = (e - e_min) / 2;
        for (std::size_t o = 0; o < out_ch; ++o)
            for (std::size_t y = 0; y < e_min; ++y)
                for (std::size_t x = 0; x < e_min; ++x) {
                    const double v = r[(o * e + y + off) * e + x + off];
                    const std::size_t idx = (o * e_min + y) * e_min + x;
                    if (j == 0 || v > res.output[idx]) {
                        res.output[idx] = v;
                        res.selection[idx] = static_cast<std::uint32_t>(j);
                    }
                }
    }
    return res;
}

// Gradient of crop_max for column j, embedded back into that column's full extent.
Tensor crop_max_backward(const Tensor& grad, const std::vector<std::uint32_t>& selection, std::size_t column,
                         std::size_t extent) {
    const std::size_t out_ch = grad.dim(0), e_min = grad.dim(1), off = (extent - e_min) / 2;
    Tensor g({out_ch, extent, extent});
    for (std::size_t o = 0; o < out_ch; ++o)
        for (std::size_t y = 0; y < e_min; ++y)
            for (std::size_t x = 0; x < e_min; ++x) {
                const std::size_t idx = (o * e_min + y) * e_min + x;
                if (selection[idx] == column) g[(o * extent + y + off) * extent + x + off] = grad[idx];
            }
    return g;
}

MultiColumnResult xu_apply(const Tensor& input, const std::vector<Tensor>& kernels) {
    std::vector<Tensor> responses;
    responses.reserve(kernels.size());
    for (const auto& k : kernels) responses.push_back(conv2d_forward(input, k));
    MultiColumnResult res = crop_max(responses);
    for (const auto& k : kernels) res.sizes.push_back(k.dim(2));
    return res;
}

MultiColumnResult kanazawa_apply(const Tensor& input, const Tensor& kernel, const std::vector<std::size_t>& extents,
                                 std::vector<Tensor>* resized_inputs) {
    const std::size_t n = input.dim(1);
    const std::size_t canonical = valid_extent(n, kernel.dim(2), "kanazawa layer");
    std::vector<Tensor> responses;
    for (std::size_t m : extents) {
        Tensor x = m == n ? input : resize_bicubic(input, m, m);
        Tensor r = conv2d_forward(x, kernel);
        responses.push_back(r.dim(1) == canonical ? std::move(r) : resize_bicubic(r, canonical, canonical));
        if (resized_inputs) resized_inputs->push_back(std::move(x));
    }
    MultiColumnResult res = crop_max(responses);
    res.sizes = extents;
    return res;
}

void check_square(const Tensor& input, const char* what) {
    require_rank(input, 3, what);
    if (input.dim(1) != input.dim(2)) throw ShapeError(std::string(what) + ": square input required");
}

}  // namespace

std::string_view architecture_name(Architecture arch) {
    for (const auto& a : kArchNames)
        if (a.arch == arch) return a.name;
    throw std::invalid_argument("unknown architecture value");
}

Architecture parse_architecture(std::string_view name) {
    const std::string key = fold(name);
    for (const auto& a : kArchNames)
        if (fold(a.name) == key) return a.arch;
    throw std::invalid_argument("unknown architecture '" + std::string(name) + "'");
}

std::vector<Architecture> all_architectures() {
    std::vector<Architecture> out;
    for (const auto& a : kArchNames) out.push_back(a.arch);
    return out;
}

bool uses_scale_stack(Architecture arch) {
    return arch == Architecture::PixelPool || arch == Architecture::SlicePool || arch == Architecture::EnergyPool ||
           arch == Architecture::Conv3d;
}

std::optional<PoolKind> pool_kind(Architecture arch) {
    switch (arch) {
        case Architecture::PixelPool: return PoolKind::Pixel;
        case Architecture::SlicePool: return PoolKind::Slice;
        case Architecture::EnergyPool: return PoolKind::Energy;
        default: return std::nullopt;
    }
}

std::string_view profile_name(Profile profile) { return profile == Profile::Tiny ? "tiny" : "full"; }

Profile parse_profile(std::string_view name) {
    const std::string key = fold(name);
    if (key == "tiny" || key == "stirtiny") return Profile::Tiny;
    if (key == "full" || key == "stirfull") return Profile::Full;
    throw std::invalid_argument("unknown profile '" + std::string(name) + "' (expected tiny or full)");
}

ArchSpec make_arch_spec(Architecture arch, Profile profile, std::size_t num_classes, std::size_t channels) {
    ArchSpec spec;
    spec.arch = arch;
    spec.num_classes = num_classes;
    spec.layers = {{channels, 16, 7}, {16, 32, 7}};
    spec.canvas = profile == Profile::Tiny ? 32 : 64;
    // A third Gaussian level (8 px) cannot pass two valid 7x7 layers on the 32 px canvas.
    spec.ensemble_levels = profile == Profile::Tiny ? 2 : 3;
    return spec;
}

std::vector<std::size_t> layer_extents(const ArchSpec& spec, std::size_t canvas) {
    std::vector<std::size_t> e{canvas};
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const std::size_t n = e.back();
        const std::string what = "layer " + std::to_string(l + 1);
        std::size_t k = spec.layers[l].kernel_size;
        if (spec.arch == Architecture::Xu && !spec.xu_sizes.empty())
            k = *std::max_element(spec.xu_sizes.begin(), spec.xu_sizes.end());
        if (spec.arch == Architecture::Conv3d && l == 1) k = spec.conv3d_spatial_extent;
        e.push_back(valid_extent(n, k, what.c_str()));
    }
    return e;
}

void ArchSpec::validate() const {
    if (layers.empty()) throw std::invalid_argument("ArchSpec: at least one layer is required");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].validate();
        if (l > 0 && layers[l].in_channels != layers[l - 1].out_channels)
            throw ShapeError("ArchSpec: layer " + std::to_string(l + 1) + " expects " +
                             std::to_string(layers[l].in_channels) + " input channels but layer " +
                             std::to_string(l) + " produces " + std::to_string(layers[l - 1].out_channels));
    }
    if (num_classes < 1) throw std::invalid_argument("ArchSpec: num_classes must be >= 1");
    switch (arch) {
        case Architecture::Ensemble: {
            if (ensemble_levels < 1) throw std::invalid_argument("ArchSpec: ensemble needs >= 1 level");
            if (ensemble_sigma < 0.0) throw std::invalid_argument("ArchSpec: ensemble sigma must be >= 0");
            std::size_t n = canvas;
            for (std::size_t i = 0; i < ensemble_levels; ++i, n /= 2) {
                if (n < 1) throw ShapeError("ArchSpec: ensemble pyramid runs out of pixels");
                layer_extents(*this, n);
            }
            return;
        }
        case Architecture::Xu:
            if (xu_sizes.empty()) throw std::invalid_argument("ArchSpec: Xu needs at least one column size");
            for (auto s : xu_sizes)
                if (s == 0 || s % 2 == 0) throw std::invalid_argument("ArchSpec: Xu column sizes must be odd");
            break;
        case Architecture::Kanazawa: {
            if (kanazawa_exponents.empty()) throw std::invalid_argument("ArchSpec: Kanazawa needs scale exponents");
            if (!(kanazawa_base > 0.0)) throw std::invalid_argument("ArchSpec: Kanazawa base must be positive");
            const auto e = layer_extents(*this, canvas);
            for (std::size_t l = 0; l < layers.size(); ++l)
                if (kanazawa_extents(e[l], layers[l].kernel_size, kanazawa_exponents, kanazawa_base).empty())
                    throw ShapeError("ArchSpec: every Kanazawa scale of layer " + std::to_string(l + 1) +
                                     " is smaller than the kernel");
            return;
        }
        case Architecture::Conv3d: {
            if (layers.size() != 2)
                throw std::invalid_argument("ArchSpec: Conv3d uses exactly two layers (SConv2d, then 3-D conv)");
            if (conv3d_scale_extent < 1 || conv3d_spatial_extent < 1 || conv3d_spatial_extent % 2 == 0)
                throw std::invalid_argument("ArchSpec: invalid Conv3d kernel extents");
            const std::size_t s = pyramid_sizes(canvas, layers[0].kernel_size, pyramid).size();
            if (s < conv3d_scale_extent)
                throw ShapeError("ArchSpec: Conv3d scale extent " + std::to_string(conv3d_scale_extent) +
                                 " exceeds the " + std::to_string(s) + " available scales");
            break;
        }
        default: break;
    }
    layer_extents(*this, canvas);
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const ArchSpec& spec) {
    std::vector<std::pair<std::string, Shape>> out;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& c = spec.layers[l];
        const std::string base = "conv" + std::to_string(l + 1);
        if (spec.arch == Architecture::Conv3d && l == 1)
            out.emplace_back(base + ".weight", Shape{c.out_channels, c.in_channels, spec.conv3d_scale_extent,
                                                     spec.conv3d_spatial_extent, spec.conv3d_spatial_extent});
        else
            out.emplace_back(base + ".weight", Shape{c.out_channels, c.in_channels, c.kernel_size, c.kernel_size});
        if (spec.conv_bias) out.emplace_back(base + ".bias", Shape{c.out_channels});
    }
    out.emplace_back("fc.weight", Shape{spec.num_classes, spec.feature_count()});
    out.emplace_back("fc.bias", Shape{spec.num_classes});
    return out;
}

// ---------------------------------------------------------------------------------------------

struct Model::LayerTape {
    Tensor input;
    Tensor pre_activation;
    PoolSelection selection;
    Shape stack_shape;
    std::vector<std::uint32_t> columns;
    std::vector<Tensor> column_inputs;
    std::vector<std::size_t> sizes;
};

struct Model::ColumnTape {
    std::vector<LayerTape> layers;
    GlobalPoolResult pooled;
    Shape last_shape;
};

Model::Model(ArchSpec spec, std::vector<NamedTensor> parameters) : spec_(std::move(spec)), params_(std::move(parameters)) {
    spec_.validate();
    const auto layout = parameter_layout(spec_);
    if (layout.size() != params_.size())
        throw ShapeError("Model: expected " + std::to_string(layout.size()) + " parameter tensors, got " +
                         std::to_string(params_.size()));
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (params_[i].name != layout[i].first)
            throw ShapeError("Model: parameter " + std::to_string(i) + " is '" + params_[i].name + "', expected '" +
                             layout[i].first + "'");
        require_shape(params_[i].value, layout[i].second, params_[i].name.c_str());
    }
    auto find = [&](const std::string& name) {
        for (std::size_t i = 0; i < params_.size(); ++i)
            if (params_[i].name == name) return i;
        return npos;
    };
    for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
        weight_index_.push_back(find("conv" + std::to_string(l + 1) + ".weight"));
        bias_index_.push_back(find("conv" + std::to_string(l + 1) + ".bias"));
    }
    fc_weight_ = find("fc.weight");
    fc_bias_ = find("fc.bias");
    extents_ = layer_extents(spec_, spec_.canvas);
    pyramids_.resize(spec_.layers.size());
    xu_kernels_.resize(spec_.layers.size());

    if (spec_.arch == Architecture::Kanazawa)
        for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
            const auto used = kanazawa_extents(extents_[l], spec_.layers[l].kernel_size, spec_.kanazawa_exponents,
                                               spec_.kanazawa_base);
            if (used.size() < spec_.kanazawa_exponents.size())
                std::clog << "warning: Kanazawa layer " << l + 1 << " skips "
                          << spec_.kanazawa_exponents.size() - used.size() << " scale(s) whose resized extent is below "
                          << spec_.layers[l].kernel_size << " px\n";
        }
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

std::size_t parameter_count(const Model& model) { return model.parameter_count(); }

const Tensor* Model::bias(std::size_t layer) const {
    return bias_index_[layer] == npos ? nullptr : &params_[bias_index_[layer]].value;
}

std::vector<Tensor> Model::zero_gradients() const {
    std::vector<Tensor> g;
    g.reserve(params_.size());
    for (const auto& p : params_) g.emplace_back(p.value.shape());
    return g;
}

void Model::refresh() const {
    if (!stale_) return;
    for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
        const bool sconv = spec_.arch == Architecture::Conv3d ? l == 0 : uses_scale_stack(spec_.arch);
        if (sconv) {
            if (pyramids_[l])
                pyramids_[l]->set_base(weight(l));
            else
                pyramids_[l].emplace(weight(l), extents_[l], spec_.pyramid);
        }
        if (spec_.arch == Architecture::Xu) {
            xu_kernels_[l].clear();
            for (std::size_t s : spec_.xu_sizes) xu_kernels_[l].push_back(xu_kernel(weight(l), s));
        }
    }
    stale_ = false;
}

Tensor Model::layer_forward(std::size_t layer, const Tensor& input, LayerTape* tape, LayerTrace* trace,
                            bool keep_stack) const {
    Tensor out;
    switch (spec_.arch) {
        case Architecture::Standard:
        case Architecture::Ensemble: out = conv2d_forward(input, weight(layer)); break;
        case Architecture::PixelPool:
        case Architecture::SlicePool:
        case Architecture::EnergyPool: {
            ScaleFeatureStack stack = sconv2d_forward(input, *pyramids_[layer]);
            PoolResult pooled = scale_pool(stack, *pool_kind(spec_.arch));
            out = std::move(pooled.output);
            if (tape) {
                tape->selection = pooled.selection;
                tape->stack_shape = stack.data.shape();
            }
            if (trace) {
                trace->selection = std::move(pooled.selection);
                if (keep_stack) trace->stack = std::move(stack);
            }
            break;
        }
        case Architecture::Conv3d:
            if (layer == 0) {
                ScaleFeatureStack stack = sconv2d_forward(input, *pyramids_[layer]);
                out = stack.data;
                if (trace && keep_stack) trace->stack = std::move(stack);
            } else {
                out = scale_conv3d(input, weight(layer));
            }
            break;
        case Architecture::Xu: {
            check_square(input, "Xu layer");
            MultiColumnResult r = xu_apply(input, xu_kernels_[layer]);
            out = std::move(r.output);
            if (tape) {
                tape->columns = std::move(r.selection);
                tape->sizes = std::move(r.sizes);
            }
            break;
        }
        case Architecture::Kanazawa: {
            check_square(input, "Kanazawa layer");
            const auto extents = kanazawa_extents(input.dim(1), weight(layer).dim(2), spec_.kanazawa_exponents,
                                                  spec_.kanazawa_base);
            MultiColumnResult r = kanazawa_apply(input, weight(layer), extents, tape ? &tape->column_inputs : nullptr);
            out = std::move(r.output);
            if (tape) {
                tape->columns = std::move(r.selection);
                tape->sizes = std::move(r.sizes);
            }
            break;
        }
    }
    if (const Tensor* b = bias(layer)) add_channel_bias(out, *b);
    if (trace) trace->pooled = out;
    if (tape) {
        tape->input = input;
        tape->pre_activation = out;
    }
    return out;
}

Tensor Model::layer_backward(std::size_t layer, const Tensor& grad_out, const LayerTape& tape,
                             std::vector<Tensor>& grads) const {
    Tensor& gw = grads[weight_index_[layer]];
    if (bias_index_[layer] != npos) grads[bias_index_[layer]] += channel_sums(grad_out);
    const Tensor& w = weight(layer);
    switch (spec_.arch) {
        case Architecture::Standard:
        case Architecture::Ensemble: {
            Conv2dGrads g = conv2d_backward(grad_out, tape.input, w);
            gw += g.kernels;
            return std::move(g.input);
        }
        case Architecture::PixelPool:
        case Architecture::SlicePool:
        case Architecture::EnergyPool: {
            const Tensor gs = scale_pool_backward(grad_out, tape.selection, tape.stack_shape);
            SConvGrads g = sconv2d_backward(gs, tape.input, *pyramids_[layer]);
            gw += g.base_kernel;
            return std::move(g.input);
        }
        case Architecture::Conv3d:
            if (layer == 0) {
                SConvGrads g = sconv2d_backward(grad_out, tape.input, *pyramids_[layer]);
                gw += g.base_kernel;
                return std::move(g.input);
            } else {
                Conv3dGrads g = scale_conv3d_backward(grad_out, tape.input, w);
                gw += g.kernels;
                return std::move(g.stack);
            }
        case Architecture::Xu: {
            Tensor gin(tape.input.shape());
            const std::size_t n = tape.input.dim(1), k = w.dim(2);
            for (std::size_t j = 0; j < tape.sizes.size(); ++j) {
                const std::size_t size = tape.sizes[j];
                const Tensor g = crop_max_backward(grad_out, tape.columns, j, n - size + 1);
                Conv2dGrads cg = conv2d_backward(g, tape.input, xu_kernels_[layer][j]);
                gin += cg.input;
                if (size == k)
                    gw += cg.kernels;
                else
                    gw += resize_adjoint(flatten_pairs(cg.kernels), k, k, xu_kind(size, k)).reshaped(w.shape());
            }
            return gin;
        }
        case Architecture::Kanazawa: {
            Tensor gin(tape.input.shape());
            const std::size_t n = tape.input.dim(1), k = w.dim(2);
            const std::size_t canonical = n - k + 1;
            for (std::size_t j = 0; j < tape.sizes.size(); ++j) {
                const std::size_t m = tape.sizes[j], e = m - k + 1;
                Tensor g = crop_max_backward(grad_out, tape.columns, j, canonical);
                if (e != canonical) g = resize_adjoint(g, e, e, Resample::Cubic);
                Conv2dGrads cg = conv2d_backward(g, tape.column_inputs[j], w);
                gw += cg.kernels;
                gin += m == n ? cg.input : resize_adjoint(cg.input, n, n, Resample::Cubic);
            }
            return gin;
        }
    }
    throw std::logic_error("unreachable architecture");
}

Tensor Model::column_forward(const Tensor& image, ColumnTape* tape, ColumnTrace* trace, bool keep_stack) const {
    if (tape) tape->layers.resize(spec_.layers.size());
    if (trace) trace->layers.resize(spec_.layers.size());
    Tensor x = image;
    for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
        const Tensor pre = layer_forward(l, x, tape ? &tape->layers[l] : nullptr, trace ? &trace->layers[l] : nullptr,
                                         keep_stack);
        x = relu(pre);
    }
    GlobalPoolResult pooled = global_pool(x, spec_.global_pool);
    Tensor features = pooled.output;
    if (trace) trace->features = features;
    if (tape) {
        tape->pooled = std::move(pooled);
        tape->last_shape = x.shape();
    }
    return features;
}

void Model::column_backward(const Tensor& grad_features, const ColumnTape& tape, std::vector<Tensor>& grads) const {
    Tensor g = global_pool_backward(grad_features, tape.pooled, tape.last_shape, spec_.global_pool);
    for (std::size_t l = spec_.layers.size(); l-- > 0;) {
        g = relu_backward(g, tape.layers[l].pre_activation);
        g = layer_backward(l, g, tape.layers[l], grads);
    }
}

std::vector<Tensor> Model::column_inputs(const Tensor& image) const {
    if (spec_.arch == Architecture::Ensemble)
        return gaussian_pyramid(image, spec_.ensemble_levels, spec_.ensemble_sigma);
    return {image};
}

Tensor Model::run(const Tensor& image, std::vector<ColumnTape>* tapes, ActivationTrace* trace,
                  Tensor* features_out) const {
    require_shape(image, {spec_.in_channels(), spec_.canvas, spec_.canvas}, "model input");
    refresh();
    const std::vector<Tensor> inputs = column_inputs(image);
    if (tapes) tapes->resize(inputs.size());
    if (trace) trace->columns.assign(inputs.size(), {});
    Tensor features({spec_.feature_count()});
    for (std::size_t c = 0; c < inputs.size(); ++c)
        features += column_forward(inputs[c], tapes ? &(*tapes)[c] : nullptr, trace ? &trace->columns[c] : nullptr,
                                   trace && trace->keep_stacks);
    if (inputs.size() > 1) features *= 1.0 / static_cast<double>(inputs.size());
    if (trace) trace->features = features;
    Tensor logits = linear(features, params_[fc_weight_].value, params_[fc_bias_].value);
    if (features_out) *features_out = std::move(features);
    return logits;
}

Tensor Model::forward(const Tensor& image, ActivationTrace* trace) const { return run(image, nullptr, trace, nullptr); }

SampleResult Model::accumulate_gradients(const Tensor& image, std::size_t label, std::vector<Tensor>& grads) const {
    if (grads.empty()) grads = zero_gradients();
    if (grads.size() != params_.size()) throw ShapeError("accumulate_gradients: gradient count mismatch");
    std::vector<ColumnTape> tapes;
    Tensor features;
    Tensor logits = run(image, &tapes, nullptr, &features);
    const LossResult loss = softmax_cross_entropy(logits, label);
    if (!std::isfinite(loss.loss)) throw NumericError("non-finite loss in forward pass");
    LinearGrads lg = linear_backward(loss.grad_logits, features, params_[fc_weight_].value);
    grads[fc_weight_] += lg.weights;
    grads[fc_bias_] += lg.bias;
    if (tapes.size() > 1) lg.input *= 1.0 / static_cast<double>(tapes.size());
    for (const auto& tape : tapes) column_backward(lg.input, tape, grads);
    return {std::move(logits), loss.loss};
}

Model build_model(const ArchSpec& spec, std::uint64_t seed) {
    spec.validate();
    const auto layout = parameter_layout(spec);
    std::vector<NamedTensor> params;
    params.reserve(layout.size());
    double bound = 0.0;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& [name, shape] = layout[i];
        const bool is_bias = shape.size() == 1;
        // Biases reuse the bound of the weight tensor that precedes them.
        if (!is_bias) bound = std::sqrt(1.0 / static_cast<double>(shape_product(shape) / shape[0]));
        Tensor t(shape);
        SplitMix64 rng(derive_seed({seed, 0x5ced, i}));
        for (auto& v : t.values()) v = rng.uniform(-bound, bound);
        params.push_back({name, std::move(t)});
    }
    return Model(spec, std::move(params));
}

std::vector<Tensor> gaussian_pyramid(const Tensor& image, std::size_t levels, double sigma) {
    check_square(image, "gaussian_pyramid");
    std::vector<Tensor> out{image};
    for (std::size_t i = 1; i < levels; ++i) {
        const std::size_t n = out.back().dim(1) / 2;
        if (n < 1) throw ShapeError("gaussian_pyramid: image too small for " + std::to_string(levels) + " levels");
        out.push_back(resize_bicubic(gaussian_blur(out.back(), sigma), n, n));
    }
    return out;
}

Tensor xu_kernel(const Tensor& reference, std::size_t size) {
    require_rank(reference, 4, "xu_kernel reference");
    const std::size_t k = reference.dim(2);
    if (size == k) return reference;
    if (size == 0) throw ShapeError("xu_kernel: size must be >= 1");
    return resize(flatten_pairs(reference), size, size, xu_kind(size, k))
        .reshaped({reference.dim(0), reference.dim(1), size, size});
}

MultiColumnResult xu_layer_forward(const Tensor& input, const Tensor& reference, const std::vector<std::size_t>& sizes) {
    check_square(input, "xu_layer_forward");
    if (sizes.empty()) throw std::invalid_argument("xu_layer_forward: no column sizes");
    std::vector<Tensor> kernels;
    for (std::size_t s : sizes) kernels.push_back(xu_kernel(reference, s));
    return xu_apply(input, kernels);
}

std::vector<std::size_t> kanazawa_extents(std::size_t n, std::size_t kernel_size, const std::vector<int>& exponents,
                                          double base) {
    std::vector<std::size_t> out;
    for (int e : exponents) {
        const auto m = static_cast<std::size_t>(std::llround(static_cast<double>(n) * std::pow(base, e)));
        if (m >= kernel_size) out.push_back(m);
    }
    return out;
}

MultiColumnResult kanazawa_layer_forward(const Tensor& input, const Tensor& kernel, const std::vector<int>& exponents,
                                         double base) {
    check_square(input, "kanazawa_layer_forward");
    const auto extents = kanazawa_extents(input.dim(1), kernel.dim(2), exponents, base);
    if (extents.empty()) throw ShapeError("kanazawa_layer_forward: every rescaled extent is below the kernel size");
    if (extents.size() < exponents.size())
        std::clog << "warning: Kanazawa layer skips " << exponents.size() - extents.size()
                  << " scale(s) smaller than the kernel\n";
    return kanazawa_apply(input, kernel, extents, nullptr);
}

}  // namespace sconv
