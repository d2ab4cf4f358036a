#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>

#include <boost/math/distributions/students_t.hpp>

#include "sconv/eval.hpp"
#include "sconv/interpolation.hpp"

namespace sconv {

namespace {

std::size_t argmax(const Tensor& logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;
    return best;
}

}  // namespace

// ---- Per-scale accuracy -------------------------------------------------------------------

AccuracyTable evaluate_per_scale(const Classifier& classify, const StirSplit& split, std::span<const std::size_t> view) {
    std::vector<std::size_t> all;
    if (view.empty()) {
        all.resize(split.samples.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        view = all;
    }
    std::map<std::size_t, ScaleAccuracy> rows;
    AccuracyTable table;
    double loss_sum = 0.0;
    for (std::size_t idx : view) {
        const StirSample& s = split.samples.at(idx);
        const Tensor logits = classify(s.image);
        const bool hit = argmax(logits) == s.label;
        ScaleAccuracy& row = rows[s.scale];
        row.scale = s.scale;
        ++row.samples;
        row.correct += hit;
        table.correct += hit;
        ++table.samples;
        if (s.label < logits.size()) loss_sum += softmax_cross_entropy(logits, s.label).loss;
    }
    for (auto& [scale, row] : rows) {
        row.accuracy = double(row.correct) / double(row.samples);
        table.rows.push_back(row);
    }
    if (table.samples > 0) {
        table.mean = double(table.correct) / double(table.samples);
        table.loss = loss_sum / double(table.samples);
    }
    return table;
}

AccuracyTable evaluate_per_scale(const Model& model, const StirSplit& split, std::span<const std::size_t> view) {
    return evaluate_per_scale([&model](const Tensor& image) { return model.forward(image); }, split, view);
}

// ---- Equivariance -------------------------------------------------------------------------

bool has_single_feature_map(Architecture arch) {
    switch (arch) {
        case Architecture::Standard:
        case Architecture::PixelPool:
        case Architecture::SlicePool:
        case Architecture::EnergyPool:
        case Architecture::Kanazawa: return true;
        default: return false;
    }
}

Tensor last_feature_map(const Model& model, const Tensor& image) {
    if (!has_single_feature_map(model.spec().arch))
        throw std::invalid_argument("last_feature_map: " + std::string(architecture_name(model.spec().arch)) +
                                    " has no single post-pool feature map");
    ActivationTrace trace;
    trace.keep_stacks = false;
    model.forward(image, &trace);
    return std::move(trace.columns.front().layers.back().pooled);
}

CropWindow subject_window(const Model& model, const StirSample& sample, std::size_t map_extent) {
    std::size_t trim = 0;
    for (const auto& layer : model.spec().layers) trim += (layer.kernel_size - 1) / 2;
    auto axis = [&](std::size_t start) {
        const long lo = std::max<long>(0, long(start) - long(trim));
        const long hi = std::min<long>(long(map_extent), long(start) + long(sample.scale) - long(trim));
        return std::pair<std::size_t, std::size_t>(std::size_t(lo), hi > lo ? std::size_t(hi - lo) : 0);
    };
    const auto [y0, h] = axis(sample.box_y0);
    const auto [x0, w] = axis(sample.box_x0);
    return {y0, x0, h, w};
}

Tensor crop(const Tensor& map, const CropWindow& w) {
    require_rank(map, 3, "crop");
    if (w.y0 + w.height > map.dim(1) || w.x0 + w.width > map.dim(2))
        throw ShapeError("crop: window exceeds map " + shape_string(map.shape()));
    Tensor out({map.dim(0), w.height, w.width});
    for (std::size_t c = 0; c < map.dim(0); ++c)
        for (std::size_t y = 0; y < w.height; ++y)
            for (std::size_t x = 0; x < w.width; ++x) out.at(c, y, x) = map.at(c, w.y0 + y, w.x0 + x);
    return out;
}

std::optional<double> equivariance_error(const Tensor& x1, const Tensor& x2) {
    require_rank(x1, 3, "equivariance_error");
    require_rank(x2, 3, "equivariance_error");
    if (x1.dim(0) != x2.dim(0))
        throw ShapeError("equivariance_error: channel mismatch " + shape_string(x1.shape()) + " vs " +
                         shape_string(x2.shape()));
    if (x1.size() == 0 || x2.size() == 0) return std::nullopt;
    const Tensor r = resize_bicubic(x1, x2.dim(1), x2.dim(2));
    // Channel partial sums are added in sorted order, so relabelling channels cannot change
    // the rounding.
    const std::size_t C = x2.dim(0), plane = x2.dim(1) * x2.dim(2);
    std::vector<double> num(C, 0.0), den(C, 0.0);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) {
            const double d = r[i] - x2[i];
            num[c] += d * d;
            den[c] += x2[i] * x2[i];
        }
    std::sort(num.begin(), num.end());
    std::sort(den.begin(), den.end());
    const double n = std::accumulate(num.begin(), num.end(), 0.0);
    const double d = std::accumulate(den.begin(), den.end(), 0.0);
    if (d == 0.0) return std::nullopt;
    return n / d;
}

std::optional<double> equivariance_error(const Model& model, const StirSample& a, const StirSample& b) {
    const Tensor fa = last_feature_map(model, a.image);
    const Tensor fb = last_feature_map(model, b.image);
    return equivariance_error(crop(fa, subject_window(model, a, fa.dim(1))),
                              crop(fb, subject_window(model, b, fb.dim(1))));
}

EquivarianceReport scenario_equivariance(const Model& model, const StirSplit& split, const ScenarioSpec& spec) {
    using Key = std::tuple<std::size_t, std::size_t, std::size_t>;  // label, instance, scale
    std::map<Key, std::size_t> index;
    std::vector<std::pair<std::size_t, std::size_t>> subjects;
    for (std::size_t i = 0; i < split.samples.size(); ++i) {
        const auto& s = split.samples[i];
        index.emplace(Key{s.label, s.instance, s.scale}, i);
        subjects.emplace_back(s.label, s.instance);
    }
    std::sort(subjects.begin(), subjects.end());
    subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());

    std::map<std::size_t, Tensor> crops;
    auto cropped = [&](std::size_t idx) -> const Tensor& {
        auto it = crops.find(idx);
        if (it == crops.end()) {
            const StirSample& s = split.samples[idx];
            const Tensor map = last_feature_map(model, s.image);
            it = crops.emplace(idx, crop(map, subject_window(model, s, map.dim(1)))).first;
        }
        return it->second;
    };

    EquivarianceReport report;
    report.subjects = subjects.size();
    double score_sum = 0.0;
    std::size_t defined_pairs = 0;
    for (const auto& [s1, s2] : equivariance_pairs(spec)) {
        PairError pe;
        pe.s1 = s1;
        pe.s2 = s2;
        for (const auto& [label, instance] : subjects) {
            auto a = index.find({label, instance, s1});
            auto b = index.find({label, instance, s2});
            if (a == index.end() || b == index.end()) continue;
            const auto eps = equivariance_error(cropped(a->second), cropped(b->second));
            if (eps) {
                pe.values.push_back(*eps);
            } else {
                report.skipped.push_back({label, instance, s1, s2});
            }
        }
        pe.defined = pe.values.size();
        if (pe.defined > 0) {
            pe.mean = std::accumulate(pe.values.begin(), pe.values.end(), 0.0) / double(pe.defined);
            score_sum += pe.mean;
            ++defined_pairs;
        } else {
            pe.mean = std::nan("");
        }
        report.pairs.push_back(std::move(pe));
    }
    if (defined_pairs == 0)
        throw std::domain_error("scenario_equivariance: every scale pair is undefined for " +
                                std::string(scenario_name(spec.scenario)));
    report.score = score_sum / double(defined_pairs);
    return report;
}

double scenario_equivariance_score(const Model& model, const StirSplit& split, const ScenarioSpec& spec) {
    return scenario_equivariance(model, split, spec).score;
}

// ---- Scale selection ----------------------------------------------------------------------

std::vector<double> channel_kernel_sizes(const PoolSelection& selection, const ScaleFeatureStack& stack) {
    const std::vector<std::size_t> sizes = selected_kernel_sizes(selection, stack);
    const std::size_t O = stack.channels();
    if (O == 0 || sizes.size() % O != 0) throw ShapeError("channel_kernel_sizes: selection does not match the stack");
    const std::size_t per = sizes.size() / O;
    std::vector<double> out(O, 0.0);
    for (std::size_t c = 0; c < O; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < per; ++i) sum += double(sizes[c * per + i]);
        out[c] = sum / double(per);
    }
    return out;
}

std::vector<StirSample> subject_samples(const StirSplit& split, std::size_t label, std::size_t instance) {
    std::vector<StirSample> out;
    for (const auto& s : split.samples)
        if (s.label == label && s.instance == instance) out.push_back(s);
    std::stable_sort(out.begin(), out.end(), [](const StirSample& a, const StirSample& b) { return a.scale < b.scale; });
    if (out.empty())
        throw std::invalid_argument("subject_samples: no samples for label " + std::to_string(label) + ", instance " +
                                    std::to_string(instance));
    return out;
}

SelectionProfile scale_selection_profile(const Model& model, std::span<const StirSample> subject) {
    const auto kind = pool_kind(model.spec().arch);
    if (!kind)
        throw std::invalid_argument("scale_selection_profile: " + std::string(architecture_name(model.spec().arch)) +
                                    " has no scale-pooling head");
    if (subject.empty()) throw std::invalid_argument("scale_selection_profile: no samples");
    SelectionProfile p;
    p.kind = *kind;
    for (const StirSample& s : subject) {
        ActivationTrace trace;
        model.forward(s.image, &trace);
        const LayerTrace& last = trace.columns.front().layers.back();
        const std::vector<double> sizes = channel_kernel_sizes(*last.selection, *last.stack);
        if (p.kernel_size.empty()) p.kernel_size.assign(sizes.size(), {});
        for (std::size_t c = 0; c < sizes.size(); ++c) p.kernel_size[c].push_back(sizes[c]);
        if (p.kind == PoolKind::Pixel) {
            const auto per_pixel = selected_kernel_sizes(*last.selection, *last.stack);
            Tensor map({last.stack->channels(), last.stack->height(), last.stack->width()});
            for (std::size_t i = 0; i < per_pixel.size(); ++i) map[i] = double(per_pixel[i]);
            p.size_maps.push_back(std::move(map));
        }
        p.scales.push_back(s.scale);
    }
    std::vector<double> xs(p.scales.begin(), p.scales.end());
    for (const auto& row : p.kernel_size)
        p.r.push_back(xs.size() >= 2 ? pearson_r(xs, row) : std::nullopt);
    return p;
}

// ---- Statistics ---------------------------------------------------------------------------

std::optional<double> pearson_r(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size())
        throw std::invalid_argument("pearson_r: length mismatch " + std::to_string(xs.size()) + " vs " +
                                    std::to_string(ys.size()));
    if (xs.size() < 2) throw std::invalid_argument("pearson_r: need at least two points");
    const double n = double(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * double(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

TrendTest spearman_test(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("spearman_test: length mismatch");
    if (xs.size() < 3) throw std::invalid_argument("spearman_test: need at least three points");
    TrendTest t;
    t.n = xs.size();
    const auto rx = average_ranks(xs), ry = average_ranks(ys);
    const auto rho = pearson_r(rx, ry);
    if (!rho) return t;  // a constant series carries no trend
    t.rho = *rho;
    const double df = double(t.n - 2);
    if (std::abs(t.rho) >= 1.0) {
        t.p_value = 0.0;
        return t;
    }
    const double stat = t.rho * std::sqrt(df / (1.0 - t.rho * t.rho));
    const boost::math::students_t dist(df);
    t.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(stat)));
    return t;
}

std::size_t distance_to_band(const ScenarioSpec& spec, std::size_t scale) {
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (const auto& r : spec.train) {
        const std::size_t d = scale < r.lo ? r.lo - scale : scale > r.hi ? scale - r.hi : 0;
        best = std::min(best, d);
    }
    return best;
}

// ---- Operation counts ---------------------------------------------------------------------

std::uint64_t op_count_standard(std::uint64_t k, std::uint64_t n) {
    if (k == 0) throw std::invalid_argument("op_count_standard: kernel size must be >= 1");
    if (n < k)
        throw std::invalid_argument("op_count_standard: input " + std::to_string(n) + " smaller than kernel " +
                                    std::to_string(k));
    const std::uint64_t out = n - k + 1;
    return 2 * k * k * out * out;
}

std::uint64_t op_count_scaled(std::uint64_t k, std::uint64_t n) {
    if (k == 0) throw std::invalid_argument("op_count_scaled: kernel size must be >= 1");
    if (n < k)
        throw std::invalid_argument("op_count_scaled: input " + std::to_string(n) + " smaller than kernel " +
                                    std::to_string(k));
    std::uint64_t total = 0;
    for (std::uint64_t kk = k; kk <= n; kk += 2) total += op_count_standard(kk, n);
    return total;
}

}  // namespace sconv
