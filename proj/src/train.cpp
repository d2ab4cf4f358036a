#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <stdexcept>
#include <string>

#include "sconv/eval.hpp"
#include "sconv/rng.hpp"

namespace sconv {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5eed;

std::vector<std::size_t> scales_where(const StirSplit& split, const std::function<bool(std::size_t)>& keep) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.samples.size(); ++i)
        if (keep(split.samples[i].scale)) out.push_back(i);
    return out;
}

ScenarioSpec scenario_for(const TrainConfig& config, const StirSplit& train) {
    const auto scales = train.scales();
    if (scales.empty()) throw std::invalid_argument("train: the training split is empty");
    return make_scenario(config.scenario, scales.front(), scales.back());
}

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("train: learning rate must be positive and finite");
    if (!allow_any_lr && std::find(std::begin(kLearningRates), std::end(kLearningRates), learning_rate) ==
                             std::end(kLearningRates))
        throw std::invalid_argument("train: learning rate " + format_real(learning_rate) +
                                    " is outside the grid {0.01, 0.001} (pass the override to allow it)");
    if (epochs == 0) throw std::invalid_argument("train: epochs must be >= 1");
    if (batch_size == 0) throw std::invalid_argument("train: batch size must be >= 1");
    if (scale_stride == 0) throw std::invalid_argument("train: scale stride must be >= 1");
}

std::string TrainConfig::canonical() const {
    std::string s;
    s += "arch=" + std::string(architecture_name(arch));
    s += ";profile=" + std::string(profile_name(profile));
    s += ";data=" + data_path;
    s += ";data_seed=" + std::to_string(data_seed);
    s += ";scenario=" + std::string(scenario_name(scenario));
    s += ";seed=" + std::to_string(seed);
    s += ";lr=" + format_real(learning_rate);
    s += ";epochs=" + std::to_string(epochs);
    s += ";batch=" + std::to_string(batch_size);
    s += ";patience=" + std::to_string(patience);
    s += ";stride=" + std::to_string(scale_stride);
    s += ";cap=" + std::to_string(kernel_cap);
    // Appended only when set so that hashes of default configurations stay stable.
    if (kernel_normalization == KernelNormalization::Area) s += ";norm=area";
    return s;
}

std::string TrainConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string TrainConfig::run_id() const {
    return std::string(architecture_name(arch)) + "-" + std::string(scenario_name(scenario)) + "-s" +
           std::to_string(seed) + "-lr" + format_real(learning_rate);
}

bool same_outcome(const RunMetrics& a, const RunMetrics& b) {
    auto epochs_equal = [](const EpochMetrics& x, const EpochMetrics& y) {
        return x.epoch == y.epoch && x.train_loss == y.train_loss && x.train_accuracy == y.train_accuracy &&
               x.val_loss == y.val_loss && x.val_accuracy == y.val_accuracy;
    };
    auto rows_equal = [](const ScaleAccuracy& x, const ScaleAccuracy& y) {
        return x.scale == y.scale && x.samples == y.samples && x.correct == y.correct && x.accuracy == y.accuracy;
    };
    return a.run_id == b.run_id && a.config_hash == b.config_hash && a.dataset == b.dataset && a.arch == b.arch &&
           a.scenario == b.scenario && a.seed == b.seed && a.learning_rate == b.learning_rate &&
           a.best_epoch == b.best_epoch && a.best_val_accuracy == b.best_val_accuracy &&
           a.stopped_early == b.stopped_early && a.test.samples == b.test.samples &&
           a.test.correct == b.test.correct && a.test.mean == b.test.mean && a.test.loss == b.test.loss &&
           std::equal(a.epochs.begin(), a.epochs.end(), b.epochs.begin(), b.epochs.end(), epochs_equal) &&
           std::equal(a.test.rows.begin(), a.test.rows.end(), b.test.rows.begin(), b.test.rows.end(), rows_equal);
}

TrainData load_train_data(const TrainConfig& config) {
    TrainData data;
    if (!config.data_path.empty()) {
        const std::filesystem::path root(config.data_path);
        data.train = load_split((root / "train.stir").string());
        data.val = load_split((root / "val.stir").string());
        data.test = load_split((root / "test.stir").string());
        data.name = config.data_path;
        return data;
    }
    DatasetConfig dc = config.profile == Profile::Tiny ? tiny_dataset_config(config.data_seed) : DatasetConfig{};
    dc.seed = config.data_seed;
    StirDataset ds = generate_dataset(dc);
    data.train = std::move(ds.train);
    data.val = std::move(ds.val);
    data.test = std::move(ds.test);
    data.name = "glyph-" + std::string(profile_name(config.profile)) + "-d" + std::to_string(config.data_seed);
    return data;
}

ArchSpec arch_spec_for(const TrainConfig& config, const StirSplit& reference) {
    ArchSpec spec = make_arch_spec(config.arch, config.profile, reference.num_classes, reference.channels);
    spec.canvas = reference.canvas;
    spec.pyramid.scale_stride = config.scale_stride;
    spec.pyramid.max_kernel = config.kernel_cap;
    spec.pyramid.normalization = config.kernel_normalization;
    spec.validate();
    return spec;
}

TrainResult train(const TrainConfig& config, const TrainData& data, const EpochCallback& on_epoch) {
    config.validate();
    const ScenarioSpec scenario = scenario_for(config, data.train);
    const auto in_train = [&](std::size_t s) { return scenario.is_train_scale(s); };
    const std::vector<std::size_t> train_view = scales_where(data.train, in_train);
    const std::vector<std::size_t> val_view = scales_where(data.val, in_train);
    const std::vector<std::size_t> test_view =
        scales_where(data.test, [&](std::size_t s) { return scenario.is_test_scale(s); });
    if (train_view.empty()) throw std::invalid_argument("train: the scenario leaves no training samples");

    const ArchSpec spec = arch_spec_for(config, data.train);
    Model model = build_model(spec, config.seed);
    const AdamConfig adam{config.learning_rate};
    std::vector<AdamState> states;
    for (const auto& p : model.parameters()) states.emplace_back(p.value.shape());

    RunMetrics metrics;
    metrics.run_id = config.run_id();
    metrics.config_hash = config.hash();
    metrics.dataset = data.name;
    metrics.arch = config.arch;
    metrics.scenario = config.scenario;
    metrics.seed = config.seed;
    metrics.learning_rate = config.learning_rate;
    metrics.best_val_accuracy = -1.0;

    std::vector<NamedTensor> best = model.parameters();
    std::size_t since_best = 0;
    std::vector<std::size_t> order = train_view;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        SplitMix64 rng(derive_seed({config.seed, kShuffleStream, epoch}));
        order = train_view;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            std::vector<Tensor> grads = model.zero_gradients();
            for (std::size_t b = start; b < stop; ++b) {
                const StirSample& s = data.train.samples[order[b]];
                const SampleResult r = model.accumulate_gradients(s.image, s.label, grads);
                if (!std::isfinite(r.loss))
                    throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                       std::to_string(order[b]) + " (" + metrics.run_id + ")");
                loss_sum += r.loss;
                std::size_t arg = 0;
                for (std::size_t c = 1; c < r.logits.size(); ++c)
                    if (r.logits[c] > r.logits[arg]) arg = c;
                correct += arg == s.label;
            }
            const double scale = 1.0 / double(stop - start);
            auto& params = model.mutable_parameters();
            for (std::size_t p = 0; p < params.size(); ++p) {
                for (auto& g : grads[p].values()) g *= scale;
                adam_step(params[p].value, grads[p], states[p], adam);
            }
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.train_loss = loss_sum / double(order.size());
        em.train_accuracy = double(correct) / double(order.size());
        if (!val_view.empty()) {
            const AccuracyTable val = evaluate_per_scale(model, data.val, val_view);
            em.val_loss = val.loss;
            em.val_accuracy = val.mean;
        } else {
            em.val_loss = em.train_loss;
            em.val_accuracy = em.train_accuracy;
        }
        em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        metrics.epochs.push_back(em);
        if (em.val_accuracy > metrics.best_val_accuracy) {
            metrics.best_val_accuracy = em.val_accuracy;
            metrics.best_epoch = epoch;
            best = model.parameters();
            since_best = 0;
        } else {
            ++since_best;
        }
        if (on_epoch) on_epoch(em);
        if (config.patience > 0 && since_best >= config.patience && epoch < config.epochs) {
            metrics.stopped_early = true;
            break;
        }
    }

    // The checkpoint stores 32-bit reals; evaluate exactly what a reload would see.
    for (auto& p : best)
        for (auto& v : p.value.values()) v = static_cast<double>(static_cast<float>(v));
    const Model final_model(spec, best);
    if (!test_view.empty()) metrics.test = evaluate_per_scale(final_model, data.test, test_view);
    return {make_checkpoint(final_model), std::move(metrics)};
}

TrainResult train(const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    return train(config, load_train_data(config), on_epoch);
}

LrGridResult select_learning_rate(const TrainConfig& base, std::span<const std::uint64_t> seeds, const TrainData& data) {
    if (seeds.empty()) throw std::invalid_argument("select_learning_rate: no seeds");
    LrGridResult out;
    double best = -1.0;
    for (double lr : kLearningRates) {
        double sum = 0.0;
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = base;
            cfg.learning_rate = lr;
            cfg.seed = seed;
            out.runs.push_back(train(cfg, data));
            sum += out.runs.back().metrics.best_val_accuracy;
        }
        const double mean = sum / double(seeds.size());
        out.mean_val_accuracy.push_back(mean);
        if (mean > best) {
            best = mean;
            out.learning_rate = lr;
        }
    }
    return out;
}

}  // namespace sconv
