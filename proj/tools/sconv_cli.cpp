#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "sconv/eval.hpp"

namespace fs = std::filesystem;
using namespace sconv;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericError = 3;

struct CommonOptions {
    std::string arch = "Standard";
    std::string data;
    std::string scenario = "Mid2Rest";
    std::uint64_t seed = 0;
    double lr = 1e-3;
    std::size_t epochs = 30;
    std::size_t batch = 32;
    std::string profile = "tiny";
    std::string out = ".";
    std::size_t patience = 5;
    bool any_lr = false;
    std::size_t scale_stride = 1;
    std::size_t kernel_cap = 0;
    std::string kernel_norm = "none";
    std::uint64_t data_seed = 0;
    std::string checkpoint;
};

std::string default_data_root() {
    const char* env = std::getenv("STIR_DATA_DIR");
    return env ? env : "";
}

TrainConfig to_config(const CommonOptions& o) {
    TrainConfig c;
    c.arch = parse_architecture(o.arch);
    c.profile = parse_profile(o.profile);
    c.data_path = o.data;
    c.data_seed = o.data_seed;
    c.scenario = parse_scenario(o.scenario);
    c.seed = o.seed;
    c.learning_rate = o.lr;
    c.allow_any_lr = o.any_lr;
    c.epochs = o.epochs;
    c.batch_size = o.batch;
    c.patience = o.patience;
    c.scale_stride = o.scale_stride;
    c.kernel_cap = o.kernel_cap;
    c.kernel_normalization = o.kernel_norm == "area" ? KernelNormalization::Area : KernelNormalization::None;
    c.validate();
    return c;
}

// A model restored from --checkpoint, laid out for the selected dataset.
struct LoadedModel {
    TrainConfig config;
    TrainData data;
    Model model;
};

LoadedModel load_model(CommonOptions o) {
    if (o.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
    const Checkpoint ckpt = read_checkpoint(o.checkpoint);
    o.arch = ckpt.architecture;
    TrainConfig cfg = to_config(o);
    TrainData data = load_train_data(cfg);
    Model model = model_from_checkpoint(ckpt, arch_spec_for(cfg, data.train));
    return {std::move(cfg), std::move(data), std::move(model)};
}

ScenarioSpec scenario_of(const TrainConfig& cfg, const StirSplit& split) {
    const auto scales = split.scales();
    if (scales.empty()) throw std::invalid_argument("the dataset split is empty");
    return make_scenario(cfg.scenario, scales.front(), scales.back());
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

void add_data_options(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--data", o.data, "dataset directory with train/val/test.stir (default $STIR_DATA_DIR)");
    cmd->add_option("--profile", o.profile, "tiny | full")->check(CLI::IsMember({"tiny", "full"}));
    cmd->add_option("--data-seed", o.data_seed, "seed of the in-memory glyph dataset when no --data is given");
}

void add_model_options(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--scale-stride", o.scale_stride, "use every n-th kernel of the pyramid");
    cmd->add_option("--kernel-cap", o.kernel_cap, "largest pyramid kernel (0 = no cap)");
    cmd->add_option("--kernel-norm", o.kernel_norm, "rescaling of enlarged kernels: none | area")
        ->check(CLI::IsMember({"none", "area"}));
}

// ---- subcommands ---------------------------------------------------------------------------

int run_generate(const CommonOptions& o, const std::string& mnist_dir, std::size_t instances) {
    StirDataset ds;
    if (!mnist_dir.empty()) {
        const fs::path root(mnist_dir);
        const IdxImages images = read_idx_images((root / "train-images-idx3-ubyte").string());
        const auto labels = read_idx_labels((root / "train-labels-idx1-ubyte").string());
        MnistDatasetConfig mc;
        mc.seed = o.seed;
        if (parse_profile(o.profile) == Profile::Tiny) {
            mc.canvas = 32;
            mc.min_scale = 9;
            mc.max_scale = 32;
        }
        if (instances) mc.instances = instances;
        ds = generate_mnist_dataset(images, labels, mc);
    } else {
        DatasetConfig dc = parse_profile(o.profile) == Profile::Tiny ? tiny_dataset_config(o.seed) : DatasetConfig{};
        dc.seed = o.seed;
        if (instances) dc.instances = instances;
        ds = generate_dataset(dc);
    }
    fs::create_directories(o.out);
    const fs::path out(o.out);
    write_split(ds.train, (out / "train.stir").string());
    write_split(ds.val, (out / "val.stir").string());
    write_split(ds.test, (out / "test.stir").string());
    std::cout << "wrote " << ds.train.samples.size() << "/" << ds.val.samples.size() << "/"
              << ds.test.samples.size() << " samples to " << o.out << "\n";
    return kOk;
}

int run_train(const CommonOptions& o) {
    const TrainConfig cfg = to_config(o);
    const TrainData data = load_train_data(cfg);
    std::cerr << "training " << cfg.run_id() << " on " << data.name << "\n";
    const TrainResult r = train(cfg, data, [](const EpochMetrics& e) {
        std::fprintf(stderr, "epoch %zu loss %.4f acc %.4f val_loss %.4f val_acc %.4f (%.1fs)\n", e.epoch,
                     e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy, e.seconds);
    });
    fs::create_directories(o.out);
    const fs::path out(o.out);
    const std::string id = r.metrics.run_id;
    write_checkpoint(r.checkpoint, (out / (id + ".sckp")).string());
    write_run_metrics(r.metrics, (out / (id + ".metrics.json")).string());
    std::cout << id << " best_epoch " << r.metrics.best_epoch << " val " << format_real(r.metrics.best_val_accuracy)
              << " test " << format_real(r.metrics.test.mean) << "\n";
    return kOk;
}

int run_evaluate(const CommonOptions& o) {
    const LoadedModel lm = load_model(o);
    const ScenarioSpec spec = scenario_of(lm.config, lm.data.test);
    const ScenarioViews views = scenario_split(lm.data.test, spec);
    RunMetrics m;
    m.run_id = stem_of(o.checkpoint);
    m.config_hash = lm.config.hash();
    m.dataset = lm.data.name;
    m.arch = lm.config.arch;
    m.scenario = lm.config.scenario;
    m.seed = lm.config.seed;
    m.learning_rate = lm.config.learning_rate;
    m.test = evaluate_per_scale(lm.model, lm.data.test, views.test);
    for (const auto& row : m.test.rows) std::cout << row.scale << "," << format_real(row.accuracy) << "\n";
    std::cout << "mean," << format_real(m.test.mean) << "\n";
    fs::create_directories(o.out);
    write_run_metrics(m, (fs::path(o.out) / (m.run_id + ".metrics.json")).string());
    return kOk;
}

int run_equivariance(const CommonOptions& o) {
    const LoadedModel lm = load_model(o);
    const EquivarianceReport rep =
        scenario_equivariance(lm.model, lm.data.test, scenario_of(lm.config, lm.data.test));
    for (const auto& p : rep.pairs)
        std::cout << p.s1 << "->" << p.s2 << "," << (p.defined ? format_real(p.mean) : std::string()) << "\n";
    std::cout << "score," << format_real(rep.score) << "\n";
    if (!rep.skipped.empty()) std::cerr << rep.skipped.size() << " undefined subject pairs skipped\n";
    fs::create_directories(o.out);
    const std::string id = stem_of(o.checkpoint);
    write_equivariance_report(id, rep, (fs::path(o.out) / (id + ".equivariance.json")).string());
    return kOk;
}

int run_scale_selection(const CommonOptions& o, std::size_t label, std::size_t instance) {
    const LoadedModel lm = load_model(o);
    const auto subject = subject_samples(lm.data.test, label, instance);
    const SelectionProfile p = scale_selection_profile(lm.model, subject);
    for (std::size_t c = 0; c < p.r.size(); ++c)
        std::cout << "channel " << c << " r " << (p.r[c] ? format_real(*p.r[c]) : std::string("undefined")) << "\n";
    fs::create_directories(o.out);
    const std::string id = stem_of(o.checkpoint);
    write_selection_profile(p, (fs::path(o.out) / (id + ".selection.json")).string());
    return kOk;
}

int run_opcount(std::uint64_t k, std::uint64_t n) {
    const std::uint64_t standard = op_count_standard(k, n), scaled = op_count_scaled(k, n);
    std::cout << "standard," << standard << "\n"
              << "scaled," << scaled << "\n"
              << "ratio," << format_real(double(scaled) / double(standard)) << "\n";
    return kOk;
}

bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

int run_report(const std::vector<std::string>& inputs, const std::string& out) {
    ReportInputs ri;
    // Sorted traversal keeps the merge independent of directory order.
    std::map<std::string, fs::path> files;
    for (const auto& in : inputs) {
        if (!fs::is_directory(in)) throw std::invalid_argument("report input '" + in + "' is not a directory");
        for (const auto& e : fs::directory_iterator(in))
            if (e.is_regular_file()) files.emplace(e.path().string(), e.path());
    }
    std::size_t selections = 0;
    for (const auto& [name, path] : files) {
        if (has_suffix(name, ".metrics.json")) {
            ri.runs.push_back(read_run_metrics(name));
        } else if (has_suffix(name, ".equivariance.json")) {
            ri.equivariance.push_back(read_equivariance_report(name));
        } else if (has_suffix(name, ".selection.json")) {
            if (!ri.selection) ri.selection = read_selection_profile(name);
            ++selections;
        }
    }
    if (selections > 1) std::cerr << "several selection profiles found; using the first by name\n";
    emit_report(ri, out);
    std::cout << "report: " << ri.runs.size() << " runs, " << ri.equivariance.size() << " equivariance reports\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scale-equivariant convolution toolkit"};
    app.require_subcommand(1);
    CommonOptions o;
    o.data = default_data_root();

    auto* gen = app.add_subcommand("generate", "render a glyph (or MNIST) dataset to STIR containers");
    std::string mnist_dir;
    std::size_t instances = 0;
    gen->add_option("--seed", o.seed, "dataset seed");
    gen->add_option("--profile", o.profile, "tiny | full")->check(CLI::IsMember({"tiny", "full"}));
    gen->add_option("--out", o.out, "output directory")->required();
    gen->add_option("--mnist", mnist_dir, "directory with MNIST IDX training files");
    gen->add_option("--instances", instances, "instances per class and split (0 = profile default)");

    auto* tr = app.add_subcommand("train", "train one model and write its checkpoint and metrics");
    tr->add_option("--arch", o.arch, "architecture");
    tr->add_option("--scenario", o.scenario, "All2All | Small2Large | Mid2Rest | Large2Small");
    tr->add_option("--seed", o.seed, "training seed");
    tr->add_option("--lr", o.lr, "learning rate (0.01 or 0.001)");
    tr->add_option("--epochs", o.epochs, "maximum epochs");
    tr->add_option("--batch", o.batch, "mini-batch size");
    tr->add_option("--patience", o.patience, "early-stop patience (0 = off)");
    tr->add_flag("--allow-any-lr", o.any_lr, "accept learning rates outside the grid");
    tr->add_option("--out", o.out, "output directory");
    add_data_options(tr, o);
    add_model_options(tr, o);

    auto* ev = app.add_subcommand("evaluate", "per-scale test accuracy of a checkpoint");
    auto* eq = app.add_subcommand("equivariance", "scenario equivariance error of a checkpoint");
    auto* ss = app.add_subcommand("scale-selection", "selected kernel sizes across the scale ladder");
    std::size_t label = 0, instance = 0;
    for (auto* cmd : {ev, eq, ss}) {
        cmd->add_option("--checkpoint", o.checkpoint, "SCKP file")->required();
        cmd->add_option("--scenario", o.scenario, "scenario");
        cmd->add_option("--seed", o.seed, "training seed, recorded in the results");
        cmd->add_option("--lr", o.lr, "training learning rate, recorded in the results");
        cmd->add_flag("--allow-any-lr", o.any_lr, "accept learning rates outside the grid");
        cmd->add_option("--out", o.out, "output directory");
        add_data_options(cmd, o);
        add_model_options(cmd, o);
    }
    ss->add_option("--label", label, "subject class");
    ss->add_option("--instance", instance, "subject instance");

    auto* oc = app.add_subcommand("opcount", "operation counts of a standard and a scale convolution");
    std::uint64_t k = 7, n = 64;
    oc->add_option("-k,--kernel", k, "base kernel size");
    oc->add_option("-n,--input", n, "input extent");

    auto* rp = app.add_subcommand("report", "merge JSON results into CSV tables");
    std::vector<std::string> inputs;
    rp->add_option("inputs", inputs, "directories holding *.json results")->required();
    rp->add_option("--out", o.out, "report directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfigError;
    }

    try {
        if (*gen) return run_generate(o, mnist_dir, instances);
        if (*tr) return run_train(o);
        if (*ev) return run_evaluate(o);
        if (*eq) return run_equivariance(o);
        if (*ss) return run_scale_selection(o, label, instance);
        if (*oc) return run_opcount(k, n);
        if (*rp) return run_report(inputs, o.out);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kNumericError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    }
    return kConfigError;
}
