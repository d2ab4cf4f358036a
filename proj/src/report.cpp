#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sconv/eval.hpp"

namespace sconv {

using nlohmann::json;

std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Quote only when a field would otherwise break the row.
std::string field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

std::string pair_label(std::size_t s1, std::size_t s2) { return std::to_string(s1) + "->" + std::to_string(s2); }

json real(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double real_of(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

}  // namespace

void emit_report(const ReportInputs& inputs, const std::string& out_dir) {
    const std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create report directory '" + out_dir + "': " + ec.message());

    std::vector<const RunMetrics*> runs;
    for (const auto& r : inputs.runs) runs.push_back(&r);
    std::stable_sort(runs.begin(), runs.end(), [](auto* a, auto* b) { return a->run_id < b->run_id; });

    std::string summary = "run_id,model,dataset,scenario,seed,lr,mean_test_accuracy\n";
    std::string per_scale = "run_id,scale,accuracy\n";
    for (const RunMetrics* r : runs) {
        summary += field(r->run_id) + "," + std::string(architecture_name(r->arch)) + "," + field(r->dataset) + "," +
                   std::string(scenario_name(r->scenario)) + "," + std::to_string(r->seed) + "," +
                   format_real(r->learning_rate) + "," + format_real(r->test.mean) + "\n";
        for (const auto& row : r->test.rows)
            per_scale += field(r->run_id) + "," + std::to_string(row.scale) + "," + format_real(row.accuracy) + "\n";
    }

    auto eq = inputs.equivariance;
    std::stable_sort(eq.begin(), eq.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string equivariance = "run_id,pair,epsilon\n";
    for (const auto& [run_id, report] : eq) {
        for (const auto& p : report.pairs)
            equivariance += field(run_id) + "," + pair_label(p.s1, p.s2) + "," +
                            (p.defined ? format_real(p.mean) : std::string()) + "\n";
        equivariance += field(run_id) + ",score," + format_real(report.score) + "\n";
    }

    std::string selection = "channel,scale,kernel_size,r\n";
    if (inputs.selection) {
        const SelectionProfile& p = *inputs.selection;
        for (std::size_t c = 0; c < p.kernel_size.size(); ++c)
            for (std::size_t i = 0; i < p.scales.size(); ++i)
                selection += std::to_string(c) + "," + std::to_string(p.scales[i]) + "," +
                             format_real(p.kernel_size[c][i]) + "," +
                             (c < p.r.size() && p.r[c] ? format_real(*p.r[c]) : std::string()) + "\n";
    }

    write_text(dir / "summary.csv", summary);
    write_text(dir / "per_scale.csv", per_scale);
    write_text(dir / "equivariance.csv", equivariance);
    write_text(dir / "selection.csv", selection);
}

// ---- JSON sidecars ------------------------------------------------------------------------

void write_run_metrics(const RunMetrics& m, const std::string& path) {
    json j;
    j["run_id"] = m.run_id;
    j["config_hash"] = m.config_hash;
    j["dataset"] = m.dataset;
    j["arch"] = std::string(architecture_name(m.arch));
    j["scenario"] = std::string(scenario_name(m.scenario));
    j["seed"] = m.seed;
    j["lr"] = m.learning_rate;
    j["best_epoch"] = m.best_epoch;
    j["best_val_accuracy"] = m.best_val_accuracy;
    j["stopped_early"] = m.stopped_early;
    j["epochs"] = json::array();
    for (const auto& e : m.epochs)
        j["epochs"].push_back({{"epoch", e.epoch},
                               {"train_loss", real(e.train_loss)},
                               {"train_accuracy", e.train_accuracy},
                               {"val_loss", real(e.val_loss)},
                               {"val_accuracy", e.val_accuracy},
                               {"seconds", e.seconds}});
    json t;
    t["samples"] = m.test.samples;
    t["correct"] = m.test.correct;
    t["mean"] = m.test.mean;
    t["loss"] = real(m.test.loss);
    t["rows"] = json::array();
    for (const auto& r : m.test.rows)
        t["rows"].push_back({{"scale", r.scale}, {"samples", r.samples}, {"correct", r.correct}, {"accuracy", r.accuracy}});
    j["test"] = t;
    write_text(path, j.dump(2) + "\n");
}

RunMetrics read_run_metrics(const std::string& path) {
    try {
        const json j = json::parse(read_text(path));
        RunMetrics m;
        m.run_id = j.at("run_id").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.dataset = j.at("dataset").get<std::string>();
        m.arch = parse_architecture(j.at("arch").get<std::string>());
        m.scenario = parse_scenario(j.at("scenario").get<std::string>());
        m.seed = j.at("seed").get<std::uint64_t>();
        m.learning_rate = j.at("lr").get<double>();
        m.best_epoch = j.at("best_epoch").get<std::size_t>();
        m.best_val_accuracy = j.at("best_val_accuracy").get<double>();
        m.stopped_early = j.at("stopped_early").get<bool>();
        for (const auto& e : j.at("epochs"))
            m.epochs.push_back({e.at("epoch").get<std::size_t>(), real_of(e.at("train_loss")),
                                e.at("train_accuracy").get<double>(), real_of(e.at("val_loss")),
                                e.at("val_accuracy").get<double>(), e.at("seconds").get<double>()});
        const json& t = j.at("test");
        m.test.samples = t.at("samples").get<std::size_t>();
        m.test.correct = t.at("correct").get<std::size_t>();
        m.test.mean = t.at("mean").get<double>();
        m.test.loss = real_of(t.at("loss"));
        for (const auto& r : t.at("rows"))
            m.test.rows.push_back({r.at("scale").get<std::size_t>(), r.at("samples").get<std::size_t>(),
                                   r.at("correct").get<std::size_t>(), r.at("accuracy").get<double>()});
        return m;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed run metrics '" + path + "': " + e.what());
    }
}

void write_equivariance_report(const std::string& run_id, const EquivarianceReport& r, const std::string& path) {
    json j;
    j["run_id"] = run_id;
    j["score"] = r.score;
    j["subjects"] = r.subjects;
    j["pairs"] = json::array();
    for (const auto& p : r.pairs)
        j["pairs"].push_back({{"s1", p.s1}, {"s2", p.s2}, {"mean", real(p.mean)}, {"values", p.values}});
    j["skipped"] = json::array();
    for (const auto& s : r.skipped)
        j["skipped"].push_back({{"label", s.label}, {"instance", s.instance}, {"s1", s.s1}, {"s2", s.s2}});
    write_text(path, j.dump(2) + "\n");
}

std::pair<std::string, EquivarianceReport> read_equivariance_report(const std::string& path) {
    try {
        const json j = json::parse(read_text(path));
        EquivarianceReport r;
        r.score = j.at("score").get<double>();
        r.subjects = j.at("subjects").get<std::size_t>();
        for (const auto& p : j.at("pairs")) {
            PairError pe;
            pe.s1 = p.at("s1").get<std::size_t>();
            pe.s2 = p.at("s2").get<std::size_t>();
            pe.mean = real_of(p.at("mean"));
            pe.values = p.at("values").get<std::vector<double>>();
            pe.defined = pe.values.size();
            r.pairs.push_back(std::move(pe));
        }
        for (const auto& s : j.at("skipped"))
            r.skipped.push_back({s.at("label").get<std::size_t>(), s.at("instance").get<std::size_t>(),
                                 s.at("s1").get<std::size_t>(), s.at("s2").get<std::size_t>()});
        return {j.at("run_id").get<std::string>(), std::move(r)};
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed equivariance report '" + path + "': " + e.what());
    }
}

void write_selection_profile(const SelectionProfile& p, const std::string& path) {
    json j;
    j["kind"] = p.kind == PoolKind::Pixel ? "pixel" : p.kind == PoolKind::Slice ? "slice" : "energy";
    j["scales"] = p.scales;
    j["kernel_size"] = p.kernel_size;
    j["r"] = json::array();
    for (const auto& r : p.r) j["r"].push_back(r ? json(*r) : json(nullptr));
    write_text(path, j.dump(2) + "\n");
}

SelectionProfile read_selection_profile(const std::string& path) {
    try {
        const json j = json::parse(read_text(path));
        SelectionProfile p;
        const std::string kind = j.at("kind").get<std::string>();
        p.kind = kind == "pixel" ? PoolKind::Pixel : kind == "slice" ? PoolKind::Slice : PoolKind::Energy;
        p.scales = j.at("scales").get<std::vector<std::size_t>>();
        p.kernel_size = j.at("kernel_size").get<std::vector<std::vector<double>>>();
        for (const auto& r : j.at("r")) p.r.push_back(r.is_null() ? std::nullopt : std::optional<double>(r.get<double>()));
        return p;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed selection profile '" + path + "': " + e.what());
    }
}

}  // namespace sconv
