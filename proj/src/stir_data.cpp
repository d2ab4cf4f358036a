#include "sconv/stir_data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>

#include "byte_io.hpp"
#include "sconv/interpolation.hpp"
#include "sconv/rng.hpp"

namespace sconv {

namespace {

constexpr std::uint32_t kStirVersion = 1;
constexpr std::uint64_t kStyleStream = 0x57e1;
constexpr std::uint64_t kPlaceStream = 0x91ace;

double quantize(double v) { return std::round(255.0 * std::clamp(v, 0.0, 1.0)) / 255.0; }

// Pastes `subject` [C, s, s] into a background canvas; pixel values are stored quantized so
// that a STIR round trip is exact.
StirSample place(const Tensor& subject, std::size_t canvas, std::size_t x0, std::size_t y0, double background) {
    const std::size_t C = subject.dim(0), s = subject.dim(1);
    StirSample out;
    out.image = Tensor({C, canvas, canvas}, quantize(background));
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < s; ++y)
            for (std::size_t x = 0; x < s; ++x) out.image.at(c, y0 + y, x0 + x) = quantize(subject.at(c, y, x));
    out.scale = static_cast<std::uint16_t>(s);
    out.box_x0 = static_cast<std::uint16_t>(x0);
    out.box_y0 = static_cast<std::uint16_t>(y0);
    return out;
}

std::pair<std::size_t, std::size_t> random_position(std::uint64_t seed, std::size_t canvas, std::size_t s) {
    SplitMix64 rng(seed);
    const auto x0 = static_cast<std::size_t>(rng.below(canvas - s + 1));
    const auto y0 = static_cast<std::size_t>(rng.below(canvas - s + 1));
    return {x0, y0};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at) {
    return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) | (std::uint32_t(b[at + 2]) << 8) |
           std::uint32_t(b[at + 3]);
}

// Returns the dimension list after checking magic and total length.
std::vector<std::size_t> idx_header(const std::vector<std::uint8_t>& bytes, std::uint32_t magic, std::size_t rank,
                                    const char* what) {
    const std::string ctx = std::string("IDX ") + what;
    if (bytes.size() < 4) throw FormatError(ctx + ": truncated magic", bytes.size());
    const std::uint32_t got = read_be32(bytes, 0);
    if (got != magic) {
        char buf[64];
        std::snprintf(buf, sizeof buf, ": bad magic 0x%08x, expected 0x%08x", got, magic);
        throw FormatError(ctx + buf, 0);
    }
    if (bytes.size() < 4 + 4 * rank) throw FormatError(ctx + ": truncated dimensions", bytes.size());
    std::vector<std::size_t> dims(rank);
    std::size_t total = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        dims[i] = read_be32(bytes, 4 + 4 * i);
        total *= dims[i];
    }
    const std::size_t body = 4 + 4 * rank;
    if (bytes.size() - body < total)
        throw FormatError(ctx + ": truncated payload (need " + std::to_string(total) + " bytes, " +
                              std::to_string(bytes.size() - body) + " left)",
                          bytes.size());
    return dims;
}

}  // namespace

std::string_view provenance_name(Provenance p) {
    switch (p) {
        case Provenance::Glyph: return "glyph";
        case Provenance::Mnist: return "mnist";
        case Provenance::External: return "external";
    }
    return "?";
}

std::vector<std::size_t> StirSplit::scales() const {
    std::vector<std::size_t> out;
    for (const auto& s : samples) out.push_back(s.scale);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// ---- Glyph dataset ------------------------------------------------------------------------

void DatasetConfig::validate() const {
    if (num_classes == 0 || num_classes > kMaxGlyphClasses)
        throw std::invalid_argument("dataset: num_classes must be in 1.." + std::to_string(kMaxGlyphClasses));
    if (instances == 0) throw std::invalid_argument("dataset: instances must be >= 1");
    if (min_scale < 2 || max_scale < min_scale)
        throw std::invalid_argument("dataset: scale range [" + std::to_string(min_scale) + ", " +
                                    std::to_string(max_scale) + "] is invalid");
    if (canvas < max_scale)
        throw std::invalid_argument("dataset: canvas " + std::to_string(canvas) + " is smaller than max scale " +
                                    std::to_string(max_scale));
    if (canvas > 255) throw std::invalid_argument("dataset: canvas must fit the u8 box fields (<= 255)");
    if (!(background >= 0.0 && background <= 1.0)) throw std::invalid_argument("dataset: background must be in [0, 1]");
}

DatasetConfig tiny_dataset_config(std::uint64_t seed) {
    DatasetConfig c;
    c.num_classes = 10;
    c.instances = 10;
    c.seed = seed;
    c.canvas = 32;
    c.min_scale = 9;
    c.max_scale = 32;
    return c;
}

StirDataset generate_dataset(const DatasetConfig& config) {
    config.validate();
    StirDataset ds;
    std::array<StirSplit*, 3> splits{&ds.train, &ds.val, &ds.test};
    for (std::size_t si = 0; si < splits.size(); ++si) {
        StirSplit& split = *splits[si];
        split.num_classes = config.num_classes;
        split.instances = config.instances;
        split.channels = 1;
        split.canvas = config.canvas;
        split.provenance = Provenance::Glyph;
        split.samples.reserve(config.num_classes * config.instances * (config.max_scale - config.min_scale + 1));
        for (std::size_t cls = 0; cls < config.num_classes; ++cls)
            for (std::size_t inst = 0; inst < config.instances; ++inst) {
                // Instances are numbered globally so no split shares a style stream with another.
                const std::uint64_t gid = si * config.instances + inst;
                const GlyphStyle style = GlyphStyle::jittered(derive_seed({config.seed, kStyleStream, cls, gid}));
                for (std::size_t s = config.min_scale; s <= config.max_scale; ++s) {
                    const Tensor glyph = render_glyph(cls, s, style);
                    Tensor subject({1, s, s});
                    for (std::size_t i = 0; i < glyph.size(); ++i)
                        subject[i] = config.background + (1.0 - config.background) * glyph[i];
                    const auto [x0, y0] =
                        random_position(derive_seed({config.seed, kPlaceStream, cls, gid, s}), config.canvas, s);
                    StirSample sample = place(subject, config.canvas, x0, y0, config.background);
                    sample.label = static_cast<std::uint16_t>(cls);
                    sample.instance = static_cast<std::uint32_t>(inst);
                    split.samples.push_back(std::move(sample));
                }
            }
    }
    return ds;
}

// ---- MNIST --------------------------------------------------------------------------------

IdxImages decode_idx_images(const std::vector<std::uint8_t>& bytes) {
    const auto dims = idx_header(bytes, 0x00000803u, 3, "images");
    IdxImages out;
    out.rows = dims[1];
    out.cols = dims[2];
    if (out.rows == 0 || out.cols == 0) throw FormatError("IDX images: zero image extent", 8);
    out.images.reserve(dims[0]);
    std::size_t at = 16;
    for (std::size_t n = 0; n < dims[0]; ++n) {
        Tensor img({1, out.rows, out.cols});
        for (auto& v : img.values()) v = bytes[at++] / 255.0;
        out.images.push_back(std::move(img));
    }
    return out;
}

std::vector<std::uint8_t> decode_idx_labels(const std::vector<std::uint8_t>& bytes) {
    const auto dims = idx_header(bytes, 0x00000801u, 1, "labels");
    return std::vector<std::uint8_t>(bytes.begin() + 8, bytes.begin() + 8 + static_cast<long>(dims[0]));
}

IdxImages read_idx_images(const std::string& path) { return decode_idx_images(detail::read_file_bytes(path)); }

std::vector<std::uint8_t> read_idx_labels(const std::string& path) {
    return decode_idx_labels(detail::read_file_bytes(path));
}

double sharpen(double intensity, SharpenMode mode) {
    const double raw = mode == SharpenMode::Corrected ? std::atan(0.02 * (255.0 * intensity - 128.0))
                                                      : std::atan(0.02 * 255.0 * intensity - 128.0);
    return std::clamp(2.0 / std::numbers::pi * raw, 0.0, 1.0);
}

Tensor mnist_subject(const Tensor& digit, std::size_t s, SharpenMode mode) {
    require_rank(digit, 3, "mnist_subject");
    if (s == 0) throw std::invalid_argument("mnist_subject: target size must be >= 1");
    const double sf = static_cast<double>(s) / static_cast<double>(digit.dim(1));
    Tensor out = gaussian_blur(resize_bicubic(digit, s, s), 7.0 / 8.0 * sf);
    for (auto& v : out.values()) v = sharpen(v, mode);
    return out;
}

StirSample mnist_rescale_pipeline(const Tensor& digit, std::size_t s, std::size_t canvas, SharpenMode mode) {
    // 17..64 on the full canvas; the same fraction of smaller canvases.
    const std::size_t lo = (17 * canvas + 63) / 64;
    if (s < lo || s > canvas)
        throw std::out_of_range("mnist_rescale_pipeline: scale " + std::to_string(s) + " outside [" +
                                std::to_string(lo) + ", " + std::to_string(canvas) + "]");
    const std::size_t off = (canvas - s) / 2;
    return place(mnist_subject(digit, s, mode), canvas, off, off, 0.0);
}

StirDataset generate_mnist_dataset(const IdxImages& images, const std::vector<std::uint8_t>& labels,
                                   const MnistDatasetConfig& config) {
    if (images.images.size() != labels.size())
        throw std::invalid_argument("mnist dataset: " + std::to_string(images.images.size()) + " images but " +
                                    std::to_string(labels.size()) + " labels");
    if (config.instances == 0) throw std::invalid_argument("mnist dataset: instances must be >= 1");
    if (config.canvas > 255 || config.max_scale > config.canvas || config.min_scale > config.max_scale)
        throw std::invalid_argument("mnist dataset: invalid canvas / scale range");

    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    const std::size_t n_c = by_class.empty() ? 0 : by_class.rbegin()->first + 1;
    if (n_c == 0) throw std::invalid_argument("mnist dataset: no labels");
    for (std::size_t c = 0; c < n_c; ++c) {
        auto& pool = by_class[c];
        if (pool.size() < 3 * config.instances)
            throw std::invalid_argument("mnist dataset: class " + std::to_string(c) + " has " +
                                        std::to_string(pool.size()) + " digits, need " +
                                        std::to_string(3 * config.instances));
        // Fisher-Yates with our own generator keeps the draw platform-independent.
        SplitMix64 rng(derive_seed({config.seed, 0x3d15, c}));
        for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
    }

    StirDataset ds;
    std::array<StirSplit*, 3> splits{&ds.train, &ds.val, &ds.test};
    for (std::size_t si = 0; si < 3; ++si) {
        StirSplit& split = *splits[si];
        split.num_classes = n_c;
        split.instances = config.instances;
        split.canvas = config.canvas;
        split.provenance = Provenance::Mnist;
        for (std::size_t c = 0; c < n_c; ++c)
            for (std::size_t inst = 0; inst < config.instances; ++inst) {
                const Tensor& digit = images.images[by_class[c][si * config.instances + inst]];
                for (std::size_t s = config.min_scale; s <= config.max_scale; ++s) {
                    StirSample sample = mnist_rescale_pipeline(digit, s, config.canvas, config.sharpen);
                    sample.label = static_cast<std::uint16_t>(c);
                    sample.instance = static_cast<std::uint32_t>(inst);
                    split.samples.push_back(std::move(sample));
                }
            }
    }
    return ds;
}

// ---- STIR container -----------------------------------------------------------------------

std::vector<std::uint8_t> encode_split(const StirSplit& split) {
    if (split.canvas == 0 || split.canvas > 0xffff || split.channels == 0 || split.channels > 0xff)
        throw std::invalid_argument("encode_split: canvas / channel count out of range");
    if (split.num_classes > 0xffff) throw std::invalid_argument("encode_split: too many classes");
    const std::size_t C = split.channels, n = split.canvas;
    detail::ByteWriter w;
    w.buffer().reserve(kStirHeaderBytes + split.samples.size() * (kStirRecordHeaderBytes + C * n * n));
    w.tag("STIR");
    w.u32(kStirVersion);
    w.u32(static_cast<std::uint32_t>(split.samples.size()));
    w.u16(static_cast<std::uint16_t>(n));
    w.u16(static_cast<std::uint16_t>(n));
    w.u8(static_cast<std::uint8_t>(C));
    w.u16(static_cast<std::uint16_t>(split.num_classes));
    for (std::size_t i = 0; i < split.samples.size(); ++i) {
        const StirSample& s = split.samples[i];
        if (s.image.shape() != Shape{C, n, n})
            throw ShapeError("encode_split: sample " + std::to_string(i) + " has shape " +
                             shape_string(s.image.shape()));
        if (s.scale == 0 || s.scale > 255 || s.box_x0 + s.scale > n || s.box_y0 + s.scale > n)
            throw std::invalid_argument("encode_split: sample " + std::to_string(i) + " has a box outside the canvas");
        if (s.label >= split.num_classes)
            throw std::invalid_argument("encode_split: sample " + std::to_string(i) + " label out of range");
        w.u16(s.label);
        w.u8(static_cast<std::uint8_t>(s.scale));
        w.u8(static_cast<std::uint8_t>(s.box_x0));
        w.u8(static_cast<std::uint8_t>(s.box_y0));
        w.u8(0), w.u8(0), w.u8(0);
        for (double v : s.image.values()) w.u8(static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))));
    }
    return std::move(w.buffer());
}

StirSplit decode_split(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes, "STIR");
    auto magic = r.bytes(4, "magic");
    if (std::string(magic.begin(), magic.end()) != "STIR")
        r.fail("bad magic '" + std::string(magic.begin(), magic.end()) + "', expected 'STIR'", 0);
    const std::size_t version_at = r.offset();
    const std::uint32_t version = r.u32("version");
    if (version != kStirVersion)
        r.fail("unsupported version " + std::to_string(version) + " (expected 1)", version_at);
    const std::uint32_t count = r.u32("image count");
    const std::size_t dims_at = r.offset();
    const std::uint16_t h = r.u16("height");
    const std::uint16_t w = r.u16("width");
    if (h == 0 || h != w) r.fail("canvas must be square and non-empty, got " + std::to_string(h) + "x" + std::to_string(w), dims_at);
    const std::size_t channels_at = r.offset();
    const std::uint8_t C = r.u8("channels");
    if (C == 0) r.fail("zero channels", channels_at);
    const std::uint16_t n_c = r.u16("class count");

    StirSplit split;
    split.num_classes = n_c;
    split.channels = C;
    split.canvas = h;
    split.provenance = Provenance::External;
    const std::size_t pixels = std::size_t(C) * h * w;
    if (std::size_t(count) > r.remaining() / (kStirRecordHeaderBytes + pixels) + 1)
        r.fail("image count " + std::to_string(count) + " exceeds the file length", 8);
    split.samples.reserve(count);
    std::map<std::pair<std::uint16_t, std::uint16_t>, std::uint32_t> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t record_at = r.offset();
        StirSample s;
        s.label = r.u16("label");
        s.scale = r.u8("scale");
        s.box_x0 = r.u8("box_x0");
        s.box_y0 = r.u8("box_y0");
        r.bytes(3, "reserved");
        if (s.label >= n_c) r.fail("record " + std::to_string(i) + " label " + std::to_string(s.label) + " >= n_classes", record_at);
        if (s.scale == 0 || s.box_x0 + s.scale > h || s.box_y0 + s.scale > h)
            r.fail("record " + std::to_string(i) + " subject box lies outside the canvas", record_at + 2);
        auto px = r.bytes(pixels, "pixel payload");
        s.image = Tensor({C, h, w});
        for (std::size_t k = 0; k < pixels; ++k) s.image[k] = px[k] / 255.0;
        s.instance = seen[{s.label, s.scale}]++;
        split.samples.push_back(std::move(s));
    }
    if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes after the last record", r.offset());
    for (const auto& [key, n] : seen) split.instances = std::max<std::size_t>(split.instances, n);
    return split;
}

void write_split(const StirSplit& split, const std::string& path) { detail::write_file_bytes(path, encode_split(split)); }

StirSplit load_split(const std::string& path) { return decode_split(detail::read_file_bytes(path)); }

// ---- Scenarios ----------------------------------------------------------------------------

std::string_view scenario_name(Scenario s) {
    switch (s) {
        case Scenario::All2All: return "All2All";
        case Scenario::Small2Large: return "Small2Large";
        case Scenario::Mid2Rest: return "Mid2Rest";
        case Scenario::Large2Small: return "Large2Small";
    }
    return "?";
}

Scenario parse_scenario(std::string_view name) {
    std::string key;
    for (char c : name)
        if (c != '-' && c != '_' && c != ' ') key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    for (Scenario s : {Scenario::All2All, Scenario::Small2Large, Scenario::Mid2Rest, Scenario::Large2Small}) {
        std::string ref;
        for (char c : scenario_name(s)) ref.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        if (key == ref) return s;
    }
    throw std::invalid_argument("unknown scenario '" + std::string(name) +
                                "' (expected All2All, Small2Large, Mid2Rest or Large2Small)");
}

namespace {

bool in_any(const std::vector<ScaleRange>& ranges, std::size_t s) {
    return std::any_of(ranges.begin(), ranges.end(), [s](const ScaleRange& r) { return r.contains(s); });
}

std::vector<std::size_t> expand(const std::vector<ScaleRange>& ranges) {
    std::vector<std::size_t> out;
    for (const auto& r : ranges)
        for (std::size_t s = r.lo; s <= r.hi; ++s) out.push_back(s);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace

bool ScenarioSpec::is_train_scale(std::size_t s) const { return in_any(train, s); }
bool ScenarioSpec::is_test_scale(std::size_t s) const { return in_any(test, s); }
std::vector<std::size_t> ScenarioSpec::train_scales() const { return expand(train); }
std::vector<std::size_t> ScenarioSpec::test_scales() const { return expand(test); }

ScenarioSpec make_scenario(Scenario scenario, std::size_t min_scale, std::size_t max_scale) {
    if (max_scale < min_scale || max_scale - min_scale + 1 < 3)
        throw std::invalid_argument("make_scenario: need at least three scales");
    const std::size_t third = (max_scale - min_scale + 1) / 3;
    const ScaleRange small{min_scale, min_scale + third - 1};
    const ScaleRange mid{min_scale + third, min_scale + 2 * third - 1};
    const ScaleRange large{min_scale + 2 * third, max_scale};
    ScenarioSpec spec;
    spec.scenario = scenario;
    switch (scenario) {
        case Scenario::All2All:
            spec.train = {{min_scale, max_scale}};
            spec.test = {small, mid, large};
            break;
        case Scenario::Small2Large:
            spec.train = {small};
            spec.test = {mid, large};
            break;
        case Scenario::Mid2Rest:
            spec.train = {mid};
            spec.test = {small, large};
            break;
        case Scenario::Large2Small:
            spec.train = {large};
            spec.test = {small, mid};
            break;
    }
    return spec;
}

ScenarioViews scenario_split(const StirSplit& split, const ScenarioSpec& spec) {
    ScenarioViews v;
    for (std::size_t i = 0; i < split.samples.size(); ++i) {
        const std::size_t s = split.samples[i].scale;
        if (spec.is_train_scale(s)) v.train.push_back(i);
        if (spec.is_test_scale(s)) v.test.push_back(i);
    }
    if (v.train.empty() || v.test.empty())
        throw std::invalid_argument(std::string("scenario_split: ") + std::string(scenario_name(spec.scenario)) +
                                    " leaves an empty " + (v.train.empty() ? "train" : "test") + " view");
    return v;
}

std::vector<std::pair<std::size_t, std::size_t>> equivariance_pairs(const ScenarioSpec& spec) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    // Largest segment first.
    for (auto it = spec.test.rbegin(); it != spec.test.rend(); ++it) {
        out.emplace_back(it->hi, it->lo);
        out.emplace_back(it->lo, it->hi);
    }
    return out;
}

}  // namespace sconv
