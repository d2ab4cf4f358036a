#include <string>

#include "byte_io.hpp"
#include "sconv/models.hpp"

namespace sconv {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kMaxRank = 8;

}  // namespace

// Layout: "SCKP", u32 version, u32-prefixed architecture name, u16 n_c, u32 entry count,
// manifest entries (u32-prefixed name, u32 rank, rank x u32 dims), then every tensor's
// values as f32 in manifest order.

Checkpoint make_checkpoint(const Model& model) {
    return {std::string(architecture_name(model.spec().arch)), static_cast<std::uint16_t>(model.spec().num_classes),
            model.parameters()};
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    detail::ByteWriter w;
    w.tag("SCKP");
    w.u32(kCheckpointVersion);
    w.string(ckpt.architecture);
    w.u16(ckpt.num_classes);
    w.u32(static_cast<std::uint32_t>(ckpt.parameters.size()));
    for (const auto& p : ckpt.parameters) {
        w.string(p.name);
        w.u32(static_cast<std::uint32_t>(p.value.rank()));
        for (auto d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    }
    for (const auto& p : ckpt.parameters)
        for (double v : p.value.values()) w.f32(static_cast<float>(v));
    return std::move(w.buffer());
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes, "checkpoint");
    auto magic = r.bytes(4, "magic");
    if (std::string(magic.begin(), magic.end()) != "SCKP")
        r.fail("bad magic '" + std::string(magic.begin(), magic.end()) + "', expected 'SCKP'", 0);
    const std::size_t version_at = r.offset();
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        r.fail("unsupported version " + std::to_string(version) + " (expected 1)", version_at);

    Checkpoint ckpt;
    ckpt.architecture = r.string("architecture name");
    ckpt.num_classes = r.u16("n_c");
    const std::size_t count_at = r.offset();
    const std::uint32_t count = r.u32("entry count");
    if (count > 1024) r.fail("implausible entry count " + std::to_string(count), count_at);

    std::size_t total = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.string("parameter name");
        const std::size_t rank_at = r.offset();
        const std::uint32_t rank = r.u32("rank");
        if (rank == 0 || rank > kMaxRank) r.fail("invalid rank " + std::to_string(rank) + " for '" + name + "'", rank_at);
        Shape shape;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::size_t dim_at = r.offset();
            const std::uint32_t dim = r.u32("dimension");
            if (dim == 0) r.fail("zero dimension in '" + name + "'", dim_at);
            shape.push_back(dim);
        }
        const std::size_t n = shape_product(shape);
        total += n;
        if (total > bytes.size() / 4) r.fail("manifest describes more values than the file holds", rank_at);
        ckpt.parameters.push_back({std::move(name), Tensor(shape)});
    }
    for (auto& p : ckpt.parameters)
        for (auto& v : p.value.values()) v = static_cast<double>(r.f32("parameter values"));
    if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes after parameter data", r.offset());
    return ckpt;
}

void write_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
    detail::write_file_bytes(path, encode_checkpoint(checkpoint));
}

Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(detail::read_file_bytes(path)); }

Model model_from_checkpoint(const Checkpoint& ckpt, ArchSpec spec) {
    spec.arch = parse_architecture(ckpt.architecture);
    spec.num_classes = ckpt.num_classes;
    // Layer widths, kernel sizes and bias usage are recovered from the manifest.
    spec.conv_bias = false;
    std::vector<ConvSpec> layers;
    for (const auto& p : ckpt.parameters) {
        if (p.name == "conv" + std::to_string(layers.size() + 1) + ".weight") {
            const Shape& s = p.value.shape();
            if (s.size() < 4) throw ShapeError("checkpoint: '" + p.name + "' has rank " + std::to_string(s.size()));
            const bool is_3d = s.size() == 5;
            if (is_3d) {
                spec.conv3d_scale_extent = s[2];
                spec.conv3d_spatial_extent = s[3];
                layers.push_back({s[1], s[0], spec.layers.size() > layers.size()
                                                  ? spec.layers[layers.size()].kernel_size
                                                  : s[3]});
            } else {
                layers.push_back({s[1], s[0], s[2]});
            }
        }
        if (p.name.size() > 5 && p.name.starts_with("conv") && p.name.ends_with(".bias")) spec.conv_bias = true;
    }
    if (layers.empty()) throw ShapeError("checkpoint: no convolution layers in manifest");
    spec.layers = std::move(layers);
    std::vector<NamedTensor> params = ckpt.parameters;
    return Model(std::move(spec), std::move(params));
}

}  // namespace sconv
