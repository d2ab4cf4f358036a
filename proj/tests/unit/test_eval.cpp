#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "../support/oracles.hpp"
#include "sconv/eval.hpp"
#include "sconv/interpolation.hpp"
#include "sconv/rng.hpp"

using namespace sconv;
using namespace sconv::testing;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_count(const std::string& s) { return std::size_t(std::count(s.begin(), s.end(), '\n')); }

std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("sconv_test_eval_" + name);
    std::filesystem::remove_all(p);
    return p;
}

// Small glyph data on a 32 canvas (scales 9..32) so that Model's tiny profile applies.
TrainData small_data(std::size_t classes, std::size_t instances, std::size_t lo = 9, std::size_t hi = 32,
                     std::uint64_t seed = 4) {
    DatasetConfig cfg;
    cfg.num_classes = classes;
    cfg.instances = instances;
    cfg.seed = seed;
    cfg.canvas = 32;
    cfg.min_scale = lo;
    cfg.max_scale = hi;
    StirDataset ds = generate_dataset(cfg);
    return {std::move(ds.train), std::move(ds.val), std::move(ds.test), "small"};
}

Model tiny_model(Architecture arch, std::size_t classes, std::uint64_t seed = 1) {
    ArchSpec spec = make_arch_spec(arch, Profile::Tiny, classes);
    return build_model(spec, seed);
}

StirSplit label_only_split(std::size_t per_scale, std::size_t classes, std::uint64_t seed) {
    StirSplit split;
    split.num_classes = classes;
    split.canvas = 2;
    SplitMix64 rng(seed);
    for (std::size_t s = 17; s <= 64; ++s)
        for (std::size_t i = 0; i < per_scale; ++i) {
            StirSample smp;
            smp.image = Tensor({1, 2, 2});
            smp.label = static_cast<std::uint16_t>(rng.below(classes));
            smp.scale = static_cast<std::uint16_t>(s);
            split.samples.push_back(std::move(smp));
        }
    return split;
}

RunMetrics fake_run(const std::string& id, std::size_t first_scale, std::size_t n_scales, std::uint64_t seed) {
    RunMetrics m;
    m.run_id = id;
    m.config_hash = "00";
    m.dataset = "glyph-tiny-d0";
    m.arch = Architecture::PixelPool;
    m.scenario = Scenario::Mid2Rest;
    m.seed = seed;
    m.learning_rate = 1e-3;
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i < n_scales; ++i) {
        ScaleAccuracy row;
        row.scale = first_scale + i;
        row.samples = 20 + rng.below(5);
        row.correct = rng.below(row.samples + 1);
        row.accuracy = double(row.correct) / double(row.samples);
        m.test.rows.push_back(row);
        m.test.samples += row.samples;
        m.test.correct += row.correct;
    }
    m.test.mean = n_scales ? double(m.test.correct) / double(m.test.samples) : 0.0;
    m.epochs.push_back({1, 0.5, 0.75, 0.4, 0.8, 1.25});
    m.best_epoch = 1;
    m.best_val_accuracy = 0.8;
    return m;
}

}  // namespace

// ---- Operation counts ---------------------------------------------------------------------

TEST_CASE("operation counts") {
    CHECK(op_count_standard(7, 64) == 329672);
    CHECK(op_count_scaled(7, 64) == 38418968);
    CHECK(op_count_standard(1, 3) == 18);
    for (std::uint64_t k : {1, 4, 7, 30}) {
        CHECK(op_count_standard(k, k) == 2 * k * k);
        CHECK(op_count_scaled(k, k) == op_count_standard(k, k));
    }
    const double ratio = double(op_count_scaled(7, 64)) / double(op_count_standard(7, 64));
    CHECK(ratio == doctest::Approx(116.54).epsilon(1e-3));
    CHECK(ratio > 10.0);
    CHECK(ratio < 1000.0);
    for (std::uint64_t k = 1; k <= 9; ++k)
        for (std::uint64_t n = k; n <= 24; ++n) {
            // Independent recount of the ladder k, k+2, ... by the scale count.
            std::uint64_t sum = 0;
            for (std::size_t i = 0; i < num_scales(n, k); ++i) {
                const std::uint64_t kk = k + 2 * i, o = n - kk + 1;
                sum += 2 * kk * kk * o * o;
            }
            CHECK(op_count_scaled(k, n) == sum);
            CHECK(op_count_scaled(k, n) >= op_count_standard(k, n));
            CHECK((op_count_scaled(k, n) == op_count_standard(k, n)) == (n < k + 2));
        }
    CHECK_THROWS_AS(op_count_standard(8, 7), std::invalid_argument);
    CHECK_THROWS_AS(op_count_scaled(8, 7), std::invalid_argument);
    CHECK_THROWS_AS(op_count_standard(0, 7), std::invalid_argument);
}

// ---- Statistics ---------------------------------------------------------------------------

TEST_CASE("pearson correlation") {
    std::vector<double> xs{1, 2, 3, 4, 5, 6}, ys, neg;
    for (double x : xs) ys.push_back(2 * x + 1), neg.push_back(-x);
    CHECK(*pearson_r(xs, ys) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(*pearson_r(xs, neg) == doctest::Approx(-1.0).epsilon(1e-15));
    const std::vector<double> flat(6, 3.0);
    CHECK(!pearson_r(xs, flat).has_value());
    CHECK(!pearson_r(flat, xs).has_value());
    CHECK_THROWS_AS(pearson_r(xs, std::vector<double>{1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(pearson_r(std::vector<double>{1}, std::vector<double>{1}), std::invalid_argument);

    SplitMix64 rng(77);
    std::vector<double> a(10), b(10);
    for (int rep = 0; rep < 5; ++rep) {
        for (std::size_t i = 0; i < 10; ++i) a[i] = rng.normal(), b[i] = 0.4 * a[i] + rng.normal();
        // Single-pass textbook form as the oracle.
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (std::size_t i = 0; i < 10; ++i) {
            sx += a[i], sy += b[i], sxx += a[i] * a[i], syy += b[i] * b[i], sxy += a[i] * b[i];
        }
        const double n = 10;
        const double oracle = (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
        const double r = *pearson_r(a, b);
        CHECK(std::abs(r - oracle) < 1e-12);
        // Positive-slope affine maps leave r unchanged; a negative slope flips the sign.
        std::vector<double> a2, b2, b3;
        for (std::size_t i = 0; i < 10; ++i) a2.push_back(3.5 * a[i] - 2), b2.push_back(0.25 * b[i] + 7),
                                            b3.push_back(-2 * b[i]);
        CHECK(std::abs(*pearson_r(a2, b2) - r) < 1e-12);
        CHECK(std::abs(*pearson_r(a, b3) + r) < 1e-12);
    }
}

TEST_CASE("spearman trend test") {
    std::vector<double> x(10), y{2, 1, 4, 3, 7, 5, 6, 9, 8, 10};
    std::iota(x.begin(), x.end(), 0.0);
    const TrendTest t = spearman_test(x, y);
    // Reference values from an established statistics package.
    CHECK(t.rho == doctest::Approx(0.9272727272727272).epsilon(1e-12));
    CHECK(t.p_value == doctest::Approx(0.00011203450639397582).epsilon(1e-8));
    CHECK(t.n == 10);

    const std::vector<double> tx{1, 2, 2, 3, 4, 4, 4, 5}, ty{3, 1, 4, 1, 5, 9, 2, 6};
    const TrendTest tied = spearman_test(tx, ty);
    CHECK(tied.rho == doctest::Approx(0.5495502618648208).epsilon(1e-12));
    CHECK(tied.p_value == doctest::Approx(0.1582561276787799).epsilon(1e-8));

    const TrendTest perfect = spearman_test(x, x);
    CHECK(perfect.rho == 1.0);
    CHECK(perfect.p_value == 0.0);
    std::vector<double> rev(x.rbegin(), x.rend());
    CHECK(spearman_test(x, rev).rho == -1.0);
    const TrendTest flat = spearman_test(x, std::vector<double>(10, 1.0));
    CHECK(flat.rho == 0.0);
    CHECK(flat.p_value == 1.0);
    CHECK_THROWS_AS(spearman_test(std::vector<double>{1, 2}, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST_CASE("distance to the training band") {
    const ScenarioSpec mid = make_scenario(Scenario::Mid2Rest);
    CHECK(distance_to_band(mid, 40) == 0);
    CHECK(distance_to_band(mid, 33) == 0);
    CHECK(distance_to_band(mid, 32) == 1);
    CHECK(distance_to_band(mid, 17) == 16);
    CHECK(distance_to_band(mid, 64) == 16);
    CHECK(distance_to_band(make_scenario(Scenario::Small2Large), 64) == 32);
}

// ---- Per-scale accuracy -------------------------------------------------------------------

TEST_CASE("per-scale accuracy of constant and random classifiers") {
    StirSplit single = label_only_split(5, 1, 3);
    single.num_classes = 3;
    const AccuracyTable perfect = evaluate_per_scale(
        [](const Tensor&) {
            Tensor t({3});
            t[0] = 1.0;
            return t;
        },
        single);
    CHECK(perfect.rows.size() == 48);
    for (const auto& row : perfect.rows) {
        CHECK(row.accuracy == 1.0);
        CHECK(row.samples == 5);
    }
    CHECK(perfect.mean == 1.0);

    const StirSplit many = label_only_split(1000, 10, 8);
    SplitMix64 rng(99);
    const AccuracyTable chance = evaluate_per_scale(
        [&](const Tensor&) {
            Tensor t({10});
            for (auto& v : t.values()) v = rng.normal();
            return t;
        },
        many);
    // 1000 draws with p = 0.1: sd ~ 0.0095; 5 sd bounds every scale.
    for (const auto& row : chance.rows) CHECK(std::abs(row.accuracy - 0.1) < 0.048);
    CHECK(std::abs(chance.mean - 0.1) < 0.01);
    std::size_t weighted = 0;
    for (const auto& row : chance.rows) weighted += row.correct;
    CHECK(weighted == chance.correct);
}

TEST_CASE("per-scale table over a Mid2Rest test view") {
    DatasetConfig cfg;
    cfg.num_classes = 2;
    cfg.instances = 1;
    const StirSplit split = generate_dataset(cfg).test;
    const ScenarioViews views = scenario_split(split, make_scenario(Scenario::Mid2Rest));
    const AccuracyTable t = evaluate_per_scale([](const Tensor&) { return Tensor({2}, 0.0); }, split, views.test);
    CHECK(t.rows.size() == 32);
    CHECK(t.rows.front().scale == 17);
    CHECK(t.rows.back().scale == 64);
    CHECK(t.samples == views.test.size());
    double weighted = 0.0;
    for (const auto& r : t.rows) weighted += r.accuracy * double(r.samples);
    CHECK(std::abs(weighted / double(t.samples) - t.mean) < 1e-12);
    // Equal logits: argmax is class 0, so exactly half the labels are hit.
    CHECK(t.mean == 0.5);
}

// ---- Equivariance error -------------------------------------------------------------------

TEST_CASE("equivariance error on explicit maps") {
    const Tensor a = random_tensor({3, 6, 6}, 12);
    CHECK(*equivariance_error(a, a) == 0.0);

    const Tensor small = random_tensor({3, 5, 5}, 13);
    Tensor doubled = resize_bicubic(small, 8, 8);
    for (auto& v : doubled.values()) v *= 2.0;
    CHECK(*equivariance_error(small, doubled) == doctest::Approx(0.25).epsilon(1e-14));

    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const Tensor x1 = random_tensor({2, 4 + seed % 3, 5}, 100 + seed);
        const Tensor x2 = random_tensor({2, 6, 3 + seed % 2}, 200 + seed);
        const Tensor r = pointwise_resize(x1, x2.dim(1), x2.dim(2), 0);
        double num = 0, den = 0;
        for (std::size_t i = 0; i < x2.size(); ++i) num += (r[i] - x2[i]) * (r[i] - x2[i]), den += x2[i] * x2[i];
        CHECK(std::abs(*equivariance_error(x1, x2) - num / den) < 1e-12);
    }

    // Relabelling channels consistently in both maps changes nothing, bit for bit.
    const Tensor p1 = random_tensor({5, 7, 7}, 31), p2 = random_tensor({5, 9, 9}, 32);
    const std::size_t perm[5] = {3, 0, 4, 1, 2};
    Tensor q1(p1.shape()), q2(p2.shape());
    for (std::size_t c = 0; c < 5; ++c) {
        for (std::size_t i = 0; i < 49; ++i) q1[perm[c] * 49 + i] = p1[c * 49 + i];
        for (std::size_t i = 0; i < 81; ++i) q2[perm[c] * 81 + i] = p2[c * 81 + i];
    }
    CHECK(*equivariance_error(p1, p2) == *equivariance_error(q1, q2));

    CHECK(!equivariance_error(a, Tensor({3, 4, 4}, 0.0)).has_value());
    CHECK_THROWS_AS(equivariance_error(a, Tensor({2, 4, 4}, 1.0)), ShapeError);
}

TEST_CASE("subject window follows the valid-convolution offset") {
    const Model m = tiny_model(Architecture::Standard, 2);
    StirSample s;
    s.scale = 9;
    s.box_x0 = 0;
    s.box_y0 = 23;
    const CropWindow w = subject_window(m, s, 20);
    CHECK(w.x0 == 0);
    CHECK(w.width == 3);  // centres 6..8 of the box [0, 9)
    CHECK(w.y0 == 17);
    CHECK(w.height == 3);
    s.scale = 32;
    s.box_x0 = s.box_y0 = 0;
    const CropWindow full = subject_window(m, s, 20);
    CHECK(full.width == 20);
    CHECK(full.height == 20);
    s.scale = 20;
    s.box_x0 = s.box_y0 = 6;
    const CropWindow mid = subject_window(m, s, 20);
    CHECK(mid.x0 == 0);
    CHECK(mid.width == 20);
}

TEST_CASE("scenario equivariance score is the mean of per-pair means") {
    const TrainData data = small_data(2, 2);
    const Model model = tiny_model(Architecture::Standard, 2, 5);
    const ScenarioSpec spec = make_scenario(Scenario::Mid2Rest, 9, 32);
    const EquivarianceReport rep = scenario_equivariance(model, data.test, spec);
    REQUIRE(rep.pairs.size() == 4);
    CHECK(rep.subjects == 4);
    CHECK(rep.skipped.empty());
    const std::vector<std::pair<std::size_t, std::size_t>> want{{32, 25}, {25, 32}, {16, 9}, {9, 16}};
    double mean_of_means = 0.0;
    for (std::size_t p = 0; p < 4; ++p) {
        CHECK(rep.pairs[p].s1 == want[p].first);
        CHECK(rep.pairs[p].s2 == want[p].second);
        REQUIRE(rep.pairs[p].values.size() == 4);
        double sum = 0.0;
        std::size_t k = 0;
        for (std::size_t label = 0; label < 2; ++label)
            for (std::size_t inst = 0; inst < 2; ++inst, ++k) {
                const auto samples = subject_samples(data.test, label, inst);
                const StirSample& a = samples[want[p].first - 9];
                const StirSample& b = samples[want[p].second - 9];
                REQUIRE(a.scale == want[p].first);
                const double eps = *equivariance_error(model, a, b);
                CHECK(eps == rep.pairs[p].values[k]);
                CHECK(eps >= 0.0);
                sum += eps;
            }
        CHECK(std::abs(rep.pairs[p].mean - sum / 4) < 1e-15);
        mean_of_means += sum / 4;
    }
    CHECK(std::abs(rep.score - mean_of_means / 4) < 1e-15);
    CHECK(scenario_equivariance_score(model, data.test, spec) == rep.score);

    // Self pairs vanish exactly.
    const auto samples = subject_samples(data.test, 1, 0);
    CHECK(*equivariance_error(model, samples[5], samples[5]) == 0.0);
}

TEST_CASE("undefined equivariance pairs are skipped, not imputed") {
    const TrainData data = small_data(1, 1);
    Model zero = tiny_model(Architecture::PixelPool, 1);
    for (auto& p : zero.mutable_parameters()) p.value.fill(0.0);
    CHECK_THROWS_AS(scenario_equivariance(zero, data.test, make_scenario(Scenario::Mid2Rest, 9, 32)), std::domain_error);
    const auto s = subject_samples(data.test, 0, 0);
    CHECK(!equivariance_error(zero, s[0], s[3]).has_value());

    const Model ens = tiny_model(Architecture::Ensemble, 1);
    CHECK_THROWS_AS(last_feature_map(ens, s[0].image), std::invalid_argument);
    for (Architecture a : all_architectures())
        CHECK(has_single_feature_map(a) == (a != Architecture::Ensemble && a != Architecture::Conv3d &&
                                            a != Architecture::Xu));
}

// ---- Scale selection ----------------------------------------------------------------------

TEST_CASE("channel kernel sizes from a constructed stack") {
    ScaleFeatureStack st;
    st.data = Tensor({3, 2, 5, 5}, 0.0);
    st.extents = {5, 3, 1};
    st.kernel_sizes = {7, 9, 11};
    // Channel 0 peaks in slice 2, channel 1 in slice 1.
    st.data.at(2, 0, 2, 2) = 4.0;
    st.data.at(1, 1, 2, 2) = 3.0;
    const PoolResult sp = slice_pool(st);
    CHECK(channel_kernel_sizes(sp.selection, st) == std::vector<double>{11.0, 9.0});
    const PoolResult pp = pixel_pool(st);
    const auto px = channel_kernel_sizes(pp.selection, st);
    // Only the peak pixel leaves slice 0 in each channel.
    CHECK(px[0] == doctest::Approx((24 * 7 + 11) / 25.0));
    CHECK(px[1] == doctest::Approx((24 * 7 + 9) / 25.0));
}

TEST_CASE("selection profile of a SlicePool model") {
    const TrainData data = small_data(1, 1);
    const Model model = tiny_model(Architecture::SlicePool, 1, 3);
    const auto subject = subject_samples(data.test, 0, 0);
    REQUIRE(subject.size() == 24);
    const SelectionProfile p = scale_selection_profile(model, subject);
    CHECK(p.kind == PoolKind::Slice);
    CHECK(p.kernel_size.size() == 32);
    CHECK(p.r.size() == 32);
    CHECK(p.scales.front() == 9);
    CHECK(p.scales.back() == 32);
    // Last layer sees a 26 input: kernels 7, 9, ..., 25.
    for (const auto& row : p.kernel_size) {
        REQUIRE(row.size() == 24);
        for (double k : row) {
            CHECK(k >= 7);
            CHECK(k <= 25);
            CHECK(std::fmod(k - 7, 2.0) == 0.0);
        }
    }
    for (std::size_t c = 0; c < 32; ++c) {
        const auto r = pearson_r(std::vector<double>(p.scales.begin(), p.scales.end()), p.kernel_size[c]);
        CHECK(r.has_value() == p.r[c].has_value());
        if (r) CHECK(*r == *p.r[c]);
    }

    const Model pixel = tiny_model(Architecture::PixelPool, 1, 3);
    const std::vector<StirSample> three(subject.begin(), subject.begin() + 3);
    const SelectionProfile pp = scale_selection_profile(pixel, three);
    CHECK(pp.kind == PoolKind::Pixel);
    REQUIRE(pp.size_maps.size() == 3);
    CHECK(pp.size_maps[0].shape() == Shape{32, 20, 20});

    CHECK_THROWS_AS(scale_selection_profile(tiny_model(Architecture::Standard, 1), three), std::invalid_argument);
}

TEST_CASE("a single-entry ladder always selects the base size") {
    ArchSpec spec = make_arch_spec(Architecture::SlicePool, Profile::Tiny, 2);
    spec.canvas = 13;
    spec.layers = {{1, 4, 7}, {4, 5, 7}};
    const Model m = build_model(spec, 9);
    std::vector<StirSample> subj;
    for (std::size_t s = 3; s <= 13; ++s) {
        StirSample x;
        x.image = Tensor({1, 13, 13}, 0.0);
        const Tensor g = render_glyph(2, s);
        for (std::size_t y = 0; y < s; ++y)
            for (std::size_t xx = 0; xx < s; ++xx) x.image.at(0, y, xx) = g.at(0, y, xx);
        x.scale = static_cast<std::uint16_t>(s);
        subj.push_back(std::move(x));
    }
    const SelectionProfile p = scale_selection_profile(m, subj);
    for (const auto& row : p.kernel_size)
        for (double k : row) CHECK(k == 7.0);
    for (const auto& r : p.r) CHECK(!r.has_value());
}

// ---- Reports ------------------------------------------------------------------------------

TEST_CASE("empty report is header-only") {
    const auto dir = scratch_dir("empty");
    emit_report({}, dir.string());
    CHECK(slurp(dir / "summary.csv") == "run_id,model,dataset,scenario,seed,lr,mean_test_accuracy\n");
    CHECK(slurp(dir / "per_scale.csv") == "run_id,scale,accuracy\n");
    CHECK(slurp(dir / "equivariance.csv") == "run_id,pair,epsilon\n");
    CHECK(slurp(dir / "selection.csv") == "channel,scale,kernel_size,r\n");
    std::filesystem::remove_all(dir);
}

TEST_CASE("report rows, ordering and byte-identical re-emission") {
    ReportInputs in;
    in.runs.push_back(fake_run("b-run", 17, 32, 2));
    in.runs.push_back(fake_run("a-run", 9, 16, 1));
    EquivarianceReport eq;
    eq.pairs = {{64, 49, 0.5, 1, {0.5}}, {49, 64, 0.25, 1, {0.25}}};
    eq.score = 0.375;
    eq.subjects = 1;
    in.equivariance.push_back({"b-run", eq});
    SelectionProfile sel;
    sel.scales = {9, 10, 11};
    sel.kernel_size = {{7, 9, 11}, {7, 7, 7}};
    sel.r = {1.0, std::nullopt};
    in.selection = sel;

    const auto d1 = scratch_dir("r1"), d2 = scratch_dir("r2");
    emit_report(in, d1.string());
    emit_report(in, d2.string());
    for (const char* f : {"summary.csv", "per_scale.csv", "equivariance.csv", "selection.csv"}) {
        const std::string a = slurp(d1 / f), b = slurp(d2 / f);
        CHECK(a == b);
        CHECK(a.find('\r') == std::string::npos);
        CHECK(a.back() == '\n');
    }
    const std::string summary = slurp(d1 / "summary.csv");
    CHECK(line_count(summary) == 3);
    CHECK(summary.find("a-run") < summary.find("b-run"));
    CHECK(summary.find("a-run,PixelPool,glyph-tiny-d0,Mid2Rest,1,0.001,") != std::string::npos);
    const std::string per_scale = slurp(d1 / "per_scale.csv");
    CHECK(line_count(per_scale) == 1 + 16 + 32);
    CHECK(slurp(d1 / "equivariance.csv") ==
          "run_id,pair,epsilon\nb-run,64->49,0.5\nb-run,49->64,0.25\nb-run,score,0.375\n");
    const std::string selection = slurp(d1 / "selection.csv");
    CHECK(line_count(selection) == 7);
    CHECK(selection.find("0,11,11,1\n") != std::string::npos);
    CHECK(selection.find("1,10,7,\n") != std::string::npos);

    // Summary mean equals the sample-weighted per-scale mean.
    for (const auto& run : in.runs) {
        double w = 0.0;
        for (const auto& row : run.test.rows) w += row.accuracy * double(row.samples);
        CHECK(std::abs(w / double(run.test.samples) - run.test.mean) < 1e-12);
    }

    // Unwritable destination: a regular file in place of the directory.
    const auto blocker = scratch_dir("blocker");
    { std::ofstream(blocker) << "x"; }
    CHECK_THROWS_AS(emit_report(in, (blocker / "sub").string()), std::runtime_error);
    std::filesystem::remove(blocker);
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
}

TEST_CASE("real formatting") {
    CHECK(format_real(0.1) == "0.1");
    CHECK(format_real(1e-3) == "0.001");
    CHECK(format_real(1.0) == "1");
    CHECK(format_real(2.5e-12) == "2.5e-12");
    CHECK(std::stod(format_real(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("JSON sidecars round trip") {
    const auto dir = scratch_dir("json");
    std::filesystem::create_directories(dir);
    RunMetrics m = fake_run("x", 9, 5, 3);
    m.test.loss = 0.123456789012345;
    write_run_metrics(m, (dir / "m.json").string());
    const RunMetrics back = read_run_metrics((dir / "m.json").string());
    CHECK(same_outcome(m, back));
    CHECK(back.epochs.at(0).seconds == 1.25);

    EquivarianceReport eq;
    eq.pairs = {{32, 25, 0.1, 2, {0.05, 0.15}}, {25, 32, std::nan(""), 0, {}}};
    eq.score = 0.1;
    eq.subjects = 2;
    eq.skipped = {{1, 0, 25, 32}, {1, 1, 25, 32}};
    write_equivariance_report("x", eq, (dir / "e.json").string());
    const auto [id, eb] = read_equivariance_report((dir / "e.json").string());
    CHECK(id == "x");
    CHECK(eb.score == 0.1);
    CHECK(eb.pairs.size() == 2);
    CHECK(eb.pairs[0].values == std::vector<double>{0.05, 0.15});
    CHECK(std::isnan(eb.pairs[1].mean));
    CHECK(eb.skipped.size() == 2);

    SelectionProfile sel;
    sel.kind = PoolKind::Energy;
    sel.scales = {9, 10};
    sel.kernel_size = {{7, 9}};
    sel.r = {std::nullopt};
    write_selection_profile(sel, (dir / "s.json").string());
    const SelectionProfile sb = read_selection_profile((dir / "s.json").string());
    CHECK(sb.kind == PoolKind::Energy);
    CHECK(sb.kernel_size == sel.kernel_size);
    CHECK(!sb.r[0].has_value());

    { std::ofstream(dir / "bad.json") << "{\"run_id\": 3"; }
    CHECK_THROWS_AS(read_run_metrics((dir / "bad.json").string()), std::runtime_error);
    std::filesystem::remove_all(dir);
}

// ---- Training -----------------------------------------------------------------------------

TEST_CASE("train config validation and identity") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.learning_rate = 1e-2;
    CHECK_NOTHROW(c.validate());
    c.learning_rate = 5e-3;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.allow_any_lr = true;
    CHECK_NOTHROW(c.validate());
    c.learning_rate = -1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);

    TrainConfig a, b;
    a.arch = b.arch = Architecture::PixelPool;
    a.seed = b.seed = 3;
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 16);
    CHECK(a.run_id() == "PixelPool-Mid2Rest-s3-lr0.001");
    b.seed = 4;
    CHECK(a.hash() != b.hash());

    // Default normalisation leaves the canonical string of older configs untouched.
    b = a;
    b.kernel_normalization = KernelNormalization::None;
    CHECK(a.canonical() == b.canonical());
    b.kernel_normalization = KernelNormalization::Area;
    CHECK(a.hash() != b.hash());
    CHECK(b.canonical().find("norm=area") != std::string::npos);
}

TEST_CASE("overfit probe: 32 samples are memorised within 200 steps") {
    // Four classes, one instance, scales 17..24: 32 samples per split.
    TrainData data = small_data(4, 1, 17, 24, 21);
    REQUIRE(data.train.samples.size() == 32);
    data.val = data.train;
    TrainConfig cfg;
    cfg.scenario = Scenario::All2All;
    cfg.epochs = 200;  // one full-batch step per epoch
    cfg.batch_size = 32;
    cfg.patience = 0;
    cfg.learning_rate = 1e-3;
    std::size_t steps_to_perfect = 0;
    const TrainResult r = train(cfg, data, [&](const EpochMetrics& e) {
        if (!steps_to_perfect && e.val_accuracy == 1.0) steps_to_perfect = e.epoch;
    });
    CHECK(steps_to_perfect > 0);
    CHECK(steps_to_perfect <= 200);
    CHECK(r.metrics.best_val_accuracy == 1.0);
    const Model m = model_from_checkpoint(r.checkpoint, arch_spec_for(cfg, data.train));
    CHECK(evaluate_per_scale(m, data.train).mean == 1.0);
}

TEST_CASE("training is deterministic and its checkpoint reproduces the test table") {
    const TrainData data = small_data(3, 1);
    TrainConfig cfg;
    cfg.arch = Architecture::Standard;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = 6;
    const TrainResult a = train(cfg, data), b = train(cfg, data);
    CHECK(same_outcome(a.metrics, b.metrics));
    CHECK(encode_checkpoint(a.checkpoint) == encode_checkpoint(b.checkpoint));
    CHECK(a.metrics.epochs.size() == 3);
    CHECK(a.metrics.test.rows.size() == 16);  // Mid2Rest on 9..32 tests 9..16 and 25..32
    for (const auto& row : a.metrics.test.rows) {
        CHECK(row.accuracy >= 0.0);
        CHECK(row.accuracy <= 1.0);
    }
    CHECK(a.metrics.run_id == cfg.run_id());
    CHECK(a.metrics.config_hash == cfg.hash());

    const Model reloaded = model_from_checkpoint(decode_checkpoint(encode_checkpoint(a.checkpoint)),
                                                 arch_spec_for(cfg, data.train));
    const ScenarioSpec spec = make_scenario(Scenario::Mid2Rest, 9, 32);
    const AccuracyTable t = evaluate_per_scale(reloaded, data.test, scenario_split(data.test, spec).test);
    CHECK(t.mean == a.metrics.test.mean);
    CHECK(t.correct == a.metrics.test.correct);

    cfg.seed = 7;
    const TrainResult c = train(cfg, data);
    CHECK(encode_checkpoint(c.checkpoint) != encode_checkpoint(a.checkpoint));
}

TEST_CASE("early stopping and failure modes") {
    TrainData data = small_data(2, 1, 17, 24, 5);
    data.val = data.train;
    TrainConfig cfg;
    cfg.scenario = Scenario::All2All;
    cfg.epochs = 50;
    cfg.patience = 2;
    cfg.learning_rate = 1e-2;
    const TrainResult r = train(cfg, data);
    CHECK(r.metrics.stopped_early);
    CHECK(r.metrics.epochs.size() == r.metrics.best_epoch + 2);

    TrainData broken = data;
    broken.train.samples[3].image[100] = std::nan("");
    cfg.epochs = 1;
    CHECK_THROWS_AS(train(cfg, broken), NumericError);

    TrainData empty = data;
    empty.train.samples.clear();
    CHECK_THROWS_AS(train(cfg, empty), std::invalid_argument);
}

TEST_CASE("learning-rate grid keeps the better mean validation accuracy") {
    const TrainData data = small_data(2, 1, 17, 24, 8);
    TrainConfig base;
    base.scenario = Scenario::All2All;
    base.epochs = 1;
    base.batch_size = 16;
    const std::vector<std::uint64_t> seeds{1, 2};
    const LrGridResult g = select_learning_rate(base, seeds, data);
    REQUIRE(g.runs.size() == 4);
    REQUIRE(g.mean_val_accuracy.size() == 2);
    CHECK(g.runs[0].metrics.learning_rate == 1e-2);
    CHECK(g.runs[3].metrics.learning_rate == 1e-3);
    CHECK(g.runs[1].metrics.seed == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        const double mean = (g.runs[2 * i].metrics.best_val_accuracy + g.runs[2 * i + 1].metrics.best_val_accuracy) / 2;
        CHECK(g.mean_val_accuracy[i] == mean);
    }
    const double expect = g.mean_val_accuracy[1] > g.mean_val_accuracy[0] ? 1e-3 : 1e-2;
    CHECK(g.learning_rate == expect);
}

TEST_CASE("dataset resolution for training") {
    TrainConfig cfg;
    cfg.arch = Architecture::Ensemble;
    const StirSplit ref = small_data(3, 1, 9, 12).train;
    const ArchSpec spec = arch_spec_for(cfg, ref);
    CHECK(spec.canvas == 32);
    CHECK(spec.num_classes == 3);
    CHECK(spec.ensemble_levels == 2);
    cfg.scale_stride = 2;
    cfg.kernel_cap = 11;
    const ArchSpec capped = arch_spec_for(cfg, ref);
    CHECK(capped.pyramid.scale_stride == 2);
    CHECK(capped.pyramid.max_kernel == 11);

    const auto dir = scratch_dir("data");
    std::filesystem::create_directories(dir);
    const TrainData d = small_data(2, 1, 9, 12);
    write_split(d.train, (dir / "train.stir").string());
    write_split(d.val, (dir / "val.stir").string());
    write_split(d.test, (dir / "test.stir").string());
    TrainConfig from_disk;
    from_disk.data_path = dir.string();
    const TrainData loaded = load_train_data(from_disk);
    CHECK(loaded.train.samples.size() == d.train.samples.size());
    CHECK(loaded.test.samples[5].image == d.test.samples[5].image);
    CHECK(loaded.name == dir.string());
    from_disk.data_path = (dir / "missing").string();
    CHECK_THROWS_AS(load_train_data(from_disk), std::runtime_error);
    std::filesystem::remove_all(dir);
}
