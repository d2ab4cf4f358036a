#include <doctest.h>

#include <cmath>
#include <limits>

#include "../support/oracles.hpp"
#include "sconv/ops.hpp"

using namespace sconv;
using namespace sconv::testing;

namespace {

Tensor plus_kernel() {
    Tensor k({1, 1, 3, 3});
    k.at(0, 0, 0, 1) = k.at(0, 0, 1, 0) = k.at(0, 0, 1, 1) = k.at(0, 0, 1, 2) = k.at(0, 0, 2, 1) = 1.0;
    return k;
}

Tensor shift(const Tensor& in, long ty, long tx) {
    Tensor out(in.shape());
    const long H = long(in.dim(1)), W = long(in.dim(2));
    for (std::size_t c = 0; c < in.dim(0); ++c)
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) {
                const long sy = y - ty, sx = x - tx;
                if (sy >= 0 && sy < H && sx >= 0 && sx < W) out.at(c, y, x) = in.at(c, sy, sx);
            }
    return out;
}

}  // namespace

TEST_CASE("tensor basics") {
    Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    t.at(1, 2) = 4.0;
    CHECK(t[5] == 4.0);
    CHECK(t.all_finite());
    t[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
    CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
    CHECK_THROWS_AS(t.at(2, 0), ShapeError);
}

TEST_CASE("conv2d_forward detects the plus pattern at its centre") {
    Tensor image({1, 7, 7});
    image.at(0, 2, 3) = image.at(0, 3, 2) = image.at(0, 3, 3) = image.at(0, 3, 4) = image.at(0, 4, 3) = 1.0;
    const Tensor kernel = plus_kernel();
    const Tensor out = conv2d_forward(image, kernel);
    REQUIRE(out.shape() == Shape{1, 5, 5});
    double sum_sq = 0.0;
    for (double w : kernel.values()) sum_sq += w * w;
    CHECK(out.at(0, 2, 2) == sum_sq);
    for (std::size_t y = 0; y < 5; ++y)
        for (std::size_t x = 0; x < 5; ++x)
            if (y != 2 || x != 2) CHECK(out.at(0, y, x) < sum_sq);
}

TEST_CASE("conv2d_forward zero kernel gives zero output") {
    const Tensor in = random_tensor({2, 6, 6}, 1);
    const Tensor out = conv2d_forward(in, Tensor({3, 2, 3, 3}));
    for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("conv2d_forward matches the six-loop oracle") {
    for (std::uint64_t seed = 0; seed < 16; ++seed) {
        const Tensor in = random_tensor({3, 9, 9}, 100 + seed);
        const Tensor w = random_tensor({2, 3, 3, 3}, 200 + seed);
        CHECK(max_abs_diff(conv2d_forward(in, w), naive_conv2d(in, w)) < 1e-12);
    }
    // Wider shapes exercise the full 8x16 kernel blocks as well as the tails.
    const Tensor in = random_tensor({4, 23, 21}, 7);
    const Tensor w = random_tensor({11, 4, 5, 5}, 8);
    CHECK(max_abs_diff(conv2d_forward(in, w), naive_conv2d(in, w)) < 1e-12);
}

TEST_CASE("conv2d_forward rejects bad shapes") {
    CHECK_THROWS_AS(conv2d_forward(Tensor({2, 5, 5}), Tensor({1, 3, 3, 3})), ShapeError);
    CHECK_THROWS_AS(conv2d_forward(Tensor({1, 2, 5}), Tensor({1, 1, 3, 3})), ShapeError);
    CHECK_THROWS_AS(conv2d_forward(Tensor({1, 5, 5}), Tensor({1, 1, 3, 2})), ShapeError);
}

TEST_CASE("conv2d is translation equivariant bit for bit") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        SplitMix64 rng(seed);
        const Tensor f = random_tensor({2, 16, 16}, 300 + seed);
        const Tensor w = random_tensor({3, 2, 5, 5}, 400 + seed);
        const long ty = long(rng.below(5)) - 2, tx = long(rng.below(5)) - 2;
        const Tensor a = conv2d_forward(shift(f, ty, tx), w);
        const Tensor b = conv2d_forward(f, w);
        const long n = long(a.dim(1));
        for (std::size_t o = 0; o < 3; ++o)
            for (long y = 0; y < n; ++y)
                for (long x = 0; x < n; ++x) {
                    // Windows whose source lies inside the original frame saw no fill.
                    const long sy = y - ty, sx = x - tx;
                    if (sy < 0 || sx < 0 || sy >= n || sx >= n) continue;
                    CHECK(a.at(o, y, x) == b.at(o, sy, sx));
                }
    }
}

TEST_CASE("conv2d_backward") {
    SUBCASE("zero upstream gradient") {
        const Tensor in = random_tensor({2, 6, 6}, 1), w = random_tensor({3, 2, 3, 3}, 2);
        const auto g = conv2d_backward(Tensor({3, 4, 4}), in, w);
        for (double v : g.input.values()) CHECK(v == 0.0);
        for (double v : g.kernels.values()) CHECK(v == 0.0);
    }
    SUBCASE("finite differences, single channel") {
        const Tensor in = random_tensor({1, 5, 5}, 3), w = random_tensor({1, 1, 3, 3}, 4);
        const Projection proj = random_projection({1, 3, 3}, 5);
        const auto g = conv2d_backward(proj.weights, in, w);
        auto wrt_w = [&](const Tensor& p) { return proj(conv2d_forward(in, p)); };
        auto wrt_in = [&](const Tensor& p) { return proj(conv2d_forward(p, w)); };
        CHECK(finite_difference_check(wrt_w, w, g.kernels).max_rel_error < 1e-5);
        CHECK(finite_difference_check(wrt_in, in, g.input).max_rel_error < 1e-5);
    }
    SUBCASE("sparse upstream gradient path") {
        const Tensor in = random_tensor({3, 9, 9}, 6), w = random_tensor({4, 3, 3, 3}, 7);
        Tensor go({4, 7, 7});
        go.at(1, 2, 3) = 0.7;
        go.at(3, 6, 0) = -1.3;
        const auto g = conv2d_backward(go, in, w);
        auto wrt_w = [&](const Tensor& p) { return dot(go, conv2d_forward(in, p)); };
        auto wrt_in = [&](const Tensor& p) { return dot(go, conv2d_forward(p, w)); };
        CHECK(finite_difference_check(wrt_w, w, g.kernels).max_rel_error < 1e-5);
        CHECK(finite_difference_check(wrt_in, in, g.input).max_rel_error < 1e-5);
    }
    SUBCASE("linearity in the upstream gradient") {
        const Tensor in = random_tensor({2, 7, 7}, 8), w = random_tensor({3, 2, 3, 3}, 9);
        const Tensor go = random_tensor({3, 5, 5}, 10);
        const auto g1 = conv2d_backward(go, in, w);
        for (double alpha : {2.0, 0.5, -4.0}) {
            const auto g2 = conv2d_backward(go * alpha, in, w);
            CHECK(g2.input == g1.input * alpha);
            CHECK(g2.kernels == g1.kernels * alpha);
        }
        const auto g3 = conv2d_backward(go * 3.0, in, w);
        CHECK(max_abs_diff(g3.kernels, g1.kernels * 3.0) < 1e-12);
    }
    SUBCASE("adjoint identity") {
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
            const Tensor u = random_tensor({3, 10, 10}, 20 + seed), w = random_tensor({2, 3, 5, 5}, 30 + seed);
            const Tensor v = random_tensor({2, 6, 6}, 40 + seed);
            const double lhs = dot(conv2d_forward(u, w), v);
            const double rhs = dot(u, conv2d_backward(v, u, w).input);
            CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
        }
    }
    CHECK_THROWS_AS(conv2d_backward(Tensor({1, 4, 4}), Tensor({1, 5, 5}), Tensor({1, 1, 3, 3})), ShapeError);
}

TEST_CASE("relu") {
    const Tensor out = relu(Tensor::from({-1.0, 0.0, 2.0}));
    CHECK(out == Tensor::from({0.0, 0.0, 2.0}));
    const Tensor neg = Tensor::from({-3.0, -0.5, -1e-9});
    CHECK(relu(neg) == Tensor({3}));
    CHECK(relu_backward(Tensor::from({1.0, 1.0, 1.0}), neg) == Tensor({3}));
    CHECK(relu_backward(Tensor::from({5.0, 5.0, 5.0}), Tensor::from({-1.0, 0.0, 1.0})) ==
          Tensor::from({0.0, 0.0, 5.0}));

    const Tensor x = random_tensor({4, 5, 5}, 11);
    const Projection proj = random_projection(x.shape(), 12);
    GradCheckOptions opts;
    opts.skip = [&](std::size_t i) { return std::abs(x[i]) < 1e-4; };
    const auto res = finite_difference_check([&](const Tensor& p) { return proj(relu(p)); }, x,
                                             relu_backward(proj.weights, x), opts);
    CHECK(res.max_rel_error < 1e-6);
}

TEST_CASE("global_max_pool") {
    const auto single = global_max_pool(Tensor({2, 1, 1}, 3.5));
    CHECK(single.output == Tensor::from({3.5, 3.5}));

    const Tensor constant({1, 3, 4}, 2.0);
    const auto pooled = global_max_pool(constant);
    CHECK(pooled.output[0] == 2.0);
    const Tensor g = global_pool_backward(Tensor::from({1.0}), pooled, constant.shape());
    CHECK(g[0] == 1.0);
    double total = 0.0;
    for (double v : g.values()) total += v;
    CHECK(total == 1.0);

    const Tensor x = random_tensor({4, 6, 6}, 13);
    const auto r = global_max_pool(x);
    for (std::size_t c = 0; c < 4; ++c) {
        double best = -1e300;
        for (std::size_t y = 0; y < 6; ++y)
            for (std::size_t xx = 0; xx < 6; ++xx) best = std::max(best, x.at(c, y, xx));
        CHECK(r.output[c] == best);
    }
    const Projection proj = random_projection({4}, 14);
    CHECK(finite_difference_check([&](const Tensor& p) { return proj(global_max_pool(p).output); }, x,
                                  global_pool_backward(proj.weights, r, x.shape()))
              .max_rel_error < 1e-6);

    const auto mean = global_pool(x, GlobalPoolMode::Mean);
    CHECK(finite_difference_check([&](const Tensor& p) { return proj(global_pool(p, GlobalPoolMode::Mean).output); },
                                  x, global_pool_backward(proj.weights, mean, x.shape(), GlobalPoolMode::Mean))
              .max_rel_error < 1e-6);
}

TEST_CASE("linear") {
    Tensor eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    const Tensor x = Tensor::from({1.0, -2.0, 3.0});
    CHECK(linear(x, eye, Tensor({3})) == x);
    CHECK(linear(x, Tensor({2, 3}), Tensor::from({0.5, -1.0})) == Tensor::from({0.5, -1.0}));
    CHECK_THROWS_AS(linear(x, Tensor({2, 4}), Tensor({2})), ShapeError);

    const Tensor in = random_tensor({6}, 15), w = random_tensor({4, 6}, 16), b = random_tensor({4}, 17);
    const Projection proj = random_projection({4}, 18);
    const auto g = linear_backward(proj.weights, in, w);
    CHECK(finite_difference_check([&](const Tensor& p) { return proj(linear(in, p, b)); }, w, g.weights)
              .max_rel_error < 1e-6);
    CHECK(finite_difference_check([&](const Tensor& p) { return proj(linear(p, w, b)); }, in, g.input)
              .max_rel_error < 1e-6);
    CHECK(finite_difference_check([&](const Tensor& p) { return proj(linear(in, w, p)); }, b, g.bias)
              .max_rel_error < 1e-6);
}

TEST_CASE("softmax_cross_entropy") {
    CHECK(softmax_cross_entropy(Tensor({10}, 0.3), 4).loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    const auto stable = softmax_cross_entropy(Tensor::from({1000.0, 0.0}), 0);
    CHECK(std::isfinite(stable.loss));
    CHECK(stable.loss == doctest::Approx(0.0));
    CHECK(stable.grad_logits.all_finite());
    CHECK_THROWS_AS(softmax_cross_entropy(Tensor({3}), 3), std::out_of_range);

    const Tensor logits = random_tensor({7}, 19, -3.0, 3.0);
    const auto res = softmax_cross_entropy(logits, 2);
    CHECK(finite_difference_check([&](const Tensor& p) { return softmax_cross_entropy(p, 2).loss; }, logits,
                                  res.grad_logits)
              .max_rel_error < 1e-6);
}

TEST_CASE("adam_step") {
    const AdamConfig cfg;
    SUBCASE("zero gradient at t = 1") {
        Tensor p = Tensor::from({0.25, -1.0});
        AdamState st(p.shape());
        adam_step(p, Tensor({2}), st, cfg);
        CHECK(p == Tensor::from({0.25, -1.0}));
        CHECK(st.step == 1);
    }
    SUBCASE("constant gradient approaches lr * sign(g)") {
        Tensor p({2});
        AdamState st(p.shape());
        double prev0 = 0.0, prev1 = 0.0;
        for (int i = 0; i < 500; ++i) {
            prev0 = p[0];
            prev1 = p[1];
            adam_step(p, Tensor::from({0.3, -7.0}), st, cfg);
        }
        CHECK(prev0 - p[0] == doctest::Approx(cfg.lr).epsilon(1e-6));
        CHECK(p[1] - prev1 == doctest::Approx(cfg.lr).epsilon(1e-6));
    }
    SUBCASE("three-step trace, g = 1") {
        // Reference values from an independent scripted Adam loop.
        const double expected[] = {-0.0009999999900000003, -0.001999999979999993, -0.0029999999699999932};
        Tensor p({1});
        AdamState st(p.shape());
        for (double e : expected) {
            adam_step(p, Tensor::from({1.0}), st, cfg);
            CHECK(p[0] == doctest::Approx(e).epsilon(1e-14));
        }
    }
    SUBCASE("three-step trace with varying gradients") {
        const double expected[] = {0.4900000001, 0.4936610353472075, 0.4950279419673822};
        const double grads[] = {1.0, -2.0, 0.5};
        AdamConfig c2;
        c2.lr = 1e-2;
        Tensor p = Tensor::from({0.5});
        AdamState st(p.shape());
        for (int i = 0; i < 3; ++i) {
            adam_step(p, Tensor::from({grads[i]}), st, c2);
            CHECK(p[0] == doctest::Approx(expected[i]).epsilon(1e-14));
        }
    }
    SUBCASE("non-finite gradient fails fast") {
        Tensor p({1});
        AdamState st(p.shape());
        CHECK_THROWS_AS(adam_step(p, Tensor::from({std::numeric_limits<double>::infinity()}), st, cfg), NumericError);
        CHECK(st.step == 0);
    }
}

TEST_CASE("finite_difference_check") {
    const Tensor c = random_tensor({5}, 21);
    const Tensor x = random_tensor({5}, 22);
    // Central differences are exact for linear maps; a wider step keeps roundoff below 1e-10.
    GradCheckOptions wide;
    wide.h = 1e-3;
    CHECK(finite_difference_check([&](const Tensor& p) { return dot(c, p); }, x, c, wide).max_rel_error < 1e-10);

    // f(x) = x^T A x with A symmetric; gradient 2 A x.
    const Tensor a0 = random_tensor({5, 5}, 23);
    Tensor a({5, 5});
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) a.at(i, j) = a0.at(i, j) + a0.at(j, i);
    auto quad = [&](const Tensor& p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j) acc += p[i] * a.at(i, j) * p[j];
        return acc;
    };
    Tensor grad({5});
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) grad[i] += 2.0 * a.at(i, j) * x[j];
    CHECK(finite_difference_check(quad, x, grad).max_rel_error < 1e-6);

    // relu away from the kink: every |x_i| exceeds h by a wide margin.
    const Tensor r = Tensor::from({0.5, -0.25, 1.5, -2.0});
    const auto res = finite_difference_check([](const Tensor& p) { return dot(relu(p), relu(p)); }, r,
                                             Tensor::from({1.0, 0.0, 3.0, 0.0}));
    CHECK(res.max_rel_error < 1e-6);
    CHECK(res.checked == 4);

    // A wrong gradient is reported at the right index.
    const auto bad = finite_difference_check([&](const Tensor& p) { return dot(c, p); }, x,
                                             Tensor::from({c[0], c[1], c[2] + 1.0, c[3], c[4]}));
    CHECK(bad.worst_index == 2);
    CHECK(bad.max_rel_error > 0.1);
}
