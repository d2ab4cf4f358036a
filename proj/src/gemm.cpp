#include "gemm.hpp"

#include <cstring>

namespace sconv::detail {
namespace {

// GCC/Clang vector extension; lowered to whatever SIMD width the target offers.
typedef double vec8 __attribute__((vector_size(64)));

constexpr std::size_t kLanes = 8;
constexpr std::size_t kVecs = 2;
constexpr std::size_t kCols = kLanes * kVecs;

inline vec8 load(const double* p) {
    vec8 v;
    std::memcpy(&v, p, sizeof(v));
    return v;
}

inline vec8 splat(double x) {
    return vec8{x, x, x, x, x, x, x, x};
}

template <std::size_t R>
void block_full(std::size_t l, MatView a, std::size_t row0, const double* b, std::size_t ldb, double* c,
                std::size_t ldc, bool accumulate) {
    vec8 acc[R][kVecs];
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t v = 0; v < kVecs; ++v) acc[r][v] = splat(0.0);
    for (std::size_t k = 0; k < l; ++k) {
        const double* brow = b + k * ldb;
        vec8 bv[kVecs];
        for (std::size_t v = 0; v < kVecs; ++v) bv[v] = load(brow + v * kLanes);
        for (std::size_t r = 0; r < R; ++r) {
            const vec8 w = splat(a(row0 + r, k));
            for (std::size_t v = 0; v < kVecs; ++v) acc[r][v] += w * bv[v];
        }
    }
    for (std::size_t r = 0; r < R; ++r) {
        double* crow = c + r * ldc;
        for (std::size_t v = 0; v < kVecs; ++v) {
            vec8 out = acc[r][v];
            if (accumulate) out = load(crow + v * kLanes) + out;
            std::memcpy(crow + v * kLanes, &out, sizeof(out));
        }
    }
}

template <std::size_t R>
void block_tail(std::size_t l, std::size_t width, MatView a, std::size_t row0, const double* b, std::size_t ldb,
                double* c, std::size_t ldc, bool accumulate) {
    double acc[R][kCols] = {};
    for (std::size_t k = 0; k < l; ++k) {
        const double* brow = b + k * ldb;
        for (std::size_t r = 0; r < R; ++r) {
            const double w = a(row0 + r, k);
            for (std::size_t j = 0; j < width; ++j) acc[r][j] += w * brow[j];
        }
    }
    for (std::size_t r = 0; r < R; ++r) {
        double* crow = c + r * ldc;
        if (accumulate)
            for (std::size_t j = 0; j < width; ++j) crow[j] += acc[r][j];
        else
            for (std::size_t j = 0; j < width; ++j) crow[j] = acc[r][j];
    }
}

template <std::size_t R>
void row_panel(std::size_t n, std::size_t l, MatView a, std::size_t row0, const double* b, std::size_t ldb, double* c,
               std::size_t ldc, bool accumulate) {
    std::size_t j0 = 0;
    for (; j0 + kCols <= n; j0 += kCols) block_full<R>(l, a, row0, b + j0, ldb, c + j0, ldc, accumulate);
    if (j0 < n) block_tail<R>(l, n - j0, a, row0, b + j0, ldb, c + j0, ldc, accumulate);
}

constexpr std::size_t kRows = 8;

}  // namespace

void gemm_ordered(std::size_t m, std::size_t n, std::size_t l, MatView a, const double* b, std::size_t ldb,
                  double* c, std::size_t ldc, bool accumulate) {
    std::size_t r0 = 0;
    for (; r0 + kRows <= m; r0 += kRows) row_panel<kRows>(n, l, a, r0, b, ldb, c + r0 * ldc, ldc, accumulate);
    for (; r0 + 4 <= m; r0 += 4) row_panel<4>(n, l, a, r0, b, ldb, c + r0 * ldc, ldc, accumulate);
    for (; r0 < m; ++r0) row_panel<1>(n, l, a, r0, b, ldb, c + r0 * ldc, ldc, accumulate);
}

}  // namespace sconv::detail
