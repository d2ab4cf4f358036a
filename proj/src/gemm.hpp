#pragma once

#include <cstddef>

namespace sconv::detail {

/// Strided read-only matrix view; element (r, c) lives at ptr[r * row_stride + c * col_stride].
struct MatView {
    const double* ptr;
    std::size_t row_stride;
    std::size_t col_stride;
    double operator()(std::size_t r, std::size_t c) const { return ptr[r * row_stride + c * col_stride]; }
};

/// C[M x N] (+)= A[M x L] * B[L x N] with B and C row-major and contiguous along N.
///
/// Every element of C is accumulated in increasing l order starting from zero, whatever
/// its position in the matrix, so results do not depend on blocking and are reproducible
/// bit for bit. Build with -ffp-contract=off so vector and scalar tails round alike.
void gemm_ordered(std::size_t m, std::size_t n, std::size_t l, MatView a, const double* b, std::size_t ldb,
                  double* c, std::size_t ldc, bool accumulate);

}  // namespace sconv::detail
