#include "dmrn/kernels.hpp"

#if defined(DMRN_BUILD_AVX2)

#include <immintrin.h>

namespace dmrn::kernels {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void vadd_avx2(const double* x, const double* y, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

void vmul_avx2(const double* x, const double* y, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

void vscale_avx2(double a, const double* x, double* out, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) out[i] = a * x[i];
}

// Shared microkernel for C += A(') * B with A addressed through strides:
// element A(i, p) = a[i * row_stride + p * col_stride]. Covers both the NN
// case (row_stride = k, col_stride = 1) and the TN case (row_stride = 1,
// col_stride = m). Blocks 4 rows of C by 8 columns, accumulators in registers.
void gemm_bcast(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n,
                std::size_t row_stride, std::size_t col_stride) {
    const std::size_t m4 = m - m % 4;
    const std::size_t n8 = n - n % 8;
    for (std::size_t i0 = 0; i0 < m4; i0 += 4) {
        for (std::size_t j0 = 0; j0 < n8; j0 += 8) {
            __m256d c00 = _mm256_loadu_pd(c + (i0 + 0) * n + j0);
            __m256d c01 = _mm256_loadu_pd(c + (i0 + 0) * n + j0 + 4);
            __m256d c10 = _mm256_loadu_pd(c + (i0 + 1) * n + j0);
            __m256d c11 = _mm256_loadu_pd(c + (i0 + 1) * n + j0 + 4);
            __m256d c20 = _mm256_loadu_pd(c + (i0 + 2) * n + j0);
            __m256d c21 = _mm256_loadu_pd(c + (i0 + 2) * n + j0 + 4);
            __m256d c30 = _mm256_loadu_pd(c + (i0 + 3) * n + j0);
            __m256d c31 = _mm256_loadu_pd(c + (i0 + 3) * n + j0 + 4);
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d b0 = _mm256_loadu_pd(b + p * n + j0);
                const __m256d b1 = _mm256_loadu_pd(b + p * n + j0 + 4);
                const double* acol = a + p * col_stride;
                const __m256d a0 = _mm256_set1_pd(acol[(i0 + 0) * row_stride]);
                const __m256d a1 = _mm256_set1_pd(acol[(i0 + 1) * row_stride]);
                const __m256d a2 = _mm256_set1_pd(acol[(i0 + 2) * row_stride]);
                const __m256d a3 = _mm256_set1_pd(acol[(i0 + 3) * row_stride]);
                c00 = _mm256_fmadd_pd(a0, b0, c00);
                c01 = _mm256_fmadd_pd(a0, b1, c01);
                c10 = _mm256_fmadd_pd(a1, b0, c10);
                c11 = _mm256_fmadd_pd(a1, b1, c11);
                c20 = _mm256_fmadd_pd(a2, b0, c20);
                c21 = _mm256_fmadd_pd(a2, b1, c21);
                c30 = _mm256_fmadd_pd(a3, b0, c30);
                c31 = _mm256_fmadd_pd(a3, b1, c31);
            }
            _mm256_storeu_pd(c + (i0 + 0) * n + j0, c00);
            _mm256_storeu_pd(c + (i0 + 0) * n + j0 + 4, c01);
            _mm256_storeu_pd(c + (i0 + 1) * n + j0, c10);
            _mm256_storeu_pd(c + (i0 + 1) * n + j0 + 4, c11);
            _mm256_storeu_pd(c + (i0 + 2) * n + j0, c20);
            _mm256_storeu_pd(c + (i0 + 2) * n + j0 + 4, c21);
            _mm256_storeu_pd(c + (i0 + 3) * n + j0, c30);
            _mm256_storeu_pd(c + (i0 + 3) * n + j0 + 4, c31);
        }
        // column remainder
        for (std::size_t j = n8; j < n; ++j) {
            for (std::size_t r = 0; r < 4; ++r) {
                const std::size_t i = i0 + r;
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) {
                    acc += a[i * row_stride + p * col_stride] * b[p * n + j];
                }
                c[i * n + j] += acc;
            }
        }
    }
    // row remainder
    for (std::size_t i = m4; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * row_stride + p * col_stride];
            axpy_avx2(aip, b + p * n, c + i * n, n);
        }
    }
}

void gemm_nn_avx2(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n) {
    gemm_bcast(a, b, c, m, k, n, k, 1);
}

void gemm_tn_avx2(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n) {
    gemm_bcast(a, b, c, m, k, n, 1, m);
}

void gemm_nt_avx2(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n) {
    const std::size_t k4 = k - k % 4;
    const std::size_t n4 = n - n % 4;
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j0 = 0; j0 < n4; j0 += 4) {
            __m256d acc0 = _mm256_setzero_pd();
            __m256d acc1 = _mm256_setzero_pd();
            __m256d acc2 = _mm256_setzero_pd();
            __m256d acc3 = _mm256_setzero_pd();
            const double* b0 = b + (j0 + 0) * k;
            const double* b1 = b + (j0 + 1) * k;
            const double* b2 = b + (j0 + 2) * k;
            const double* b3 = b + (j0 + 3) * k;
            for (std::size_t p = 0; p < k4; p += 4) {
                const __m256d va = _mm256_loadu_pd(arow + p);
                acc0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b0 + p), acc0);
                acc1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b1 + p), acc1);
                acc2 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b2 + p), acc2);
                acc3 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b3 + p), acc3);
            }
            double s0 = hsum(acc0), s1 = hsum(acc1), s2 = hsum(acc2), s3 = hsum(acc3);
            for (std::size_t p = k4; p < k; ++p) {
                s0 += arow[p] * b0[p];
                s1 += arow[p] * b1[p];
                s2 += arow[p] * b2[p];
                s3 += arow[p] * b3[p];
            }
            c[i * n + j0 + 0] += s0;
            c[i * n + j0 + 1] += s1;
            c[i * n + j0 + 2] += s2;
            c[i * n + j0 + 3] += s3;
        }
        for (std::size_t j = n4; j < n; ++j) {
            c[i * n + j] += dot_avx2(arow, b + j * k, k);
        }
    }
}

}  // namespace

const Backend& avx2_backend() {
    static const Backend backend{
        "avx2",      dot_avx2,     axpy_avx2,    vadd_avx2,
        vmul_avx2,   vscale_avx2,  gemm_nn_avx2, gemm_nt_avx2,
        gemm_tn_avx2,
    };
    return backend;
}

}  // namespace dmrn::kernels

#endif  // DMRN_BUILD_AVX2
