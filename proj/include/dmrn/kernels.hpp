#pragma once

// Dense double-precision kernels behind the tensor ops. Every kernel has a
// scalar reference implementation; on x86-64 an AVX2/FMA variant is selected
// at runtime. Set DMRN_KERNELS=scalar in the environment to force the
// reference path.

#include <cstddef>

namespace dmrn::kernels {

// GEMM conventions, all row-major, all accumulating into C (m x n):
//   gemm_nn: C += A * B      A is m x k, B is k x n
//   gemm_nt: C += A * B^T    A is m x k, B is n x k
//   gemm_tn: C += A^T * B    A is k x m, B is k x n
struct Backend {
    const char* name;
    double (*dot)(const double* x, const double* y, std::size_t n);
    // y += a * x
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    void (*vadd)(const double* x, const double* y, double* out, std::size_t n);
    void (*vmul)(const double* x, const double* y, double* out, std::size_t n);
    // out = a * x
    void (*vscale)(double a, const double* x, double* out, std::size_t n);
    void (*gemm_nn)(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n);
    void (*gemm_nt)(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n);
    void (*gemm_tn)(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t k, std::size_t n);
};

const Backend& scalar_backend();
bool avx2_available();
#if defined(DMRN_BUILD_AVX2)
const Backend& avx2_backend();
#endif

// The backend in use for this process (resolved once).
const Backend& active();

}  // namespace dmrn::kernels
