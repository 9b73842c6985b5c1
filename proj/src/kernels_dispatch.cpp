#include "dmrn/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace dmrn::kernels {

bool avx2_available() {
#if defined(DMRN_BUILD_AVX2)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Backend& active() {
    static const Backend* backend = [] {
        const char* forced = std::getenv("DMRN_KERNELS");
        if (forced != nullptr && std::strcmp(forced, "scalar") == 0) {
            return &scalar_backend();
        }
#if defined(DMRN_BUILD_AVX2)
        if (avx2_available()) return &avx2_backend();
#endif
        return &scalar_backend();
    }();
    return *backend;
}

}  // namespace dmrn::kernels
