#include "dmrn/tensor.hpp"

#include <cmath>
#include <numeric>

namespace dmrn {

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)) {
    std::size_t total = 1;
    for (std::size_t d : shape) total *= d;
    data.assign(total, fill);
}

Tensor Tensor::vector(std::size_t n, double fill) { return Tensor({n}, fill); }
Tensor Tensor::matrix(std::size_t r, std::size_t c, double fill) { return Tensor({r, c}, fill); }
Tensor Tensor::scalar(double v) { return Tensor({1}, v); }

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace dmrn
