#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace dmrn {

// Dense row-major double tensor. Rank 1 and 2 cover almost everything in
// this codebase; images and feature maps are kept as (rows x channels)
// matrices with the spatial layout tracked by the caller.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0);

    static Tensor vector(std::size_t n, double fill = 0.0);
    static Tensor matrix(std::size_t r, std::size_t c, double fill = 0.0);
    static Tensor scalar(double v);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.at(1); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
    double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    void fill(double v);
    bool all_finite() const;
};

}  // namespace dmrn
