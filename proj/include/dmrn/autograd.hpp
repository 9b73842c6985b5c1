#pragma once

// Eager reverse-mode autodiff over Tensor. A Tape owns the graph for one
// forward pass; ops compute values immediately and record a backward
// closure. Parameters live outside the tape and collect gradients across
// tapes until the optimizer consumes them.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dmrn/tensor.hpp"

namespace dmrn::ag {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor(value.shape);
    }
    void zero_grad() { grad.fill(0.0); }
};

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor v);
    Var leaf(Parameter& p);

    const Tensor& val(Var v) const { return nodes_[v.id].value; }
    Tensor& grad(Var v) { return nodes_[v.id].grad; }
    bool requires_grad(Var v) const { return nodes_[v.id].needs; }
    std::size_t node_count() const { return nodes_.size(); }

    // Seeds d(root)/d(root) = 1 and propagates. root must be a scalar node.
    // Leaf gradients are accumulated into their Parameter::grad.
    void backward(Var root);

    // --- ops ---------------------------------------------------------
    Var matmul(Var a, Var b);                    // [m,k] x [k,n]
    Var matmul_nt(Var a, Var b);                 // [m,k] x [n,k]^T -> [m,n]
    Var add(Var a, Var b);                       // same shape
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);                       // elementwise
    Var scale(Var a, double s);
    Var affine(Var a, double m, double c);       // m*a + c
    Var add_rowwise(Var mat, Var vec);           // [r,c] + [c]
    Var scale_rows(Var mat, Var vec);            // row i scaled by vec[i]
    Var tanh(Var a);
    Var relu(Var a);
    // Rows sum to 1 over valid columns; invalid columns get probability 0.
    // valid may be empty (all columns valid) and applies to every row.
    Var softmax_rows(Var a, std::vector<std::uint8_t> valid = {});
    Var mean_rows(Var mat);                      // [r,c] -> [c]
    Var colsum(Var mat);                         // [r,c] -> [c]
    Var sum(Var a);                              // -> [1]
    Var dot(Var a, Var b);                       // vectors -> [1]
    Var concat_rows(Var a, Var b);
    Var concat_cols(Var a, Var b);
    Var slice_rows(Var mat, std::size_t begin, std::size_t count);
    Var slice_cols(Var mat, std::size_t begin, std::size_t count);
    Var reshape(Var a, std::vector<std::size_t> shape);
    Var rows_gather(Var table, std::vector<std::size_t> idx);
    Var layernorm_rows(Var mat, Var gain, Var bias, double eps = 1e-5);
    Var clamp_max(Var a, double hi);
    // x is [H*W, c_in]; output [oh*ow, k*k*c_in] with zero padding.
    Var im2col(Var x, std::size_t h, std::size_t w, std::size_t k,
               std::size_t stride, std::size_t pad);
    Var cross_entropy_logits(Var logits, std::size_t target);  // -> [1]
    Var mse(Var pred, Tensor target);                          // -> [1]

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void()> back;
        bool needs = false;
        Parameter* param = nullptr;
    };
    std::vector<Node> nodes_;

    Var push(Tensor value, bool needs);
    Node& node(Var v) { return nodes_[v.id]; }
    const Node& node(Var v) const { return nodes_[v.id]; }
};

}  // namespace dmrn::ag
