#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "dmrn/autograd.hpp"

namespace dmrn::nn {

using ag::Parameter;
using ag::Tape;
using ag::Var;

// Owns every learnable tensor of a model. Creation order is fixed by the
// model constructor, which makes initialization and checkpoint layout
// deterministic.
class ParamStore {
  public:
    Parameter& normal(const std::string& name, std::vector<std::size_t> shape,
                      std::mt19937_64& rng, double stddev);
    Parameter& zeros(const std::string& name, std::vector<std::size_t> shape);
    Parameter& full(const std::string& name, std::vector<std::size_t> shape, double v);

    std::vector<Parameter*>& all() { return order_; }
    const std::vector<Parameter*>& all() const { return order_; }
    Parameter* find(const std::string& name);
    void zero_grads();
    double grad_norm() const;
    void clip_grads(double max_norm);
    std::size_t count() const { return order_.size(); }

  private:
    Parameter& emplace(const std::string& name, Tensor t);
    std::deque<Parameter> params_;
    std::vector<Parameter*> order_;
};

struct Linear {
    Parameter* weight = nullptr;  // [out, in]
    Parameter* bias = nullptr;    // [out]

    Linear() = default;
    Linear(ParamStore& ps, const std::string& prefix, std::size_t in, std::size_t out,
           std::mt19937_64& rng, bool zero_init = false);
    Var forward(Tape& t, Var x) const;  // x [r, in] -> [r, out]
};

struct LayerNorm {
    Parameter* gain = nullptr;
    Parameter* bias = nullptr;
    bool enabled = true;

    LayerNorm() = default;
    LayerNorm(ParamStore& ps, const std::string& prefix, std::size_t dim);
    Var forward(Tape& t, Var x) const;
};

struct MultiHeadSelfAttention {
    Linear q, k, v, o;
    std::size_t heads = 1;
    std::size_t dim = 0;

    MultiHeadSelfAttention() = default;
    MultiHeadSelfAttention(ParamStore& ps, const std::string& prefix, std::size_t dim,
                           std::size_t heads, std::mt19937_64& rng);
    // key_valid masks key positions (empty = all valid).
    Var forward(Tape& t, Var x, const std::vector<std::uint8_t>& key_valid) const;
};

struct TransformerLayer {
    MultiHeadSelfAttention attn;
    Linear ff1, ff2;
    LayerNorm ln1, ln2;

    TransformerLayer() = default;
    TransformerLayer(ParamStore& ps, const std::string& prefix, std::size_t dim,
                     std::size_t heads, std::size_t ff_dim, std::mt19937_64& rng);
    Var forward(Tape& t, Var x, const std::vector<std::uint8_t>& key_valid) const;
};

struct TransformerEncoder {
    std::vector<TransformerLayer> layers;

    TransformerEncoder() = default;
    TransformerEncoder(ParamStore& ps, const std::string& prefix, std::size_t n_layers,
                       std::size_t dim, std::size_t heads, std::size_t ff_dim,
                       std::mt19937_64& rng);
    Var forward(Tape& t, Var x, const std::vector<std::uint8_t>& key_valid) const;
};

struct Conv2d {
    Parameter* weight = nullptr;  // [out_ch, k*k*in_ch]
    Parameter* bias = nullptr;    // [out_ch]
    std::size_t in_ch = 0, out_ch = 0, kernel = 3, stride = 1, pad = 1;

    Conv2d() = default;
    Conv2d(ParamStore& ps, const std::string& prefix, std::size_t in_ch, std::size_t out_ch,
           std::size_t kernel, std::size_t stride, std::size_t pad, std::mt19937_64& rng);
    // x is [h*w, in_ch]; returns [oh*ow, out_ch].
    Var forward(Tape& t, Var x, std::size_t h, std::size_t w) const;
    std::size_t out_side(std::size_t side) const { return (side + 2 * pad - kernel) / stride + 1; }
};

}  // namespace dmrn::nn
