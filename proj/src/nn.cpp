#include "dmrn/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace dmrn::nn {

Parameter& ParamStore::emplace(const std::string& name, Tensor t) {
    if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter: " + name);
    params_.emplace_back(name, std::move(t));
    order_.push_back(&params_.back());
    return params_.back();
}

Parameter& ParamStore::normal(const std::string& name, std::vector<std::size_t> shape,
                              std::mt19937_64& rng, double stddev) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.data) v = dist(rng);
    return emplace(name, std::move(t));
}

Parameter& ParamStore::zeros(const std::string& name, std::vector<std::size_t> shape) {
    return emplace(name, Tensor(std::move(shape)));
}

Parameter& ParamStore::full(const std::string& name, std::vector<std::size_t> shape, double v) {
    return emplace(name, Tensor(std::move(shape), v));
}

Parameter* ParamStore::find(const std::string& name) {
    for (Parameter* p : order_) {
        if (p->name == name) return p;
    }
    return nullptr;
}

void ParamStore::zero_grads() {
    for (Parameter* p : order_) p->zero_grad();
}

double ParamStore::grad_norm() const {
    double s = 0.0;
    for (const Parameter* p : order_) {
        for (double g : p->grad.data) s += g * g;
    }
    return std::sqrt(s);
}

void ParamStore::clip_grads(double max_norm) {
    const double norm = grad_norm();
    if (norm <= max_norm || norm == 0.0) return;
    const double f = max_norm / norm;
    for (Parameter* p : order_) {
        for (double& g : p->grad.data) g *= f;
    }
}

Linear::Linear(ParamStore& ps, const std::string& prefix, std::size_t in, std::size_t out,
               std::mt19937_64& rng, bool zero_init) {
    if (zero_init) {
        weight = &ps.zeros(prefix + ".weight", {out, in});
    } else {
        weight = &ps.normal(prefix + ".weight", {out, in}, rng,
                            1.0 / std::sqrt(static_cast<double>(in)));
    }
    bias = &ps.zeros(prefix + ".bias", {out});
}

Var Linear::forward(Tape& t, Var x) const {
    return t.add_rowwise(t.matmul_nt(x, t.leaf(*weight)), t.leaf(*bias));
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& prefix, std::size_t dim) {
    gain = &ps.full(prefix + ".gain", {dim}, 1.0);
    bias = &ps.zeros(prefix + ".bias", {dim});
}

Var LayerNorm::forward(Tape& t, Var x) const {
    if (!enabled) return x;
    return t.layernorm_rows(x, t.leaf(*gain), t.leaf(*bias));
}

MultiHeadSelfAttention::MultiHeadSelfAttention(ParamStore& ps, const std::string& prefix,
                                               std::size_t dim_, std::size_t heads_,
                                               std::mt19937_64& rng)
    : q(ps, prefix + ".q", dim_, dim_, rng),
      k(ps, prefix + ".k", dim_, dim_, rng),
      v(ps, prefix + ".v", dim_, dim_, rng),
      o(ps, prefix + ".o", dim_, dim_, rng),
      heads(heads_),
      dim(dim_) {
    if (dim_ % heads_ != 0) throw std::invalid_argument("attention dim not divisible by heads");
}

Var MultiHeadSelfAttention::forward(Tape& t, Var x,
                                    const std::vector<std::uint8_t>& key_valid) const {
    const std::size_t hd = dim / heads;
    Var qv = q.forward(t, x);
    Var kv = k.forward(t, x);
    Var vv = v.forward(t, x);
    Var merged;
    for (std::size_t h = 0; h < heads; ++h) {
        Var qh = t.slice_cols(qv, h * hd, hd);
        Var kh = t.slice_cols(kv, h * hd, hd);
        Var vh = t.slice_cols(vv, h * hd, hd);
        Var scores = t.scale(t.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(hd)));
        Var attn = t.softmax_rows(scores, key_valid);
        Var oh = t.matmul(attn, vh);
        merged = (h == 0) ? oh : t.concat_cols(merged, oh);
    }
    return o.forward(t, merged);
}

TransformerLayer::TransformerLayer(ParamStore& ps, const std::string& prefix, std::size_t dim,
                                   std::size_t heads, std::size_t ff_dim, std::mt19937_64& rng)
    : attn(ps, prefix + ".attn", dim, heads, rng),
      ff1(ps, prefix + ".ff1", dim, ff_dim, rng),
      ff2(ps, prefix + ".ff2", ff_dim, dim, rng),
      ln1(ps, prefix + ".ln1", dim),
      ln2(ps, prefix + ".ln2", dim) {}

Var TransformerLayer::forward(Tape& t, Var x,
                              const std::vector<std::uint8_t>& key_valid) const {
    Var a = attn.forward(t, x, key_valid);
    Var x1 = ln1.forward(t, t.add(x, a));
    Var f = ff2.forward(t, t.relu(ff1.forward(t, x1)));
    return ln2.forward(t, t.add(x1, f));
}

TransformerEncoder::TransformerEncoder(ParamStore& ps, const std::string& prefix,
                                       std::size_t n_layers, std::size_t dim, std::size_t heads,
                                       std::size_t ff_dim, std::mt19937_64& rng) {
    layers.reserve(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) {
        layers.emplace_back(ps, prefix + ".layer" + std::to_string(i), dim, heads, ff_dim, rng);
    }
}

Var TransformerEncoder::forward(Tape& t, Var x,
                                const std::vector<std::uint8_t>& key_valid) const {
    for (const TransformerLayer& layer : layers) x = layer.forward(t, x, key_valid);
    return x;
}

Conv2d::Conv2d(ParamStore& ps, const std::string& prefix, std::size_t in_ch_, std::size_t out_ch_,
               std::size_t kernel_, std::size_t stride_, std::size_t pad_, std::mt19937_64& rng)
    : in_ch(in_ch_), out_ch(out_ch_), kernel(kernel_), stride(stride_), pad(pad_) {
    const std::size_t fan_in = kernel_ * kernel_ * in_ch_;
    weight = &ps.normal(prefix + ".weight", {out_ch_, fan_in}, rng,
                        1.0 / std::sqrt(static_cast<double>(fan_in)));
    bias = &ps.zeros(prefix + ".bias", {out_ch_});
}

Var Conv2d::forward(Tape& t, Var x, std::size_t h, std::size_t w) const {
    Var cols = t.im2col(x, h, w, kernel, stride, pad);
    return t.add_rowwise(t.matmul_nt(cols, t.leaf(*weight)), t.leaf(*bias));
}

}  // namespace dmrn::nn
