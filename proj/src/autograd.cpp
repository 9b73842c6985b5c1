#include "dmrn/autograd.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dmrn/kernels.hpp"

namespace dmrn::ag {

namespace {
const kernels::Backend& K() { return kernels::active(); }

void check(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}
}  // namespace

Var Tape::push(Tensor value, bool needs) {
    Node n;
    n.value = std::move(value);
    n.needs = needs;
    if (needs) n.grad = Tensor(n.value.shape);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor v) { return push(std::move(v), false); }

Var Tape::leaf(Parameter& p) {
    Var out = push(p.value, true);
    Parameter* pp = &p;
    node(out).param = pp;
    int id = out.id;
    node(out).back = [this, id, pp] {
        const Tensor& g = nodes_[id].grad;
        K().vadd(pp->grad.data.data(), g.data.data(), pp->grad.data.data(), g.size());
    };
    return out;
}

void Tape::backward(Var root) {
    check(node(root).value.size() == 1, "backward: root must be scalar");
    if (!node(root).needs) return;
    node(root).grad.data[0] = 1.0;
    for (int i = root.id; i >= 0; --i) {
        if (nodes_[i].needs && nodes_[i].back) nodes_[i].back();
    }
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.rows(), "matmul: shape mismatch");
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    Tensor out({m, n});
    K().gemm_nn(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
    Var o = push(std::move(out), requires_grad(a) || requires_grad(b));
    if (node(o).needs) {
        int oid = o.id, aid = a.id, bid = b.id;
        node(o).back = [this, oid, aid, bid, m, k, n] {
            const Tensor& g = nodes_[oid].grad;
            if (nodes_[aid].needs) {
                K().gemm_nt(g.data.data(), nodes_[bid].value.data.data(),
                            nodes_[aid].grad.data.data(), m, n, k);
            }
            if (nodes_[bid].needs) {
                K().gemm_tn(nodes_[aid].value.data.data(), g.data.data(),
                            nodes_[bid].grad.data.data(), k, m, n);
            }
        };
    }
    return o;
}

Var Tape::matmul_nt(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.cols(), "matmul_nt: shape mismatch");
    const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
    Tensor out({m, n});
    K().gemm_nt(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
    Var o = push(std::move(out), requires_grad(a) || requires_grad(b));
    if (node(o).needs) {
        int oid = o.id, aid = a.id, bid = b.id;
        node(o).back = [this, oid, aid, bid, m, k, n] {
            const Tensor& g = nodes_[oid].grad;
            if (nodes_[aid].needs) {
                K().gemm_nn(g.data.data(), nodes_[bid].value.data.data(),
                            nodes_[aid].grad.data.data(), m, n, k);
            }
            if (nodes_[bid].needs) {
                K().gemm_tn(g.data.data(), nodes_[aid].value.data.data(),
                            nodes_[bid].grad.data.data(), n, m, k);
            }
        };
    }
    return o;
}

Var Tape::add(Var a, Var b) {
    check(val(a).same_shape(val(b)), "add: shape mismatch");
    Tensor out(val(a).shape);
    K().vadd(val(a).data.data(), val(b).data.data(), out.data.data(), out.size());
    Var o = push(std::move(out), requires_grad(a) || requires_grad(b));
    if (node(o).needs) {
        int oid = o.id, aid = a.id, bid = b.id;
        node(o).back = [this, oid, aid, bid] {
            const Tensor& g = nodes_[oid].grad;
            if (nodes_[aid].needs) {
                K().vadd(nodes_[aid].grad.data.data(), g.data.data(),
                         nodes_[aid].grad.data.data(), g.size());
            }
            if (nodes_[bid].needs) {
                K().vadd(nodes_[bid].grad.data.data(), g.data.data(),
                         nodes_[bid].grad.data.data(), g.size());
            }
        };
    }
    return o;
}

Var Tape::sub(Var a, Var b) {
    check(val(a).same_shape(val(b)), "sub: shape mismatch");
    Tensor out(val(a).shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = val(a)[i] - val(b)[i];
    Var o = push(std::move(out), requires_grad(a) || requires_grad(b));
    if (node(o).needs) {
        int oid = o.id, aid = a.id, bid = b.id;
        node(o).back = [this, oid, aid, bid] {
            const Tensor& g = nodes_[oid].grad;
            if (nodes_[aid].needs) {
                K().vadd(nodes_[aid].grad.data.data(), g.data.data(),
                         nodes_[aid].grad.data.data(), g.size());
            }
            if (nodes_[bid].needs) {
                K().axpy(-1.0, g.data.data(), nodes_[bid].grad.data.data(), g.size());
            }
        };
    }
    return o;
}

Var Tape::mul(Var a, Var b) {
    check(val(a).same_shape(val(b)), "mul: shape mismatch");
    Tensor out(val(a).shape);
    K().vmul(val(a).data.data(), val(b).data.data(), out.data.data(), out.size());
    Var o = push(std::move(out), requires_grad(a) || requires_grad(b));
    if (node(o).needs) {
        int oid = o.id, aid = a.id, bid = b.id;
        node(o).back = [this, oid, aid, bid] {
            const Tensor& g = nodes_[oid].grad;
            if (nodes_[aid].needs) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    nodes_[aid].grad[i] += g[i] * nodes_[bid].value[i];
                }
            }
            if (nodes_[bid].needs) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    nodes_[bid].grad[i] += g[i] * nodes_[aid].value[i];
                }
            }
        };
    }
    return o;
}

Var Tape::scale(Var a, double s) { return affine(a, s, 0.0); }

Var Tape::affine(Var a, double m, double c) {
    Tensor out(val(a).shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = m * val(a)[i] + c;
    Var o = push(std::move(out), requires_grad(a));
    if (node(o).needs) {
        int oid = o.id, aid = a.id;
        node(o).back = [this, oid, aid, m] {
            K().axpy(m, nodes_[oid].grad.data.data(), nodes_[aid].grad.data.data(),
                     nodes_[oid].grad.size());
        };
    }
    return o;
}

Var Tape::add_rowwise(Var mat, Var vec) {
    const Tensor& mv = val(mat);
    const Tensor& vv = val(vec);
    check(mv.rank() == 2 && vv.size() == mv.cols(), "add_rowwise: shape mismatch");
    const std::size_t r = mv.rows(), c = mv.cols();
    Tensor out({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        K().vadd(mv.data.data() + i * c, vv.data.data(), out.data.data() + i * c, c);
    }
    Var o = push(std::move(out), requires_grad(mat) || requires_grad(vec));
    if (node(o).needs) {
        int oid = o.id, mid = mat.id, vid = vec.id;
        node(o).back = [this, oid, mid, vid, r, c] {
            const Tensor& g = nodes_[oid].grad;
            if (nodes_[mid].needs) {
                K().vadd(nodes_[mid].grad.data.data(), g.data.data(),
                         nodes_[mid].grad.data.data(), g.size());
            }
            if (nodes_[vid].needs) {
                for (std::size_t i = 0; i < r; ++i) {
                    K().vadd(nodes_[vid].grad.data.data(), g.data.data() + i * c,
                             nodes_[vid].grad.data.data(), c);
                }
            }
        };
    }
    return o;
}

Var Tape::scale_rows(Var mat, Var vec) {
    const Tensor& mv = val(mat);
    const Tensor& vv = val(vec);
    check(mv.rank() == 2 && vv.size() == mv.rows(), "scale_rows: shape mismatch");
    const std::size_t r = mv.rows(), c = mv.cols();
    Tensor out({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        K().vscale(vv[i], mv.data.data() + i * c, out.data.data() + i * c, c);
    }
    Var o = push(std::move(out), requires_grad(mat) || requires_grad(vec));
    if (node(o).needs) {
        int oid = o.id, mid = mat.id, vid = vec.id;
        node(o).back = [this, oid, mid, vid, r, c] {
            const Tensor& g = nodes_[oid].grad;
            if (nodes_[mid].needs) {
                for (std::size_t i = 0; i < r; ++i) {
                    K().axpy(nodes_[vid].value[i], g.data.data() + i * c,
                             nodes_[mid].grad.data.data() + i * c, c);
                }
            }
            if (nodes_[vid].needs) {
                for (std::size_t i = 0; i < r; ++i) {
                    nodes_[vid].grad[i] += K().dot(g.data.data() + i * c,
                                                   nodes_[mid].value.data.data() + i * c, c);
                }
            }
        };
    }
    return o;
}

Var Tape::tanh(Var a) {
    Tensor out(val(a).shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(val(a)[i]);
    Var o = push(std::move(out), requires_grad(a));
    if (node(o).needs) {
        int oid = o.id, aid = a.id;
        node(o).back = [this, oid, aid] {
            const Tensor& y = nodes_[oid].value;
            const Tensor& g = nodes_[oid].grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                nodes_[aid].grad[i] += g[i] * (1.0 - y[i] * y[i]);
            }
        };
    }
    return o;
}

Var Tape::relu(Var a) {
    Tensor out(val(a).shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = val(a)[i] > 0.0 ? val(a)[i] : 0.0;
    Var o = push(std::move(out), requires_grad(a));
    if (node(o).needs) {
        int oid = o.id, aid = a.id;
        node(o).back = [this, oid, aid] {
            const Tensor& g = nodes_[oid].grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (nodes_[aid].value[i] > 0.0) nodes_[aid].grad[i] += g[i];
            }
        };
    }
    return o;
}

Var Tape::softmax_rows(Var a, std::vector<std::uint8_t> valid) {
    const Tensor& av = val(a);
    check(av.rank() == 2, "softmax_rows: rank-2 input required");
    const std::size_t r = av.rows(), c = av.cols();
    check(valid.empty() || valid.size() == c, "softmax_rows: mask size mismatch");
    Tensor out({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        double maxv = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j) {
            if ((valid.empty() || valid[j]) && av.at(i, j) > maxv) maxv = av.at(i, j);
        }
        check(std::isfinite(maxv), "softmax_rows: no valid column");
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double e = (valid.empty() || valid[j]) ? std::exp(av.at(i, j) - maxv) : 0.0;
            out.at(i, j) = e;
            s += e;
        }
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) /= s;
    }
    Var o = push(std::move(out), requires_grad(a));
    if (node(o).needs) {
        int oid = o.id, aid = a.id;
        node(o).back = [this, oid, aid, r, c] {
            const Tensor& p = nodes_[oid].value;
            const Tensor& g = nodes_[oid].grad;
            for (std::size_t i = 0; i < r; ++i) {
                const double gp = K().dot(g.data.data() + i * c, p.data.data() + i * c, c);
                for (std::size_t j = 0; j < c; ++j) {
                    nodes_[aid].grad.at(i, j) += p.at(i, j) * (g.at(i, j) - gp);
                }
            }
        };
    }
    return o;
}

Var Tape::mean_rows(Var mat) {
    const Tensor& mv = val(mat);
    check(mv.rank() == 2, "mean_rows: rank-2 input required");
    const std::size_t r = mv.rows(), c = mv.cols();
    Tensor out({c});
    for (std::size_t i = 0; i < r; ++i) {
        K().vadd(out.data.data(), mv.data.data() + i * c, out.data.data(), c);
    }
    K().vscale(1.0 / static_cast<double>(r), out.data.data(), out.data.data(), c);
    Var o = push(std::move(out), requires_grad(mat));
    if (node(o).needs) {
        int oid = o.id, mid = mat.id;
        node(o).back = [this, oid, mid, r, c] {
            const Tensor& g = nodes_[oid].grad;
            const double inv = 1.0 / static_cast<double>(r);
            for (std::size_t i = 0; i < r; ++i) {
                K().axpy(inv, g.data.data(), nodes_[mid].grad.data.data() + i * c, c);
            }
        };
    }
    return o;
}

Var Tape::colsum(Var mat) {
    const Tensor& mv = val(mat);
    check(mv.rank() == 2, "colsum: rank-2 input required");
    const std::size_t r = mv.rows(), c = mv.cols();
    Tensor out({c});
    for (std::size_t i = 0; i < r; ++i) {
        K().vadd(out.data.data(), mv.data.data() + i * c, out.data.data(), c);
    }
    Var o = push(std::move(out), requires_grad(mat));
    if (node(o).needs) {
        int oid = o.id, mid = mat.id;
        node(o).back = [this, oid, mid, r, c] {
            const Tensor& g = nodes_[oid].grad;
            for (std::size_t i = 0; i < r; ++i) {
                K().vadd(nodes_[mid].grad.data.data() + i * c, g.data.data(),
                         nodes_[mid].grad.data.data() + i * c, c);
            }
        };
    }
    return o;
}

Var Tape::sum(Var a) {
    double s = 0.0;
    for (std::size_t i = 0; i < val(a).size(); ++i) s += val(a)[i];
    Var o = push(Tensor::scalar(s), requires_grad(a));
    if (node(o).needs) {
        int oid = o.id, aid = a.id;
        node(o).back = [this, oid, aid] {
            const double g = nodes_[oid].grad[0];
            for (std::size_t i = 0; i < nodes_[aid].grad.size(); ++i) nodes_[aid].grad[i] += g;
        };
    }
    return o;
}

Var Tape::dot(Var a, Var b) {
    check(val(a).size() == val(b).size(), "dot: size mismatch");
    const std::size_t n = val(a).size();
    double s = K().dot(val(a).data.data(), val(b).data.data(), n);
    Var o = push(Tensor::scalar(s), requires_grad(a) || requires_grad(b));
    if (node(o).needs) {
        int oid = o.id, aid = a.id, bid = b.id;
        node(o).back = [this, oid, aid, bid, n] {
            const double g = nodes_[oid].grad[0];
            if (nodes_[aid].needs) {
                K().axpy(g, nodes_[bid].value.data.data(), nodes_[aid].grad.data.data(), n);
            }
            if (nodes_[bid].needs) {
                K().axpy(g, nodes_[aid].value.data.data(), nodes_[bid].grad.data.data(), n);
            }
        };
    }
    return o;
}

Var Tape::concat_rows(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.cols(), "concat_rows: shape mismatch");
    const std::size_t ra = av.rows(), rb = bv.rows(), c = av.cols();
    Tensor out({ra + rb, c});
    std::copy(av.data.begin(), av.data.end(), out.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + ra * c);
    Var o = push(std::move(out), requires_grad(a) || requires_grad(b));
    if (node(o).needs) {
        int oid = o.id, aid = a.id, bid = b.id;
        node(o).back = [this, oid, aid, bid, ra, rb, c] {
            const Tensor& g = nodes_[oid].grad;
            if (nodes_[aid].needs) {
                K().vadd(nodes_[aid].grad.data.data(), g.data.data(),
                         nodes_[aid].grad.data.data(), ra * c);
            }
            if (nodes_[bid].needs) {
                K().vadd(nodes_[bid].grad.data.data(), g.data.data() + ra * c,
                         nodes_[bid].grad.data.data(), rb * c);
            }
        };
    }
    return o;
}

Var Tape::concat_cols(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    check(av.rank() == 2 && bv.rank() == 2 && av.rows() == bv.rows(), "concat_cols: shape mismatch");
    const std::size_t r = av.rows(), ca = av.cols(), cb = bv.cols();
    Tensor out({r, ca + cb});
    for (std::size_t i = 0; i < r; ++i) {
        std::copy(av.data.begin() + i * ca, av.data.begin() + (i + 1) * ca,
                  out.data.begin() + i * (ca + cb));
        std::copy(bv.data.begin() + i * cb, bv.data.begin() + (i + 1) * cb,
                  out.data.begin() + i * (ca + cb) + ca);
    }
    Var o = push(std::move(out), requires_grad(a) || requires_grad(b));
    if (node(o).needs) {
        int oid = o.id, aid = a.id, bid = b.id;
        node(o).back = [this, oid, aid, bid, r, ca, cb] {
            const Tensor& g = nodes_[oid].grad;
            for (std::size_t i = 0; i < r; ++i) {
                if (nodes_[aid].needs) {
                    K().vadd(nodes_[aid].grad.data.data() + i * ca,
                             g.data.data() + i * (ca + cb),
                             nodes_[aid].grad.data.data() + i * ca, ca);
                }
                if (nodes_[bid].needs) {
                    K().vadd(nodes_[bid].grad.data.data() + i * cb,
                             g.data.data() + i * (ca + cb) + ca,
                             nodes_[bid].grad.data.data() + i * cb, cb);
                }
            }
        };
    }
    return o;
}

Var Tape::slice_rows(Var mat, std::size_t begin, std::size_t count) {
    const Tensor& mv = val(mat);
    check(mv.rank() == 2 && begin + count <= mv.rows(), "slice_rows: out of range");
    const std::size_t c = mv.cols();
    Tensor out({count, c});
    std::copy(mv.data.begin() + begin * c, mv.data.begin() + (begin + count) * c,
              out.data.begin());
    Var o = push(std::move(out), requires_grad(mat));
    if (node(o).needs) {
        int oid = o.id, mid = mat.id;
        node(o).back = [this, oid, mid, begin, count, c] {
            const Tensor& g = nodes_[oid].grad;
            K().vadd(nodes_[mid].grad.data.data() + begin * c, g.data.data(),
                     nodes_[mid].grad.data.data() + begin * c, count * c);
        };
    }
    return o;
}

Var Tape::slice_cols(Var mat, std::size_t begin, std::size_t count) {
    const Tensor& mv = val(mat);
    check(mv.rank() == 2 && begin + count <= mv.cols(), "slice_cols: out of range");
    const std::size_t r = mv.rows(), c = mv.cols();
    Tensor out({r, count});
    for (std::size_t i = 0; i < r; ++i) {
        std::copy(mv.data.begin() + i * c + begin, mv.data.begin() + i * c + begin + count,
                  out.data.begin() + i * count);
    }
    Var o = push(std::move(out), requires_grad(mat));
    if (node(o).needs) {
        int oid = o.id, mid = mat.id;
        node(o).back = [this, oid, mid, begin, count, r, c] {
            const Tensor& g = nodes_[oid].grad;
            for (std::size_t i = 0; i < r; ++i) {
                K().vadd(nodes_[mid].grad.data.data() + i * c + begin,
                         g.data.data() + i * count,
                         nodes_[mid].grad.data.data() + i * c + begin, count);
            }
        };
    }
    return o;
}

Var Tape::reshape(Var a, std::vector<std::size_t> shape) {
    std::size_t total = 1;
    for (std::size_t d : shape) total *= d;
    check(total == val(a).size(), "reshape: element count mismatch");
    Tensor out(std::move(shape));
    out.data = val(a).data;
    Var o = push(std::move(out), requires_grad(a));
    if (node(o).needs) {
        int oid = o.id, aid = a.id;
        node(o).back = [this, oid, aid] {
            const Tensor& g = nodes_[oid].grad;
            K().vadd(nodes_[aid].grad.data.data(), g.data.data(),
                     nodes_[aid].grad.data.data(), g.size());
        };
    }
    return o;
}

Var Tape::rows_gather(Var table, std::vector<std::size_t> idx) {
    const Tensor& tv = val(table);
    check(tv.rank() == 2, "rows_gather: rank-2 table required");
    const std::size_t c = tv.cols();
    for (std::size_t i : idx) check(i < tv.rows(), "rows_gather: index out of range");
    Tensor out({idx.size(), c});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy(tv.data.begin() + idx[i] * c, tv.data.begin() + (idx[i] + 1) * c,
                  out.data.begin() + i * c);
    }
    Var o = push(std::move(out), requires_grad(table));
    if (node(o).needs) {
        int oid = o.id, tid = table.id;
        node(o).back = [this, oid, tid, idx = std::move(idx), c] {
            const Tensor& g = nodes_[oid].grad;
            for (std::size_t i = 0; i < idx.size(); ++i) {
                K().vadd(nodes_[tid].grad.data.data() + idx[i] * c, g.data.data() + i * c,
                         nodes_[tid].grad.data.data() + idx[i] * c, c);
            }
        };
    }
    return o;
}

Var Tape::layernorm_rows(Var mat, Var gain, Var bias, double eps) {
    const Tensor& mv = val(mat);
    check(mv.rank() == 2, "layernorm_rows: rank-2 input required");
    const std::size_t r = mv.rows(), c = mv.cols();
    check(val(gain).size() == c && val(bias).size() == c, "layernorm_rows: affine size mismatch");
    Tensor out({r, c});
    Tensor xhat({r, c});
    Tensor inv_std({r});
    for (std::size_t i = 0; i < r; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) mu += mv.at(i, j);
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double d = mv.at(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (std::size_t j = 0; j < c; ++j) {
            xhat.at(i, j) = (mv.at(i, j) - mu) * is;
            out.at(i, j) = xhat.at(i, j) * val(gain)[j] + val(bias)[j];
        }
    }
    Var o = push(std::move(out),
                 requires_grad(mat) || requires_grad(gain) || requires_grad(bias));
    if (node(o).needs) {
        int oid = o.id, mid = mat.id, gid = gain.id, bid = bias.id;
        node(o).back = [this, oid, mid, gid, bid, r, c,
                        xhat = std::move(xhat), inv_std = std::move(inv_std)] {
            const Tensor& g = nodes_[oid].grad;
            for (std::size_t i = 0; i < r; ++i) {
                if (nodes_[gid].needs) {
                    for (std::size_t j = 0; j < c; ++j) {
                        nodes_[gid].grad[j] += g.at(i, j) * xhat.at(i, j);
                    }
                }
                if (nodes_[bid].needs) {
                    for (std::size_t j = 0; j < c; ++j) nodes_[bid].grad[j] += g.at(i, j);
                }
                if (nodes_[mid].needs) {
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t j = 0; j < c; ++j) {
                        const double gx = g.at(i, j) * nodes_[gid].value[j];
                        m1 += gx;
                        m2 += gx * xhat.at(i, j);
                    }
                    m1 /= static_cast<double>(c);
                    m2 /= static_cast<double>(c);
                    for (std::size_t j = 0; j < c; ++j) {
                        const double gx = g.at(i, j) * nodes_[gid].value[j];
                        nodes_[mid].grad.at(i, j) +=
                            (gx - m1 - xhat.at(i, j) * m2) * inv_std[i];
                    }
                }
            }
        };
    }
    return o;
}

Var Tape::clamp_max(Var a, double hi) {
    Tensor out(val(a).shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = val(a)[i] < hi ? val(a)[i] : hi;
    Var o = push(std::move(out), requires_grad(a));
    if (node(o).needs) {
        int oid = o.id, aid = a.id;
        node(o).back = [this, oid, aid, hi] {
            const Tensor& g = nodes_[oid].grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (nodes_[aid].value[i] < hi) nodes_[aid].grad[i] += g[i];
            }
        };
    }
    return o;
}

Var Tape::im2col(Var x, std::size_t h, std::size_t w, std::size_t k,
                 std::size_t stride, std::size_t pad) {
    const Tensor& xv = val(x);
    check(xv.rank() == 2 && xv.rows() == h * w, "im2col: input shape mismatch");
    const std::size_t cin = xv.cols();
    const std::size_t oh = (h + 2 * pad - k) / stride + 1;
    const std::size_t ow = (w + 2 * pad - k) / stride + 1;
    const std::size_t patch = k * k * cin;
    // Source index per output element, -1 for zero padding.
    std::vector<std::ptrdiff_t> src(oh * ow * patch, -1);
    Tensor out({oh * ow, patch});
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::size_t orow = oy * ow + ox;
            for (std::size_t ky = 0; ky < k; ++ky) {
                const std::ptrdiff_t iy =
                    static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::ptrdiff_t ix =
                        static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix < 0 ||
                        ix >= static_cast<std::ptrdiff_t>(w)) {
                        continue;
                    }
                    const std::size_t base = (static_cast<std::size_t>(iy) * w +
                                              static_cast<std::size_t>(ix)) * cin;
                    const std::size_t q0 = (ky * k + kx) * cin;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        out.at(orow, q0 + ci) = xv.data[base + ci];
                        src[orow * patch + q0 + ci] = static_cast<std::ptrdiff_t>(base + ci);
                    }
                }
            }
        }
    }
    Var o = push(std::move(out), requires_grad(x));
    if (node(o).needs) {
        int oid = o.id, xid = x.id;
        node(o).back = [this, oid, xid, src = std::move(src)] {
            const Tensor& g = nodes_[oid].grad;
            for (std::size_t i = 0; i < src.size(); ++i) {
                if (src[i] >= 0) nodes_[xid].grad[static_cast<std::size_t>(src[i])] += g[i];
            }
        };
    }
    return o;
}

Var Tape::cross_entropy_logits(Var logits, std::size_t target) {
    const Tensor& lv = val(logits);
    check(target < lv.size(), "cross_entropy_logits: target out of range");
    const std::size_t n = lv.size();
    double maxv = lv[0];
    for (std::size_t i = 1; i < n; ++i) maxv = std::max(maxv, lv[i]);
    double se = 0.0;
    for (std::size_t i = 0; i < n; ++i) se += std::exp(lv[i] - maxv);
    const double lse = maxv + std::log(se);
    Var o = push(Tensor::scalar(lse - lv[target]), requires_grad(logits));
    if (node(o).needs) {
        int oid = o.id, lid = logits.id;
        node(o).back = [this, oid, lid, target, maxv, se, n] {
            const double g = nodes_[oid].grad[0];
            for (std::size_t i = 0; i < n; ++i) {
                double p = std::exp(nodes_[lid].value[i] - maxv) / se;
                if (i == target) p -= 1.0;
                nodes_[lid].grad[i] += g * p;
            }
        };
    }
    return o;
}

Var Tape::mse(Var pred, Tensor target) {
    const Tensor& pv = val(pred);
    check(pv.size() == target.size(), "mse: size mismatch");
    const std::size_t n = pv.size();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = pv[i] - target[i];
        s += d * d;
    }
    Var o = push(Tensor::scalar(s / static_cast<double>(n)), requires_grad(pred));
    if (node(o).needs) {
        int oid = o.id, pid = pred.id;
        node(o).back = [this, oid, pid, target = std::move(target), n] {
            const double g = nodes_[oid].grad[0] * 2.0 / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                nodes_[pid].grad[i] += g * (nodes_[pid].value[i] - target[i]);
            }
        };
    }
    return o;
}

}  // namespace dmrn::ag
