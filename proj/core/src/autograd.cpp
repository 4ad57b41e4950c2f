#include "muse/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace muse {

namespace {

enum BinaryKind { kAdd = 0, kSubtract = 1, kMultiply = 2 };

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b)
{
    throw InvalidArgument(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const std::string& why)
{
    throw InvalidArgument(std::string(op) + ": shape " + to_string(a) + " " + why);
}

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

void check_mask(const char* op, const SequenceMask& mask, std::size_t batch, std::size_t length)
{
    if (mask.batch != batch || mask.length != length || mask.keep.size() != batch * length) {
        throw InvalidArgument(std::string(op) + ": mask [" + std::to_string(mask.batch) + ", "
                              + std::to_string(mask.length) + "] does not match sequence block ["
                              + std::to_string(batch) + ", " + std::to_string(length) + "]");
    }
}

}  // namespace

template <typename Real>
Var Graph<Real>::push(Tensor<Real> value, const char* op, std::function<void(Graph&, std::size_t)> backward)
{
    if (!value.all_finite()) throw NumericError(std::string(op) + ": produced a non-finite value");
    Node node;
    node.value = std::move(value);
    if (m_record) node.backward = std::move(backward);
    m_nodes.push_back(std::move(node));
    m_backward_done = false;
    return Var{m_nodes.size() - 1};
}

template <typename Real>
Tensor<Real>& Graph<Real>::grad_ref(std::size_t id)
{
    Node& node = m_nodes[id];
    if (node.grad.shape() != node.value.shape() || node.grad.size() != node.value.size()) {
        node.grad = Tensor<Real>(node.value.shape());
    }
    return node.grad;
}

template <typename Real>
Var Graph<Real>::constant(Tensor<Real> value)
{
    if (!value.all_finite()) throw NumericError("constant: non-finite input");
    return push(std::move(value), "constant", nullptr);
}

template <typename Real>
Var Graph<Real>::parameter(const ParameterSet<Real>& params, const std::string& name)
{
    auto it = m_param_nodes.find(name);
    if (it != m_param_nodes.end()) return Var{it->second};
    const Tensor<Real>& value = params.at(name);
    if (!value.all_finite()) throw NumericError("parameter '" + name + "': non-finite input");
    Var v = push(value, "parameter", nullptr);
    m_param_nodes.emplace(name, v.id);
    return v;
}

template <typename Real>
Var Graph<Real>::matmul(Var a, Var b, bool transpose_b)
{
    const Tensor<Real>& A = value(a);
    const Tensor<Real>& B = value(b);
    if (A.rank() < 1 || B.rank() != 2) shape_error("matmul", A.shape(), B.shape());
    const std::size_t k = A.shape().back();
    const std::size_t n = transpose_b ? B.dim(0) : B.dim(1);
    const std::size_t bk = transpose_b ? B.dim(1) : B.dim(0);
    if (k != bk) shape_error("matmul", A.shape(), B.shape());
    const std::size_t m = A.size() / k;

    Shape out_shape = A.shape();
    out_shape.back() = n;
    Tensor<Real> out(out_shape);
    const Real* pa = A.data();
    const Real* pb = B.data();
    Real* po = out.data();
    if (!transpose_b) {
        for (std::size_t i = 0; i < m; ++i) {
            Real* row = po + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const Real aip = pa[i * k + p];
                const Real* brow = pb + p * n;
                for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            const Real* arow = pa + i * k;
            for (std::size_t j = 0; j < n; ++j) {
                const Real* brow = pb + j * k;
                Real acc = 0;
                for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
                po[i * n + j] = acc;
            }
        }
    }

    return push(std::move(out), "matmul", [a, b, m, k, n, transpose_b](Graph& g, std::size_t self) {
        const Real* dout = g.m_nodes[self].grad.data();
        const Real* pa = g.m_nodes[a.id].value.data();
        const Real* pb = g.m_nodes[b.id].value.data();
        Real* da = g.grad_ref(a.id).data();
        Real* db = g.grad_ref(b.id).data();
        if (!transpose_b) {
            for (std::size_t i = 0; i < m; ++i) {
                const Real* drow = dout + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const Real* brow = pb + p * n;
                    Real acc = 0;
                    for (std::size_t j = 0; j < n; ++j) acc += drow[j] * brow[j];
                    da[i * k + p] += acc;
                }
            }
            for (std::size_t i = 0; i < m; ++i) {
                const Real* drow = dout + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const Real aip = pa[i * k + p];
                    Real* dbrow = db + p * n;
                    for (std::size_t j = 0; j < n; ++j) dbrow[j] += aip * drow[j];
                }
            }
        } else {
            for (std::size_t i = 0; i < m; ++i) {
                const Real* arow = pa + i * k;
                Real* darow = da + i * k;
                for (std::size_t j = 0; j < n; ++j) {
                    const Real d = dout[i * n + j];
                    const Real* brow = pb + j * k;
                    Real* dbrow = db + j * k;
                    for (std::size_t p = 0; p < k; ++p) {
                        darow[p] += d * brow[p];
                        dbrow[p] += d * arow[p];
                    }
                }
            }
        }
    });
}

template <typename Real>
Var Graph<Real>::elementwise_binary(Var a, Var b, int kind)
{
    static constexpr const char* names[] = {"add", "subtract", "multiply"};
    const char* op = names[kind];
    const Tensor<Real>& A = value(a);
    const Tensor<Real>& B = value(b);
    bool broadcast = false;
    if (A.shape() != B.shape()) {
        if (B.rank() == 1 && A.rank() >= 1 && B.dim(0) == A.shape().back()) {
            broadcast = true;
        } else {
            shape_error(op, A.shape(), B.shape());
        }
    }
    const std::size_t width = broadcast ? B.size() : A.size();
    Tensor<Real> out(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) {
        const Real x = A[i];
        const Real y = B[broadcast ? i % width : i];
        out[i] = kind == kAdd ? x + y : kind == kSubtract ? x - y : x * y;
    }
    return push(std::move(out), op, [a, b, kind, broadcast, width](Graph& g, std::size_t self) {
        const Tensor<Real>& dout = g.m_nodes[self].grad;
        Tensor<Real>& da = g.grad_ref(a.id);
        Tensor<Real>& db = g.grad_ref(b.id);
        const Tensor<Real>& A = g.m_nodes[a.id].value;
        const Tensor<Real>& B = g.m_nodes[b.id].value;
        for (std::size_t i = 0; i < dout.size(); ++i) {
            const std::size_t j = broadcast ? i % width : i;
            const Real d = dout[i];
            if (kind == kAdd) {
                da[i] += d;
                db[j] += d;
            } else if (kind == kSubtract) {
                da[i] += d;
                db[j] -= d;
            } else {
                da[i] += d * B[j];
                db[j] += d * A[i];
            }
        }
    });
}

template <typename Real>
Var Graph<Real>::add(Var a, Var b)
{
    return elementwise_binary(a, b, kAdd);
}

template <typename Real>
Var Graph<Real>::subtract(Var a, Var b)
{
    return elementwise_binary(a, b, kSubtract);
}

template <typename Real>
Var Graph<Real>::multiply(Var a, Var b)
{
    return elementwise_binary(a, b, kMultiply);
}

template <typename Real>
Var Graph<Real>::scale(Var a, Real factor)
{
    Tensor<Real> out = value(a);
    for (Real& x : out.values()) x *= factor;
    return push(std::move(out), "scale", [a, factor](Graph& g, std::size_t self) {
        const Tensor<Real>& dout = g.m_nodes[self].grad;
        Tensor<Real>& da = g.grad_ref(a.id);
        for (std::size_t i = 0; i < dout.size(); ++i) da[i] += factor * dout[i];
    });
}

template <typename Real>
Var Graph<Real>::abs(Var a)
{
    Tensor<Real> out = value(a);
    for (Real& x : out.values()) x = std::abs(x);
    return push(std::move(out), "abs", [a](Graph& g, std::size_t self) {
        const Tensor<Real>& dout = g.m_nodes[self].grad;
        const Tensor<Real>& x = g.m_nodes[a.id].value;
        Tensor<Real>& da = g.grad_ref(a.id);
        for (std::size_t i = 0; i < dout.size(); ++i) {
            if (x[i] > 0) da[i] += dout[i];
            else if (x[i] < 0) da[i] -= dout[i];
        }
    });
}

template <typename Real>
Var Graph<Real>::relu(Var a)
{
    Tensor<Real> out = value(a);
    for (Real& x : out.values()) x = x > 0 ? x : Real(0);
    return push(std::move(out), "relu", [a](Graph& g, std::size_t self) {
        const Tensor<Real>& dout = g.m_nodes[self].grad;
        const Tensor<Real>& x = g.m_nodes[a.id].value;
        Tensor<Real>& da = g.grad_ref(a.id);
        for (std::size_t i = 0; i < dout.size(); ++i) {
            if (x[i] > 0) da[i] += dout[i];
        }
    });
}

template <typename Real>
Var Graph<Real>::tanh(Var a)
{
    Tensor<Real> out = value(a);
    for (Real& x : out.values()) x = std::tanh(x);
    return push(std::move(out), "tanh", [a](Graph& g, std::size_t self) {
        const Tensor<Real>& dout = g.m_nodes[self].grad;
        const Tensor<Real>& y = g.m_nodes[self].value;
        Tensor<Real>& da = g.grad_ref(a.id);
        for (std::size_t i = 0; i < dout.size(); ++i) da[i] += dout[i] * (Real(1) - y[i] * y[i]);
    });
}

template <typename Real>
Var Graph<Real>::softmax(Var a)
{
    const Tensor<Real>& x = value(a);
    if (x.rank() < 1) shape_error("softmax", x.shape(), "has no axis");
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.size() / d;
    Tensor<Real> out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* in = x.data() + r * d;
        Real* o = out.data() + r * d;
        Real mx = *std::max_element(in, in + d);
        Real total = 0;
        for (std::size_t j = 0; j < d; ++j) {
            o[j] = std::exp(in[j] - mx);
            total += o[j];
        }
        for (std::size_t j = 0; j < d; ++j) o[j] /= total;
    }
    return push(std::move(out), "softmax", [a, rows, d](Graph& g, std::size_t self) {
        const Tensor<Real>& dout = g.m_nodes[self].grad;
        const Tensor<Real>& y = g.m_nodes[self].value;
        Tensor<Real>& da = g.grad_ref(a.id);
        for (std::size_t r = 0; r < rows; ++r) {
            Real dot = 0;
            for (std::size_t j = 0; j < d; ++j) dot += dout[r * d + j] * y[r * d + j];
            for (std::size_t j = 0; j < d; ++j) da[r * d + j] += y[r * d + j] * (dout[r * d + j] - dot);
        }
    });
}

template <typename Real>
Var Graph<Real>::layer_norm(Var x, Var gain, Var bias, Real epsilon)
{
    const Tensor<Real>& X = value(x);
    const Tensor<Real>& G = value(gain);
    const Tensor<Real>& B = value(bias);
    const std::size_t d = last_dim(X.shape());
    if (X.rank() < 1 || G.shape() != Shape{d} || B.shape() != Shape{d}) {
        shape_error("layer_norm", X.shape(), G.shape());
    }
    const std::size_t rows = X.size() / d;
    Tensor<Real> out(X.shape());
    std::vector<Real> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const Real* in = X.data() + r * d;
        Real mu = 0;
        for (std::size_t j = 0; j < d; ++j) mu += in[j];
        mu /= Real(d);
        Real var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= Real(d);
        const Real inv = Real(1) / std::sqrt(var + epsilon);
        inv_std[r] = inv;
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = G[j] * (in[j] - mu) * inv + B[j];
    }
    return push(std::move(out), "layer_norm",
                [x, gain, bias, rows, d, inv_std = std::move(inv_std)](Graph& g, std::size_t self) {
        const Tensor<Real>& dout = g.m_nodes[self].grad;
        const Tensor<Real>& X = g.m_nodes[x.id].value;
        const Tensor<Real>& G = g.m_nodes[gain.id].value;
        Tensor<Real>& dx = g.grad_ref(x.id);
        Tensor<Real>& dg = g.grad_ref(gain.id);
        Tensor<Real>& db = g.grad_ref(bias.id);
        std::vector<Real> xhat(d), dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
            const Real* in = X.data() + r * d;
            Real mu = 0;
            for (std::size_t j = 0; j < d; ++j) mu += in[j];
            mu /= Real(d);
            const Real inv = inv_std[r];
            Real sum_dxhat = 0;
            Real sum_dxhat_xhat = 0;
            for (std::size_t j = 0; j < d; ++j) {
                xhat[j] = (in[j] - mu) * inv;
                const Real dy = dout[r * d + j];
                dg[j] += dy * xhat[j];
                db[j] += dy;
                dxhat[j] = dy * G[j];
                sum_dxhat += dxhat[j];
                sum_dxhat_xhat += dxhat[j] * xhat[j];
            }
            for (std::size_t j = 0; j < d; ++j) {
                dx[r * d + j] += inv / Real(d) * (Real(d) * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
            }
        }
    });
}

template <typename Real>
Var Graph<Real>::conv1d(Var x, Var weight, Var bias, const SequenceMask& mask)
{
    const Tensor<Real>& X = value(x);
    const Tensor<Real>& W = value(weight);
    const Tensor<Real>& Bv = value(bias);
    if (X.rank() != 3 || W.rank() != 3 || W.dim(1) != X.dim(2) || Bv.shape() != Shape{W.dim(2)}) {
        shape_error("conv1d", X.shape(), W.shape());
    }
    const std::size_t batch = X.dim(0), len = X.dim(1), in_ch = X.dim(2);
    const std::size_t width = W.dim(0), filters = W.dim(2);
    check_mask("conv1d", mask, batch, len);
    const std::ptrdiff_t left = static_cast<std::ptrdiff_t>((width - 1) / 2);

    Tensor<Real> out(Shape{batch, len, filters});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < len; ++t) {
            Real* o = out.data() + (b * len + t) * filters;
            for (std::size_t f = 0; f < filters; ++f) o[f] = Bv[f];
            for (std::size_t off = 0; off < width; ++off) {
                const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + off) - left;
                if (s < 0 || s >= static_cast<std::ptrdiff_t>(len) || !mask.at(b, static_cast<std::size_t>(s))) continue;
                const Real* xin = X.data() + (b * len + static_cast<std::size_t>(s)) * in_ch;
                const Real* w = W.data() + off * in_ch * filters;
                for (std::size_t c = 0; c < in_ch; ++c) {
                    const Real xc = xin[c];
                    const Real* wrow = w + c * filters;
                    for (std::size_t f = 0; f < filters; ++f) o[f] += xc * wrow[f];
                }
            }
        }
    }
    return push(std::move(out), "conv1d",
                [x, weight, bias, mask, batch, len, in_ch, width, filters, left](Graph& g, std::size_t self) {
        const Tensor<Real>& dout = g.m_nodes[self].grad;
        const Tensor<Real>& X = g.m_nodes[x.id].value;
        const Tensor<Real>& W = g.m_nodes[weight.id].value;
        Tensor<Real>& dx = g.grad_ref(x.id);
        Tensor<Real>& dw = g.grad_ref(weight.id);
        Tensor<Real>& db = g.grad_ref(bias.id);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t t = 0; t < len; ++t) {
                const Real* d = dout.data() + (b * len + t) * filters;
                for (std::size_t f = 0; f < filters; ++f) db[f] += d[f];
                for (std::size_t off = 0; off < width; ++off) {
                    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + off) - left;
                    if (s < 0 || s >= static_cast<std::ptrdiff_t>(len) || !mask.at(b, static_cast<std::size_t>(s))) continue;
                    const std::size_t row = (b * len + static_cast<std::size_t>(s)) * in_ch;
                    const Real* xin = X.data() + row;
                    Real* dxin = dx.data() + row;
                    const Real* w = W.data() + off * in_ch * filters;
                    Real* dwo = dw.data() + off * in_ch * filters;
                    for (std::size_t c = 0; c < in_ch; ++c) {
                        const Real* wrow = w + c * filters;
                        Real* dwrow = dwo + c * filters;
                        const Real xc = xin[c];
                        Real acc = 0;
                        for (std::size_t f = 0; f < filters; ++f) {
                            acc += d[f] * wrow[f];
                            dwrow[f] += xc * d[f];
                        }
                        dxin[c] += acc;
                    }
                }
            }
        }
    });
}

template <typename Real>
Var Graph<Real>::masked_mean_pool(Var x, const SequenceMask& mask)
{
    const Tensor<Real>& X = value(x);
    if (X.rank() != 3) shape_error("masked_mean_pool", X.shape(), "is not [batch, length, features]");
    const std::size_t batch = X.dim(0), len = X.dim(1), d = X.dim(2);
    check_mask("masked_mean_pool", mask, batch, len);
    Tensor<Real> out(Shape{batch, d});
    std::vector<Real> inv_count(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t n = mask.count(b);
        if (n == 0) throw InvalidArgument("masked_mean_pool: sequence " + std::to_string(b) + " has no kept positions");
        inv_count[b] = Real(1) / Real(n);
        Real* o = out.data() + b * d;
        for (std::size_t t = 0; t < len; ++t) {
            if (!mask.at(b, t)) continue;
            const Real* in = X.data() + (b * len + t) * d;
            for (std::size_t j = 0; j < d; ++j) o[j] += in[j];
        }
        for (std::size_t j = 0; j < d; ++j) o[j] *= inv_count[b];
    }
    return push(std::move(out), "masked_mean_pool",
                [x, mask, batch, len, d, inv_count = std::move(inv_count)](Graph& g, std::size_t self) {
        const Tensor<Real>& dout = g.m_nodes[self].grad;
        Tensor<Real>& dx = g.grad_ref(x.id);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t t = 0; t < len; ++t) {
                if (!mask.at(b, t)) continue;
                Real* dst = dx.data() + (b * len + t) * d;
                for (std::size_t j = 0; j < d; ++j) dst[j] += dout[b * d + j] * inv_count[b];
            }
        }
    });
}

template <typename Real>
Var Graph<Real>::embedding_lookup(Var table, std::span<const std::int32_t> ids, std::size_t batch, std::size_t length)
{
    const Tensor<Real>& T = value(table);
    if (T.rank() != 2) shape_error("embedding_lookup", T.shape(), "is not [vocab, dim]");
    if (ids.size() != batch * length) {
        throw InvalidArgument("embedding_lookup: " + std::to_string(ids.size()) + " ids for block ["
                              + std::to_string(batch) + ", " + std::to_string(length) + "]");
    }
    const std::size_t vocab = T.dim(0), d = T.dim(1);
    Tensor<Real> out(Shape{batch, length, d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
            throw InvalidArgument("embedding_lookup: id " + std::to_string(ids[i]) + " outside vocabulary of "
                                  + std::to_string(vocab));
        }
        std::copy_n(T.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
    }
    std::vector<std::int32_t> saved(ids.begin(), ids.end());
    return push(std::move(out), "embedding_lookup", [table, d, saved = std::move(saved)](Graph& g, std::size_t self) {
        const Tensor<Real>& dout = g.m_nodes[self].grad;
        Tensor<Real>& dt = g.grad_ref(table.id);
        for (std::size_t i = 0; i < saved.size(); ++i) {
            Real* dst = dt.data() + static_cast<std::size_t>(saved[i]) * d;
            const Real* src = dout.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
}

template <typename Real>
Var Graph<Real>::concat(std::span<const Var> parts)
{
    if (parts.empty()) throw InvalidArgument("concat: no inputs");
    const Shape& first = shape(parts[0]);
    if (first.empty()) shape_error("concat", first, "has no axis");
    Shape lead(first.begin(), first.end() - 1);
    std::size_t total = 0;
    std::vector<std::size_t> widths;
    for (Var p : parts) {
        const Shape& s = shape(p);
        if (s.size() != first.size() || !std::equal(lead.begin(), lead.end(), s.begin())) {
            shape_error("concat", first, s);
        }
        widths.push_back(s.back());
        total += s.back();
    }
    const std::size_t rows = element_count(lead);
    Shape out_shape = lead;
    out_shape.push_back(total);
    Tensor<Real> out(out_shape);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor<Real>& P = value(parts[k]);
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(P.data() + r * widths[k], widths[k], out.data() + r * total + offset);
        }
        offset += widths[k];
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return push(std::move(out), "concat",
                [inputs = std::move(inputs), widths = std::move(widths), rows, total](Graph& g, std::size_t self) {
        const Tensor<Real>& dout = g.m_nodes[self].grad;
        std::size_t offset = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            Tensor<Real>& dp = g.grad_ref(inputs[k].id);
            for (std::size_t r = 0; r < rows; ++r) {
                const Real* src = dout.data() + r * total + offset;
                Real* dst = dp.data() + r * widths[k];
                for (std::size_t j = 0; j < widths[k]; ++j) dst[j] += src[j];
            }
            offset += widths[k];
        }
    });
}

template <typename Real>
Var Graph<Real>::scaled_dot_attention(Var q, Var k, Var v, const SequenceMask& mask, std::size_t heads)
{
    const Tensor<Real>& Q = value(q);
    const Tensor<Real>& K = value(k);
    const Tensor<Real>& V = value(v);
    if (Q.rank() != 3 || K.shape() != Q.shape() || V.shape() != Q.shape()) {
        shape_error("scaled_dot_attention", Q.shape(), K.shape() != Q.shape() ? K.shape() : V.shape());
    }
    const std::size_t batch = Q.dim(0), len = Q.dim(1), d = Q.dim(2);
    if (heads == 0 || d % heads != 0) {
        shape_error("scaled_dot_attention", Q.shape(), "is not divisible into " + std::to_string(heads) + " heads");
    }
    check_mask("scaled_dot_attention", mask, batch, len);
    const std::size_t dh = d / heads;
    const Real scale = Real(1) / std::sqrt(Real(dh));

    // probs[b][h][i][j]
    std::vector<Real> probs(batch * heads * len * len, Real(0));
    Tensor<Real> out(Q.shape());
    for (std::size_t b = 0; b < batch; ++b) {
        if (mask.count(b) == 0) {
            throw InvalidArgument("scaled_dot_attention: sequence " + std::to_string(b) + " has no kept positions");
        }
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < len; ++i) {
                Real* p = probs.data() + ((b * heads + h) * len + i) * len;
                const Real* qi = Q.data() + (b * len + i) * d + h * dh;
                Real mx = -std::numeric_limits<Real>::infinity();
                for (std::size_t j = 0; j < len; ++j) {
                    if (!mask.at(b, j)) continue;
                    const Real* kj = K.data() + (b * len + j) * d + h * dh;
                    Real s = 0;
                    for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
                    p[j] = s * scale;
                    mx = std::max(mx, p[j]);
                }
                Real total = 0;
                for (std::size_t j = 0; j < len; ++j) {
                    if (!mask.at(b, j)) continue;
                    p[j] = std::exp(p[j] - mx);
                    total += p[j];
                }
                Real* o = out.data() + (b * len + i) * d + h * dh;
                for (std::size_t j = 0; j < len; ++j) {
                    if (!mask.at(b, j)) continue;
                    p[j] /= total;
                    const Real* vj = V.data() + (b * len + j) * d + h * dh;
                    for (std::size_t c = 0; c < dh; ++c) o[c] += p[j] * vj[c];
                }
            }
        }
    }
    return push(std::move(out), "scaled_dot_attention",
                [q, k, v, mask, batch, len, d, heads, dh, scale, probs = std::move(probs)](Graph& g, std::size_t self) {
        const Tensor<Real>& dout = g.m_nodes[self].grad;
        const Tensor<Real>& Q = g.m_nodes[q.id].value;
        const Tensor<Real>& K = g.m_nodes[k.id].value;
        const Tensor<Real>& V = g.m_nodes[v.id].value;
        Tensor<Real>& dq = g.grad_ref(q.id);
        Tensor<Real>& dk = g.grad_ref(k.id);
        Tensor<Real>& dv = g.grad_ref(v.id);
        std::vector<Real> dp(len);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t h = 0; h < heads; ++h) {
                for (std::size_t i = 0; i < len; ++i) {
                    const Real* p = probs.data() + ((b * heads + h) * len + i) * len;
                    const Real* doi = dout.data() + (b * len + i) * d + h * dh;
                    Real weighted = 0;
                    for (std::size_t j = 0; j < len; ++j) {
                        dp[j] = 0;
                        if (!mask.at(b, j)) continue;
                        const Real* vj = V.data() + (b * len + j) * d + h * dh;
                        Real* dvj = dv.data() + (b * len + j) * d + h * dh;
                        Real acc = 0;
                        for (std::size_t c = 0; c < dh; ++c) {
                            acc += doi[c] * vj[c];
                            dvj[c] += p[j] * doi[c];
                        }
                        dp[j] = acc;
                        weighted += p[j] * acc;
                    }
                    const Real* qi = Q.data() + (b * len + i) * d + h * dh;
                    Real* dqi = dq.data() + (b * len + i) * d + h * dh;
                    for (std::size_t j = 0; j < len; ++j) {
                        if (!mask.at(b, j)) continue;
                        const Real ds = p[j] * (dp[j] - weighted) * scale;
                        const Real* kj = K.data() + (b * len + j) * d + h * dh;
                        Real* dkj = dk.data() + (b * len + j) * d + h * dh;
                        for (std::size_t c = 0; c < dh; ++c) {
                            dqi[c] += ds * kj[c];
                            dkj[c] += ds * qi[c];
                        }
                    }
                }
            }
        }
    });
}

template <typename Real>
Var Graph<Real>::cross_entropy_from_logits(Var logits, std::span<const std::int32_t> labels)
{
    const Tensor<Real>& L = value(logits);
    if (L.rank() != 2 || L.dim(0) != labels.size() || L.dim(0) == 0) {
        shape_error("cross_entropy_from_logits", L.shape(), "does not match " + std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = L.dim(0), c = L.dim(1);
    std::vector<Real> probs(n * c);
    Real loss = 0;
    for (std::size_t r = 0; r < n; ++r) {
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= c) {
            throw InvalidArgument("cross_entropy_from_logits: label " + std::to_string(labels[r]) + " outside [0, "
                                  + std::to_string(c) + ")");
        }
        const Real* row = L.data() + r * c;
        const Real mx = *std::max_element(row, row + c);
        Real total = 0;
        for (std::size_t j = 0; j < c; ++j) {
            probs[r * c + j] = std::exp(row[j] - mx);
            total += probs[r * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) probs[r * c + j] /= total;
        loss += mx + std::log(total) - row[labels[r]];
    }
    loss /= Real(n);
    std::vector<std::int32_t> saved(labels.begin(), labels.end());
    return push(Tensor<Real>::scalar(loss), "cross_entropy_from_logits",
                [logits, n, c, probs = std::move(probs), saved = std::move(saved)](Graph& g, std::size_t self) {
        const Real d = g.m_nodes[self].grad[0] / Real(n);
        Tensor<Real>& dl = g.grad_ref(logits.id);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
                const Real target = static_cast<std::size_t>(saved[r]) == j ? Real(1) : Real(0);
                dl[r * c + j] += d * (probs[r * c + j] - target);
            }
        }
    });
}

template <typename Real>
Var Graph<Real>::sum(Var a)
{
    Real total = 0;
    for (Real x : value(a).values()) total += x;
    return push(Tensor<Real>::scalar(total), "sum", [a](Graph& g, std::size_t self) {
        const Real d = g.m_nodes[self].grad[0];
        for (Real& x : g.grad_ref(a.id).values()) x += d;
    });
}

template <typename Real>
Var Graph<Real>::mean(Var a)
{
    const std::size_t n = value(a).size();
    if (n == 0) throw InvalidArgument("mean: empty tensor");
    return scale(sum(a), Real(1) / Real(n));
}

template <typename Real>
Var Graph<Real>::reshape(Var a, Shape new_shape)
{
    const Tensor<Real>& A = value(a);
    if (element_count(new_shape) != A.size()) shape_error("reshape", A.shape(), "cannot become " + to_string(new_shape));
    return push(A.reshaped(std::move(new_shape)), "reshape", [a](Graph& g, std::size_t self) {
        const Tensor<Real>& dout = g.m_nodes[self].grad;
        Tensor<Real>& da = g.grad_ref(a.id);
        for (std::size_t i = 0; i < dout.size(); ++i) da[i] += dout[i];
    });
}

template <typename Real>
void Graph<Real>::backward(Var loss)
{
    if (!m_record) throw InvalidArgument("backward: graph was built without recording");
    const Tensor<Real>& L = value(loss);
    if (L.size() != 1 || std::any_of(L.shape().begin(), L.shape().end(), [](std::size_t s) { return s != 1; })) {
        throw InvalidArgument("backward: loss must be scalar, got shape " + to_string(L.shape()));
    }
    for (Node& node : m_nodes) node.grad = Tensor<Real>();
    grad_ref(loss.id)[0] = Real(1);
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& node = m_nodes[id];
        if (node.grad.empty() || !node.backward) continue;
        node.backward(*this, id);
    }
    m_backward_done = true;
}

template <typename Real>
Tensor<Real> Graph<Real>::grad(Var v) const
{
    const Node& node = m_nodes.at(v.id);
    if (node.grad.empty()) return Tensor<Real>(node.value.shape());
    return node.grad;
}

template <typename Real>
GradientMap<Real> Graph<Real>::gradients(const ParameterSet<Real>& params) const
{
    if (!m_backward_done) throw InvalidArgument("gradients: backward() has not been run");
    GradientMap<Real> out;
    for (const auto& [name, value] : params.values()) {
        auto it = m_param_nodes.find(name);
        if (it == m_param_nodes.end()) {
            out.emplace(name, Tensor<Real>(value.shape()));
        } else {
            out.emplace(name, grad(Var{it->second}));
        }
    }
    return out;
}

template <typename Real>
std::size_t Graph<Real>::value_bytes() const noexcept
{
    std::size_t bytes = 0;
    for (const Node& node : m_nodes) bytes += node.value.size() * sizeof(Real);
    return bytes;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace muse
