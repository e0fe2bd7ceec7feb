#include "neurophys/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "neurophys/errors.hpp"

namespace neurophys {

namespace {

void accumulate(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Var reshape(Var x, Shape new_shape) {
    Tensor out = x.value().reshaped(std::move(new_shape));
    std::size_t xi = x.index();
    return x.tape()->emplace(std::move(out), {x}, [xi](Tape& t, std::size_t self) {
        if (!t.needs_grad(xi)) return;
        const Tensor& g = t.grad_buffer(self);
        Tensor& gx = t.grad_buffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Var permute(Var x, const std::vector<std::size_t>& axes) {
    const Tensor& xv = x.value();
    const std::size_t nd = xv.ndim();
    if (axes.size() != nd) throw ParamError("permute: axes rank mismatch");
    std::vector<bool> seen(nd, false);
    Shape out_shape(nd);
    for (std::size_t i = 0; i < nd; ++i) {
        if (axes[i] >= nd || seen[axes[i]]) throw ParamError("permute: invalid axes");
        seen[axes[i]] = true;
        out_shape[i] = xv.dim(axes[i]);
    }
    const Shape xs = row_major_strides(xv.shape());
    const Shape os = row_major_strides(out_shape);
    // Map flat output index -> flat input index.
    std::vector<std::size_t> src(xv.size());
    {
        std::vector<std::size_t> idx(nd, 0);
        for (std::size_t o = 0; o < xv.size(); ++o) {
            std::size_t rem = o, in = 0;
            for (std::size_t d = 0; d < nd; ++d) {
                const std::size_t c = rem / os[d];
                rem %= os[d];
                in += c * xs[axes[d]];
            }
            src[o] = in;
        }
    }
    Tensor out(out_shape);
    for (std::size_t o = 0; o < out.size(); ++o) out[o] = xv[src[o]];
    std::size_t xi = x.index();
    return x.tape()->emplace(std::move(out), {x},
                             [xi, src = std::move(src)](Tape& t, std::size_t self) {
                                 if (!t.needs_grad(xi)) return;
                                 const Tensor& g = t.grad_buffer(self);
                                 Tensor& gx = t.grad_buffer(xi);
                                 for (std::size_t o = 0; o < g.size(); ++o) gx[src[o]] += g[o];
                             });
}

Var slice(Var x, std::size_t axis, std::size_t start, std::size_t len) {
    const Tensor& xv = x.value();
    if (axis >= xv.ndim()) throw ParamError("slice: axis out of range");
    if (start + len > xv.dim(axis) || len == 0) {
        throw ShapeError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") exceeds axis length " +
                         std::to_string(xv.dim(axis)));
    }
    Shape out_shape = xv.shape();
    out_shape[axis] = len;
    // outer x axis x inner decomposition
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= xv.dim(d);
    for (std::size_t d = axis + 1; d < xv.ndim(); ++d) inner *= xv.dim(d);
    const std::size_t ax = xv.dim(axis);

    Tensor out(out_shape);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t a = 0; a < len; ++a)
            for (std::size_t i = 0; i < inner; ++i)
                out[(o * len + a) * inner + i] = xv[(o * ax + start + a) * inner + i];

    std::size_t xi = x.index();
    return x.tape()->emplace(std::move(out), {x},
                             [xi, outer, inner, ax, start, len](Tape& t, std::size_t self) {
                                 if (!t.needs_grad(xi)) return;
                                 const Tensor& g = t.grad_buffer(self);
                                 Tensor& gx = t.grad_buffer(xi);
                                 for (std::size_t o = 0; o < outer; ++o)
                                     for (std::size_t a = 0; a < len; ++a)
                                         for (std::size_t i = 0; i < inner; ++i)
                                             gx[(o * ax + start + a) * inner + i] +=
                                                 g[(o * len + a) * inner + i];
                             });
}

Var add(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    accumulate(out, b.value());
    std::size_t ai = a.index(), bi = b.index();
    return a.tape()->emplace(std::move(out), {a, b}, [ai, bi](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        if (t.needs_grad(ai)) accumulate(t.grad_buffer(ai), g);
        if (t.needs_grad(bi)) accumulate(t.grad_buffer(bi), g);
    });
}

Var sub(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    std::size_t ai = a.index(), bi = b.index();
    return a.tape()->emplace(std::move(out), {a, b}, [ai, bi](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        if (t.needs_grad(ai)) accumulate(t.grad_buffer(ai), g);
        if (t.needs_grad(bi)) {
            Tensor& gb = t.grad_buffer(bi);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Var mul(Var a, Var b) {
    check_same_shape(a.value(), b.value(), "mul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    std::size_t ai = a.index(), bi = b.index();
    return a.tape()->emplace(std::move(out), {a, b}, [ai, bi](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        const Tensor& av = t.value_of(ai);
        const Tensor& bv = t.value_of(bi);
        if (t.needs_grad(ai)) {
            Tensor& ga = t.grad_buffer(ai);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.needs_grad(bi)) {
            Tensor& gb = t.grad_buffer(bi);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var affine(Var x, double scale, double shift) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * xv[i] + shift;
    std::size_t xi = x.index();
    return x.tape()->emplace(std::move(out), {x}, [xi, scale](Tape& t, std::size_t self) {
        if (!t.needs_grad(xi)) return;
        const Tensor& g = t.grad_buffer(self);
        Tensor& gx = t.grad_buffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += scale * g[i];
    });
}

Var square(Var x) { return mul(x, x); }

Var mean_all(Var x) {
    const Tensor& xv = x.value();
    double s = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
    const double inv_n = 1.0 / static_cast<double>(xv.size());
    std::size_t xi = x.index();
    return x.tape()->emplace(Tensor::scalar(s * inv_n), {x},
                             [xi, inv_n](Tape& t, std::size_t self) {
                                 if (!t.needs_grad(xi)) return;
                                 const double g = t.grad_buffer(self)[0] * inv_n;
                                 Tensor& gx = t.grad_buffer(xi);
                                 for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
                             });
}

Var mean_axis(Var x, std::size_t axis) {
    const Tensor& xv = x.value();
    if (axis >= xv.ndim()) throw ParamError("mean_axis: axis out of range");
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= xv.dim(d);
    for (std::size_t d = axis + 1; d < xv.ndim(); ++d) inner *= xv.dim(d);
    const std::size_t ax = xv.dim(axis);
    Shape out_shape;
    for (std::size_t d = 0; d < xv.ndim(); ++d)
        if (d != axis) out_shape.push_back(xv.dim(d));
    if (out_shape.empty()) out_shape.push_back(1);

    const double inv = 1.0 / static_cast<double>(ax);
    Tensor out(out_shape);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
            double s = 0.0;
            for (std::size_t a = 0; a < ax; ++a) s += xv[(o * ax + a) * inner + i];
            out[o * inner + i] = s * inv;
        }
    std::size_t xi = x.index();
    return x.tape()->emplace(std::move(out), {x},
                             [xi, outer, inner, ax, inv](Tape& t, std::size_t self) {
                                 if (!t.needs_grad(xi)) return;
                                 const Tensor& g = t.grad_buffer(self);
                                 Tensor& gx = t.grad_buffer(xi);
                                 for (std::size_t o = 0; o < outer; ++o)
                                     for (std::size_t a = 0; a < ax; ++a)
                                         for (std::size_t i = 0; i < inner; ++i)
                                             gx[(o * ax + a) * inner + i] +=
                                                 g[o * inner + i] * inv;
                             });
}

Var add_seq_bias(Var x, Var bias) {
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    if (xv.ndim() != 3 || bv.ndim() != 2 || bv.dim(0) != xv.dim(0) || bv.dim(1) != xv.dim(2)) {
        throw ShapeError("add_seq_bias: expected x [S,B,D] and bias [S,D], got " +
                         shape_str(xv.shape()) + " and " + shape_str(bv.shape()));
    }
    const std::size_t S = xv.dim(0), B = xv.dim(1), D = xv.dim(2);
    Tensor out(xv.shape());
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t d = 0; d < D; ++d)
                out[(s * B + b) * D + d] = xv[(s * B + b) * D + d] + bv[s * D + d];
    std::size_t xi = x.index(), bi = bias.index();
    return x.tape()->emplace(std::move(out), {x, bias}, [xi, bi, S, B, D](Tape& t,
                                                                          std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        if (t.needs_grad(xi)) accumulate(t.grad_buffer(xi), g);
        if (t.needs_grad(bi)) {
            Tensor& gb = t.grad_buffer(bi);
            for (std::size_t s = 0; s < S; ++s)
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t d = 0; d < D; ++d) gb[s * D + d] += g[(s * B + b) * D + d];
        }
    });
}

Var matrix_apply_nodes(Var x, const Tensor& m) {
    const Tensor& xv = x.value();
    if (xv.ndim() < 2) throw ShapeError("matrix_apply_nodes: need at least 2 axes");
    const std::size_t N = xv.dim(xv.ndim() - 2);
    const std::size_t T = xv.dim(xv.ndim() - 1);
    if (m.ndim() != 2 || m.dim(0) != N || m.dim(1) != N) {
        throw ShapeError("matrix_apply_nodes: matrix " + shape_str(m.shape()) +
                         " does not match node axis of " + shape_str(xv.shape()));
    }
    const std::size_t outer = xv.size() / (N * T);
    Tensor out(xv.shape());
    for (std::size_t o = 0; o < outer; ++o) {
        const double* xb = xv.data() + o * N * T;
        double* ob = out.data() + o * N * T;
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < N; ++j) {
                const double mij = m[i * N + j];
                if (mij == 0.0) continue;
                const double* xr = xb + j * T;
                double* orow = ob + i * T;
                for (std::size_t t = 0; t < T; ++t) orow[t] += mij * xr[t];
            }
    }
    std::size_t xi = x.index();
    return x.tape()->emplace(std::move(out), {x},
                             [xi, m, outer, N, T](Tape& t, std::size_t self) {
                                 if (!t.needs_grad(xi)) return;
                                 const Tensor& g = t.grad_buffer(self);
                                 Tensor& gx = t.grad_buffer(xi);
                                 for (std::size_t o = 0; o < outer; ++o) {
                                     const double* gb = g.data() + o * N * T;
                                     double* gxb = gx.data() + o * N * T;
                                     for (std::size_t i = 0; i < N; ++i)
                                         for (std::size_t j = 0; j < N; ++j) {
                                             const double mij = m[i * N + j];
                                             if (mij == 0.0) continue;
                                             const double* gr = gb + i * T;
                                             double* gxr = gxb + j * T;
                                             for (std::size_t k = 0; k < T; ++k)
                                                 gxr[k] += mij * gr[k];
                                         }
                                 }
                             });
}

Var finite_diff(Var x, double dt) {
    const Tensor& xv = x.value();
    if (xv.ndim() < 1 || xv.dim(xv.ndim() - 1) < 2) {
        throw ShapeError("finite_diff: last axis must have length >= 2, got " +
                         shape_str(xv.shape()));
    }
    if (dt <= 0.0) throw ParamError("finite_diff: dt must be positive");
    const std::size_t T = xv.dim(xv.ndim() - 1);
    const std::size_t rows = xv.size() / T;
    Shape out_shape = xv.shape();
    out_shape.back() = T - 1;
    Tensor out(out_shape);
    const double inv_dt = 1.0 / dt;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * T;
        double* orow = out.data() + r * (T - 1);
        for (std::size_t t = 0; t + 1 < T; ++t) orow[t] = (xr[t + 1] - xr[t]) * inv_dt;
    }
    std::size_t xi = x.index();
    return x.tape()->emplace(std::move(out), {x},
                             [xi, rows, T, inv_dt](Tape& t, std::size_t self) {
                                 if (!t.needs_grad(xi)) return;
                                 const Tensor& g = t.grad_buffer(self);
                                 Tensor& gx = t.grad_buffer(xi);
                                 for (std::size_t r = 0; r < rows; ++r) {
                                     const double* gr = g.data() + r * (T - 1);
                                     double* gxr = gx.data() + r * T;
                                     for (std::size_t k = 0; k + 1 < T; ++k) {
                                         gxr[k + 1] += gr[k] * inv_dt;
                                         gxr[k] -= gr[k] * inv_dt;
                                     }
                                 }
                             });
}

Var linear(Var x, Var w, Var b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    if (xv.ndim() != 2 || wv.ndim() != 2 || bv.ndim() != 1 || xv.dim(1) != wv.dim(1) ||
        bv.dim(0) != wv.dim(0)) {
        throw ShapeError("linear: incompatible shapes x" + shape_str(xv.shape()) + " w" +
                         shape_str(wv.shape()) + " b" + shape_str(bv.shape()));
    }
    const std::size_t B = xv.dim(0), din = xv.dim(1), dout = wv.dim(0);
    Tensor out({B, dout});
    for (std::size_t i = 0; i < B; ++i) {
        const double* xr = xv.data() + i * din;
        double* orow = out.data() + i * dout;
        for (std::size_t j = 0; j < dout; ++j) {
            const double* wr = wv.data() + j * din;
            double s = bv[j];
            for (std::size_t k = 0; k < din; ++k) s += wr[k] * xr[k];
            orow[j] = s;
        }
    }
    std::size_t xi = x.index(), wi = w.index(), bi = b.index();
    return x.tape()->emplace(std::move(out), {x, w, b}, [xi, wi, bi, B, din, dout](
                                                            Tape& t, std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        const Tensor& xv = t.value_of(xi);
        const Tensor& wv = t.value_of(wi);
        if (t.needs_grad(xi)) {
            Tensor& gx = t.grad_buffer(xi);
            for (std::size_t i = 0; i < B; ++i)
                for (std::size_t j = 0; j < dout; ++j) {
                    const double gij = g[i * dout + j];
                    const double* wr = wv.data() + j * din;
                    double* gxr = gx.data() + i * din;
                    for (std::size_t k = 0; k < din; ++k) gxr[k] += gij * wr[k];
                }
        }
        if (t.needs_grad(wi)) {
            Tensor& gw = t.grad_buffer(wi);
            for (std::size_t i = 0; i < B; ++i)
                for (std::size_t j = 0; j < dout; ++j) {
                    const double gij = g[i * dout + j];
                    const double* xr = xv.data() + i * din;
                    double* gwr = gw.data() + j * din;
                    for (std::size_t k = 0; k < din; ++k) gwr[k] += gij * xr[k];
                }
        }
        if (t.needs_grad(bi)) {
            Tensor& gb = t.grad_buffer(bi);
            for (std::size_t i = 0; i < B; ++i)
                for (std::size_t j = 0; j < dout; ++j) gb[j] += g[i * dout + j];
        }
    });
}

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(av.shape()) + " and " +
                         shape_str(bv.shape()));
    }
    Shape ash = av.shape(), bsh = bv.shape();
    Var a3 = reshape(a, {1, ash[0], ash[1]});
    Var b3 = reshape(b, {1, bsh[0], bsh[1]});
    return reshape(bmm(a3, b3), {ash[0], bsh[1]});
}

Var bmm(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.ndim() < 2 || av.ndim() != bv.ndim()) throw ShapeError("bmm: rank mismatch");
    for (std::size_t d = 0; d + 2 < av.ndim(); ++d)
        if (av.dim(d) != bv.dim(d)) throw ShapeError("bmm: leading dims differ");
    const std::size_t n = av.dim(av.ndim() - 2), m = av.dim(av.ndim() - 1);
    const std::size_t m2 = bv.dim(bv.ndim() - 2), p = bv.dim(bv.ndim() - 1);
    if (m != m2)
        throw ShapeError("bmm: inner dims differ, " + shape_str(av.shape()) + " vs " +
                         shape_str(bv.shape()));
    const std::size_t batch = av.size() / (n * m);
    Shape out_shape = av.shape();
    out_shape[out_shape.size() - 1] = p;
    Tensor out(out_shape);
    for (std::size_t bt = 0; bt < batch; ++bt) {
        const double* A = av.data() + bt * n * m;
        const double* Bm = bv.data() + bt * m * p;
        double* O = out.data() + bt * n * p;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < m; ++k) {
                const double aik = A[i * m + k];
                if (aik == 0.0) continue;
                const double* br = Bm + k * p;
                double* orow = O + i * p;
                for (std::size_t j = 0; j < p; ++j) orow[j] += aik * br[j];
            }
    }
    std::size_t ai = a.index(), bi = b.index();
    return a.tape()->emplace(
        std::move(out), {a, b}, [ai, bi, batch, n, m, p](Tape& t, std::size_t self) {
            const Tensor& g = t.grad_buffer(self);
            const Tensor& av = t.value_of(ai);
            const Tensor& bv = t.value_of(bi);
            if (t.needs_grad(ai)) {
                Tensor& ga = t.grad_buffer(ai);
                // gA = g * B^T
                for (std::size_t bt = 0; bt < batch; ++bt) {
                    const double* G = g.data() + bt * n * p;
                    const double* Bm = bv.data() + bt * m * p;
                    double* GA = ga.data() + bt * n * m;
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t k = 0; k < m; ++k) {
                            const double* gr = G + i * p;
                            const double* br = Bm + k * p;
                            double s = 0.0;
                            for (std::size_t j = 0; j < p; ++j) s += gr[j] * br[j];
                            GA[i * m + k] += s;
                        }
                }
            }
            if (t.needs_grad(bi)) {
                Tensor& gb = t.grad_buffer(bi);
                // gB = A^T * g
                for (std::size_t bt = 0; bt < batch; ++bt) {
                    const double* G = g.data() + bt * n * p;
                    const double* A = av.data() + bt * n * m;
                    double* GB = gb.data() + bt * m * p;
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t k = 0; k < m; ++k) {
                            const double aik = A[i * m + k];
                            if (aik == 0.0) continue;
                            const double* gr = G + i * p;
                            double* gbr = GB + k * p;
                            for (std::size_t j = 0; j < p; ++j) gbr[j] += aik * gr[j];
                        }
                }
            }
        });
}

Var conv2d(Var x, Var k, std::array<std::size_t, 2> pad) {
    const Tensor& xv = x.value();
    const Tensor& kv = k.value();
    if (xv.ndim() != 4 || kv.ndim() != 4) throw ShapeError("conv2d: x and k must be 4-D");
    const std::size_t B = xv.dim(0), Ci = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const std::size_t Co = kv.dim(0), kh = kv.dim(2), kw = kv.dim(3);
    if (kv.dim(1) != Ci)
        throw ShapeError("conv2d: kernel channels " + std::to_string(kv.dim(1)) +
                         " != input channels " + std::to_string(Ci));
    const std::size_t ph = pad[0], pw = pad[1];
    if (kh > H + 2 * ph || kw > W + 2 * pw) {
        throw ShapeError("conv2d: kernel " + shape_str(kv.shape()) + " larger than padded input " +
                         shape_str(xv.shape()));
    }
    const std::size_t Ho = H + 2 * ph - kh + 1, Wo = W + 2 * pw - kw + 1;
    Tensor out({B, Co, Ho, Wo});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t co = 0; co < Co; ++co) {
            double* ob = out.data() + ((b * Co + co) * Ho) * Wo;
            for (std::size_t ci = 0; ci < Ci; ++ci) {
                const double* xb = xv.data() + ((b * Ci + ci) * H) * W;
                const double* kb = kv.data() + ((co * Ci + ci) * kh) * kw;
                for (std::size_t u = 0; u < kh; ++u)
                    for (std::size_t v = 0; v < kw; ++v) {
                        const double kval = kb[u * kw + v];
                        if (kval == 0.0) continue;
                        for (std::size_t i = 0; i < Ho; ++i) {
                            const std::ptrdiff_t y =
                                static_cast<std::ptrdiff_t>(i + u) - static_cast<std::ptrdiff_t>(ph);
                            if (y < 0 || y >= static_cast<std::ptrdiff_t>(H)) continue;
                            const double* xrow = xb + y * W;
                            double* orow = ob + i * Wo;
                            // valid j range: 0 <= j+v-pw < W
                            std::size_t j0 = (pw > v) ? pw - v : 0;
                            std::size_t j1 = std::min<std::size_t>(Wo, W + pw - v);
                            for (std::size_t j = j0; j < j1; ++j)
                                orow[j] += kval * xrow[j + v - pw];
                        }
                    }
            }
        }
    std::size_t xi = x.index(), ki = k.index();
    return x.tape()->emplace(
        std::move(out), {x, k},
        [xi, ki, B, Ci, H, W, Co, kh, kw, ph, pw, Ho, Wo](Tape& t, std::size_t self) {
            const Tensor& g = t.grad_buffer(self);
            const Tensor& xv = t.value_of(xi);
            const Tensor& kv = t.value_of(ki);
            const bool nx = t.needs_grad(xi), nk = t.needs_grad(ki);
            Tensor* gx = nx ? &t.grad_buffer(xi) : nullptr;
            Tensor* gk = nk ? &t.grad_buffer(ki) : nullptr;
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t co = 0; co < Co; ++co) {
                    const double* gb = g.data() + ((b * Co + co) * Ho) * Wo;
                    for (std::size_t ci = 0; ci < Ci; ++ci) {
                        const double* xb = xv.data() + ((b * Ci + ci) * H) * W;
                        const double* kb = kv.data() + ((co * Ci + ci) * kh) * kw;
                        double* gxb = nx ? gx->data() + ((b * Ci + ci) * H) * W : nullptr;
                        double* gkb = nk ? gk->data() + ((co * Ci + ci) * kh) * kw : nullptr;
                        for (std::size_t u = 0; u < kh; ++u)
                            for (std::size_t v = 0; v < kw; ++v) {
                                const double kval = kb[u * kw + v];
                                double ksum = 0.0;
                                for (std::size_t i = 0; i < Ho; ++i) {
                                    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(i + u) -
                                                             static_cast<std::ptrdiff_t>(ph);
                                    if (y < 0 || y >= static_cast<std::ptrdiff_t>(H)) continue;
                                    const double* grow = gb + i * Wo;
                                    const double* xrow = xb + y * W;
                                    double* gxrow = nx ? gxb + y * W : nullptr;
                                    std::size_t j0 = (pw > v) ? pw - v : 0;
                                    std::size_t j1 = std::min<std::size_t>(Wo, W + pw - v);
                                    for (std::size_t j = j0; j < j1; ++j) {
                                        const double gij = grow[j];
                                        if (nx) gxrow[j + v - pw] += gij * kval;
                                        if (nk) ksum += gij * xrow[j + v - pw];
                                    }
                                }
                                if (nk) gkb[u * kw + v] += ksum;
                            }
                    }
                }
        });
}

Var conv1d(Var x, Var k, std::size_t pad) {
    const Shape xs = x.value().shape();
    const Shape ks = k.value().shape();
    if (xs.size() != 3 || ks.size() != 3) throw ShapeError("conv1d: x and k must be 3-D");
    // Reuse conv2d with a unit height axis.
    Var x4 = reshape(x, {xs[0], xs[1], 1, xs[2]});
    Var k4 = reshape(k, {ks[0], ks[1], 1, ks[2]});
    Var y = conv2d(x4, k4, {0, pad});
    const Shape ys = y.value().shape();
    return reshape(y, {ys[0], ys[1], ys[3]});
}

namespace {

Var maxpool_impl(Var x, std::size_t kernel, std::size_t stride, std::size_t spatial_axes) {
    if (kernel == 0 || stride == 0) throw ParamError("maxpool: kernel and stride must be positive");
    const Tensor& xv = x.value();
    if (xv.ndim() < spatial_axes + 1) throw ShapeError("maxpool: input rank too small");
    // Trailing `spatial_axes` axes are pooled; everything before is batch-like.
    Shape out_shape = xv.shape();
    std::size_t rows = 1;
    for (std::size_t d = 0; d + spatial_axes < xv.ndim(); ++d) rows *= xv.dim(d);
    std::size_t in_dims[2] = {1, 1}, out_dims[2] = {1, 1};
    for (std::size_t a = 0; a < spatial_axes; ++a) {
        const std::size_t d = xv.ndim() - spatial_axes + a;
        in_dims[a] = xv.dim(d);
        if (in_dims[a] < kernel)
            throw ShapeError("maxpool: window " + std::to_string(kernel) +
                             " does not fit axis of length " + std::to_string(in_dims[a]));
        out_dims[a] = (in_dims[a] - kernel) / stride + 1;
        out_shape[d] = out_dims[a];
    }
    if (spatial_axes == 1) {
        in_dims[1] = in_dims[0];
        out_dims[1] = out_dims[0];
        in_dims[0] = out_dims[0] = 1;
    }
    const std::size_t IH = in_dims[0], IW = in_dims[1], OH = out_dims[0], OW = out_dims[1];
    Tensor out(out_shape);
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xb = xv.data() + r * IH * IW;
        double* ob = out.data() + r * OH * OW;
        std::size_t* ab = argmax.data() + r * OH * OW;
        for (std::size_t i = 0; i < OH; ++i)
            for (std::size_t j = 0; j < OW; ++j) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_at = 0;
                for (std::size_t u = 0; u < (spatial_axes == 2 ? kernel : 1); ++u)
                    for (std::size_t v = 0; v < kernel; ++v) {
                        const std::size_t at = (i * stride + u) * IW + j * stride + v;
                        if (xb[at] > best) {  // strict: ties keep the lowest flat index
                            best = xb[at];
                            best_at = at;
                        }
                    }
                ob[i * OW + j] = best;
                ab[i * OW + j] = best_at;
            }
    }
    std::size_t xi = x.index();
    const std::size_t in_block = IH * IW, out_block = OH * OW;
    return x.tape()->emplace(std::move(out), {x},
                             [xi, rows, in_block, out_block, argmax = std::move(argmax)](
                                 Tape& t, std::size_t self) {
                                 if (!t.needs_grad(xi)) return;
                                 const Tensor& g = t.grad_buffer(self);
                                 Tensor& gx = t.grad_buffer(xi);
                                 for (std::size_t r = 0; r < rows; ++r)
                                     for (std::size_t o = 0; o < out_block; ++o)
                                         gx[r * in_block + argmax[r * out_block + o]] +=
                                             g[r * out_block + o];
                             });
}

}  // namespace

Var maxpool2d(Var x, std::size_t kernel, std::size_t stride) {
    return maxpool_impl(x, kernel, stride, 2);
}

Var maxpool1d(Var x, std::size_t kernel, std::size_t stride) {
    return maxpool_impl(x, kernel, stride, 1);
}

Var relu(Var x) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    std::size_t xi = x.index();
    return x.tape()->emplace(std::move(out), {x}, [xi](Tape& t, std::size_t self) {
        if (!t.needs_grad(xi)) return;
        const Tensor& g = t.grad_buffer(self);
        const Tensor& xv = t.value_of(xi);
        Tensor& gx = t.grad_buffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv[i] > 0.0) gx[i] += g[i];
    });
}

Var softmax_lastaxis(Var x) {
    const Tensor& xv = x.value();
    if (xv.ndim() < 1) throw ShapeError("softmax: rank must be >= 1");
    const std::size_t D = xv.dim(xv.ndim() - 1);
    const std::size_t rows = xv.size() / D;
    Tensor out(xv.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * D;
        double* orow = out.data() + r * D;
        double m = xr[0];
        for (std::size_t i = 1; i < D; ++i) m = std::max(m, xr[i]);
        double s = 0.0;
        for (std::size_t i = 0; i < D; ++i) {
            orow[i] = std::exp(xr[i] - m);
            s += orow[i];
        }
        const double inv = 1.0 / s;
        for (std::size_t i = 0; i < D; ++i) orow[i] *= inv;
    }
    std::size_t xi = x.index();
    return x.tape()->emplace(std::move(out), {x}, [xi, rows, D](Tape& t, std::size_t self) {
        if (!t.needs_grad(xi)) return;
        const Tensor& g = t.grad_buffer(self);
        const Tensor& y = t.value_of(self);
        Tensor& gx = t.grad_buffer(xi);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = g.data() + r * D;
            const double* yr = y.data() + r * D;
            double dot = 0.0;
            for (std::size_t i = 0; i < D; ++i) dot += gr[i] * yr[i];
            double* gxr = gx.data() + r * D;
            for (std::size_t i = 0; i < D; ++i) gxr[i] += (gr[i] - dot) * yr[i];
        }
    });
}

Var layernorm(Var x, Var gamma, Var beta, double eps) {
    const Tensor& xv = x.value();
    if (xv.ndim() < 1) throw ShapeError("layernorm: rank must be >= 1");
    const std::size_t D = xv.dim(xv.ndim() - 1);
    if (D < 1) throw ShapeError("layernorm: normalized axis must have length >= 1");
    const Tensor& gv = gamma.value();
    const Tensor& bv = beta.value();
    if (gv.size() != D || bv.size() != D)
        throw ShapeError("layernorm: scale/shift must have length " + std::to_string(D));
    const std::size_t rows = xv.size() / D;
    Tensor out(xv.shape());
    std::vector<double> inv_std(rows);
    std::vector<double> xhat(xv.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * D;
        double mean = 0.0;
        for (std::size_t i = 0; i < D; ++i) mean += xr[i];
        mean /= static_cast<double>(D);
        double var = 0.0;
        for (std::size_t i = 0; i < D; ++i) {
            const double d = xr[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(D);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        double* orow = out.data() + r * D;
        double* xh = xhat.data() + r * D;
        for (std::size_t i = 0; i < D; ++i) {
            xh[i] = (xr[i] - mean) * is;
            orow[i] = gv[i] * xh[i] + bv[i];
        }
    }
    std::size_t xi = x.index(), gi = gamma.index(), bi = beta.index();
    return x.tape()->emplace(
        std::move(out), {x, gamma, beta},
        [xi, gi, bi, rows, D, inv_std = std::move(inv_std), xhat = std::move(xhat)](
            Tape& t, std::size_t self) {
            const Tensor& g = t.grad_buffer(self);
            const Tensor& gv = t.value_of(gi);
            if (t.needs_grad(gi)) {
                Tensor& gg = t.grad_buffer(gi);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t i = 0; i < D; ++i) gg[i] += g[r * D + i] * xhat[r * D + i];
            }
            if (t.needs_grad(bi)) {
                Tensor& gb = t.grad_buffer(bi);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t i = 0; i < D; ++i) gb[i] += g[r * D + i];
            }
            if (t.needs_grad(xi)) {
                Tensor& gx = t.grad_buffer(xi);
                const double invD = 1.0 / static_cast<double>(D);
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* gr = g.data() + r * D;
                    const double* xh = xhat.data() + r * D;
                    double sum_gy = 0.0, sum_gyxh = 0.0;
                    for (std::size_t i = 0; i < D; ++i) {
                        const double gy = gr[i] * gv[i];
                        sum_gy += gy;
                        sum_gyxh += gy * xh[i];
                    }
                    double* gxr = gx.data() + r * D;
                    for (std::size_t i = 0; i < D; ++i) {
                        const double gy = gr[i] * gv[i];
                        gxr[i] += inv_std[r] * (gy - invD * sum_gy - invD * xh[i] * sum_gyxh);
                    }
                }
            }
        });
}

Var batchnorm(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var, bool train,
              double momentum, double eps) {
    const Tensor& xv = x.value();
    if (xv.ndim() < 2) throw ShapeError("batchnorm: rank must be >= 2 ([N,C,...])");
    const std::size_t N = xv.dim(0), C = xv.dim(1);
    if (C < 1) throw ShapeError("batchnorm: channel axis must have length >= 1");
    std::size_t inner = 1;
    for (std::size_t d = 2; d < xv.ndim(); ++d) inner *= xv.dim(d);
    const Tensor& gv = gamma.value();
    const Tensor& bv = beta.value();
    if (gv.size() != C || bv.size() != C || running_mean.size() != C || running_var.size() != C)
        throw ShapeError("batchnorm: per-channel buffers must have length " + std::to_string(C));

    const std::size_t M = N * inner;  // samples per channel
    std::vector<double> mean(C), inv_std(C);
    if (train) {
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const double* xr = xv.data() + (n * C + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) s += xr[i];
            }
            const double mu = s / static_cast<double>(M);
            double var = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const double* xr = xv.data() + (n * C + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) {
                    const double d = xr[i] - mu;
                    var += d * d;
                }
            }
            var /= static_cast<double>(M);  // biased, used for normalization
            mean[c] = mu;
            inv_std[c] = 1.0 / std::sqrt(var + eps);
            const double unbiased = M > 1 ? var * static_cast<double>(M) / (M - 1.0) : var;
            running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mu;
            running_var[c] = (1.0 - momentum) * running_var[c] + momentum * unbiased;
        }
    } else {
        for (std::size_t c = 0; c < C; ++c) {
            mean[c] = running_mean[c];
            inv_std[c] = 1.0 / std::sqrt(running_var[c] + eps);
        }
    }
    Tensor out(xv.shape());
    std::vector<double> xhat;
    if (train) xhat.resize(xv.size());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const double* xr = xv.data() + (n * C + c) * inner;
            double* orow = out.data() + (n * C + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
                const double xh = (xr[i] - mean[c]) * inv_std[c];
                if (train) xhat[(n * C + c) * inner + i] = xh;
                orow[i] = gv[c] * xh + bv[c];
            }
        }
    std::size_t xi = x.index(), gi = gamma.index(), bi = beta.index();
    if (train) {
        return x.tape()->emplace(
            std::move(out), {x, gamma, beta},
            [xi, gi, bi, N, C, inner, M, inv_std = std::move(inv_std),
             xhat = std::move(xhat)](Tape& t, std::size_t self) {
                const Tensor& g = t.grad_buffer(self);
                const Tensor& gv = t.value_of(gi);
                // Per-channel sums used by every input-gradient term.
                std::vector<double> sum_g(C, 0.0), sum_gxh(C, 0.0);
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t c = 0; c < C; ++c) {
                        const double* gr = g.data() + (n * C + c) * inner;
                        const double* xh = xhat.data() + (n * C + c) * inner;
                        for (std::size_t i = 0; i < inner; ++i) {
                            sum_g[c] += gr[i];
                            sum_gxh[c] += gr[i] * xh[i];
                        }
                    }
                if (t.needs_grad(gi)) {
                    Tensor& gg = t.grad_buffer(gi);
                    for (std::size_t c = 0; c < C; ++c) gg[c] += sum_gxh[c];
                }
                if (t.needs_grad(bi)) {
                    Tensor& gb = t.grad_buffer(bi);
                    for (std::size_t c = 0; c < C; ++c) gb[c] += sum_g[c];
                }
                if (t.needs_grad(xi)) {
                    Tensor& gx = t.grad_buffer(xi);
                    const double invM = 1.0 / static_cast<double>(M);
                    for (std::size_t n = 0; n < N; ++n)
                        for (std::size_t c = 0; c < C; ++c) {
                            const double* gr = g.data() + (n * C + c) * inner;
                            const double* xh = xhat.data() + (n * C + c) * inner;
                            double* gxr = gx.data() + (n * C + c) * inner;
                            const double k = gv[c] * inv_std[c];
                            for (std::size_t i = 0; i < inner; ++i)
                                gxr[i] += k * (gr[i] - invM * sum_g[c] -
                                               invM * xh[i] * sum_gxh[c]);
                        }
                }
            });
    }
    // Eval mode: running statistics are constants.
    return x.tape()->emplace(
        std::move(out), {x, gamma, beta},
        [xi, gi, bi, N, C, inner, mean = std::move(mean), inv_std = std::move(inv_std)](
            Tape& t, std::size_t self) {
            const Tensor& g = t.grad_buffer(self);
            const Tensor& xv = t.value_of(xi);
            const Tensor& gv = t.value_of(gi);
            if (t.needs_grad(gi)) {
                Tensor& gg = t.grad_buffer(gi);
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t c = 0; c < C; ++c) {
                        const double* gr = g.data() + (n * C + c) * inner;
                        const double* xr = xv.data() + (n * C + c) * inner;
                        for (std::size_t i = 0; i < inner; ++i)
                            gg[c] += gr[i] * (xr[i] - mean[c]) * inv_std[c];
                    }
            }
            if (t.needs_grad(bi)) {
                Tensor& gb = t.grad_buffer(bi);
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t c = 0; c < C; ++c) {
                        const double* gr = g.data() + (n * C + c) * inner;
                        for (std::size_t i = 0; i < inner; ++i) gb[c] += gr[i];
                    }
            }
            if (t.needs_grad(xi)) {
                Tensor& gx = t.grad_buffer(xi);
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t c = 0; c < C; ++c) {
                        const double* gr = g.data() + (n * C + c) * inner;
                        double* gxr = gx.data() + (n * C + c) * inner;
                        const double k = gv[c] * inv_std[c];
                        for (std::size_t i = 0; i < inner; ++i) gxr[i] += k * gr[i];
                    }
            }
        });
}

Var dropout(Var x, double rate, RandomSource& rng, bool train) {
    if (rate < 0.0 || rate >= 1.0)
        throw ParamError("dropout: rate must be in [0,1), got " + std::to_string(rate));
    const Tensor& xv = x.value();
    if (!train || rate == 0.0) {
        // Identity; still recorded so gradients flow.
        return affine(x, 1.0, 0.0);
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(xv.size());
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        mask[i] = rng.uniform01() < rate ? 0.0 : keep_scale;
        out[i] = xv[i] * mask[i];
    }
    std::size_t xi = x.index();
    return x.tape()->emplace(std::move(out), {x},
                             [xi, mask = std::move(mask)](Tape& t, std::size_t self) {
                                 if (!t.needs_grad(xi)) return;
                                 const Tensor& g = t.grad_buffer(self);
                                 Tensor& gx = t.grad_buffer(xi);
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                     gx[i] += g[i] * mask[i];
                             });
}

Var cross_entropy(Var logits, const std::vector<std::size_t>& labels) {
    const Tensor& lv = logits.value();
    if (lv.ndim() != 2) throw ShapeError("cross_entropy: logits must be [B,K]");
    const std::size_t B = lv.dim(0), K = lv.dim(1);
    if (labels.size() != B)
        throw DataError("cross_entropy: got " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(B) + " rows");
    for (std::size_t i = 0; i < B; ++i)
        if (labels[i] >= K)
            throw DataError("cross_entropy: label " + std::to_string(labels[i]) +
                            " out of range [0," + std::to_string(K) + ")");
    // Max-stabilized log-softmax; keep softmax rows for the backward rule.
    std::vector<double> probs(lv.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        const double* lr = lv.data() + i * K;
        double m = lr[0];
        for (std::size_t k = 1; k < K; ++k) m = std::max(m, lr[k]);
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            probs[i * K + k] = std::exp(lr[k] - m);
            s += probs[i * K + k];
        }
        const double inv = 1.0 / s;
        for (std::size_t k = 0; k < K; ++k) probs[i * K + k] *= inv;
        loss -= (lr[labels[i]] - m) - std::log(s);
    }
    loss /= static_cast<double>(B);
    std::size_t li = logits.index();
    return logits.tape()->emplace(
        Tensor::scalar(loss), {logits},
        [li, B, K, labels, probs = std::move(probs)](Tape& t, std::size_t self) {
            if (!t.needs_grad(li)) return;
            const double g = t.grad_buffer(self)[0] / static_cast<double>(B);
            Tensor& gl = t.grad_buffer(li);
            for (std::size_t i = 0; i < B; ++i)
                for (std::size_t k = 0; k < K; ++k)
                    gl[i * K + k] += g * (probs[i * K + k] - (labels[i] == k ? 1.0 : 0.0));
        });
}

}  // namespace neurophys
