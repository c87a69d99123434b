#include "restolab/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace restolab::ops {

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a->value.shape_str() + " vs " + b->value.shape_str());
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

int reflect_index(int i, int n) {
    // reflect-101: -1 -> 1, n -> n-2; degenerate n==1 clamps to 0
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

} // namespace

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out(a->value.shape());
    for (int i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        for (int p = 0; p < 2; ++p) {
            Node& par = *n.parents[p];
            if (!par.requires_grad) continue;
            Tensor& g = par.ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a->value.shape());
    for (int i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a->value.shape());
    for (int i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            Tensor& g = pa.ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            Tensor& g = pb.ensure_grad();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa.value[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out(a->value.shape());
    for (int i = 0; i < out.size(); ++i) out[i] = a->value[i] * s;
    return make_op(std::move(out), {a}, [s](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * s;
    });
}

Var add_const(const Var& a, double s) {
    Tensor out(a->value.shape());
    for (int i = 0; i < out.size(); ++i) out[i] = a->value[i] + s;
    return make_op(std::move(out), {a}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

Var mul_scalar_var(const Var& x, const Var& s) {
    if (s->value.size() != 1)
        throw std::invalid_argument("mul_scalar_var: s must be scalar");
    const double sv = s->value[0];
    Tensor out(x->value.shape());
    for (int i = 0; i < out.size(); ++i) out[i] = x->value[i] * sv;
    return make_op(std::move(out), {x, s}, [](Node& n) {
        Node& px = *n.parents[0];
        Node& ps = *n.parents[1];
        if (px.requires_grad) {
            Tensor& g = px.ensure_grad();
            const double sv = ps.value[0];
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * sv;
        }
        if (ps.requires_grad) {
            Tensor& g = ps.ensure_grad();
            double acc = 0.0;
            for (int i = 0; i < px.value.size(); ++i) acc += n.grad[i] * px.value[i];
            g[0] += acc;
        }
    });
}

Var div_vars(const Var& a, const Var& b) {
    if (a->value.size() != 1 || b->value.size() != 1)
        throw std::invalid_argument("div_vars: scalar operands required");
    Tensor out = Tensor::scalar(a->value[0] / b->value[0]);
    return make_op(std::move(out), {a, b}, [](Node& n) {
        const double av = n.parents[0]->value[0];
        const double bv = n.parents[1]->value[0];
        const double g = n.grad[0];
        if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad()[0] += g / bv;
        if (n.parents[1]->requires_grad)
            n.parents[1]->ensure_grad()[0] -= g * av / (bv * bv);
    });
}

Var matmul(const Var& a, const Var& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 ||
        a->value.dim(1) != b->value.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " +
                                    a->value.shape_str() + " x " + b->value.shape_str());
    const int m = a->value.dim(0), k = a->value.dim(1), nn = b->value.dim(1);
    Tensor out({m, nn});
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double av = a->value.at(i, p);
            if (av == 0.0) continue;
            for (int j = 0; j < nn; ++j) out.at(i, j) += av * b->value.at(p, j);
        }
    return make_op(std::move(out), {a, b}, [m, k, nn](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            Tensor& g = pa.ensure_grad(); // dA = dOut * B^T
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < nn; ++j) {
                    const double go = n.grad.at(i, j);
                    if (go == 0.0) continue;
                    for (int p = 0; p < k; ++p) g.at(i, p) += go * pb.value.at(p, j);
                }
        }
        if (pb.requires_grad) {
            Tensor& g = pb.ensure_grad(); // dB = A^T * dOut
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    const double av = pa.value.at(i, p);
                    if (av == 0.0) continue;
                    for (int j = 0; j < nn; ++j) g.at(p, j) += av * n.grad.at(i, j);
                }
        }
    });
}

Var transpose(const Var& a) {
    if (a->value.rank() != 2) throw std::invalid_argument("transpose: matrix required");
    const int m = a->value.dim(0), nn = a->value.dim(1);
    Tensor out({nn, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < nn; ++j) out.at(j, i) = a->value.at(i, j);
    return make_op(std::move(out), {a}, [m, nn](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < nn; ++j) g.at(i, j) += n.grad.at(j, i);
    });
}

Var reshape(const Var& a, std::vector<int> shape) {
    Tensor out = a->value.reshaped(std::move(shape));
    return make_op(std::move(out), {a}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

Var slice0(const Var& a, int begin, int end) {
    const auto& sh = a->value.shape();
    if (sh.empty() || begin < 0 || end > sh[0] || begin >= end)
        throw std::invalid_argument("slice0: bad range");
    int inner = 1;
    for (size_t i = 1; i < sh.size(); ++i) inner *= sh[i];
    std::vector<int> out_shape = sh;
    out_shape[0] = end - begin;
    Tensor out(out_shape);
    for (int i = 0; i < out.size(); ++i) out[i] = a->value[begin * inner + i];
    return make_op(std::move(out), {a}, [begin, inner](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int i = 0; i < n.grad.size(); ++i) g[begin * inner + i] += n.grad[i];
    });
}

Var concat0(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat0: empty input");
    std::vector<int> sh = parts[0]->value.shape();
    if (sh.empty()) throw std::invalid_argument("concat0: scalars not supported");
    int total0 = 0;
    for (const auto& p : parts) {
        const auto& psh = p->value.shape();
        if (psh.size() != sh.size())
            throw std::invalid_argument("concat0: rank mismatch");
        for (size_t i = 1; i < sh.size(); ++i)
            if (psh[i] != sh[i]) throw std::invalid_argument("concat0: inner shape mismatch");
        total0 += psh[0];
    }
    sh[0] = total0;
    Tensor out(sh);
    int off = 0;
    for (const auto& p : parts) {
        for (int i = 0; i < p->value.size(); ++i) out[off + i] = p->value[i];
        off += p->value.size();
    }
    return make_op(std::move(out), parts, [](Node& n) {
        int off = 0;
        for (auto& p : n.parents) {
            if (p->requires_grad) {
                Tensor& g = p->ensure_grad();
                for (int i = 0; i < g.size(); ++i) g[i] += n.grad[off + i];
            }
            off += p->value.size();
        }
    });
}

Var gelu(const Var& x) {
    Tensor out(x->value.shape());
    for (int i = 0; i < out.size(); ++i) {
        const double v = x->value[i];
        out[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    return make_op(std::move(out), {x}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int i = 0; i < g.size(); ++i) {
            const double v = n.parents[0]->value[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            g[i] += n.grad[i] * (cdf + v * pdf);
        }
    });
}

Var softmax_rows(const Var& x) {
    if (x->value.rank() != 2) throw std::invalid_argument("softmax_rows: matrix required");
    const int m = x->value.dim(0), nn = x->value.dim(1);
    Tensor out({m, nn});
    for (int i = 0; i < m; ++i) {
        double mx = x->value.at(i, 0);
        for (int j = 1; j < nn; ++j) mx = std::max(mx, x->value.at(i, j));
        double denom = 0.0;
        for (int j = 0; j < nn; ++j) {
            const double e = std::exp(x->value.at(i, j) - mx);
            out.at(i, j) = e;
            denom += e;
        }
        for (int j = 0; j < nn; ++j) out.at(i, j) /= denom;
    }
    return make_op(std::move(out), {x}, [m, nn](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int i = 0; i < m; ++i) {
            double dot = 0.0;
            for (int j = 0; j < nn; ++j) dot += n.grad.at(i, j) * n.value.at(i, j);
            for (int j = 0; j < nn; ++j)
                g.at(i, j) += n.value.at(i, j) * (n.grad.at(i, j) - dot);
        }
    });
}

Var softmax_vec(const Var& x) {
    if (x->value.rank() != 1) throw std::invalid_argument("softmax_vec: vector required");
    const int nn = x->value.dim(0);
    Var sm = softmax_rows(reshape(x, {1, nn}));
    return reshape(sm, {nn});
}

namespace {

// Shared layernorm kernel: normalizes `groups` independent slices of length
// `len`, strided so entries of a slice sit `stride` apart starting at `base`.
struct NormLayout {
    int groups, len, stride, group_stride;
};

Var layernorm_impl(const Var& x, const Var& gamma, const Var& beta, NormLayout L) {
    constexpr double eps = 1e-6;
    if (gamma->value.size() != L.len || beta->value.size() != L.len)
        throw std::invalid_argument("layernorm: affine parameter size mismatch");
    Tensor out(x->value.shape());
    std::vector<double> means(L.groups), inv_stds(L.groups);
    for (int gidx = 0; gidx < L.groups; ++gidx) {
        const int base = gidx * L.group_stride;
        double mu = 0.0;
        for (int j = 0; j < L.len; ++j) mu += x->value[base + j * L.stride];
        mu /= L.len;
        double var = 0.0;
        for (int j = 0; j < L.len; ++j) {
            const double d = x->value[base + j * L.stride] - mu;
            var += d * d;
        }
        var /= L.len;
        const double istd = 1.0 / std::sqrt(var + eps);
        means[gidx] = mu;
        inv_stds[gidx] = istd;
        for (int j = 0; j < L.len; ++j) {
            const double xhat = (x->value[base + j * L.stride] - mu) * istd;
            out[base + j * L.stride] = xhat * gamma->value[j] + beta->value[j];
        }
    }
    return make_op(std::move(out), {x, gamma, beta},
                   [L, means = std::move(means), inv_stds = std::move(inv_stds)](Node& n) {
        Node& px = *n.parents[0];
        Node& pg = *n.parents[1];
        Node& pb = *n.parents[2];
        Tensor* gx = px.requires_grad ? &px.ensure_grad() : nullptr;
        Tensor* gg = pg.requires_grad ? &pg.ensure_grad() : nullptr;
        Tensor* gb = pb.requires_grad ? &pb.ensure_grad() : nullptr;
        for (int gidx = 0; gidx < L.groups; ++gidx) {
            const int base = gidx * L.group_stride;
            const double mu = means[gidx], istd = inv_stds[gidx];
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int j = 0; j < L.len; ++j) {
                const int idx = base + j * L.stride;
                const double xhat = (px.value[idx] - mu) * istd;
                const double dy = n.grad[idx] * pg.value[j];
                sum_dy += dy;
                sum_dy_xhat += dy * xhat;
                if (gg) (*gg)[j] += n.grad[idx] * xhat;
                if (gb) (*gb)[j] += n.grad[idx];
            }
            if (gx) {
                for (int j = 0; j < L.len; ++j) {
                    const int idx = base + j * L.stride;
                    const double xhat = (px.value[idx] - mu) * istd;
                    const double dy = n.grad[idx] * pg.value[j];
                    (*gx)[idx] +=
                        istd * (dy - sum_dy / L.len - xhat * sum_dy_xhat / L.len);
                }
            }
        }
    });
}

} // namespace

Var layernorm_rows(const Var& x, const Var& gamma, const Var& beta) {
    if (x->value.rank() != 2) throw std::invalid_argument("layernorm_rows: matrix required");
    const int N = x->value.dim(0), D = x->value.dim(1);
    return layernorm_impl(x, gamma, beta, {N, D, 1, D});
}

Var layernorm_chw(const Var& x, const Var& gamma, const Var& beta) {
    if (x->value.rank() != 3) throw std::invalid_argument("layernorm_chw: CHW required");
    const int C = x->value.dim(0), HW = x->value.dim(1) * x->value.dim(2);
    return layernorm_impl(x, gamma, beta, {HW, C, HW, 1});
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, PadMode pad) {
    if (x->value.rank() != 3 || w->value.rank() != 4)
        throw std::invalid_argument("conv2d: expected CHW input and OIKK weight");
    const int cin = x->value.dim(0), h = x->value.dim(1), ww = x->value.dim(2);
    const int cout = w->value.dim(0), k = w->value.dim(2);
    if (w->value.dim(1) != cin || w->value.dim(3) != k)
        throw std::invalid_argument("conv2d: weight shape mismatch");
    if (k % 2 == 0) throw std::invalid_argument("conv2d: even kernel size");
    if (b && b->value.size() != cout)
        throw std::invalid_argument("conv2d: bias size mismatch");
    const int p = k / 2;
    const int oh = (h + 2 * p - k) / stride + 1;
    const int ow = (ww + 2 * p - k) / stride + 1;

    Tensor out({cout, oh, ow});
    const double* xd = x->value.data();
    const double* wd = w->value.data();
    for (int oc = 0; oc < cout; ++oc) {
        for (int ic = 0; ic < cin; ++ic) {
            const double* wslab = wd + (oc * cin + ic) * k * k;
            const double* xslab = xd + ic * h * ww;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (int ky = 0; ky < k; ++ky) {
                        int iy = oy * stride - p + ky;
                        if (pad == PadMode::Reflect) iy = reflect_index(iy, h);
                        else if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            int ix = ox * stride - p + kx;
                            if (pad == PadMode::Reflect) ix = reflect_index(ix, ww);
                            else if (ix < 0 || ix >= ww) continue;
                            acc += wslab[ky * k + kx] * xslab[iy * ww + ix];
                        }
                    }
                    out.at(oc, oy, ox) += acc;
                }
        }
        if (b)
            for (int i = 0; i < oh * ow; ++i) out[oc * oh * ow + i] += b->value[oc];
    }

    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_op(std::move(out), std::move(parents),
                   [cin, h, ww, cout, k, p, oh, ow, stride, pad](Node& n) {
        Node& px = *n.parents[0];
        Node& pw = *n.parents[1];
        Tensor* gx = px.requires_grad ? &px.ensure_grad() : nullptr;
        Tensor* gw = pw.requires_grad ? &pw.ensure_grad() : nullptr;
        Tensor* gb = nullptr;
        if (n.parents.size() == 3 && n.parents[2]->requires_grad)
            gb = &n.parents[2]->ensure_grad();
        for (int oc = 0; oc < cout; ++oc) {
            if (gb) {
                double acc = 0.0;
                for (int i = 0; i < oh * ow; ++i) acc += n.grad[oc * oh * ow + i];
                (*gb)[oc] += acc;
            }
            for (int ic = 0; ic < cin; ++ic) {
                const double* wslab = pw.value.data() + (oc * cin + ic) * k * k;
                const double* xslab = px.value.data() + ic * h * ww;
                double* gxslab = gx ? gx->data() + ic * h * ww : nullptr;
                double* gwslab = gw ? gw->data() + (oc * cin + ic) * k * k : nullptr;
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox) {
                        const double go = n.grad.at(oc, oy, ox);
                        if (go == 0.0) continue;
                        for (int ky = 0; ky < k; ++ky) {
                            int iy = oy * stride - p + ky;
                            if (pad == PadMode::Reflect) iy = reflect_index(iy, h);
                            else if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                int ix = ox * stride - p + kx;
                                if (pad == PadMode::Reflect) ix = reflect_index(ix, ww);
                                else if (ix < 0 || ix >= ww) continue;
                                if (gxslab) gxslab[iy * ww + ix] += go * wslab[ky * k + kx];
                                if (gwslab) gwslab[ky * k + kx] += go * xslab[iy * ww + ix];
                            }
                        }
                    }
            }
        }
    });
}

Var global_avg_pool(const Var& x) {
    if (x->value.rank() != 3) throw std::invalid_argument("global_avg_pool: CHW required");
    const int c = x->value.dim(0), hw = x->value.dim(1) * x->value.dim(2);
    Tensor out({c});
    for (int i = 0; i < c; ++i) {
        double acc = 0.0;
        for (int j = 0; j < hw; ++j) acc += x->value[i * hw + j];
        out[i] = acc / hw;
    }
    return make_op(std::move(out), {x}, [c, hw](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int i = 0; i < c; ++i) {
            const double go = n.grad[i] / hw;
            for (int j = 0; j < hw; ++j) g[i * hw + j] += go;
        }
    });
}

Var bilinear_resize(const Var& x, int out_h, int out_w) {
    if (x->value.rank() != 3) throw std::invalid_argument("bilinear_resize: CHW required");
    if (out_h <= 0 || out_w <= 0)
        throw std::invalid_argument("bilinear_resize: non-positive target size");
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    const double sy = out_h > 1 ? double(h - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? double(w - 1) / (out_w - 1) : 0.0;
    Tensor out({c, out_h, out_w});
    for (int oy = 0; oy < out_h; ++oy) {
        const double fy = oy * sy;
        const int y0 = std::min(int(fy), h - 1), y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            const double fx = ox * sx;
            const int x0 = std::min(int(fx), w - 1), x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - x0;
            for (int ci = 0; ci < c; ++ci) {
                out.at(ci, oy, ox) =
                    (1 - wy) * ((1 - wx) * x->value.at(ci, y0, x0) + wx * x->value.at(ci, y0, x1)) +
                    wy * ((1 - wx) * x->value.at(ci, y1, x0) + wx * x->value.at(ci, y1, x1));
            }
        }
    }
    return make_op(std::move(out), {x}, [c, h, w, out_h, out_w, sy, sx](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int oy = 0; oy < out_h; ++oy) {
            const double fy = oy * sy;
            const int y0 = std::min(int(fy), h - 1), y1 = std::min(y0 + 1, h - 1);
            const double wy = fy - y0;
            for (int ox = 0; ox < out_w; ++ox) {
                const double fx = ox * sx;
                const int x0 = std::min(int(fx), w - 1), x1 = std::min(x0 + 1, w - 1);
                const double wx = fx - x0;
                for (int ci = 0; ci < c; ++ci) {
                    const double go = n.grad.at(ci, oy, ox);
                    g.at(ci, y0, x0) += go * (1 - wy) * (1 - wx);
                    g.at(ci, y0, x1) += go * (1 - wy) * wx;
                    g.at(ci, y1, x0) += go * wy * (1 - wx);
                    g.at(ci, y1, x1) += go * wy * wx;
                }
            }
        }
    });
}

Var pixel_shuffle(const Var& x, int r) {
    if (x->value.rank() != 3 || x->value.dim(0) % (r * r) != 0)
        throw std::invalid_argument("pixel_shuffle: channel count not divisible by r^2");
    const int c = x->value.dim(0) / (r * r), h = x->value.dim(1), w = x->value.dim(2);
    Tensor out({c, h * r, w * r});
    for (int ci = 0; ci < c; ++ci)
        for (int dy = 0; dy < r; ++dy)
            for (int dx = 0; dx < r; ++dx)
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx)
                        out.at(ci, y * r + dy, xx * r + dx) =
                            x->value.at((ci * r + dy) * r + dx, y, xx);
    return make_op(std::move(out), {x}, [c, h, w, r](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int ci = 0; ci < c; ++ci)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx)
                    for (int y = 0; y < h; ++y)
                        for (int xx = 0; xx < w; ++xx)
                            g.at((ci * r + dy) * r + dx, y, xx) +=
                                n.grad.at(ci, y * r + dy, xx * r + dx);
    });
}

Var patchify(const Var& x, int p) {
    if (x->value.rank() != 3 || x->value.dim(1) % p != 0 || x->value.dim(2) % p != 0)
        throw std::invalid_argument("patchify: spatial dims must be divisible by patch size");
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    const int gh = h / p, gw = w / p, d = c * p * p;
    Tensor out({gh * gw, d});
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx)
            for (int ci = 0; ci < c; ++ci)
                for (int py = 0; py < p; ++py)
                    for (int px = 0; px < p; ++px)
                        out.at(gy * gw + gx, (ci * p + py) * p + px) =
                            x->value.at(ci, gy * p + py, gx * p + px);
    return make_op(std::move(out), {x}, [c, p, gh, gw](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int gy = 0; gy < gh; ++gy)
            for (int gx = 0; gx < gw; ++gx)
                for (int ci = 0; ci < c; ++ci)
                    for (int py = 0; py < p; ++py)
                        for (int px = 0; px < p; ++px)
                            g.at(ci, gy * p + py, gx * p + px) +=
                                n.grad.at(gy * gw + gx, (ci * p + py) * p + px);
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    const int out_dim = w->value.dim(0), in_dim = w->value.dim(1);
    if (b && b->value.size() != out_dim)
        throw std::invalid_argument("linear: bias size mismatch");
    const bool vec = x->value.rank() == 1;
    const int m = vec ? 1 : x->value.dim(0);
    if ((vec ? x->value.dim(0) : x->value.dim(1)) != in_dim)
        throw std::invalid_argument("linear: input width mismatch");
    Tensor out(vec ? std::vector<int>{out_dim} : std::vector<int>{m, out_dim});
    for (int i = 0; i < m; ++i)
        for (int o = 0; o < out_dim; ++o) {
            double acc = b ? b->value[o] : 0.0;
            for (int j = 0; j < in_dim; ++j)
                acc += x->value[i * in_dim + j] * w->value.at(o, j);
            out[i * out_dim + o] = acc;
        }
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_op(std::move(out), std::move(parents), [m, out_dim, in_dim](Node& n) {
        Node& px = *n.parents[0];
        Node& pw = *n.parents[1];
        Tensor* gx = px.requires_grad ? &px.ensure_grad() : nullptr;
        Tensor* gw = pw.requires_grad ? &pw.ensure_grad() : nullptr;
        Tensor* gb = nullptr;
        if (n.parents.size() == 3 && n.parents[2]->requires_grad)
            gb = &n.parents[2]->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int o = 0; o < out_dim; ++o) {
                const double go = n.grad[i * out_dim + o];
                if (go == 0.0) continue;
                if (gb) (*gb)[o] += go;
                for (int j = 0; j < in_dim; ++j) {
                    if (gx) (*gx)[i * in_dim + j] += go * pw.value.at(o, j);
                    if (gw) (*gw).at(o, j) += go * px.value[i * in_dim + j];
                }
            }
    });
}

Var sum(const Var& x) {
    double acc = 0.0;
    for (int i = 0; i < x->value.size(); ++i) acc += x->value[i];
    return make_op(Tensor::scalar(acc), {x}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        const double go = n.grad[0];
        for (int i = 0; i < g.size(); ++i) g[i] += go;
    });
}

Var mean(const Var& x) {
    if (x->value.size() == 0) throw std::invalid_argument("mean: empty tensor");
    return scale(sum(x), 1.0 / x->value.size());
}

Var mean_abs_diff(const Var& a, const Var& b) {
    check_same_shape(a, b, "mean_abs_diff");
    const int nn = a->value.size();
    double acc = 0.0;
    for (int i = 0; i < nn; ++i) acc += std::abs(a->value[i] - b->value[i]);
    return make_op(Tensor::scalar(acc / nn), {a, b}, [nn](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        const double go = n.grad[0] / nn;
        Tensor* ga = pa.requires_grad ? &pa.ensure_grad() : nullptr;
        Tensor* gb = pb.requires_grad ? &pb.ensure_grad() : nullptr;
        for (int i = 0; i < nn; ++i) {
            const double d = pa.value[i] - pb.value[i];
            const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            if (ga) (*ga)[i] += go * s;
            if (gb) (*gb)[i] -= go * s;
        }
    });
}

} // namespace restolab::ops
