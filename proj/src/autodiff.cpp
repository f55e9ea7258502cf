#include "msrgan/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace msrgan {

namespace {

std::atomic<int64_t> g_seq{0};

std::shared_ptr<Node> make_node(Tensor value, std::vector<std::shared_ptr<Node>> parents,
                                std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->seq = g_seq.fetch_add(1);
    bool needs = false;
    for (const auto& p : parents) needs = needs || (p && p->requires_grad);
    n->requires_grad = needs;
    if (needs) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return n;
}

void check(bool cond, const char* msg) {
    if (!cond) throw ShapeMismatch(msg);
}

} // namespace

Var Var::constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->seq = g_seq.fetch_add(1);
    n->requires_grad = false;
    return Var(n);
}

Var Var::param(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->seq = g_seq.fetch_add(1);
    n->requires_grad = true;
    return Var(n);
}

void backward(const Var& loss) {
    check(loss.defined() && loss.node()->value.size() == 1, "backward expects a scalar loss");
    // Creation order is a topological order, so a reachability pass plus a
    // sort by seq descending gives the reverse sweep.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{loss.node().get()};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p && p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->seq > b->seq; });
    loss.node()->ensure_grad().fill(1);
    for (Node* n : order) {
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

// ---- convolution ----------------------------------------------------------

Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    check(xv.ndim() == 4 && wv.ndim() == 4, "conv2d expects 4-d input and weight");
    const int B = xv.dim(0), IC = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int OC = wv.dim(0), KH = wv.dim(2), KW = wv.dim(3);
    check(wv.dim(1) == IC, "conv2d channel mismatch");
    const bool has_bias = bias.defined();
    if (has_bias) check(bias.value().size() == OC, "conv2d bias size mismatch");
    const int OH = (H + 2 * pad - KH) / stride + 1;
    const int OW = (W + 2 * pad - KW) / stride + 1;
    check(OH > 0 && OW > 0, "conv2d output would be empty");

    Tensor out = Tensor::uninitialized({B, OC, OH, OW});
    const real* xp = xv.data();
    const real* wp = wv.data();
    const real* bp = has_bias ? bias.value().data() : nullptr;
    real* op = out.data();

    // Each output row accumulates in a stack buffer across all (ic, ky, kx)
    // taps and is written once; keeps the hot loop in L1.
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < B; ++b) {
        for (int oc = 0; oc < OC; ++oc) {
            real* oplane = op + (int64_t(b) * OC + oc) * OH * OW;
            const real bias_v = bp ? bp[oc] : real(0);
            std::vector<real> acc(static_cast<size_t>(OW), real(0));
            for (int oy = 0; oy < OH; ++oy) {
                for (int i = 0; i < OW; ++i) acc[size_t(i)] = bias_v;
                real* arow = acc.data();
                for (int ic = 0; ic < IC; ++ic) {
                    const real* xplane = xp + (int64_t(b) * IC + ic) * H * W;
                    const real* wk = wp + (int64_t(oc) * IC + ic) * KH * KW;
                    for (int ky = 0; ky < KH; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        const real* xrow = xplane + int64_t(iy) * W;
                        for (int kx = 0; kx < KW; ++kx) {
                            const real wvk = wk[ky * KW + kx];
                            const int off = kx - pad;
                            int ox0 = 0, ox1 = OW;
                            // valid range of ox s.t. 0 <= ox*stride + off < W
                            while (ox0 < OW && ox0 * stride + off < 0) ++ox0;
                            while (ox1 > ox0 && (ox1 - 1) * stride + off >= W) --ox1;
                            const real* xs = xrow + int64_t(ox0) * stride + off;
                            real* os = arow + ox0;
                            const int n = ox1 - ox0;
                            if (stride == 1) {
#pragma omp simd
                                for (int i = 0; i < n; ++i) os[i] += wvk * xs[i];
                            } else {
                                for (int i = 0; i < n; ++i) os[i] += wvk * xs[int64_t(i) * stride];
                            }
                        }
                    }
                }
                std::copy_n(arow, OW, oplane + int64_t(oy) * OW);
            }
        }
    }

    std::vector<std::shared_ptr<Node>> parents{x.node(), w.node()};
    if (has_bias) parents.push_back(bias.node());
    auto xn = x.node(); auto wn = w.node();
    auto bn = has_bias ? bias.node() : nullptr;

    return Var(make_node(std::move(out), std::move(parents), [=](Node& n) {
        const real* dy = n.grad.data();
        if (bn && bn->requires_grad) {
            real* db = bn->ensure_grad().data();
            for (int oc = 0; oc < OC; ++oc) {
                real acc = 0;
                for (int b = 0; b < B; ++b) {
                    const real* dplane = dy + (int64_t(b) * OC + oc) * OH * OW;
                    for (int64_t i = 0; i < int64_t(OH) * OW; ++i) acc += dplane[i];
                }
                db[oc] += acc;
            }
        }
        if (wn->requires_grad) {
            real* dw = wn->ensure_grad().data();
            const real* xp2 = xn->value.data();
#pragma omp parallel for schedule(static)
            for (int oc = 0; oc < OC; ++oc) {
                for (int ic = 0; ic < IC; ++ic) {
                    real* dwk = dw + (int64_t(oc) * IC + ic) * KH * KW;
                    for (int b = 0; b < B; ++b) {
                        const real* dplane = dy + (int64_t(b) * OC + oc) * OH * OW;
                        const real* xplane = xp2 + (int64_t(b) * IC + ic) * H * W;
                        for (int oy = 0; oy < OH; ++oy) {
                            const real* drow = dplane + int64_t(oy) * OW;
                            for (int ky = 0; ky < KH; ++ky) {
                                const int iy = oy * stride - pad + ky;
                                if (iy < 0 || iy >= H) continue;
                                const real* xrow = xplane + int64_t(iy) * W;
                                for (int kx = 0; kx < KW; ++kx) {
                                    const int off = kx - pad;
                                    int ox0 = 0, ox1 = OW;
                                    while (ox0 < OW && ox0 * stride + off < 0) ++ox0;
                                    while (ox1 > ox0 && (ox1 - 1) * stride + off >= W) --ox1;
                                    const real* xs = xrow + int64_t(ox0) * stride + off;
                                    const real* ds = drow + ox0;
                                    real acc = 0;
                                    const int cnt = ox1 - ox0;
                                    if (stride == 1) {
#pragma omp simd reduction(+ : acc)
                                        for (int i = 0; i < cnt; ++i) acc += ds[i] * xs[i];
                                    } else {
                                        for (int i = 0; i < cnt; ++i) acc += ds[i] * xs[int64_t(i) * stride];
                                    }
                                    dwk[ky * KW + kx] += acc;
                                }
                            }
                        }
                    }
                }
            }
        }
        if (xn->requires_grad) {
            real* dx = xn->ensure_grad().data();
            const real* wp2 = wn->value.data();
            if (stride == 1) {
                // Gather formulation: each dx row accumulates locally across
                // all (oc, ky, kx) taps and is flushed once.
#pragma omp parallel for collapse(2) schedule(static)
                for (int b = 0; b < B; ++b) {
                    for (int ic = 0; ic < IC; ++ic) {
                        real* dxplane = dx + (int64_t(b) * IC + ic) * H * W;
                        std::vector<real> acc(static_cast<size_t>(W), real(0));
                        for (int iy = 0; iy < H; ++iy) {
                            std::fill(acc.begin(), acc.end(), real(0));
                            real* arow = acc.data();
                            for (int oc = 0; oc < OC; ++oc) {
                                const real* dplane = dy + (int64_t(b) * OC + oc) * OH * OW;
                                const real* wk = wp2 + (int64_t(oc) * IC + ic) * KH * KW;
                                for (int ky = 0; ky < KH; ++ky) {
                                    const int oy = iy + pad - ky;
                                    if (oy < 0 || oy >= OH) continue;
                                    const real* drow = dplane + int64_t(oy) * OW;
                                    for (int kx = 0; kx < KW; ++kx) {
                                        const real wvk = wk[ky * KW + kx];
                                        const int off = kx - pad;
                                        // ix = ox + off with ox in [0, OW)
                                        const int ix0 = std::max(0, off);
                                        const int ix1 = std::min(W, OW + off);
                                        const real* ds = drow + (ix0 - off);
                                        real* as = arow + ix0;
                                        const int cnt = ix1 - ix0;
#pragma omp simd
                                        for (int i = 0; i < cnt; ++i) as[i] += wvk * ds[i];
                                    }
                                }
                            }
                            real* dxrow = dxplane + int64_t(iy) * W;
                            for (int i = 0; i < W; ++i) dxrow[i] += arow[i];
                        }
                    }
                }
            } else {
#pragma omp parallel for schedule(static)
                for (int b = 0; b < B; ++b) {
                    for (int oc = 0; oc < OC; ++oc) {
                        const real* dplane = dy + (int64_t(b) * OC + oc) * OH * OW;
                        for (int ic = 0; ic < IC; ++ic) {
                            real* dxplane = dx + (int64_t(b) * IC + ic) * H * W;
                            const real* wk = wp2 + (int64_t(oc) * IC + ic) * KH * KW;
                            for (int oy = 0; oy < OH; ++oy) {
                                const real* drow = dplane + int64_t(oy) * OW;
                                for (int ky = 0; ky < KH; ++ky) {
                                    const int iy = oy * stride - pad + ky;
                                    if (iy < 0 || iy >= H) continue;
                                    real* dxrow = dxplane + int64_t(iy) * W;
                                    for (int kx = 0; kx < KW; ++kx) {
                                        const real wvk = wk[ky * KW + kx];
                                        const int off = kx - pad;
                                        int ox0 = 0, ox1 = OW;
                                        while (ox0 < OW && ox0 * stride + off < 0) ++ox0;
                                        while (ox1 > ox0 && (ox1 - 1) * stride + off >= W) --ox1;
                                        real* xs = dxrow + int64_t(ox0) * stride + off;
                                        const real* ds = drow + ox0;
                                        const int cnt = ox1 - ox0;
                                        for (int i = 0; i < cnt; ++i) xs[int64_t(i) * stride] += wvk * ds[i];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }));
}

// ---- dense layer -----------------------------------------------------------

Var linear(const Var& x, const Var& w, const Var& bias) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    check(xv.ndim() == 2 && wv.ndim() == 2, "linear expects 2-d input and weight");
    const int B = xv.dim(0), N = xv.dim(1), M = wv.dim(0);
    check(wv.dim(1) == N, "linear dimension mismatch");
    const bool has_bias = bias.defined();
    if (has_bias) check(bias.value().size() == M, "linear bias size mismatch");

    Tensor out = Tensor::uninitialized({B, M});
    for (int b = 0; b < B; ++b) {
        const real* xr = xv.data() + int64_t(b) * N;
        real* orow = out.data() + int64_t(b) * M;
        for (int m = 0; m < M; ++m) {
            const real* wr = wv.data() + int64_t(m) * N;
            real acc = has_bias ? bias.value()[m] : real(0);
            for (int i = 0; i < N; ++i) acc += xr[i] * wr[i];
            orow[m] = acc;
        }
    }

    std::vector<std::shared_ptr<Node>> parents{x.node(), w.node()};
    if (has_bias) parents.push_back(bias.node());
    auto xn = x.node(); auto wn = w.node();
    auto bn = has_bias ? bias.node() : nullptr;
    return Var(make_node(std::move(out), std::move(parents), [=](Node& n) {
        const real* dy = n.grad.data();
        if (bn && bn->requires_grad) {
            real* db = bn->ensure_grad().data();
            for (int b = 0; b < B; ++b)
                for (int m = 0; m < M; ++m) db[m] += dy[int64_t(b) * M + m];
        }
        if (wn->requires_grad) {
            real* dw = wn->ensure_grad().data();
            const real* xp = xn->value.data();
            for (int b = 0; b < B; ++b)
                for (int m = 0; m < M; ++m) {
                    const real d = dy[int64_t(b) * M + m];
                    if (d == 0) continue;
                    const real* xr = xp + int64_t(b) * N;
                    real* wr = dw + int64_t(m) * N;
                    for (int i = 0; i < N; ++i) wr[i] += d * xr[i];
                }
        }
        if (xn->requires_grad) {
            real* dx = xn->ensure_grad().data();
            const real* wp = wn->value.data();
            for (int b = 0; b < B; ++b)
                for (int m = 0; m < M; ++m) {
                    const real d = dy[int64_t(b) * M + m];
                    if (d == 0) continue;
                    const real* wr = wp + int64_t(m) * N;
                    real* xr = dx + int64_t(b) * N;
                    for (int i = 0; i < N; ++i) xr[i] += d * wr[i];
                }
        }
    }));
}

// ---- pointwise -------------------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Var pointwise(const Var& x, Fwd fwd, Bwd dfdx_from_input) {
    const Tensor& xv = x.value();
    Tensor out = Tensor::uninitialized(xv.shape());
    const int64_t n = xv.size();
    const real* xp = xv.data();
    real* op = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) op[i] = fwd(xp[i]);
    auto xn = x.node();
    return Var(make_node(std::move(out), {x.node()}, [=](Node& node) {
        if (!xn->requires_grad) return;
        real* dx = xn->ensure_grad().data();
        const real* dy = node.grad.data();
        const real* xv2 = xn->value.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) dx[i] += dy[i] * dfdx_from_input(xv2[i]);
    }));
}

} // namespace

Var relu(const Var& x) {
    return pointwise(
        x, [](real v) { return v > 0 ? v : real(0); }, [](real v) { return v > 0 ? real(1) : real(0); });
}

Var leaky_relu(const Var& x, real slope) {
    return pointwise(
        x, [slope](real v) { return v > 0 ? v : slope * v; },
        [slope](real v) { return v > 0 ? real(1) : slope; });
}

Var sigmoid(const Var& x) {
    return pointwise(
        x, [](real v) { return real(1) / (real(1) + std::exp(-v)); },
        [](real v) {
            const real s = real(1) / (real(1) + std::exp(-v));
            return s * (real(1) - s);
        });
}

Var clamp01(const Var& x) {
    return pointwise(
        x, [](real v) { return v < 0 ? real(0) : (v > 1 ? real(1) : v); },
        [](real v) { return (v > 0 && v < 1) ? real(1) : real(0); });
}

// ---- resampling ------------------------------------------------------------

Var upsample_nearest2(const Var& x) {
    const Tensor& xv = x.value();
    check(xv.ndim() == 4, "upsample_nearest2 expects 4-d input");
    const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    Tensor out = Tensor::uninitialized({B, C, H * 2, W * 2});
    const real* xp = xv.data();
    real* op = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t pc = 0; pc < int64_t(B) * C; ++pc) {
        const real* xplane = xp + pc * H * W;
        real* oplane = op + pc * H * W * 4;
        for (int y = 0; y < H; ++y)
            for (int x2 = 0; x2 < W; ++x2) {
                const real v = xplane[int64_t(y) * W + x2];
                real* o0 = oplane + int64_t(2 * y) * (2 * W) + 2 * x2;
                o0[0] = v;
                o0[1] = v;
                o0[2 * W] = v;
                o0[2 * W + 1] = v;
            }
    }
    auto xn = x.node();
    return Var(make_node(std::move(out), {x.node()}, [=](Node& n) {
        if (!xn->requires_grad) return;
        real* dx = xn->ensure_grad().data();
        const real* dy = n.grad.data();
#pragma omp parallel for schedule(static)
        for (int64_t pc = 0; pc < int64_t(B) * C; ++pc) {
            real* dxplane = dx + pc * H * W;
            const real* dplane = dy + pc * H * W * 4;
            for (int y = 0; y < H; ++y)
                for (int x2 = 0; x2 < W; ++x2) {
                    const real* d0 = dplane + int64_t(2 * y) * (2 * W) + 2 * x2;
                    dxplane[int64_t(y) * W + x2] += d0[0] + d0[1] + d0[2 * W] + d0[2 * W + 1];
                }
        }
    }));
}

Var avg_pool2(const Var& x) {
    const Tensor& xv = x.value();
    check(xv.ndim() == 4, "avg_pool2 expects 4-d input");
    const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    check(H % 2 == 0 && W % 2 == 0, "avg_pool2 expects even spatial dims");
    const int OH = H / 2, OW = W / 2;
    Tensor out = Tensor::uninitialized({B, C, OH, OW});
    const real* xp = xv.data();
    real* op = out.data();
    for (int64_t pc = 0; pc < int64_t(B) * C; ++pc) {
        const real* xplane = xp + pc * H * W;
        real* oplane = op + pc * OH * OW;
        for (int y = 0; y < OH; ++y)
            for (int x2 = 0; x2 < OW; ++x2) {
                const real* s = xplane + int64_t(2 * y) * W + 2 * x2;
                oplane[int64_t(y) * OW + x2] = (s[0] + s[1] + s[W] + s[W + 1]) * real(0.25);
            }
    }
    auto xn = x.node();
    return Var(make_node(std::move(out), {x.node()}, [=](Node& n) {
        if (!xn->requires_grad) return;
        real* dx = xn->ensure_grad().data();
        const real* dy = n.grad.data();
        for (int64_t pc = 0; pc < int64_t(B) * C; ++pc) {
            real* dxplane = dx + pc * H * W;
            const real* dplane = dy + pc * OH * OW;
            for (int y = 0; y < OH; ++y)
                for (int x2 = 0; x2 < OW; ++x2) {
                    const real d = dplane[int64_t(y) * OW + x2] * real(0.25);
                    real* s = dxplane + int64_t(2 * y) * W + 2 * x2;
                    s[0] += d;
                    s[1] += d;
                    s[W] += d;
                    s[W + 1] += d;
                }
        }
    }));
}

Var global_avg_pool(const Var& x) {
    const Tensor& xv = x.value();
    check(xv.ndim() == 4, "global_avg_pool expects 4-d input");
    const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const real inv = real(1) / (real(H) * real(W));
    Tensor out = Tensor::uninitialized({B, C});
    for (int64_t pc = 0; pc < int64_t(B) * C; ++pc) {
        const real* xplane = xv.data() + pc * H * W;
        real acc = 0;
        for (int64_t i = 0; i < int64_t(H) * W; ++i) acc += xplane[i];
        out[pc] = acc * inv;
    }
    auto xn = x.node();
    return Var(make_node(std::move(out), {x.node()}, [=](Node& n) {
        if (!xn->requires_grad) return;
        real* dx = xn->ensure_grad().data();
        const real* dy = n.grad.data();
        for (int64_t pc = 0; pc < int64_t(B) * C; ++pc) {
            const real d = dy[pc] * inv;
            real* dxplane = dx + pc * H * W;
            for (int64_t i = 0; i < int64_t(H) * W; ++i) dxplane[i] += d;
        }
    }));
}

// ---- structure -------------------------------------------------------------

Var concat_channels(const std::vector<Var>& xs) {
    check(!xs.empty(), "concat_channels needs at least one input");
    const Tensor& first = xs[0].value();
    check(first.ndim() == 4, "concat_channels expects 4-d inputs");
    const int B = first.dim(0), H = first.dim(2), W = first.dim(3);
    int total_c = 0;
    for (const auto& v : xs) {
        const Tensor& t = v.value();
        check(t.ndim() == 4 && t.dim(0) == B && t.dim(2) == H && t.dim(3) == W,
              "concat_channels inputs disagree on batch or spatial dims");
        total_c += t.dim(1);
    }
    Tensor out = Tensor::uninitialized({B, total_c, H, W});
    const int64_t plane = int64_t(H) * W;
    for (int b = 0; b < B; ++b) {
        int64_t c_off = 0;
        for (const auto& v : xs) {
            const Tensor& t = v.value();
            const int c = t.dim(1);
            std::copy_n(t.data() + int64_t(b) * c * plane, int64_t(c) * plane,
                        out.data() + (int64_t(b) * total_c + c_off) * plane);
            c_off += c;
        }
    }
    std::vector<std::shared_ptr<Node>> parents;
    parents.reserve(xs.size());
    for (const auto& v : xs) parents.push_back(v.node());
    auto parent_nodes = parents;
    return Var(make_node(std::move(out), std::move(parents), [=](Node& n) {
        const real* dy = n.grad.data();
        for (int b = 0; b < B; ++b) {
            int64_t c_off = 0;
            for (const auto& pn : parent_nodes) {
                const int c = pn->value.dim(1);
                if (pn->requires_grad) {
                    real* dx = pn->ensure_grad().data() + int64_t(b) * c * plane;
                    const real* src = dy + (int64_t(b) * total_c + c_off) * plane;
                    for (int64_t i = 0; i < int64_t(c) * plane; ++i) dx[i] += src[i];
                }
                c_off += c;
            }
        }
    }));
}

Var add(const Var& a, const Var& b) {
    check(a.value().same_shape(b.value()), "add expects equal shapes");
    Tensor out = Tensor::uninitialized(a.value().shape());
    const int64_t n = out.size();
    const real* ap = a.value().data();
    const real* bp = b.value().data();
    real* op = out.data();
    for (int64_t i = 0; i < n; ++i) op[i] = ap[i] + bp[i];
    auto an = a.node(); auto bn = b.node();
    return Var(make_node(std::move(out), {a.node(), b.node()}, [=](Node& node) {
        const real* dy = node.grad.data();
        if (an->requires_grad) {
            real* da = an->ensure_grad().data();
            for (int64_t i = 0; i < n; ++i) da[i] += dy[i];
        }
        if (bn->requires_grad) {
            real* db = bn->ensure_grad().data();
            for (int64_t i = 0; i < n; ++i) db[i] += dy[i];
        }
    }));
}

Var scale(const Var& x, real s) {
    Tensor out = Tensor::uninitialized(x.value().shape());
    const int64_t n = out.size();
    const real* xp = x.value().data();
    real* op = out.data();
    for (int64_t i = 0; i < n; ++i) op[i] = xp[i] * s;
    auto xn = x.node();
    return Var(make_node(std::move(out), {x.node()}, [=](Node& node) {
        if (!xn->requires_grad) return;
        real* dx = xn->ensure_grad().data();
        const real* dy = node.grad.data();
        for (int64_t i = 0; i < n; ++i) dx[i] += dy[i] * s;
    }));
}

Var reshape(const Var& x, std::vector<int> shape) {
    check(numel(shape) == x.value().size(), "reshape must preserve element count");
    Tensor out = Tensor::uninitialized(std::move(shape));
    std::copy_n(x.value().data(), size_t(x.value().size()), out.data());
    auto xn = x.node();
    const int64_t n = x.value().size();
    return Var(make_node(std::move(out), {x.node()}, [=](Node& node) {
        if (!xn->requires_grad) return;
        real* dx = xn->ensure_grad().data();
        const real* dy = node.grad.data();
        for (int64_t i = 0; i < n; ++i) dx[i] += dy[i];
    }));
}

// ---- losses ----------------------------------------------------------------

Var mae(const Var& a, const Var& b) {
    check(a.value().same_shape(b.value()), "mae expects equal shapes");
    const int64_t n = a.value().size();
    const real* ap = a.value().data();
    const real* bp = b.value().data();
    real acc = 0;
    for (int64_t i = 0; i < n; ++i) acc += std::abs(ap[i] - bp[i]);
    Tensor out = Tensor::scalar(acc / real(n));
    auto an = a.node(); auto bn = b.node();
    return Var(make_node(std::move(out), {a.node(), b.node()}, [=](Node& node) {
        const real d = node.grad[0] / real(n);
        const real* av = an->value.data();
        const real* bv = bn->value.data();
        real* da = an->requires_grad ? an->ensure_grad().data() : nullptr;
        real* db = bn->requires_grad ? bn->ensure_grad().data() : nullptr;
        for (int64_t i = 0; i < n; ++i) {
            const real diff = av[i] - bv[i];
            const real s = diff > 0 ? d : (diff < 0 ? -d : real(0));
            if (da) da[i] += s;
            if (db) db[i] -= s;
        }
    }));
}

Var bce_mean(const Var& pred, real target, real eps) {
    const int64_t n = pred.value().size();
    const real* pp = pred.value().data();
    real acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        const real p = std::min(std::max(pp[i], eps), real(1) - eps);
        acc += -(target * std::log(p) + (real(1) - target) * std::log(real(1) - p));
    }
    Tensor out = Tensor::scalar(acc / real(n));
    auto pn = pred.node();
    return Var(make_node(std::move(out), {pred.node()}, [=](Node& node) {
        if (!pn->requires_grad) return;
        const real d = node.grad[0] / real(n);
        const real* pv = pn->value.data();
        real* dp = pn->ensure_grad().data();
        for (int64_t i = 0; i < n; ++i) {
            if (pv[i] <= eps || pv[i] >= real(1) - eps) continue;  // clamped region
            dp[i] += d * (-(target / pv[i]) + (real(1) - target) / (real(1) - pv[i]));
        }
    }));
}

Var bce_mean_targets(const Var& pred, const Tensor& targets, real eps) {
    check(pred.value().same_shape(targets), "bce_mean_targets shape mismatch");
    const int64_t n = pred.value().size();
    const real* pp = pred.value().data();
    const real* tp = targets.data();
    real acc = 0;
    for (int64_t i = 0; i < n; ++i) {
        const real p = std::min(std::max(pp[i], eps), real(1) - eps);
        acc += -(tp[i] * std::log(p) + (real(1) - tp[i]) * std::log(real(1) - p));
    }
    Tensor out = Tensor::scalar(acc / real(n));
    auto pn = pred.node();
    const Tensor t = targets;
    return Var(make_node(std::move(out), {pred.node()}, [=](Node& node) {
        if (!pn->requires_grad) return;
        const real d = node.grad[0] / real(n);
        const real* pv = pn->value.data();
        real* dp = pn->ensure_grad().data();
        for (int64_t i = 0; i < n; ++i) {
            if (pv[i] <= eps || pv[i] >= real(1) - eps) continue;
            dp[i] += d * (-(t[i] / pv[i]) + (real(1) - t[i]) / (real(1) - pv[i]));
        }
    }));
}

Var mean_all(const Var& x) {
    const int64_t n = x.value().size();
    const real* xp = x.value().data();
    real acc = 0;
    for (int64_t i = 0; i < n; ++i) acc += xp[i];
    Tensor out = Tensor::scalar(acc / real(n));
    auto xn = x.node();
    return Var(make_node(std::move(out), {x.node()}, [=](Node& node) {
        if (!xn->requires_grad) return;
        const real d = node.grad[0] / real(n);
        real* dx = xn->ensure_grad().data();
        for (int64_t i = 0; i < n; ++i) dx[i] += d;
    }));
}

// ---- capsules --------------------------------------------------------------

Var primary_caps_arrange(const Var& x, int types, int dim) {
    const Tensor& xv = x.value();
    check(xv.ndim() == 4, "primary_caps_arrange expects 4-d input");
    const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    check(C == types * dim, "feature channels must equal types * dim");
    const int positions = H * W;
    const int caps = types * positions;
    Tensor out = Tensor::uninitialized({B, caps, dim});
    const real* xp = xv.data();
    real* op = out.data();
    for (int b = 0; b < B; ++b)
        for (int t = 0; t < types; ++t)
            for (int d = 0; d < dim; ++d) {
                const real* xplane = xp + ((int64_t(b) * C) + t * dim + d) * positions;
                real* dst = op + (int64_t(b) * caps + int64_t(t) * positions) * dim + d;
                for (int p = 0; p < positions; ++p) dst[int64_t(p) * dim] = xplane[p];
            }
    auto xn = x.node();
    return Var(make_node(std::move(out), {x.node()}, [=](Node& n) {
        if (!xn->requires_grad) return;
        real* dx = xn->ensure_grad().data();
        const real* dy = n.grad.data();
        for (int b = 0; b < B; ++b)
            for (int t = 0; t < types; ++t)
                for (int d = 0; d < dim; ++d) {
                    real* dxplane = dx + ((int64_t(b) * C) + t * dim + d) * positions;
                    const real* src = dy + (int64_t(b) * caps + int64_t(t) * positions) * dim + d;
                    for (int p = 0; p < positions; ++p) dxplane[p] += src[int64_t(p) * dim];
                }
    }));
}

Var squash_last(const Var& s) {
    const Tensor& sv = s.value();
    check(sv.ndim() >= 1, "squash_last expects at least 1-d input");
    const int dim = sv.dim(sv.ndim() - 1);
    const int64_t rows = sv.size() / dim;
    Tensor out = Tensor::uninitialized(sv.shape());
    const real* sp = sv.data();
    real* op = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
        const real* row = sp + r * dim;
        real n2 = 0;
        for (int i = 0; i < dim; ++i) n2 += row[i] * row[i];
        const real norm = std::sqrt(n2);
        const real f = norm / (real(1) + n2);  // |v| = n^2/(1+n^2), v = f * s
        real* orow = op + r * dim;
        for (int i = 0; i < dim; ++i) orow[i] = f * row[i];
    }
    auto sn = s.node();
    return Var(make_node(std::move(out), {s.node()}, [=](Node& node) {
        if (!sn->requires_grad) return;
        real* ds = sn->ensure_grad().data();
        const real* dy = node.grad.data();
        const real* sp2 = sn->value.data();
#pragma omp parallel for schedule(static)
        for (int64_t r = 0; r < rows; ++r) {
            const real* row = sp2 + r * dim;
            const real* g = dy + r * dim;
            real* dst = ds + r * dim;
            real n2 = 0, gs = 0;
            for (int i = 0; i < dim; ++i) {
                n2 += row[i] * row[i];
                gs += g[i] * row[i];
            }
            const real norm = std::sqrt(n2);
            if (norm < real(1e-12)) continue;  // v ~ s|s|, Jacobian -> 0
            const real denom = real(1) + n2;
            const real f = norm / denom;
            // d f/d n2 = (1 - n2) / (2 norm (1+n2)^2); chain through n2 = s.s
            const real df = (real(1) - n2) / (real(2) * norm * denom * denom);
            for (int i = 0; i < dim; ++i) dst[i] += f * g[i] + real(2) * df * gs * row[i];
        }
    }));
}

Var caps_transform(const Var& W, const Var& u) {
    const Tensor& Wv = W.value();
    const Tensor& uv = u.value();
    check(Wv.ndim() == 4 && uv.ndim() == 3, "caps_transform expects W[I,O,OD,ID], u[B,I,ID]");
    const int I = Wv.dim(0), O = Wv.dim(1), OD = Wv.dim(2), ID = Wv.dim(3);
    const int B = uv.dim(0);
    check(uv.dim(1) == I && uv.dim(2) == ID, "caps_transform dimension mismatch");
    Tensor out = Tensor::uninitialized({B, I, O, OD});
    const real* Wp = Wv.data();
    const real* up = uv.data();
    real* op = out.data();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < I; ++i) {
        const real* Wi = Wp + int64_t(i) * O * OD * ID;
        for (int b = 0; b < B; ++b) {
            const real* ui = up + (int64_t(b) * I + i) * ID;
            real* dst = op + (int64_t(b) * I + i) * O * OD;
            for (int o = 0; o < O; ++o) {
                const real* Wo = Wi + int64_t(o) * OD * ID;
                for (int od = 0; od < OD; ++od) {
                    const real* wrow = Wo + int64_t(od) * ID;
                    real acc = 0;
#pragma omp simd reduction(+ : acc)
                    for (int id = 0; id < ID; ++id) acc += wrow[id] * ui[id];
                    dst[int64_t(o) * OD + od] = acc;
                }
            }
        }
    }
    auto Wn = W.node(); auto un = u.node();
    return Var(make_node(std::move(out), {W.node(), u.node()}, [=](Node& n) {
        const real* dy = n.grad.data();
        const real* Wp2 = Wn->value.data();
        const real* up2 = un->value.data();
        real* dW = Wn->requires_grad ? Wn->ensure_grad().data() : nullptr;
        real* du = un->requires_grad ? un->ensure_grad().data() : nullptr;
#pragma omp parallel for schedule(static)
        for (int i = 0; i < I; ++i) {
            for (int b = 0; b < B; ++b) {
                const real* g = dy + (int64_t(b) * I + i) * O * OD;
                const real* ui = up2 + (int64_t(b) * I + i) * ID;
                real* dui = du ? du + (int64_t(b) * I + i) * ID : nullptr;
                for (int o = 0; o < O; ++o) {
                    for (int od = 0; od < OD; ++od) {
                        const real d = g[int64_t(o) * OD + od];
                        if (d == 0) continue;
                        const int64_t woff = ((int64_t(i) * O + o) * OD + od) * ID;
                        if (dW) {
                            real* wrow = dW + woff;
#pragma omp simd
                            for (int id = 0; id < ID; ++id) wrow[id] += d * ui[id];
                        }
                        if (dui) {
                            const real* wrow = Wp2 + woff;
#pragma omp simd
                            for (int id = 0; id < ID; ++id) dui[id] += d * wrow[id];
                        }
                    }
                }
            }
        }
    }));
}

Var softmax_last(const Var& x) {
    const Tensor& xv = x.value();
    const int dim = xv.dim(xv.ndim() - 1);
    const int64_t rows = xv.size() / dim;
    Tensor out = Tensor::uninitialized(xv.shape());
    const real* xp = xv.data();
    real* op = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        const real* row = xp + r * dim;
        real* orow = op + r * dim;
        real mx = row[0];
        for (int i = 1; i < dim; ++i) mx = std::max(mx, row[i]);
        real sum = 0;
        for (int i = 0; i < dim; ++i) {
            orow[i] = std::exp(row[i] - mx);
            sum += orow[i];
        }
        const real inv = real(1) / sum;
        for (int i = 0; i < dim; ++i) orow[i] *= inv;
    }
    auto xn = x.node();
    return Var(make_node(std::move(out), {x.node()}, [=](Node& node) {
        if (!xn->requires_grad) return;
        real* dx = xn->ensure_grad().data();
        const real* dy = node.grad.data();
        const real* y = node.value.data();
        for (int64_t r = 0; r < rows; ++r) {
            const real* yr = y + r * dim;
            const real* gr = dy + r * dim;
            real* dr = dx + r * dim;
            real dot = 0;
            for (int i = 0; i < dim; ++i) dot += gr[i] * yr[i];
            for (int i = 0; i < dim; ++i) dr[i] += yr[i] * (gr[i] - dot);
        }
    }));
}

Var caps_weighted_sum(const Var& c, const Var& uhat) {
    const Tensor& cv = c.value();
    const Tensor& uv = uhat.value();
    check(cv.ndim() == 3 && uv.ndim() == 4, "caps_weighted_sum expects c[B,I,O], uhat[B,I,O,OD]");
    const int B = cv.dim(0), I = cv.dim(1), O = cv.dim(2), OD = uv.dim(3);
    check(uv.dim(0) == B && uv.dim(1) == I && uv.dim(2) == O, "caps_weighted_sum dimension mismatch");
    Tensor out({B, O, OD});
    const real* cp = cv.data();
    const real* up = uv.data();
    real* op = out.data();
    for (int b = 0; b < B; ++b) {
        real* dst = op + int64_t(b) * O * OD;
        for (int i = 0; i < I; ++i) {
            const real* crow = cp + (int64_t(b) * I + i) * O;
            const real* urow = up + (int64_t(b) * I + i) * O * OD;
            for (int o = 0; o < O; ++o) {
                const real cw = crow[o];
                const real* us = urow + int64_t(o) * OD;
                real* ds = dst + int64_t(o) * OD;
                for (int od = 0; od < OD; ++od) ds[od] += cw * us[od];
            }
        }
    }
    auto cn = c.node(); auto un = uhat.node();
    return Var(make_node(std::move(out), {c.node(), uhat.node()}, [=](Node& n) {
        const real* dy = n.grad.data();
        const real* cp2 = cn->value.data();
        const real* up2 = un->value.data();
        real* dc = cn->requires_grad ? cn->ensure_grad().data() : nullptr;
        real* duh = un->requires_grad ? un->ensure_grad().data() : nullptr;
        for (int b = 0; b < B; ++b) {
            const real* g = dy + int64_t(b) * O * OD;
            for (int i = 0; i < I; ++i) {
                const int64_t base = (int64_t(b) * I + i);
                for (int o = 0; o < O; ++o) {
                    const real* gs = g + int64_t(o) * OD;
                    const real* us = up2 + (base * O + o) * OD;
                    if (dc) {
                        real acc = 0;
                        for (int od = 0; od < OD; ++od) acc += gs[od] * us[od];
                        dc[base * O + o] += acc;
                    }
                    if (duh) {
                        const real cw = cp2[base * O + o];
                        real* ds = duh + (base * O + o) * OD;
                        for (int od = 0; od < OD; ++od) ds[od] += cw * gs[od];
                    }
                }
            }
        }
    }));
}

Var caps_agreement(const Var& uhat, const Var& v) {
    const Tensor& uv = uhat.value();
    const Tensor& vv = v.value();
    check(uv.ndim() == 4 && vv.ndim() == 3, "caps_agreement expects uhat[B,I,O,OD], v[B,O,OD]");
    const int B = uv.dim(0), I = uv.dim(1), O = uv.dim(2), OD = uv.dim(3);
    check(vv.dim(0) == B && vv.dim(1) == O && vv.dim(2) == OD, "caps_agreement dimension mismatch");
    Tensor out = Tensor::uninitialized({B, I, O});
    const real* up = uv.data();
    const real* vp = vv.data();
    real* op = out.data();
    for (int b = 0; b < B; ++b) {
        const real* vb = vp + int64_t(b) * O * OD;
        for (int i = 0; i < I; ++i) {
            const real* us = up + (int64_t(b) * I + i) * O * OD;
            real* dst = op + (int64_t(b) * I + i) * O;
            for (int o = 0; o < O; ++o) {
                const real* u0 = us + int64_t(o) * OD;
                const real* v0 = vb + int64_t(o) * OD;
                real acc = 0;
                for (int od = 0; od < OD; ++od) acc += u0[od] * v0[od];
                dst[o] = acc;
            }
        }
    }
    auto un = uhat.node(); auto vn = v.node();
    return Var(make_node(std::move(out), {uhat.node(), v.node()}, [=](Node& n) {
        const real* dy = n.grad.data();
        const real* up2 = un->value.data();
        const real* vp2 = vn->value.data();
        real* duh = un->requires_grad ? un->ensure_grad().data() : nullptr;
        real* dv = vn->requires_grad ? vn->ensure_grad().data() : nullptr;
        for (int b = 0; b < B; ++b) {
            const real* vb = vp2 + int64_t(b) * O * OD;
            real* dvb = dv ? dv + int64_t(b) * O * OD : nullptr;
            for (int i = 0; i < I; ++i) {
                const int64_t base = int64_t(b) * I + i;
                const real* g = dy + base * O;
                for (int o = 0; o < O; ++o) {
                    const real d = g[o];
                    if (d == 0) continue;
                    const real* u0 = up2 + (base * O + o) * OD;
                    if (duh) {
                        real* du0 = duh + (base * O + o) * OD;
                        const real* v0 = vb + int64_t(o) * OD;
                        for (int od = 0; od < OD; ++od) du0[od] += d * v0[od];
                    }
                    if (dvb) {
                        real* dv0 = dvb + int64_t(o) * OD;
                        for (int od = 0; od < OD; ++od) dv0[od] += d * u0[od];
                    }
                }
            }
        }
    }));
}

} // namespace msrgan
