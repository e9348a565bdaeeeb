// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#include "envdiff/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <thread>

namespace envdiff {

namespace {

int clamp_int(int x, int lo, int hi) { return x < lo ? lo : (x > hi ? hi : x); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Row-parallel helper with disjoint writes per chunk.
template <typename Fn>
void for_rows(int rows, int threads, Fn&& fn) {
    if (threads <= 1 || rows < 2 * threads) {
        fn(0, rows);
        return;
    }
    std::vector<std::thread> pool;
    int chunk = (rows + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        int begin = t * chunk;
        int end = begin + chunk > rows ? rows : begin + chunk;
        if (begin >= end) break;
        pool.emplace_back([&, begin, end] { fn(begin, end); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

const Tape::Node& Tape::node(Value v, const char* where) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument(std::string(where) + ": invalid value handle");
    return nodes_[static_cast<size_t>(v.id)];
}

Value Tape::leaf(Tensor3 init) {
    if (!all_finite(init)) throw std::invalid_argument("Tape::leaf: non-finite values");
    Node n;
    n.op = Op::leaf;
    n.val = std::move(init);
    return {push(std::move(n))};
}

Value Tape::constant(Tensor3 init) {
    Node n;
    n.op = Op::constant;
    n.val = std::move(init);
    return {push(std::move(n))};
}

Value Tape::conv2d_circular(Value x, Value kernel, Value bias, PadMode horizontal) {
    const Node& xn = node(x, "conv2d_circular");
    const Node& kn = node(kernel, "conv2d_circular");
    const Node& bn = node(bias, "conv2d_circular");
    int side = 1;
    while (side * side < kn.val.h) side += 2;
    if (side * side != kn.val.h || side % 2 == 0)
        throw std::invalid_argument(
            "conv2d_circular: kernel height must be S*S with S odd, got " +
            std::to_string(kn.val.h));
    if (kn.val.w != xn.val.c)
        throw std::invalid_argument("conv2d_circular: kernel Cin " +
                                    std::to_string(kn.val.w) + " != input C " +
                                    std::to_string(xn.val.c));
    if (bn.val.h != 1 || bn.val.w != 1 || bn.val.c != kn.val.c)
        throw std::invalid_argument("conv2d_circular: bias must be (1,1,Cout)");
    Node n;
    n.op = Op::conv2d;
    n.a = x.id;
    n.b = kernel.id;
    n.c = bias.id;
    n.pad = horizontal;
    n.kside = side;
    conv_forward(n);
    return {push(std::move(n))};
}

void Tape::conv_forward(Node& n) {
    const Tensor3& in = nodes_[n.a].val;
    const Tensor3& k = nodes_[n.b].val;
    const Tensor3& b = nodes_[n.c].val;
    int H = in.h, W = in.w, Cin = in.c, Cout = k.c, S = n.kside, r = S / 2;
    bool circ = n.pad == PadMode::circular;
    n.val = Tensor3(H, W, Cout);
    Tensor3& out = n.val;
    for_rows(H, threads_, [&](int i0, int i1) {
        for (int i = i0; i < i1; ++i) {
            for (int j = 0; j < W; ++j) {
                for (int co = 0; co < Cout; ++co) out.at(i, j, co) = b.at(0, 0, co);
                for (int di = 0; di < S; ++di) {
                    int ii = clamp_int(i + di - r, 0, H - 1);
                    for (int dj = 0; dj < S; ++dj) {
                        int jj = j + dj - r;
                        if (circ) {
                            jj %= W;
                            if (jj < 0) jj += W;
                        } else {
                            jj = clamp_int(jj, 0, W - 1);
                        }
                        int tap = di * S + dj;
                        for (int ci = 0; ci < Cin; ++ci) {
                            double xv = in.at(ii, jj, ci);
                            for (int co = 0; co < Cout; ++co)
                                out.at(i, j, co) += xv * k.at(tap, ci, co);
                        }
                    }
                }
            }
        }
    });
}

void Tape::conv_backward(Node& n) {
    const Tensor3& in = nodes_[n.a].val;
    const Tensor3& k = nodes_[n.b].val;
    const Tensor3& g = n.grd;
    Tensor3& din = nodes_[n.a].grd;
    Tensor3& dk = nodes_[n.b].grd;
    Tensor3& db = nodes_[n.c].grd;
    int H = in.h, W = in.w, Cin = in.c, Cout = k.c, S = n.kside, r = S / 2;
    bool circ = n.pad == PadMode::circular;
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            for (int co = 0; co < Cout; ++co) db.at(0, 0, co) += g.at(i, j, co);
            for (int di = 0; di < S; ++di) {
                int ii = clamp_int(i + di - r, 0, H - 1);
                for (int dj = 0; dj < S; ++dj) {
                    int jj = j + dj - r;
                    if (circ) {
                        jj %= W;
                        if (jj < 0) jj += W;
                    } else {
                        jj = clamp_int(jj, 0, W - 1);
                    }
                    int tap = di * S + dj;
                    for (int ci = 0; ci < Cin; ++ci) {
                        double xv = in.at(ii, jj, ci);
                        double acc = 0.0;
                        for (int co = 0; co < Cout; ++co) {
                            double gv = g.at(i, j, co);
                            dk.at(tap, ci, co) += xv * gv;
                            acc += gv * k.at(tap, ci, co);
                        }
                        din.at(ii, jj, ci) += acc;
                    }
                }
            }
        }
    }
}

Value Tape::dense(Value x, Value weights, Value bias) {
    const Node& xn = node(x, "dense");
    const Node& wn = node(weights, "dense");
    const Node& bn = node(bias, "dense");
    int N = static_cast<int>(xn.val.size());
    if (wn.val.h != 1 || wn.val.w != N)
        throw std::invalid_argument("dense: weights must be (1, N_in, N_out) with N_in=" +
                                    std::to_string(N));
    int M = wn.val.c;
    if (bn.val.h != 1 || bn.val.w != 1 || bn.val.c != M)
        throw std::invalid_argument("dense: bias must be (1,1,N_out)");
    Node n;
    n.op = Op::dense;
    n.a = x.id;
    n.b = weights.id;
    n.c = bias.id;
    dense_forward(n);
    return {push(std::move(n))};
}

void Tape::dense_forward(Node& n) {
    const Tensor3& in = nodes_[n.a].val;
    const Tensor3& w = nodes_[n.b].val;
    const Tensor3& b = nodes_[n.c].val;
    int N = static_cast<int>(in.size()), M = w.c;
    n.val = Tensor3(1, 1, M);
    for (int m = 0; m < M; ++m) {
        double acc = b.v[static_cast<size_t>(m)];
        for (int i = 0; i < N; ++i)
            acc += in.v[static_cast<size_t>(i)] * w.at(0, i, m);
        n.val.v[static_cast<size_t>(m)] = acc;
    }
}

void Tape::dense_backward(Node& n) {
    const Tensor3& in = nodes_[n.a].val;
    const Tensor3& w = nodes_[n.b].val;
    const Tensor3& g = n.grd;
    Tensor3& din = nodes_[n.a].grd;
    Tensor3& dw = nodes_[n.b].grd;
    Tensor3& db = nodes_[n.c].grd;
    int N = static_cast<int>(in.size()), M = w.c;
    for (int m = 0; m < M; ++m) db.v[static_cast<size_t>(m)] += g.v[static_cast<size_t>(m)];
    for (int i = 0; i < N; ++i) {
        double acc = 0.0;
        double xv = in.v[static_cast<size_t>(i)];
        for (int m = 0; m < M; ++m) {
            double gv = g.v[static_cast<size_t>(m)];
            dw.at(0, i, m) += xv * gv;
            acc += gv * w.at(0, i, m);
        }
        din.v[static_cast<size_t>(i)] += acc;
    }
}

Value Tape::silu(Value x) {
    const Node& xn = node(x, "silu");
    Node n;
    n.op = Op::silu;
    n.a = x.id;
    n.val = Tensor3::zeros_like(xn.val);
    for (size_t i = 0; i < xn.val.size(); ++i) {
        double v = xn.val.v[i];
        n.val.v[i] = v * sigmoid(v);
    }
    return {push(std::move(n))};
}

Value Tape::add(Value a, Value b) {
    const Node& an = node(a, "add");
    const Node& bn = node(b, "add");
    bool bias = !an.val.same_shape(bn.val);
    if (bias) {
        if (!(bn.val.h == 1 && bn.val.w == 1 && bn.val.c == an.val.c))
            throw std::invalid_argument("add: shapes " + an.val.shape_str() + " vs " +
                                        bn.val.shape_str() +
                                        " (need equal shapes or per-channel bias)");
    }
    Node n;
    n.op = bias ? Op::add_bias : Op::add;
    n.a = a.id;
    n.b = b.id;
    n.val = Tensor3::zeros_like(an.val);
    if (bias) {
        for (int i = 0; i < an.val.h; ++i)
            for (int j = 0; j < an.val.w; ++j)
                for (int k = 0; k < an.val.c; ++k)
                    n.val.at(i, j, k) = an.val.at(i, j, k) + bn.val.at(0, 0, k);
    } else {
        for (size_t i = 0; i < an.val.size(); ++i)
            n.val.v[i] = an.val.v[i] + bn.val.v[i];
    }
    return {push(std::move(n))};
}

Value Tape::scale(Value a, double s) {
    const Node& an = node(a, "scale");
    Node n;
    n.op = Op::scale;
    n.a = a.id;
    n.scalar = s;
    n.val = Tensor3::zeros_like(an.val);
    for (size_t i = 0; i < an.val.size(); ++i) n.val.v[i] = an.val.v[i] * s;
    return {push(std::move(n))};
}

Value Tape::concat_channels(Value a, Value b) {
    const Node& an = node(a, "concat_channels");
    const Node& bn = node(b, "concat_channels");
    if (an.val.h != bn.val.h || an.val.w != bn.val.w)
        throw std::invalid_argument("concat_channels: spatial shapes differ");
    Node n;
    n.op = Op::concat;
    n.a = a.id;
    n.b = b.id;
    n.val = Tensor3(an.val.h, an.val.w, an.val.c + bn.val.c);
    for (int i = 0; i < an.val.h; ++i)
        for (int j = 0; j < an.val.w; ++j) {
            for (int k = 0; k < an.val.c; ++k) n.val.at(i, j, k) = an.val.at(i, j, k);
            for (int k = 0; k < bn.val.c; ++k)
                n.val.at(i, j, an.val.c + k) = bn.val.at(i, j, k);
        }
    return {push(std::move(n))};
}

Value Tape::mse(Value a, Value b) {
    const Node& an = node(a, "mse");
    const Node& bn = node(b, "mse");
    require_same_shape(an.val, bn.val, "mse");
    Node n;
    n.op = Op::mse;
    n.a = a.id;
    n.b = b.id;
    double acc = 0.0;
    for (size_t i = 0; i < an.val.size(); ++i) {
        double d = an.val.v[i] - bn.val.v[i];
        acc += d * d;
    }
    n.val = Tensor3(1, 1, 1);
    n.val.v[0] = acc / static_cast<double>(an.val.size());
    return {push(std::move(n))};
}

const Tensor3& Tape::value(Value v) const { return node(v, "Tape::value").val; }

void Tape::backward(Value scalar_out, double seed_gradient) {
    if (nodes_.empty()) throw std::logic_error("Tape::backward: nothing recorded");
    if (backward_done_) throw std::logic_error("Tape::backward: already run");
    const Node& out = node(scalar_out, "Tape::backward");
    if (out.val.size() != 1)
        throw std::invalid_argument("Tape::backward: output must be scalar");
    for (auto& n : nodes_) n.grd = Tensor3::zeros_like(n.val);
    nodes_[static_cast<size_t>(scalar_out.id)].grd.v[0] = seed_gradient;

    for (int idx = scalar_out.id; idx >= 0; --idx) {
        Node& n = nodes_[static_cast<size_t>(idx)];
        switch (n.op) {
            case Op::leaf:
            case Op::constant:
                break;
            case Op::conv2d:
                conv_backward(n);
                break;
            case Op::dense:
                dense_backward(n);
                break;
            case Op::silu: {
                const Tensor3& x = nodes_[n.a].val;
                Tensor3& dx = nodes_[n.a].grd;
                for (size_t i = 0; i < x.size(); ++i) {
                    double s = sigmoid(x.v[i]);
                    dx.v[i] += n.grd.v[i] * s * (1.0 + x.v[i] * (1.0 - s));
                }
                break;
            }
            case Op::add: {
                Tensor3& da = nodes_[n.a].grd;
                Tensor3& db = nodes_[n.b].grd;
                for (size_t i = 0; i < n.grd.size(); ++i) {
                    da.v[i] += n.grd.v[i];
                    db.v[i] += n.grd.v[i];
                }
                break;
            }
            case Op::add_bias: {
                Tensor3& da = nodes_[n.a].grd;
                Tensor3& db = nodes_[n.b].grd;
                int C = n.val.c;
                for (int i = 0; i < n.val.h; ++i)
                    for (int j = 0; j < n.val.w; ++j)
                        for (int k = 0; k < C; ++k) {
                            double gv = n.grd.at(i, j, k);
                            da.at(i, j, k) += gv;
                            db.at(0, 0, k) += gv;
                        }
                break;
            }
            case Op::scale: {
                Tensor3& da = nodes_[n.a].grd;
                for (size_t i = 0; i < n.grd.size(); ++i)
                    da.v[i] += n.grd.v[i] * n.scalar;
                break;
            }
            case Op::concat: {
                Tensor3& da = nodes_[n.a].grd;
                Tensor3& db = nodes_[n.b].grd;
                int ca = da.c;
                for (int i = 0; i < n.val.h; ++i)
                    for (int j = 0; j < n.val.w; ++j) {
                        for (int k = 0; k < ca; ++k) da.at(i, j, k) += n.grd.at(i, j, k);
                        for (int k = 0; k < db.c; ++k)
                            db.at(i, j, k) += n.grd.at(i, j, ca + k);
                    }
                break;
            }
            case Op::mse: {
                const Tensor3& a = nodes_[n.a].val;
                const Tensor3& b = nodes_[n.b].val;
                Tensor3& da = nodes_[n.a].grd;
                Tensor3& db = nodes_[n.b].grd;
                double g = n.grd.v[0] * 2.0 / static_cast<double>(a.size());
                for (size_t i = 0; i < a.size(); ++i) {
                    double d = g * (a.v[i] - b.v[i]);
                    da.v[i] += d;
                    db.v[i] -= d;
                }
                break;
            }
        }
    }
    backward_done_ = true;
}

const Tensor3& Tape::grad(Value v) const {
    if (!backward_done_)
        throw std::logic_error("Tape::grad: backward has not been run");
    return node(v, "Tape::grad").grd;
}

}  // namespace envdiff
