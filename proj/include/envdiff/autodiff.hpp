// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "envdiff/tensor.hpp"

namespace envdiff {

/// Horizontal padding behaviour of the conv primitive. Vertical padding is
/// always clamp-to-edge. Circular horizontal padding wraps in azimuth and
/// makes the op exactly equivariant under column rotation.
enum class PadMode { circular, clamp };

struct Value {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over Tensor3 values. Record a forward computation, then
/// call backward() once; gradients for every recorded node (in particular the
/// leaves) are then available via grad(). Accumulation order is fixed, so a
/// given forward/backward pair is bit-reproducible in single-threaded mode.
///
/// Conv kernels are packed as Tensor3 (S*S, Cin, Cout) with S the odd kernel
/// side; dense weights as (1, N_in, N_out). Biases are (1, 1, C).
class Tape {
  public:
    /// Differentiable leaf (parameter or input).
    Value leaf(Tensor3 init);
    /// Non-differentiable constant.
    Value constant(Tensor3 init);

    Value conv2d_circular(Value x, Value kernel, Value bias,
                          PadMode horizontal = PadMode::circular);
    Value dense(Value x, Value weights, Value bias);
    Value silu(Value x);
    /// Elementwise sum; b may alternatively be a (1, 1, C) per-channel bias.
    Value add(Value a, Value b);
    Value scale(Value a, double s);
    Value concat_channels(Value a, Value b);
    /// Mean squared error over all elements, as a (1, 1, 1) scalar node.
    Value mse(Value a, Value b);

    const Tensor3& value(Value v) const;

    /// Seed d(out)/d(out) = seed_gradient and sweep the tape in reverse.
    void backward(Value scalar_out, double seed_gradient = 1.0);

    /// Gradient of the backward() output w.r.t. node v.
    const Tensor3& grad(Value v) const;

    void set_threads(int n) { threads_ = n < 1 ? 1 : n; }
    int threads() const { return threads_; }

    size_t node_count() const { return nodes_.size(); }

  private:
    enum class Op { leaf, constant, conv2d, dense, silu, add, add_bias, scale, concat, mse };

    struct Node {
        Op op;
        int a = -1, b = -1, c = -1;  // input node ids
        Tensor3 val;
        Tensor3 grd;
        PadMode pad = PadMode::circular;
        double scalar = 0.0;
        int kside = 0;  // conv kernel side
    };

    std::vector<Node> nodes_;
    bool backward_done_ = false;
    int threads_ = 1;

    int push(Node n);
    const Node& node(Value v, const char* where) const;

    void conv_forward(Node& n);
    void conv_backward(Node& n);
    void dense_forward(Node& n);
    void dense_backward(Node& n);
};

}  // namespace envdiff
