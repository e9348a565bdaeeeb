// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "envdiff/tensor.hpp"

namespace envdiff {

/// Global invertible HDR compression f(x) = scale * x^(1/exponent), applied
/// per channel. The diffusion prior operates on f(env); f_inverse recovers
/// HDR radiance before rendering. Negative inputs are clamped to zero on
/// both sides, so the pair is exact on [0, inf).
struct Tonemap {
    double scale = 0.5;
    double exponent = 2.4;

    static Tonemap outdoor() { return {0.5, 2.4}; }
    static Tonemap indoor() { return {0.9, 6.0}; }
    static Tonemap identity() { return {1.0, 1.0}; }

    double forward(double x) const {
        return scale * std::pow(x < 0.0 ? 0.0 : x, 1.0 / exponent);
    }
    double inverse(double y) const {
        return std::pow((y < 0.0 ? 0.0 : y) / scale, exponent);
    }
    /// d f_inverse / dy, used when chaining rendering gradients back into the
    /// compressed domain. Zero for clamped (negative) inputs.
    double inverse_deriv(double y) const {
        if (y < 0.0) return 0.0;
        return exponent / scale * std::pow(y / scale, exponent - 1.0);
    }

    Tensor3 forward(const Tensor3& t) const {
        Tensor3 out = Tensor3::zeros_like(t);
        for (size_t i = 0; i < t.size(); ++i) out.v[i] = forward(t.v[i]);
        return out;
    }
    Tensor3 inverse(const Tensor3& t) const {
        Tensor3 out = Tensor3::zeros_like(t);
        for (size_t i = 0; i < t.size(); ++i) out.v[i] = inverse(t.v[i]);
        return out;
    }
};

}  // namespace envdiff
