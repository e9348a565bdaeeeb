// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace envdiff {

/// Dense rank-3 tensor, row-major (height, width, channels), 64-bit values.
/// The one array type shared by the diffusion math, the autodiff engine and
/// the renderer. Environment maps are (H, W, 3) with nonnegative entries;
/// latent/noised tensors may be negative.
struct Tensor3 {
    int h = 0, w = 0, c = 0;
    std::vector<double> v;

    Tensor3() = default;
    Tensor3(int height, int width, int channels, double fill = 0.0)
        : h(height), w(width), c(channels),
          v(static_cast<size_t>(height) * width * channels, fill) {
        if (height < 0 || width < 0 || channels < 0)
            throw std::invalid_argument("Tensor3: negative dimension");
    }

    size_t size() const { return v.size(); }

    double& at(int i, int j, int k) {
        return v[(static_cast<size_t>(i) * w + j) * c + k];
    }
    double at(int i, int j, int k) const {
        return v[(static_cast<size_t>(i) * w + j) * c + k];
    }

    bool same_shape(const Tensor3& o) const {
        return h == o.h && w == o.w && c == o.c;
    }

    static Tensor3 zeros_like(const Tensor3& o) { return Tensor3(o.h, o.w, o.c); }

    std::string shape_str() const;
};

/// Latent-domain tensor (x_t, eps, z, scores). Alias kept for readability.
using Latent = Tensor3;
/// Equirectangular HDR radiance map, (H, W, 3), values >= 0.
using EnvMap = Tensor3;

bool all_finite(const Tensor3& t);

void require_same_shape(const Tensor3& a, const Tensor3& b, const char* where);

/// Rotate columns by `shift` (positive shifts move content right, wrapping in
/// azimuth). shift may be any integer; it is reduced mod width.
Tensor3 rotate_columns(const Tensor3& t, int shift);

/// Reverse column order (horizontal flip).
Tensor3 flip_columns(const Tensor3& t);

}  // namespace envdiff
