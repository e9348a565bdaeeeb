// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#include "envdiff/tensor.hpp"

#include <cmath>

namespace envdiff {

std::string Tensor3::shape_str() const {
    return "(" + std::to_string(h) + ", " + std::to_string(w) + ", " +
           std::to_string(c) + ")";
}

bool all_finite(const Tensor3& t) {
    for (double x : t.v)
        if (!std::isfinite(x)) return false;
    return true;
}

void require_same_shape(const Tensor3& a, const Tensor3& b, const char* where) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(where) + ": shape mismatch " +
                                    a.shape_str() + " vs " + b.shape_str());
}

Tensor3 rotate_columns(const Tensor3& t, int shift) {
    if (t.w == 0) return t;
    int s = shift % t.w;
    if (s < 0) s += t.w;
    if (s == 0) return t;
    Tensor3 out(t.h, t.w, t.c);
    for (int i = 0; i < t.h; ++i)
        for (int j = 0; j < t.w; ++j) {
            int jj = j + s;
            if (jj >= t.w) jj -= t.w;
            for (int k = 0; k < t.c; ++k) out.at(i, jj, k) = t.at(i, j, k);
        }
    return out;
}

Tensor3 flip_columns(const Tensor3& t) {
    Tensor3 out(t.h, t.w, t.c);
    for (int i = 0; i < t.h; ++i)
        for (int j = 0; j < t.w; ++j)
            for (int k = 0; k < t.c; ++k)
                out.at(i, t.w - 1 - j, k) = t.at(i, j, k);
    return out;
}

}  // namespace envdiff
