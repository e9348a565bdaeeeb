// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
//
// Test-only oracles, independent of the library's computation paths:
// dense linear solve, explicit render-matrix assembly, exact scalar chains.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "envdiff/diffusion.hpp"
#include "envdiff/render.hpp"

namespace envdiff::oracles {

/// Gaussian elimination with partial pivoting; solves M x = b in place.
inline std::vector<double> solve_dense(std::vector<std::vector<double>> M,
                                       std::vector<double> b) {
    size_t n = M.size();
    for (size_t col = 0; col < n; ++col) {
        size_t piv = col;
        for (size_t r = col + 1; r < n; ++r)
            if (std::abs(M[r][col]) > std::abs(M[piv][col])) piv = r;
        if (std::abs(M[piv][col]) < 1e-14)
            throw std::runtime_error("solve_dense: singular matrix");
        std::swap(M[piv], M[col]);
        std::swap(b[piv], b[col]);
        for (size_t r = col + 1; r < n; ++r) {
            double f = M[r][col] / M[col][col];
            if (f == 0.0) continue;
            for (size_t c = col; c < n; ++c) M[r][c] -= f * M[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (size_t ri = n; ri-- > 0;) {
        double acc = b[ri];
        for (size_t c = ri + 1; c < n; ++c) acc -= M[ri][c] * x[c];
        x[ri] = acc / M[ri][ri];
    }
    return x;
}

/// Assembles the explicit measurement matrix of the (linear, fixed-material)
/// renderer by pushing one-hot environment maps through the public render().
/// Rows: all pixels/channels of all views, in view order; masked pixels get
/// zero rows. Columns: env texels/channels.
inline std::vector<std::vector<double>> assemble_render_matrix(
    const Scene& scene, const MaterialMaps& mat, int env_h, int env_w,
    const RenderOptions& opts) {
    size_t rows = 0;
    for (const auto& v : scene.views)
        rows += static_cast<size_t>(v.camera.width) * v.camera.height * 3;
    size_t cols = static_cast<size_t>(env_h) * env_w * 3;
    std::vector<std::vector<double>> A(rows, std::vector<double>(cols, 0.0));
    for (size_t k = 0; k < cols; ++k) {
        EnvMap basis(env_h, env_w, 3, 0.0);
        basis.v[k] = 1.0;
        size_t row = 0;
        for (size_t vi = 0; vi < scene.views.size(); ++vi) {
            Tensor3 img = render(scene, basis, mat, static_cast<int>(vi), opts);
            const auto& mask = scene.views[vi].mask;
            for (int p = 0; p < img.h * img.w; ++p)
                for (int c = 0; c < 3; ++c, ++row)
                    if (!mask || mask->v[static_cast<size_t>(p)] != 0.0)
                        A[row][k] = img.v[static_cast<size_t>(p) * 3 +
                                          static_cast<size_t>(c)];
        }
    }
    return A;
}

/// Posterior mean of a linear-Gaussian inverse problem with prior N(mu, v I)
/// and likelihood precision lambda: (A^T A lambda + I/v) m = lambda A^T y + mu/v.
inline std::vector<double> gaussian_posterior_mean(
    const std::vector<std::vector<double>>& A, const std::vector<double>& y,
    const std::vector<double>& mu, double v, double lambda) {
    size_t n = A.size(), d = A[0].size();
    std::vector<std::vector<double>> M(d, std::vector<double>(d, 0.0));
    std::vector<double> rhs(d, 0.0);
    for (size_t i = 0; i < d; ++i) M[i][i] = 1.0 / v;
    for (size_t r = 0; r < n; ++r)
        for (size_t i = 0; i < d; ++i) {
            if (A[r][i] == 0.0) continue;
            rhs[i] += lambda * A[r][i] * y[r];
            for (size_t j = i; j < d; ++j) M[i][j] += lambda * A[r][i] * A[r][j];
        }
    for (size_t i = 0; i < d; ++i)
        for (size_t j = 0; j < i; ++j) M[i][j] = M[j][i];
    for (size_t i = 0; i < d; ++i) rhs[i] += mu[i] / v;
    return solve_dense(std::move(M), std::move(rhs));
}

/// Exact per-element mean/variance of the discrete unconditional ancestral
/// chain run with the exact Gaussian score (scalar affine recursion).
inline void exact_gaussian_chain(const NoiseSchedule& s, double mu, double v,
                                 double& mean_out, double& var_out) {
    double mean = 0.0, var = 1.0;
    for (int t = s.T; t >= 1; --t) {
        double ab = s.alpha_bar(t), al = s.alpha(t), be = s.beta(t);
        double denom = ab * v + 1.0 - ab;
        double ceps = std::sqrt(1.0 - ab) / denom;
        double A = (1.0 - (1.0 - al) / std::sqrt(1.0 - ab) * ceps) / std::sqrt(al);
        double b =
            ((1.0 - al) / std::sqrt(1.0 - ab) * ceps * std::sqrt(ab) * mu) /
            std::sqrt(al);
        double sig2 =
            t > 1 ? be * (1.0 - s.alpha_bar(t - 1)) / (1.0 - ab) : 0.0;
        mean = A * mean + b;
        var = A * A * var + sig2;
    }
    mean_out = mean;
    var_out = var;
}

}  // namespace envdiff::oracles
