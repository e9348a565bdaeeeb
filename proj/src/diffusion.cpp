// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#include "envdiff/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace envdiff {

void NoiseSchedule::check_t(int t, const char* where) const {
    if (t < 1 || t > T)
        throw std::invalid_argument(std::string(where) + ": timestep " +
                                    std::to_string(t) + " outside [1, " +
                                    std::to_string(T) + "]");
}

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end <= 1.0))
        throw std::invalid_argument(
            "make_schedule: require 0 < beta_start <= beta_end <= 1");
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(T);
    s.alphas.resize(T);
    s.alpha_bars.resize(T);
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
        double frac = T > 1 ? static_cast<double>(t - 1) / (T - 1) : 0.0;
        double beta = beta_start + frac * (beta_end - beta_start);
        s.betas[t - 1] = beta;
        s.alphas[t - 1] = 1.0 - beta;
        prod *= s.alphas[t - 1];
        s.alpha_bars[t - 1] = prod;
    }
    return s;
}

Latent forward_marginal(const NoiseSchedule& s, const Latent& x0, int t,
                        const Latent& eps) {
    s.check_t(t, "forward_marginal");
    require_same_shape(x0, eps, "forward_marginal");
    double ab = s.alpha_bar(t);
    double a = std::sqrt(ab);
    double b = std::sqrt(1.0 - ab);
    Latent out = Tensor3::zeros_like(x0);
    for (size_t i = 0; i < x0.size(); ++i) out.v[i] = a * x0.v[i] + b * eps.v[i];
    return out;
}

Latent reverse_step(const NoiseSchedule& s, const Latent& x_t,
                    const Latent& eps_pred, int t, const Latent& z,
                    SigmaMode sigma_mode) {
    s.check_t(t, "reverse_step");
    require_same_shape(x_t, eps_pred, "reverse_step");
    require_same_shape(x_t, z, "reverse_step(z)");
    double alpha = s.alpha(t);
    double ab = s.alpha_bar(t);
    double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
    double coef = (1.0 - alpha) / std::sqrt(1.0 - ab);
    double sigma2 = sigma_mode == SigmaMode::beta
                        ? s.beta(t)
                        : s.beta(t) * (1.0 - s.alpha_bar(t - 1)) / (1.0 - ab);
    double sigma = std::sqrt(sigma2);
    Latent out = Tensor3::zeros_like(x_t);
    for (size_t i = 0; i < x_t.size(); ++i)
        out.v[i] = inv_sqrt_alpha * (x_t.v[i] - coef * eps_pred.v[i]) + sigma * z.v[i];
    return out;
}

Latent score_from_eps(const Latent& eps_pred, double alpha_bar) {
    if (!(alpha_bar >= 0.0) || alpha_bar >= 1.0)
        throw std::domain_error("score_from_eps: alpha_bar must lie in [0, 1)");
    double inv = 1.0 / std::sqrt(1.0 - alpha_bar);
    Latent out = Tensor3::zeros_like(eps_pred);
    for (size_t i = 0; i < eps_pred.size(); ++i) out.v[i] = -eps_pred.v[i] * inv;
    return out;
}

Latent posterior_x0(const NoiseSchedule& s, const Latent& x_t,
                    const Latent& score, int t) {
    s.check_t(t, "posterior_x0");
    require_same_shape(x_t, score, "posterior_x0");
    double ab = s.alpha_bar(t);
    if (ab <= 0.0)
        throw std::domain_error(
            "posterior_x0: alpha_bar is zero at t=" + std::to_string(t) +
            " (no clean-image estimate at a zero-signal step)");
    double inv = 1.0 / std::sqrt(ab);
    double c = 1.0 - ab;
    Latent out = Tensor3::zeros_like(x_t);
    for (size_t i = 0; i < x_t.size(); ++i)
        out.v[i] = inv * (x_t.v[i] + c * score.v[i]);
    return out;
}

}  // namespace envdiff
