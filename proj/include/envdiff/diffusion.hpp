// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "envdiff/tensor.hpp"

namespace envdiff {

/// Timestep-indexed variance schedule. Tables are 1-based via the accessors:
/// beta(t), alpha(t), alpha_bar(t) for t in [1, T]; alpha_bar(0) == 1.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;       // beta_t, strictly increasing, in (0, 1]
    std::vector<double> alphas;      // alpha_t = 1 - beta_t
    std::vector<double> alpha_bars;  // running product of alphas

    double beta(int t) const { return betas[static_cast<size_t>(t) - 1]; }
    double alpha(int t) const { return alphas[static_cast<size_t>(t) - 1]; }
    double alpha_bar(int t) const {
        return t == 0 ? 1.0 : alpha_bars[static_cast<size_t>(t) - 1];
    }
    void check_t(int t, const char* where) const;
};

/// Linear beta schedule: beta_t = beta_start + (t-1)/(T-1) * (beta_end-beta_start).
/// The standard configuration is T=1000, beta in [1e-4, 0.02]; beta_end = 1
/// makes the final step fully destructive (alpha_bar(T) == 0 exactly).
NoiseSchedule make_schedule(int T, double beta_start, double beta_end);

/// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
Latent forward_marginal(const NoiseSchedule& s, const Latent& x0, int t,
                        const Latent& eps);

enum class SigmaMode {
    beta,       // sigma_t^2 = beta_t
    tilde_beta  // sigma_t^2 = beta_t * (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)
};

/// One ancestral step:
///   x_{t-1} = (x_t - (1-alpha_t)/sqrt(1-alpha_bar_t) * eps_pred) / sqrt(alpha_t)
///             + sigma_t * z.
/// z is supplied by the caller and must be zero at t = 1 (noiseless last step).
Latent reverse_step(const NoiseSchedule& s, const Latent& x_t,
                    const Latent& eps_pred, int t, const Latent& z,
                    SigmaMode sigma_mode);

/// Score from predicted noise: s = -eps_pred / sqrt(1 - alpha_bar). The sign
/// is the one that makes posterior_x0 recover x0 on exact inputs.
Latent score_from_eps(const Latent& eps_pred, double alpha_bar);

/// Posterior clean-image estimate:
///   x_hat = (x_t + (1 - alpha_bar_t) * score) / sqrt(alpha_bar_t).
/// Throws std::domain_error at a zero-signal step (alpha_bar_t == 0).
Latent posterior_x0(const NoiseSchedule& s, const Latent& x_t,
                    const Latent& score, int t);

}  // namespace envdiff
