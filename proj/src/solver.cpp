// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#include "envdiff/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "envdiff/adam.hpp"

namespace envdiff {

namespace {

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void clamp_nonneg(Tensor3& t) {
    for (auto& x : t.v)
        if (x < 0.0) x = 0.0;
}

std::vector<int> all_view_indices(const Scene& scene) {
    std::vector<int> idx(scene.views.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    return idx;
}

}  // namespace

PriorMode prior_mode_from_string(const std::string& s) {
    if (s == "none") return PriorMode::none;
    if (s == "global_norm") return PriorMode::global_norm;
    if (s == "smoothness") return PriorMode::smoothness;
    if (s == "chromaticity") return PriorMode::chromaticity;
    if (s == "diffusion") return PriorMode::diffusion;
    throw std::invalid_argument("unknown prior mode '" + s + "'");
}

std::string to_string(PriorMode m) {
    switch (m) {
        case PriorMode::none: return "none";
        case PriorMode::global_norm: return "global_norm";
        case PriorMode::smoothness: return "smoothness";
        case PriorMode::chromaticity: return "chromaticity";
        case PriorMode::diffusion: return "diffusion";
    }
    return "?";
}

double rho_schedule(const SolverConfig& cfg, int t) {
    if (t < 0) throw std::invalid_argument("rho_schedule: t must be >= 0");
    if (t > cfg.rho_switch_t) return cfg.rho_high;
    double frac = cfg.rho_switch_t > 0
                      ? static_cast<double>(cfg.rho_switch_t - t) / cfg.rho_switch_t
                      : 1.0;
    return cfg.rho_high + (cfg.rho_low_max - cfg.rho_high) * frac;
}

double tv_penalty(const EnvMap& env, Tensor3* grad) {
    double total = 0.0;
    for (int i = 0; i < env.h; ++i)
        for (int j = 0; j < env.w; ++j)
            for (int c = 0; c < env.c; ++c) {
                int jn = (j + 1) % env.w;  // wrap in azimuth
                double dh = env.at(i, jn, c) - env.at(i, j, c);
                total += std::abs(dh);
                if (grad) {
                    grad->at(i, jn, c) += sgn(dh);
                    grad->at(i, j, c) -= sgn(dh);
                }
                if (i + 1 < env.h) {
                    double dv = env.at(i + 1, j, c) - env.at(i, j, c);
                    total += std::abs(dv);
                    if (grad) {
                        grad->at(i + 1, j, c) += sgn(dv);
                        grad->at(i, j, c) -= sgn(dv);
                    }
                }
            }
    return total;
}

double chroma_penalty(const EnvMap& env, Tensor3* grad) {
    double total = 0.0;
    for (int i = 0; i < env.h; ++i)
        for (int j = 0; j < env.w; ++j) {
            double s[3];
            for (int c = 0; c < 3; ++c) {
                // (2a - b - c)/3 form: exactly zero when the channels agree
                double d = (2.0 * env.at(i, j, c) - env.at(i, j, (c + 1) % 3) -
                            env.at(i, j, (c + 2) % 3)) /
                           3.0;
                total += std::abs(d);
                s[c] = sgn(d);
            }
            if (grad) {
                double ssum = (s[0] + s[1] + s[2]) / 3.0;
                for (int c = 0; c < 3; ++c) grad->at(i, j, c) += s[c] - ssum;
            }
        }
    return total;
}

namespace {

// Shared by init_stage and baseline_solve: joint Adam on (env, materials)
// against the re-render loss, optionally with a regularizer on the env.
struct JointFit {
    EnvMap env;
    MaterialMaps mat;
    StageTrace trace;
};

JointFit joint_optimize(const Scene& scene, const SolverConfig& cfg,
                        const std::string& stage, PriorMode reg_mode,
                        int iterations, const EnvMap* env0 = nullptr,
                        const MaterialMaps* mat0 = nullptr) {
    JointFit fit;
    fit.env = env0 ? *env0 : EnvMap(cfg.env_h, cfg.env_w, 3, 0.5);
    fit.mat = mat0 ? *mat0 : MaterialMaps(cfg.material_resolution, 0.5, 0.5, 0.1);
    fit.trace.stage = stage;
    fit.trace.learning_rate = cfg.init_lr;

    Adam adam({cfg.init_lr, 0.9, 0.999, 1e-8});
    auto views = all_view_indices(scene);

    bool auto_weight = (reg_mode == PriorMode::smoothness && cfg.smoothness_weight < 0.0) ||
                       (reg_mode == PriorMode::chromaticity && cfg.chroma_weight < 0.0);
    double weight = 0.0;
    if (reg_mode == PriorMode::smoothness && cfg.smoothness_weight >= 0.0)
        weight = cfg.smoothness_weight;
    if (reg_mode == PriorMode::chromaticity && cfg.chroma_weight >= 0.0)
        weight = cfg.chroma_weight;
    int warmup = auto_weight ? std::min(20, iterations / 10) : 0;

    for (int it = 0; it < iterations; ++it) {
        RenderGrads g =
            render_loss_and_grads(scene, fit.env, fit.mat, views, cfg.render, true);
        if (!std::isfinite(g.loss))
            throw SolverError(stage, it, "non-finite rendering loss");

        double reg = 0.0;
        if (reg_mode == PriorMode::smoothness || reg_mode == PriorMode::chromaticity) {
            Tensor3 reg_grad = Tensor3::zeros_like(fit.env);
            reg = reg_mode == PriorMode::smoothness
                      ? tv_penalty(fit.env, &reg_grad)
                      : chroma_penalty(fit.env, &reg_grad);
            if (auto_weight && it == warmup)
                weight = reg > 1e-12 ? g.loss / reg : 1.0;
            if (it >= warmup && weight > 0.0)
                for (size_t i = 0; i < g.d_env.size(); ++i)
                    g.d_env.v[i] += weight * reg_grad.v[i];
        }

        std::vector<Tensor3*> ps = {&fit.env, &fit.mat.albedo, &fit.mat.roughness,
                                    &fit.mat.metallic};
        std::vector<const Tensor3*> gs = {&g.d_env, &g.d_albedo, &g.d_roughness,
                                          &g.d_metallic};
        adam.step(ps, gs);
        clamp_nonneg(fit.env);
        fit.mat.clamp01();
        fit.trace.loss.push_back(g.loss);
    }
    fit.trace.reg_weight = weight;
    return fit;
}

}  // namespace

InitResult init_stage(const Scene& scene, const SolverConfig& cfg,
                      const EnvMap* env0, const MaterialMaps* mat0) {
    JointFit fit = joint_optimize(scene, cfg, "init", PriorMode::none,
                                  cfg.init_iterations, env0, mat0);
    InitResult out;
    out.env = std::move(fit.env);
    out.materials = std::move(fit.mat);
    out.trace = std::move(fit.trace);
    // roughness and metallic carry over; base color restarts from black
    for (auto& x : out.materials.albedo.v) x = 0.0;
    return out;
}

SolveResult baseline_solve(const Scene& scene, const SolverConfig& cfg) {
    if (cfg.prior == PriorMode::diffusion)
        throw std::invalid_argument(
            "baseline_solve: prior mode must not be 'diffusion'");
    JointFit fit =
        joint_optimize(scene, cfg, "baseline", cfg.prior, cfg.init_iterations);
    SolveResult out;
    out.env = std::move(fit.env);
    out.materials = std::move(fit.mat);
    if (cfg.prior == PriorMode::global_norm)
        out.env = global_median_normalize(out.env, cfg.global_norm_target_median);
    out.traces.push_back(std::move(fit.trace));
    out.seed = cfg.seed;
    return out;
}

StageTrace refine_stage(const Scene& scene, const EnvMap& env_final,
                        MaterialMaps& mat, const SolverConfig& cfg) {
    StageTrace trace;
    trace.stage = "refine";
    trace.learning_rate = cfg.material_lr;
    Adam adam({cfg.material_lr, 0.9, 0.999, 1e-8});
    auto views = all_view_indices(scene);
    for (int it = 0; it < cfg.refine_iterations; ++it) {
        RenderGrads g =
            render_loss_and_grads(scene, env_final, mat, views, cfg.render, true);
        if (!std::isfinite(g.loss))
            throw SolverError("refine", it, "non-finite rendering loss");
        std::vector<Tensor3*> ps = {&mat.albedo, &mat.roughness, &mat.metallic};
        std::vector<const Tensor3*> gs = {&g.d_albedo, &g.d_roughness, &g.d_metallic};
        adam.step(ps, gs);
        mat.clamp01();
        trace.loss.push_back(g.loss);
    }
    return trace;
}

Latent sample_unconditional(const ScoreModel& model, const NoiseSchedule& schedule,
                            SigmaMode sigma_mode, uint64_t seed,
                            bool rotation_trick) {
    Rng rng(seed, "sample");
    Latent x(model.height(), model.width(), model.channels());
    rng.fill_normal(x);
    Latent z = Tensor3::zeros_like(x);
    for (int t = schedule.T; t >= 1; --t) {
        int shift = rotation_trick ? rng.uniform_int(x.w) : 0;
        Latent eps = rotated_eps(model, x, t, shift);
        for (auto& e : z.v) e = 0.0;
        if (t > 1) rng.fill_normal(z);
        x = reverse_step(schedule, x, eps, t, z, sigma_mode);
    }
    return x;
}

SolveResult dps_sample(const Scene& scene, const ScoreModel& model,
                       const SolverConfig& cfg, const MaterialMaps& mat_init,
                       uint64_t sample_seed) {
    if (!cfg.schedule)
        throw std::invalid_argument("dps_sample: config must reference a schedule");
    const NoiseSchedule& schedule = *cfg.schedule;
    const Tonemap& tm = cfg.tonemap;
    int H = model.height(), W = model.width();
    if (model.channels() != 3)
        throw std::invalid_argument("dps_sample: model must predict 3 channels");

    SolveResult out;
    out.seed = sample_seed;
    MaterialMaps mat = mat_init;
    Adam adam_mat({cfg.material_lr, 0.9, 0.999, 1e-8});
    auto views = all_view_indices(scene);

    // With fixed materials the render is linear in the env: precompute the
    // per-view shading weights once.
    std::vector<ViewWeights> weights;
    if (!cfg.optimize_materials)
        for (int v : views)
            weights.push_back(build_view_weights(scene, mat, v, H, W, cfg.render));

    StageTrace denoise;
    denoise.stage = "denoise";
    denoise.learning_rate = cfg.material_lr;

    Rng rng(sample_seed, "sample");
    Latent x(H, W, 3);
    rng.fill_normal(x);
    Latent z = Tensor3::zeros_like(x);

    for (int t = schedule.T; t >= 1; --t) {
        int shift = cfg.rotation_trick ? rng.uniform_int(W) : 0;
        Latent eps = rotated_eps(model, x, t, shift);
        double rho = rho_schedule(cfg, t);
        out.rho_trace.push_back(rho);
        double ab = schedule.alpha_bar(t);
        double step_loss = std::numeric_limits<double>::quiet_NaN();

        Latent eps_guided = eps;
        if (ab > 0.0) {
            Latent score = score_from_eps(eps, ab);
            Latent xhat = posterior_x0(schedule, x, score, t);
            EnvMap env_hdr = Tensor3::zeros_like(xhat);
            for (size_t i = 0; i < xhat.size(); ++i)
                env_hdr.v[i] = tm.inverse(xhat.v[i] < 0.0 ? 0.0 : xhat.v[i]);

            Tensor3 d_env = Tensor3::zeros_like(env_hdr);
            double loss = 0.0;
            RenderGrads fused;
            if (!cfg.optimize_materials) {
                for (size_t vi = 0; vi < weights.size(); ++vi) {
                    const View& view = scene.views[static_cast<size_t>(views[vi])];
                    Tensor3 image = render_from_weights(weights[vi], env_hdr);
                    Tensor3 resid = Tensor3::zeros_like(image);
                    for (int p = 0; p < image.h * image.w; ++p) {
                        if (view.mask && view.mask->v[static_cast<size_t>(p)] == 0.0)
                            continue;
                        for (int c = 0; c < 3; ++c) {
                            size_t k = static_cast<size_t>(p) * 3 +
                                       static_cast<size_t>(c);
                            double r = image.v[k] - view.image.v[k];
                            resid.v[k] = r;
                            loss += r * r;
                        }
                    }
                    env_grad_from_weights(weights[vi], resid, view.mask, d_env);
                }
            } else {
                fused = render_loss_and_grads(scene, env_hdr, mat, views,
                                              cfg.render, true);
                loss = fused.loss;
                d_env = std::move(fused.d_env);
            }
            if (!std::isfinite(loss))
                throw SolverError("denoise", t, "non-finite rendering loss");
            step_loss = loss;

            if (rho != 0.0) {
                // chain: d env / d xhat = f_inv'(xhat) on the unclamped side,
                // then d xhat / d x_t = 1 / sqrt(alpha_bar)
                double inv_sa = 1.0 / std::sqrt(ab);
                double guide_scale = std::sqrt(1.0 - ab) * rho;
                for (size_t i = 0; i < x.size(); ++i) {
                    double xh = xhat.v[i];
                    double dxhat =
                        xh > 0.0 ? d_env.v[i] * tm.inverse_deriv(xh) : 0.0;
                    eps_guided.v[i] = eps.v[i] + guide_scale * (dxhat * inv_sa);
                }
            }

            if (cfg.optimize_materials && cfg.material_steps_per_denoise > 0) {
                for (int ms = 0; ms < cfg.material_steps_per_denoise; ++ms) {
                    if (ms > 0)
                        fused = render_loss_and_grads(scene, env_hdr, mat, views,
                                                      cfg.render, true);
                    std::vector<Tensor3*> ps = {&mat.albedo, &mat.roughness,
                                                &mat.metallic};
                    std::vector<const Tensor3*> gs = {
                        &fused.d_albedo, &fused.d_roughness, &fused.d_metallic};
                    adam_mat.step(ps, gs);
                    mat.clamp01();
                }
            }
        }

        for (auto& e : z.v) e = 0.0;
        if (t > 1) rng.fill_normal(z);
        x = reverse_step(schedule, x, eps_guided, t, z, cfg.sigma_mode);
        if (!all_finite(x))
            throw SolverError("denoise", t, "non-finite latent state");
        denoise.loss.push_back(step_loss);
    }

    out.env = Tensor3::zeros_like(x);
    for (size_t i = 0; i < x.size(); ++i)
        out.env.v[i] = tm.inverse(x.v[i] < 0.0 ? 0.0 : x.v[i]);
    out.traces.push_back(std::move(denoise));
    if (cfg.optimize_materials) {
        StageTrace refine = refine_stage(scene, out.env, mat, cfg);
        out.traces.push_back(std::move(refine));
    }
    out.materials = std::move(mat);
    return out;
}

}  // namespace envdiff
