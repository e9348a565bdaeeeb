// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "envdiff/diffusion.hpp"
#include "envdiff/prior.hpp"
#include "envdiff/render.hpp"
#include "envdiff/tonemap.hpp"

namespace envdiff {

enum class PriorMode { none, global_norm, smoothness, chromaticity, diffusion };

PriorMode prior_mode_from_string(const std::string& s);
std::string to_string(PriorMode m);

struct SolverConfig {
    const NoiseSchedule* schedule = nullptr;  // required for diffusion solves
    SigmaMode sigma_mode = SigmaMode::tilde_beta;
    Tonemap tonemap = Tonemap::outdoor();

    double rho_high = 0.1;     // guidance weight while t > rho_switch_t
    double rho_low_max = 1.0;  // ramp target as t -> 0
    int rho_switch_t = 500;

    int init_iterations = 400;
    int refine_iterations = 200;
    double init_lr = 1e-2;      // joint env+material Adam rate (init stage)
    double material_lr = 1e-2;  // material Adam rate (denoise + refine)
    int material_steps_per_denoise = 1;
    bool optimize_materials = true;  // false: materials stay fixed, refine skipped

    PriorMode prior = PriorMode::diffusion;
    double smoothness_weight = -1.0;  // < 0: balance against the render loss
    double chroma_weight = -1.0;      // after a short unregularized warmup
    double global_norm_target_median = 1.0;

    bool rotation_trick = true;  // random column shift per denoising step

    int env_h = 16, env_w = 32;  // environment resolution (init / baselines)
    int material_resolution = 32;
    uint64_t seed = 0;
    RenderOptions render;
};

struct StageTrace {
    std::string stage;  // "init" | "denoise" | "refine" | "baseline"
    double learning_rate = 0.0;
    double reg_weight = 0.0;  // smoothness/chroma weight actually used
    std::vector<double> loss;
};

struct SolveResult {
    EnvMap env;  // HDR domain, nonnegative
    MaterialMaps materials;
    std::vector<StageTrace> traces;
    std::vector<double> rho_trace;  // per denoise step, t = T..1
    uint64_t seed = 0;
};

class SolverError : public std::runtime_error {
  public:
    SolverError(const std::string& stage, int step, const std::string& msg)
        : std::runtime_error("solver[" + stage + "] step " + std::to_string(step) +
                             ": " + msg),
          stage_name(stage),
          step_index(step) {}
    std::string stage_name;
    int step_index;
};

/// Guidance weight: rho_high above rho_switch_t, then a linear ramp reaching
/// rho_low_max in the t -> 0 limit. t = 0 is allowed and returns the limit.
double rho_schedule(const SolverConfig& cfg, int t);

struct InitResult {
    EnvMap env;  // HDR, clamped >= 0
    MaterialMaps materials;  // albedo zeroed, roughness/metallic retained
    StageTrace trace;
};

/// Joint env+material fit of the plain re-render loss; afterwards the albedo
/// is reset to zero while roughness/metallic carry over to the sampler.
/// env0/mat0 override the default constant starting point when given.
InitResult init_stage(const Scene& scene, const SolverConfig& cfg,
                      const EnvMap* env0 = nullptr,
                      const MaterialMaps* mat0 = nullptr);

/// Guided reverse diffusion with interleaved material updates, followed by
/// the refine stage (when materials are optimized).
SolveResult dps_sample(const Scene& scene, const ScoreModel& model,
                       const SolverConfig& cfg, const MaterialMaps& mat_init,
                       uint64_t sample_seed);

/// Materials-only fit against a fixed HDR environment.
StageTrace refine_stage(const Scene& scene, const EnvMap& env_final,
                        MaterialMaps& mat, const SolverConfig& cfg);

/// Joint optimization with one of the non-diffusion priors.
SolveResult baseline_solve(const Scene& scene, const SolverConfig& cfg);

/// Plain ancestral rollout of the prior; returns the final latent-domain x0.
Latent sample_unconditional(const ScoreModel& model, const NoiseSchedule& schedule,
                            SigmaMode sigma_mode, uint64_t seed,
                            bool rotation_trick);

/// Total-variation and chromaticity penalties with their (sub)gradients;
/// exposed for tests and the baseline solver.
double tv_penalty(const EnvMap& env, Tensor3* grad = nullptr);
double chroma_penalty(const EnvMap& env, Tensor3* grad = nullptr);

}  // namespace envdiff
