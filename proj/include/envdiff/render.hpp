// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "envdiff/geometry.hpp"
#include "envdiff/tensor.hpp"

namespace envdiff {

/// Spatially-varying material textures: albedo (K,K,3), roughness (K,K,1),
/// metallic (K,K,1). All channels live in [0,1]; the optimizers clamp after
/// every step. Sampled bilinearly at UV coordinates with clamped edges.
struct MaterialMaps {
    Tensor3 albedo;
    Tensor3 roughness;
    Tensor3 metallic;

    MaterialMaps() = default;
    MaterialMaps(int resolution, double a, double r, double m)
        : albedo(resolution, resolution, 3, a),
          roughness(resolution, resolution, 1, r),
          metallic(resolution, resolution, 1, m) {}

    int resolution() const { return albedo.h; }
    void clamp01();
};

struct View {
    CameraModel camera;
    Tensor3 image;                 // observation, (h, w, 3)
    std::optional<Tensor3> mask;   // (h, w, 1), nonzero = pixel participates
};

struct Scene {
    Mesh mesh;
    std::vector<View> views;
};

struct RenderOptions {
    bool shadow_rays = false;
    double background = 0.0;  // radiance of miss pixels, >= 0
    int threads = 1;
};

/// Direction of the center of equirect texel (i, j); y is up, row 0 is the
/// zenith ring.
Vec3 texel_direction(int env_h, int env_w, int i, int j);

/// Exact solid angle of row i's texels: (2pi/W) * (cos(pi i/H) - cos(pi (i+1)/H)).
/// Rows sum to exactly 4pi over the sphere.
double texel_solid_angle(int env_h, int env_w, int i);

void validate_envmap(const EnvMap& env, const char* where);

/// Cook-Torrance metallic/roughness BRDF:
///   f = (1-m) a/pi + D F G / (4 (n.wi)(n.wo))
/// GGX D with alpha = max(r^2, 1e-3), Schlick F with F0 = 0.04(1-m) + a m,
/// Smith-Schlick G with k = (r+1)^2/8. Zero when either cosine is
/// non-positive.
struct Rgb {
    double r = 0.0, g = 0.0, b = 0.0;
};
Rgb brdf_eval(const Rgb& albedo, double roughness, double metallic, const Vec3& n,
              const Vec3& wi, const Vec3& wo);

/// brdf_eval plus analytic partials w.r.t. albedo (diagonal per channel),
/// roughness and metallic.
struct BrdfDerivs {
    double f[3];
    double df_da[3];  // d f_c / d a_c
    double df_dr[3];
    double df_dm[3];
};
BrdfDerivs brdf_eval_derivs(const Rgb& albedo, double roughness, double metallic,
                            const Vec3& n, const Vec3& wi, const Vec3& wo);

/// Deterministic direct-lighting render of one view: every pixel sums all
/// environment texels (no Monte Carlo), L = sum env * f * max(n.w, 0) * V * dOmega.
Tensor3 render(const Scene& scene, const EnvMap& env, const MaterialMaps& mat,
               int view_index, const RenderOptions& opts);

struct RenderGrads {
    double loss = 0.0;
    Tensor3 d_env;
    Tensor3 d_albedo;
    Tensor3 d_roughness;
    Tensor3 d_metallic;
    std::vector<Tensor3> residuals;  // rendered - observed, per requested view
};

/// Squared-error loss over the requested views and its analytic gradients.
/// Masked pixels contribute neither loss nor gradients. Material gradients
/// are skipped (left zero) when want_material_grads is false.
RenderGrads render_loss_and_grads(const Scene& scene, const EnvMap& env,
                                  const MaterialMaps& mat,
                                  const std::vector<int>& view_indices,
                                  const RenderOptions& opts,
                                  bool want_material_grads = true);

/// Per-view linearization: with the materials held fixed the render is linear
/// in the environment map. weight(px, texel, c) folds BRDF, cosine,
/// visibility and solid angle. Used by fixed-material solver runs.
struct ViewWeights {
    int image_h = 0, image_w = 0;
    int env_h = 0, env_w = 0;
    std::vector<uint8_t> hit;  // per pixel
    std::vector<double> w;     // [pixel][texel][channel]
    double background = 0.0;

    double weight(int pixel, int texel, int c) const {
        return w[(static_cast<size_t>(pixel) * env_h * env_w + texel) * 3 + c];
    }
};
ViewWeights build_view_weights(const Scene& scene, const MaterialMaps& mat,
                               int view_index, int env_h, int env_w,
                               const RenderOptions& opts);
Tensor3 render_from_weights(const ViewWeights& vw, const EnvMap& env);
/// Accumulates d(sum of squared residuals)/d(env) into d_env.
void env_grad_from_weights(const ViewWeights& vw, const Tensor3& residual,
                           const std::optional<Tensor3>& mask, Tensor3& d_env);

/// Scales the map so its median texel value equals target_median.
EnvMap global_median_normalize(const EnvMap& env, double target_median);

}  // namespace envdiff
