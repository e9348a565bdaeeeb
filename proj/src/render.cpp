// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#include "envdiff/render.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace envdiff {

namespace {

constexpr double kAlphaFloor = 1e-3;  // GGX delta-lobe guard

template <typename Fn>
void for_chunks(int rows, int threads, Fn&& fn) {
    // fn(chunk_index, row_begin, row_end); chunk indices are dense from 0 so
    // callers can merge per-chunk accumulators in a fixed order.
    int n = threads < 1 ? 1 : threads;
    if (n == 1 || rows < 2) {
        fn(0, 0, rows);
        return;
    }
    int chunk = (rows + n - 1) / n;
    std::vector<std::thread> pool;
    int c = 0;
    for (int begin = 0; begin < rows; begin += chunk, ++c) {
        int end = std::min(begin + chunk, rows);
        pool.emplace_back([&fn, c, begin, end] { fn(c, begin, end); });
    }
    for (auto& t : pool) t.join();
}

int num_chunks(int rows, int threads) {
    int n = threads < 1 ? 1 : threads;
    if (n == 1 || rows < 2) return 1;
    int chunk = (rows + n - 1) / n;
    return (rows + chunk - 1) / chunk;
}

struct MatSample {
    double a[3];
    double r, m;
    int i0, j0, i1, j1;
    double w00, w01, w10, w11;
};

MatSample sample_materials(const MaterialMaps& mat, double u, double v) {
    int K = mat.resolution();
    auto grid = [&](double t) {
        double x = t * K - 0.5;
        if (x < 0.0) x = 0.0;
        if (x > K - 1.0) x = K - 1.0;
        return x;
    };
    double x = grid(u), y = grid(v);
    MatSample s;
    s.j0 = static_cast<int>(x);
    s.i0 = static_cast<int>(y);
    s.j1 = std::min(s.j0 + 1, K - 1);
    s.i1 = std::min(s.i0 + 1, K - 1);
    double fx = x - s.j0, fy = y - s.i0;
    s.w00 = (1 - fx) * (1 - fy);
    s.w10 = fx * (1 - fy);
    s.w01 = (1 - fx) * fy;
    s.w11 = fx * fy;
    for (int c = 0; c < 3; ++c)
        s.a[c] = s.w00 * mat.albedo.at(s.i0, s.j0, c) +
                 s.w10 * mat.albedo.at(s.i0, s.j1, c) +
                 s.w01 * mat.albedo.at(s.i1, s.j0, c) +
                 s.w11 * mat.albedo.at(s.i1, s.j1, c);
    s.r = s.w00 * mat.roughness.at(s.i0, s.j0, 0) +
          s.w10 * mat.roughness.at(s.i0, s.j1, 0) +
          s.w01 * mat.roughness.at(s.i1, s.j0, 0) +
          s.w11 * mat.roughness.at(s.i1, s.j1, 0);
    s.m = s.w00 * mat.metallic.at(s.i0, s.j0, 0) +
          s.w10 * mat.metallic.at(s.i0, s.j1, 0) +
          s.w01 * mat.metallic.at(s.i1, s.j0, 0) +
          s.w11 * mat.metallic.at(s.i1, s.j1, 0);
    return s;
}

// Distributes a per-pixel gradient onto the four neighbouring texels.
void scatter_bilinear(Tensor3& tex, const MatSample& s, int channel, double g) {
    tex.at(s.i0, s.j0, channel) += s.w00 * g;
    tex.at(s.i0, s.j1, channel) += s.w10 * g;
    tex.at(s.i1, s.j0, channel) += s.w01 * g;
    tex.at(s.i1, s.j1, channel) += s.w11 * g;
}

struct PixelHit {
    bool hit = false;
    Vec3 pos, n, wo;
    MatSample mat;
    int triangle = -1;
};

std::vector<PixelHit> trace_view(const Scene& scene, const MaterialMaps& mat,
                                 int view_index, int threads) {
    const View& view = scene.views[static_cast<size_t>(view_index)];
    const CameraModel& cam = view.camera;
    std::vector<PixelHit> hits(static_cast<size_t>(cam.width) * cam.height);
    Vec3 origin = cam.origin();
    for_chunks(cam.height, threads, [&](int, int y0, int y1) {
        for (int py = y0; py < y1; ++py)
            for (int px = 0; px < cam.width; ++px) {
                Vec3 dir = cam.pixel_ray(px, py);
                auto h = intersect(scene.mesh, origin, dir);
                PixelHit& ph = hits[static_cast<size_t>(py) * cam.width + px];
                if (!h) continue;
                ph.hit = true;
                ph.pos = h->position;
                ph.n = h->normal;
                ph.wo = -dir;
                ph.triangle = h->triangle;
                ph.mat = sample_materials(mat, h->uv[0], h->uv[1]);
            }
    });
    return hits;
}

void check_view_index(const Scene& scene, int view_index, const char* where) {
    if (view_index < 0 || view_index >= static_cast<int>(scene.views.size()))
        throw std::invalid_argument(std::string(where) + ": view index " +
                                    std::to_string(view_index) + " out of range");
}

}  // namespace

void MaterialMaps::clamp01() {
    for (Tensor3* t : {&albedo, &roughness, &metallic})
        for (auto& x : t->v) x = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
}

Vec3 texel_direction(int env_h, int env_w, int i, int j) {
    double theta = M_PI * (i + 0.5) / env_h;
    double phi = 2.0 * M_PI * (j + 0.5) / env_w;
    double st = std::sin(theta);
    return {st * std::cos(phi), std::cos(theta), st * std::sin(phi)};
}

double texel_solid_angle(int env_h, int env_w, int i) {
    return (2.0 * M_PI / env_w) *
           (std::cos(M_PI * i / env_h) - std::cos(M_PI * (i + 1) / env_h));
}

void validate_envmap(const EnvMap& env, const char* where) {
    if (env.c != 3 || env.h < 1 || env.w < 1)
        throw std::invalid_argument(std::string(where) +
                                    ": environment map must be (H, W, 3)");
    for (double x : env.v)
        if (!(x >= 0.0) || !std::isfinite(x))
            throw std::invalid_argument(std::string(where) +
                                        ": environment map values must be "
                                        "finite and nonnegative");
}

Rgb brdf_eval(const Rgb& albedo, double roughness, double metallic, const Vec3& n,
              const Vec3& wi, const Vec3& wo) {
    BrdfDerivs d = brdf_eval_derivs(albedo, roughness, metallic, n, wi, wo);
    return {d.f[0], d.f[1], d.f[2]};
}

BrdfDerivs brdf_eval_derivs(const Rgb& albedo, double roughness, double metallic,
                            const Vec3& n, const Vec3& wi, const Vec3& wo) {
    BrdfDerivs out{};
    double a[3] = {albedo.r, albedo.g, albedo.b};
    double ci = dot(n, wi), co = dot(n, wo);
    if (ci <= 0.0 || co <= 0.0) return out;

    // diffuse lobe
    double inv_pi = 1.0 / M_PI;
    for (int c = 0; c < 3; ++c) {
        out.f[c] = (1.0 - metallic) * a[c] * inv_pi;
        out.df_da[c] = (1.0 - metallic) * inv_pi;
        out.df_dm[c] = -a[c] * inv_pi;
    }

    Vec3 h = wi + wo;
    double hl = length(h);
    if (hl < 1e-12) return out;
    h = h * (1.0 / hl);
    double nh = dot(n, h);
    if (nh < 0.0) nh = 0.0;
    double hv = dot(h, wo);
    if (hv < 0.0) hv = 0.0;

    // GGX normal distribution, alpha = r^2 floored
    double alpha = roughness * roughness;
    double dalpha_dr = 2.0 * roughness;
    if (alpha < kAlphaFloor) {
        alpha = kAlphaFloor;
        dalpha_dr = 0.0;
    }
    double a2 = alpha * alpha;
    double denom = nh * nh * (a2 - 1.0) + 1.0;
    double D = a2 / (M_PI * denom * denom);
    double dD_dalpha = (2.0 * alpha * (denom - 2.0 * a2 * nh * nh)) /
                       (M_PI * denom * denom * denom);

    // Smith-Schlick masking, k = (r+1)^2/8
    double k = (roughness + 1.0) * (roughness + 1.0) / 8.0;
    double dk_dr = (roughness + 1.0) / 4.0;
    auto g1 = [&](double c) { return c / (c * (1.0 - k) + k); };
    auto dg1_dk = [&](double c) {
        double den = c * (1.0 - k) + k;
        return -c * (1.0 - c) / (den * den);
    };
    double G = g1(ci) * g1(co);
    double dG_dk = dg1_dk(ci) * g1(co) + g1(ci) * dg1_dk(co);

    double spec_scale = D * G / (4.0 * ci * co);
    double dspec_dr =
        (dD_dalpha * dalpha_dr * G + D * dG_dk * dk_dr) / (4.0 * ci * co);

    // Schlick Fresnel at the half vector
    double q = std::pow(1.0 - hv, 5.0);
    for (int c = 0; c < 3; ++c) {
        double f0 = 0.04 * (1.0 - metallic) + a[c] * metallic;
        double F = f0 + (1.0 - f0) * q;
        double dF_df0 = 1.0 - q;
        out.f[c] += spec_scale * F;
        out.df_da[c] += spec_scale * dF_df0 * metallic;
        out.df_dm[c] += spec_scale * dF_df0 * (a[c] - 0.04);
        out.df_dr[c] = dspec_dr * F;
    }
    return out;
}

Tensor3 render(const Scene& scene, const EnvMap& env, const MaterialMaps& mat,
               int view_index, const RenderOptions& opts) {
    check_view_index(scene, view_index, "render");
    validate_envmap(env, "render");
    const View& view = scene.views[static_cast<size_t>(view_index)];
    const CameraModel& cam = view.camera;
    auto hits = trace_view(scene, mat, view_index, opts.threads);
    Tensor3 image(cam.height, cam.width, 3, opts.background);

    for_chunks(cam.height, opts.threads, [&](int, int y0, int y1) {
        for (int py = y0; py < y1; ++py)
            for (int px = 0; px < cam.width; ++px) {
                const PixelHit& ph = hits[static_cast<size_t>(py) * cam.width + px];
                if (!ph.hit) continue;
                double L[3] = {0, 0, 0};
                for (int i = 0; i < env.h; ++i) {
                    double domega = texel_solid_angle(env.h, env.w, i);
                    for (int j = 0; j < env.w; ++j) {
                        Vec3 wi = texel_direction(env.h, env.w, i, j);
                        double cosi = dot(ph.n, wi);
                        if (cosi <= 0.0) continue;
                        if (opts.shadow_rays &&
                            occluded(scene.mesh, ph.pos, wi, 1e-6, ph.triangle))
                            continue;
                        Rgb alb{ph.mat.a[0], ph.mat.a[1], ph.mat.a[2]};
                        Rgb f = brdf_eval(alb, ph.mat.r, ph.mat.m, ph.n, wi, ph.wo);
                        double cw = cosi * domega;
                        // same association as the fused gradient pass, so a
                        // perfect fit reproduces the observation bit-exactly
                        L[0] += env.at(i, j, 0) * (f.r * cw);
                        L[1] += env.at(i, j, 1) * (f.g * cw);
                        L[2] += env.at(i, j, 2) * (f.b * cw);
                    }
                }
                for (int c = 0; c < 3; ++c) image.at(py, px, c) = L[c];
            }
    });
    return image;
}

RenderGrads render_loss_and_grads(const Scene& scene, const EnvMap& env,
                                  const MaterialMaps& mat,
                                  const std::vector<int>& view_indices,
                                  const RenderOptions& opts,
                                  bool want_material_grads) {
    validate_envmap(env, "render_loss_and_grads");
    RenderGrads out;
    out.d_env = Tensor3::zeros_like(env);
    out.d_albedo = Tensor3::zeros_like(mat.albedo);
    out.d_roughness = Tensor3::zeros_like(mat.roughness);
    out.d_metallic = Tensor3::zeros_like(mat.metallic);

    int texels = env.h * env.w;
    for (int view_index : view_indices) {
        check_view_index(scene, view_index, "render_loss_and_grads");
        const View& view = scene.views[static_cast<size_t>(view_index)];
        const CameraModel& cam = view.camera;
        if (view.image.h != cam.height || view.image.w != cam.width ||
            view.image.c != 3)
            throw std::invalid_argument(
                "render_loss_and_grads: observation shape mismatch");
        if (view.mask &&
            (view.mask->h != cam.height || view.mask->w != cam.width))
            throw std::invalid_argument("render_loss_and_grads: mask shape mismatch");

        auto hits = trace_view(scene, mat, view_index, opts.threads);
        Tensor3 residual(cam.height, cam.width, 3);

        int chunks = num_chunks(cam.height, opts.threads);
        std::vector<double> chunk_loss(static_cast<size_t>(chunks), 0.0);
        std::vector<Tensor3> chunk_denv(static_cast<size_t>(chunks),
                                        Tensor3::zeros_like(env));
        std::vector<Tensor3> chunk_da, chunk_dr, chunk_dm;
        if (want_material_grads) {
            chunk_da.assign(static_cast<size_t>(chunks),
                            Tensor3::zeros_like(mat.albedo));
            chunk_dr.assign(static_cast<size_t>(chunks),
                            Tensor3::zeros_like(mat.roughness));
            chunk_dm.assign(static_cast<size_t>(chunks),
                            Tensor3::zeros_like(mat.metallic));
        }

        for_chunks(cam.height, opts.threads, [&](int chunk, int y0, int y1) {
            std::vector<double> fcv(static_cast<size_t>(texels) * 3);
            for (int py = y0; py < y1; ++py)
                for (int px = 0; px < cam.width; ++px) {
                    const PixelHit& ph =
                        hits[static_cast<size_t>(py) * cam.width + px];
                    bool masked =
                        view.mask && view.mask->at(py, px, 0) == 0.0;
                    if (masked) {
                        for (int c = 0; c < 3; ++c) residual.at(py, px, c) = 0.0;
                        continue;
                    }
                    double L[3] = {opts.background, opts.background,
                                   opts.background};
                    double A[3] = {0, 0, 0}, R[3] = {0, 0, 0}, M[3] = {0, 0, 0};
                    if (ph.hit) {
                        L[0] = L[1] = L[2] = 0.0;
                        Rgb alb{ph.mat.a[0], ph.mat.a[1], ph.mat.a[2]};
                        for (int i = 0; i < env.h; ++i) {
                            double domega = texel_solid_angle(env.h, env.w, i);
                            for (int j = 0; j < env.w; ++j) {
                                int t = i * env.w + j;
                                size_t base = static_cast<size_t>(t) * 3;
                                Vec3 wi = texel_direction(env.h, env.w, i, j);
                                double cosi = dot(ph.n, wi);
                                if (cosi <= 0.0 ||
                                    (opts.shadow_rays &&
                                     occluded(scene.mesh, ph.pos, wi, 1e-6,
                                              ph.triangle))) {
                                    fcv[base] = fcv[base + 1] = fcv[base + 2] = 0.0;
                                    continue;
                                }
                                BrdfDerivs d = brdf_eval_derivs(
                                    alb, ph.mat.r, ph.mat.m, ph.n, wi, ph.wo);
                                double cw = cosi * domega;
                                for (int c = 0; c < 3; ++c) {
                                    double e = env.at(i, j, c);
                                    double f = d.f[c] * cw;
                                    fcv[base + static_cast<size_t>(c)] = f;
                                    L[c] += e * f;
                                    if (want_material_grads) {
                                        A[c] += e * d.df_da[c] * cw;
                                        R[c] += e * d.df_dr[c] * cw;
                                        M[c] += e * d.df_dm[c] * cw;
                                    }
                                }
                            }
                        }
                    }
                    double twice_resid[3];
                    for (int c = 0; c < 3; ++c) {
                        double r = L[c] - view.image.at(py, px, c);
                        residual.at(py, px, c) = r;
                        chunk_loss[static_cast<size_t>(chunk)] += r * r;
                        twice_resid[c] = 2.0 * r;
                    }
                    if (!ph.hit) continue;
                    Tensor3& denv = chunk_denv[static_cast<size_t>(chunk)];
                    for (int t = 0; t < texels; ++t) {
                        size_t base = static_cast<size_t>(t) * 3;
                        denv.v[base] += twice_resid[0] * fcv[base];
                        denv.v[base + 1] += twice_resid[1] * fcv[base + 1];
                        denv.v[base + 2] += twice_resid[2] * fcv[base + 2];
                    }
                    if (want_material_grads) {
                        Tensor3& da = chunk_da[static_cast<size_t>(chunk)];
                        Tensor3& dr = chunk_dr[static_cast<size_t>(chunk)];
                        Tensor3& dm = chunk_dm[static_cast<size_t>(chunk)];
                        double gr = 0.0, gm = 0.0;
                        for (int c = 0; c < 3; ++c) {
                            scatter_bilinear(da, ph.mat, c, twice_resid[c] * A[c]);
                            gr += twice_resid[c] * R[c];
                            gm += twice_resid[c] * M[c];
                        }
                        scatter_bilinear(dr, ph.mat, 0, gr);
                        scatter_bilinear(dm, ph.mat, 0, gm);
                    }
                }
        });

        for (int c = 0; c < chunks; ++c) {
            out.loss += chunk_loss[static_cast<size_t>(c)];
            for (size_t i = 0; i < out.d_env.size(); ++i)
                out.d_env.v[i] += chunk_denv[static_cast<size_t>(c)].v[i];
            if (want_material_grads) {
                for (size_t i = 0; i < out.d_albedo.size(); ++i)
                    out.d_albedo.v[i] += chunk_da[static_cast<size_t>(c)].v[i];
                for (size_t i = 0; i < out.d_roughness.size(); ++i)
                    out.d_roughness.v[i] += chunk_dr[static_cast<size_t>(c)].v[i];
                for (size_t i = 0; i < out.d_metallic.size(); ++i)
                    out.d_metallic.v[i] += chunk_dm[static_cast<size_t>(c)].v[i];
            }
        }
        out.residuals.push_back(std::move(residual));
    }
    return out;
}

ViewWeights build_view_weights(const Scene& scene, const MaterialMaps& mat,
                               int view_index, int env_h, int env_w,
                               const RenderOptions& opts) {
    check_view_index(scene, view_index, "build_view_weights");
    const View& view = scene.views[static_cast<size_t>(view_index)];
    const CameraModel& cam = view.camera;
    auto hits = trace_view(scene, mat, view_index, opts.threads);

    ViewWeights vw;
    vw.image_h = cam.height;
    vw.image_w = cam.width;
    vw.env_h = env_h;
    vw.env_w = env_w;
    vw.background = opts.background;
    int pixels = cam.width * cam.height;
    int texels = env_h * env_w;
    vw.hit.assign(static_cast<size_t>(pixels), 0);
    vw.w.assign(static_cast<size_t>(pixels) * texels * 3, 0.0);

    for_chunks(cam.height, opts.threads, [&](int, int y0, int y1) {
        for (int py = y0; py < y1; ++py)
            for (int px = 0; px < cam.width; ++px) {
                int pixel = py * cam.width + px;
                const PixelHit& ph = hits[static_cast<size_t>(pixel)];
                if (!ph.hit) continue;
                vw.hit[static_cast<size_t>(pixel)] = 1;
                Rgb alb{ph.mat.a[0], ph.mat.a[1], ph.mat.a[2]};
                for (int i = 0; i < env_h; ++i) {
                    double domega = texel_solid_angle(env_h, env_w, i);
                    for (int j = 0; j < env_w; ++j) {
                        Vec3 wi = texel_direction(env_h, env_w, i, j);
                        double cosi = dot(ph.n, wi);
                        if (cosi <= 0.0) continue;
                        if (opts.shadow_rays &&
                            occluded(scene.mesh, ph.pos, wi, 1e-6, ph.triangle))
                            continue;
                        Rgb f = brdf_eval(alb, ph.mat.r, ph.mat.m, ph.n, wi, ph.wo);
                        double cw = cosi * domega;
                        size_t base =
                            (static_cast<size_t>(pixel) * texels + i * env_w + j) * 3;
                        vw.w[base] = f.r * cw;
                        vw.w[base + 1] = f.g * cw;
                        vw.w[base + 2] = f.b * cw;
                    }
                }
            }
    });
    return vw;
}

Tensor3 render_from_weights(const ViewWeights& vw, const EnvMap& env) {
    if (env.h != vw.env_h || env.w != vw.env_w || env.c != 3)
        throw std::invalid_argument("render_from_weights: env shape mismatch");
    Tensor3 image(vw.image_h, vw.image_w, 3, vw.background);
    int texels = vw.env_h * vw.env_w;
    for (int pixel = 0; pixel < vw.image_h * vw.image_w; ++pixel) {
        if (!vw.hit[static_cast<size_t>(pixel)]) continue;
        double L[3] = {0, 0, 0};
        const double* wrow = vw.w.data() + static_cast<size_t>(pixel) * texels * 3;
        for (int t = 0; t < texels; ++t) {
            L[0] += wrow[t * 3] * env.v[static_cast<size_t>(t) * 3];
            L[1] += wrow[t * 3 + 1] * env.v[static_cast<size_t>(t) * 3 + 1];
            L[2] += wrow[t * 3 + 2] * env.v[static_cast<size_t>(t) * 3 + 2];
        }
        image.v[static_cast<size_t>(pixel) * 3] = L[0];
        image.v[static_cast<size_t>(pixel) * 3 + 1] = L[1];
        image.v[static_cast<size_t>(pixel) * 3 + 2] = L[2];
    }
    return image;
}

void env_grad_from_weights(const ViewWeights& vw, const Tensor3& residual,
                           const std::optional<Tensor3>& mask, Tensor3& d_env) {
    if (d_env.h != vw.env_h || d_env.w != vw.env_w)
        throw std::invalid_argument("env_grad_from_weights: d_env shape mismatch");
    int texels = vw.env_h * vw.env_w;
    for (int pixel = 0; pixel < vw.image_h * vw.image_w; ++pixel) {
        if (!vw.hit[static_cast<size_t>(pixel)]) continue;
        if (mask && mask->v[static_cast<size_t>(pixel)] == 0.0) continue;
        const double* wrow = vw.w.data() + static_cast<size_t>(pixel) * texels * 3;
        double tr[3] = {2.0 * residual.v[static_cast<size_t>(pixel) * 3],
                        2.0 * residual.v[static_cast<size_t>(pixel) * 3 + 1],
                        2.0 * residual.v[static_cast<size_t>(pixel) * 3 + 2]};
        for (int t = 0; t < texels; ++t) {
            d_env.v[static_cast<size_t>(t) * 3] += tr[0] * wrow[t * 3];
            d_env.v[static_cast<size_t>(t) * 3 + 1] += tr[1] * wrow[t * 3 + 1];
            d_env.v[static_cast<size_t>(t) * 3 + 2] += tr[2] * wrow[t * 3 + 2];
        }
    }
}

EnvMap global_median_normalize(const EnvMap& env, double target_median) {
    if (!(target_median > 0.0))
        throw std::invalid_argument(
            "global_median_normalize: target_median must be positive");
    std::vector<double> vals(env.v);
    size_t mid = vals.size() / 2;
    std::nth_element(vals.begin(), vals.begin() + mid, vals.end());
    double median = vals[mid];
    if (!(median > 0.0))
        throw std::runtime_error(
            "global_median_normalize: map median is zero (all-zero map?)");
    double s = target_median / median;
    EnvMap out = env;
    for (auto& x : out.v) x *= s;
    return out;
}

}  // namespace envdiff
