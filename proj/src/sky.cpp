// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#include "envdiff/sky.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "envdiff/pfm.hpp"
#include "json.hpp"

namespace envdiff {

namespace {

double mix64(uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ULL;
    x ^= x >> 33;
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

// Lattice value keyed by (seed, octave, ix, iy); ix wraps in azimuth.
double lattice(uint64_t seed, int octave, int ix, int iy, int nx) {
    ix %= nx;
    if (ix < 0) ix += nx;
    uint64_t key = seed;
    key = key * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(octave + 1);
    key = key * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(ix + 1);
    key = key * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(iy + 1);
    return mix64(key);
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise on the azimuth-wrapped (u, v) rectangle, u in [0,1) wrapping.
double value_noise(uint64_t seed, int octave, double u, double v, int nx, int ny) {
    double x = u * nx, y = v * ny;
    int ix = static_cast<int>(std::floor(x)), iy = static_cast<int>(std::floor(y));
    double fx = smooth(x - ix), fy = smooth(y - iy);
    double v00 = lattice(seed, octave, ix, iy, nx);
    double v10 = lattice(seed, octave, ix + 1, iy, nx);
    double v01 = lattice(seed, octave, ix, iy + 1, nx);
    double v11 = lattice(seed, octave, ix + 1, iy + 1, nx);
    return (v00 * (1 - fx) + v10 * fx) * (1 - fy) + (v01 * (1 - fx) + v11 * fx) * fy;
}

double fbm(uint64_t seed, double u, double v, int octaves, double gain) {
    double amp = 1.0, sum = 0.0, norm = 0.0;
    int nx = 4, ny = 2;
    for (int o = 0; o < octaves; ++o) {
        sum += amp * value_noise(seed, o, u, v, nx, ny);
        norm += amp;
        amp *= gain;
        nx *= 2;
        ny *= 2;
    }
    return norm > 0.0 ? sum / norm : 0.0;
}

double smoothstep(double e0, double e1, double x) {
    double t = (x - e0) / (e1 - e0);
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
    return t * t * (3.0 - 2.0 * t);
}

}  // namespace

EnvMap gen_sky(const SkyParams& p, int height, int width) {
    if (height < 4 || width < 4)
        throw std::invalid_argument("gen_sky: need height, width >= 4");
    EnvMap env(height, width, 3);
    double se = std::sin(p.sun_elevation), ce = std::cos(p.sun_elevation);
    // y up; azimuth measured around y
    double sx = ce * std::cos(p.sun_azimuth);
    double sy = se;
    double sz = ce * std::sin(p.sun_azimuth);
    for (int i = 0; i < height; ++i) {
        double theta = M_PI * (i + 0.5) / height;  // polar from zenith
        double st = std::sin(theta), ct = std::cos(theta);
        bool above = theta < M_PI / 2.0;
        double grad = theta / (M_PI / 2.0);  // 0 at zenith, 1 at horizon
        for (int j = 0; j < width; ++j) {
            double phi = 2.0 * M_PI * (j + 0.5) / width;
            double dx = st * std::cos(phi), dy = ct, dz = st * std::sin(phi);
            double r, g, b;
            if (above) {
                double t = smooth(grad);
                r = p.zenith_color[0] * (1 - t) + p.horizon_color[0] * t;
                g = p.zenith_color[1] * (1 - t) + p.horizon_color[1] * t;
                b = p.zenith_color[2] * (1 - t) + p.horizon_color[2] * t;
                if (p.cloud_octaves > 0) {
                    double u = phi / (2.0 * M_PI);
                    double c = fbm(p.seed, u, grad, p.cloud_octaves, p.cloud_gain);
                    double cloud = smoothstep(0.45, 0.75, c);
                    r += cloud * 0.6;
                    g += cloud * 0.6;
                    b += cloud * 0.6;
                }
            } else {
                r = p.ground_color[0];
                g = p.ground_color[1];
                b = p.ground_color[2];
            }
            if (p.sun_intensity > 0.0) {
                double cosang = dx * sx + dy * sy + dz * sz;
                cosang = cosang > 1.0 ? 1.0 : (cosang < -1.0 ? -1.0 : cosang);
                double ang = std::acos(cosang);
                double w = 1.0 - smoothstep(0.6 * p.sun_radius, p.sun_radius, ang);
                double s = p.sun_intensity * w;
                r += s;
                g += s;
                b += s * 0.9;  // slightly warm disk
            }
            env.at(i, j, 0) = r < 0.0 ? 0.0 : r;
            env.at(i, j, 1) = g < 0.0 ? 0.0 : g;
            env.at(i, j, 2) = b < 0.0 ? 0.0 : b;
        }
    }
    return env;
}

SkyParams random_sky_params(Rng& rng, const CorpusOptions& opts) {
    SkyParams p;
    p.sun_azimuth = opts.fixed_sun_azimuth ? *opts.fixed_sun_azimuth
                                           : rng.uniform(0.0, 2.0 * M_PI);
    p.sun_elevation = rng.uniform(0.1, M_PI / 2.0);
    p.sun_radius = rng.uniform(0.04, 0.25);
    p.sun_intensity = std::exp(rng.uniform(std::log(2.0), std::log(50.0)));
    double hue = rng.uniform(0.0, 1.0);
    p.zenith_color = {0.08 + 0.15 * hue, 0.15 + 0.2 * hue, 0.35 + 0.3 * hue};
    p.horizon_color = {0.4 + rng.uniform(0.0, 0.4), 0.35 + rng.uniform(0.0, 0.35),
                       0.3 + rng.uniform(0.0, 0.3)};
    p.ground_color = {rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.25),
                      rng.uniform(0.03, 0.2)};
    p.cloud_octaves = 2 + rng.uniform_int(3);
    p.cloud_gain = rng.uniform(0.25, 0.6);
    p.seed = rng.next_u64();
    return p;
}

namespace {

nlohmann::json params_to_json(const SkyParams& p) {
    return nlohmann::json{{"sun_azimuth", p.sun_azimuth},
                          {"sun_elevation", p.sun_elevation},
                          {"sun_radius", p.sun_radius},
                          {"sun_intensity", p.sun_intensity},
                          {"zenith_color", p.zenith_color},
                          {"horizon_color", p.horizon_color},
                          {"ground_color", p.ground_color},
                          {"cloud_octaves", p.cloud_octaves},
                          {"cloud_gain", p.cloud_gain},
                          {"seed", p.seed}};
}

SkyParams params_from_json(const nlohmann::json& j) {
    SkyParams p;
    p.sun_azimuth = j.at("sun_azimuth").get<double>();
    p.sun_elevation = j.at("sun_elevation").get<double>();
    p.sun_radius = j.at("sun_radius").get<double>();
    p.sun_intensity = j.at("sun_intensity").get<double>();
    p.zenith_color = j.at("zenith_color").get<std::array<double, 3>>();
    p.horizon_color = j.at("horizon_color").get<std::array<double, 3>>();
    p.ground_color = j.at("ground_color").get<std::array<double, 3>>();
    p.cloud_octaves = j.at("cloud_octaves").get<int>();
    p.cloud_gain = j.at("cloud_gain").get<double>();
    p.seed = j.at("seed").get<uint64_t>();
    return p;
}

}  // namespace

CorpusManifest gen_corpus(const std::string& out_dir, uint64_t seed,
                          const CorpusOptions& opts) {
    if (opts.count < 1) throw std::invalid_argument("gen_corpus: count must be >= 1");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec && !std::filesystem::is_directory(out_dir))
        throw std::runtime_error("gen_corpus: cannot create " + out_dir);

    CorpusManifest m;
    m.seed = seed;
    m.tonemap = opts.tonemap;
    Rng rng(seed, "corpus");
    std::vector<float> all_values;
    all_values.reserve(static_cast<size_t>(opts.count) * opts.height * opts.width * 3);
    for (int idx = 0; idx < opts.count; ++idx) {
        Rng map_rng = rng.fork(static_cast<uint64_t>(idx));
        SkyParams p = random_sky_params(map_rng, opts);
        EnvMap env = gen_sky(p, opts.height, opts.width);
        char name[32];
        std::snprintf(name, sizeof(name), "map_%04d.pfm", idx);
        save_pfm_tensor(out_dir + "/" + name, env);
        // median computed over the float32 values actually stored on disk
        for (double x : env.v) all_values.push_back(static_cast<float>(x));
        m.files.push_back(name);
        m.params.push_back(p);
    }
    size_t mid = all_values.size() / 2;
    std::nth_element(all_values.begin(), all_values.begin() + mid, all_values.end());
    m.corpus_median = all_values[mid];

    nlohmann::json j;
    j["version"] = 1;
    j["seed"] = m.seed;
    j["tonemap"] = {{"scale", m.tonemap.scale}, {"exponent", m.tonemap.exponent}};
    j["corpus_median"] = m.corpus_median;
    j["maps"] = nlohmann::json::array();
    for (size_t i = 0; i < m.files.size(); ++i) {
        nlohmann::json e = params_to_json(m.params[i]);
        e["file"] = m.files[i];
        j["maps"].push_back(e);
    }
    std::ofstream f(out_dir + "/manifest.json");
    if (!f) throw std::runtime_error("gen_corpus: cannot write manifest in " + out_dir);
    f << j.dump(2) << "\n";
    return m;
}

CorpusManifest load_manifest(const std::string& dir) {
    std::ifstream f(dir + "/manifest.json");
    if (!f) throw std::runtime_error("load_manifest: no manifest.json in " + dir);
    nlohmann::json j = nlohmann::json::parse(f);
    CorpusManifest m;
    m.seed = j.at("seed").get<uint64_t>();
    m.tonemap.scale = j.at("tonemap").at("scale").get<double>();
    m.tonemap.exponent = j.at("tonemap").at("exponent").get<double>();
    m.corpus_median = j.at("corpus_median").get<double>();
    for (const auto& e : j.at("maps")) {
        m.files.push_back(e.at("file").get<std::string>());
        m.params.push_back(params_from_json(e));
    }
    return m;
}

std::vector<EnvMap> load_corpus(const std::string& dir, CorpusManifest* manifest_out) {
    CorpusManifest m = load_manifest(dir);
    std::vector<EnvMap> maps;
    maps.reserve(m.files.size());
    for (const auto& f : m.files) maps.push_back(load_pfm_tensor(dir + "/" + f));
    if (manifest_out) *manifest_out = std::move(m);
    return maps;
}

}  // namespace envdiff
