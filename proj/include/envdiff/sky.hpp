// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "envdiff/rng.hpp"
#include "envdiff/tensor.hpp"
#include "envdiff/tonemap.hpp"

namespace envdiff {

/// Parameters of one procedural sky map. The corpus generator draws these at
/// random; gen_sky itself is a pure function of the parameter set.
struct SkyParams {
    double sun_azimuth = 0.0;           // radians, [0, 2pi)
    double sun_elevation = 0.7;         // radians above horizon, [0, pi/2]
    double sun_radius = 0.05;           // angular radius, radians
    double sun_intensity = 20.0;        // HDR peak, up to ~50
    std::array<double, 3> zenith_color = {0.15, 0.25, 0.5};
    std::array<double, 3> horizon_color = {0.6, 0.55, 0.5};
    std::array<double, 3> ground_color = {0.2, 0.16, 0.12};
    int cloud_octaves = 3;
    double cloud_gain = 0.4;
    uint64_t seed = 0;  // keys the cloud noise lattice
};

/// Equirectangular HDR sky: vertical gradient + wrapped value-noise clouds +
/// smoothstep sun disk + constant ground hemisphere. All values >= 0.
EnvMap gen_sky(const SkyParams& params, int height, int width);

struct CorpusOptions {
    int count = 256;
    int height = 16;
    int width = 32;
    Tonemap tonemap = Tonemap::outdoor();
    /// When set, every map gets this sun azimuth (azimuth-biased corpus used
    /// by the seam ablation). Otherwise azimuth is uniform per map.
    std::optional<double> fixed_sun_azimuth;
};

struct CorpusManifest {
    uint64_t seed = 0;
    Tonemap tonemap;
    std::vector<std::string> files;
    std::vector<SkyParams> params;
    double corpus_median = 0.0;  // median of all HDR texel values
};

/// Writes `count` HDR PFM maps plus manifest.json into out_dir (created if
/// missing). Regeneration with the same seed is byte-identical.
CorpusManifest gen_corpus(const std::string& out_dir, uint64_t seed,
                          const CorpusOptions& opts);

CorpusManifest load_manifest(const std::string& dir);

/// Loads every map of a corpus directory, in manifest order (HDR domain).
std::vector<EnvMap> load_corpus(const std::string& dir,
                                CorpusManifest* manifest_out = nullptr);

/// Draws one random SkyParams from the corpus distribution.
SkyParams random_sky_params(Rng& rng, const CorpusOptions& opts);

}  // namespace envdiff
