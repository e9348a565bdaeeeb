// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

#include "envdiff/tensor.hpp"

namespace envdiff {

/// Deterministic, splittable random stream (xoshiro256++ seeded via
/// splitmix64). Identical (seed, tag) always yields the identical stream,
/// independent of platform or standard library. Every random draw in the
/// project flows through this type; there is no ambient entropy anywhere.
class Rng {
  public:
    explicit Rng(uint64_t seed);
    Rng(uint64_t seed, std::string_view tag);

    /// Derive an independent stream keyed by (this stream's seed, tag).
    Rng fork(std::string_view tag) const;
    Rng fork(uint64_t index) const;

    uint64_t next_u64();

    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n). n must be positive.
    int uniform_int(int n);
    /// Standard normal draw (Box-Muller, one spare cached).
    double normal();

    void fill_normal(Tensor3& t);

  private:
    uint64_t s_[4];
    uint64_t seed_key_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace envdiff
