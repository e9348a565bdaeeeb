// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <vector>

#include "envdiff/tensor.hpp"

namespace envdiff {

struct AdamConfig {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are laid out per parameter in
/// the order of the first step() call; subsequent calls must pass the same
/// parameter list.
class Adam {
  public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(const std::vector<Tensor3*>& params,
              const std::vector<const Tensor3*>& grads) {
        if (params.size() != grads.size())
            throw std::invalid_argument("Adam::step: params/grads size mismatch");
        if (m_.empty()) {
            for (auto* p : params) {
                m_.push_back(Tensor3::zeros_like(*p));
                v_.push_back(Tensor3::zeros_like(*p));
            }
        }
        if (m_.size() != params.size())
            throw std::invalid_argument("Adam::step: parameter list changed");
        ++t_;
        double c1 = 1.0 - std::pow(cfg_.beta1, t_);
        double c2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (size_t p = 0; p < params.size(); ++p) {
            Tensor3& x = *params[p];
            const Tensor3& g = *grads[p];
            if (!x.same_shape(g))
                throw std::invalid_argument("Adam::step: gradient shape mismatch");
            for (size_t i = 0; i < x.size(); ++i) {
                double gi = g.v[i];
                m_[p].v[i] = cfg_.beta1 * m_[p].v[i] + (1.0 - cfg_.beta1) * gi;
                v_[p].v[i] = cfg_.beta2 * v_[p].v[i] + (1.0 - cfg_.beta2) * gi * gi;
                double mhat = m_[p].v[i] / c1;
                double vhat = v_[p].v[i] / c2;
                x.v[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    int steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

  private:
    AdamConfig cfg_;
    std::vector<Tensor3> m_, v_;
    int t_ = 0;
};

}  // namespace envdiff
