// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "envdiff/autodiff.hpp"
#include "envdiff/diffusion.hpp"
#include "envdiff/rng.hpp"
#include "envdiff/tensor.hpp"

namespace envdiff {

/// Behavioural contract of a noise predictor eps(x_t, t). Implementations
/// must be deterministic given (x_t, t, parameters) and preserve shape.
class ScoreModel {
  public:
    virtual ~ScoreModel() = default;
    virtual Latent eps_predict(const Latent& x_t, int t) const = 0;
    virtual int height() const = 0;
    virtual int width() const = 0;
    virtual int channels() const = 0;
};

/// eps through a column rotation: phi^-1(eps_predict(phi(x_t), t)). For the
/// circular-padding denoiser this is the identity for every shift; it matters
/// for any non-equivariant model (clamp padding) plugged in instead.
Latent rotated_eps(const ScoreModel& model, const Latent& x_t, int t, int shift);

/// Closed-form model for x0 ~ N(mu, v I): the exact noise prediction is
///   eps = sqrt(1-ab) (x_t - sqrt(ab) mu) / (ab v + 1 - ab).
/// Used as a correctness oracle throughout.
class GaussianAnalyticModel : public ScoreModel {
  public:
    GaussianAnalyticModel(Tensor3 mu, double v, const NoiseSchedule& schedule);
    Latent eps_predict(const Latent& x_t, int t) const override;
    int height() const override { return mu_.h; }
    int width() const override { return mu_.w; }
    int channels() const override { return mu_.c; }
    const Tensor3& mu() const { return mu_; }
    double variance() const { return v_; }

  private:
    Tensor3 mu_;
    double v_;
    const NoiseSchedule* schedule_;
};

struct DenoiserConfig {
    int height = 16, width = 32;
    int hidden_channels = 32;
    int blocks = 4;
    int temb_dim = 32;  // 16 sin/cos frequency pairs
    PadMode padding = PadMode::circular;
    int T = 1000;  // schedule length, normalizes the time embedding
    int threads = 1;
};

/// Small convolutional noise predictor: `blocks` conv3x3+time-bias+silu
/// stages at `hidden_channels`, then a zero-initialized 3-channel conv.
/// With circular padding the network is exactly (bit-level) equivariant
/// under horizontal rotations.
class CnnDenoiser : public ScoreModel {
  public:
    CnnDenoiser(const DenoiserConfig& cfg, Rng& init_rng);

    Latent eps_predict(const Latent& x_t, int t) const override;
    int height() const override { return cfg_.height; }
    int width() const override { return cfg_.width; }
    int channels() const override { return 3; }

    const DenoiserConfig& config() const { return cfg_; }
    std::vector<Tensor3>& params() { return params_; }
    const std::vector<Tensor3>& params() const { return params_; }

    /// Records the forward pass on an external tape (training path). Returns
    /// the output node; param_handles receives leaves in params() order.
    Value forward_on_tape(Tape& tape, Value x, int t,
                          std::vector<Value>& param_handles) const;

    Tensor3 time_embedding(int t) const;

  private:
    DenoiserConfig cfg_;
    std::vector<Tensor3> params_;
};

struct TrainConfig {
    int epochs = 10;
    int batch_size = 8;
    double learning_rate = 1e-3;
    uint64_t seed = 0;
    bool augment = true;  // random column rotations + horizontal flips (p=0.5)
};

struct TrainStep {
    int epoch = 0;
    int step = 0;  // global step index
    double loss = 0.0;
};

struct TrainTrace {
    std::vector<TrainStep> steps;
    std::vector<double> epoch_mean;
};

class TrainingError : public std::runtime_error {
  public:
    TrainingError(const std::string& msg, int step)
        : std::runtime_error(msg + " at step " + std::to_string(step)),
          step_index(step) {}
    int step_index;
};

/// Minimizes E | eps - model(sqrt(ab) phi(x0) + sqrt(1-ab) eps, t) |^2 with
/// Adam (0.9, 0.999, 1e-8), t uniform in [1, T], phi a random column rotation
/// when cfg.augment is on. Dataset tensors live in the compressed domain.
TrainTrace train_prior(CnnDenoiser& model, const std::vector<Tensor3>& dataset,
                       const NoiseSchedule& schedule, const TrainConfig& cfg);

/// Checkpoint file: magic "DIFP", version u32, shape (H, W, C) u32, layer
/// count u32, then per layer its (h, w, c) u32 triple and little-endian
/// 64-bit parameter blob. Round trips are bit-exact.
void save_checkpoint(const std::string& path, const CnnDenoiser& model);

struct CheckpointOptions {
    PadMode padding = PadMode::circular;
    int T = 1000;
    int threads = 1;
};
CnnDenoiser load_checkpoint(const std::string& path, const CheckpointOptions& opts);

}  // namespace envdiff
