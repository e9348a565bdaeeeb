// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#include "envdiff/prior.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "envdiff/adam.hpp"

namespace envdiff {

Latent rotated_eps(const ScoreModel& model, const Latent& x_t, int t, int shift) {
    if (shift < 0 || shift > x_t.w)
        throw std::invalid_argument("rotated_eps: shift outside [0, W]");
    if (shift == 0 || shift == x_t.w) return model.eps_predict(x_t, t);
    Latent rotated = rotate_columns(x_t, shift);
    Latent eps = model.eps_predict(rotated, t);
    return rotate_columns(eps, -shift);
}

GaussianAnalyticModel::GaussianAnalyticModel(Tensor3 mu, double v,
                                             const NoiseSchedule& schedule)
    : mu_(std::move(mu)), v_(v), schedule_(&schedule) {
    if (!(v > 0.0))
        throw std::invalid_argument("GaussianAnalyticModel: variance must be > 0");
}

Latent GaussianAnalyticModel::eps_predict(const Latent& x_t, int t) const {
    schedule_->check_t(t, "GaussianAnalyticModel::eps_predict");
    require_same_shape(x_t, mu_, "GaussianAnalyticModel::eps_predict");
    double ab = schedule_->alpha_bar(t);
    double denom = ab * v_ + (1.0 - ab);
    double c = std::sqrt(1.0 - ab) / denom;
    double sa = std::sqrt(ab);
    Latent out = Tensor3::zeros_like(x_t);
    for (size_t i = 0; i < x_t.size(); ++i)
        out.v[i] = c * (x_t.v[i] - sa * mu_.v[i]);
    return out;
}

CnnDenoiser::CnnDenoiser(const DenoiserConfig& cfg, Rng& init_rng) : cfg_(cfg) {
    if (cfg.blocks < 1 || cfg.hidden_channels < 1 || cfg.temb_dim % 2 != 0)
        throw std::invalid_argument("CnnDenoiser: bad architecture config");
    auto he_kernel = [&](int cin, int cout) {
        Tensor3 k(9, cin, cout);
        double s = std::sqrt(2.0 / (9.0 * cin));
        for (auto& x : k.v) x = init_rng.normal() * s;
        return k;
    };
    int ch = cfg.hidden_channels;
    for (int b = 0; b < cfg.blocks; ++b) {
        int cin = b == 0 ? 3 : ch;
        params_.push_back(he_kernel(cin, ch));   // conv kernel
        params_.push_back(Tensor3(1, 1, ch));    // conv bias
        Tensor3 wt(1, cfg.temb_dim, ch);
        double ws = std::sqrt(1.0 / cfg.temb_dim);
        for (auto& x : wt.v) x = init_rng.normal() * ws;
        params_.push_back(std::move(wt));        // time projection
        params_.push_back(Tensor3(1, 1, ch));    // time projection bias
    }
    params_.push_back(Tensor3(9, ch, 3));        // final conv, zero-initialized
    params_.push_back(Tensor3(1, 1, 3));
}

Tensor3 CnnDenoiser::time_embedding(int t) const {
    Tensor3 emb(1, 1, cfg_.temb_dim);
    double u = static_cast<double>(t) / cfg_.T;
    int pairs = cfg_.temb_dim / 2;
    for (int i = 0; i < pairs; ++i) {
        double freq = std::pow(1000.0, static_cast<double>(i) / (pairs - 1));
        emb.v[static_cast<size_t>(2 * i)] = std::sin(freq * u);
        emb.v[static_cast<size_t>(2 * i) + 1] = std::cos(freq * u);
    }
    return emb;
}

Value CnnDenoiser::forward_on_tape(Tape& tape, Value x, int t,
                                   std::vector<Value>& param_handles) const {
    if (t < 1 || t > cfg_.T)
        throw std::invalid_argument("CnnDenoiser: t outside [1, T]");
    param_handles.clear();
    for (const auto& p : params_) param_handles.push_back(tape.leaf(p));
    Value temb = tape.constant(time_embedding(t));
    Value h = x;
    for (int b = 0; b < cfg_.blocks; ++b) {
        size_t base = static_cast<size_t>(b) * 4;
        h = tape.conv2d_circular(h, param_handles[base], param_handles[base + 1],
                                 cfg_.padding);
        Value tb = tape.dense(temb, param_handles[base + 2], param_handles[base + 3]);
        h = tape.add(h, tb);
        h = tape.silu(h);
    }
    size_t fin = static_cast<size_t>(cfg_.blocks) * 4;
    return tape.conv2d_circular(h, param_handles[fin], param_handles[fin + 1],
                                cfg_.padding);
}

Latent CnnDenoiser::eps_predict(const Latent& x_t, int t) const {
    if (x_t.h != cfg_.height || x_t.w != cfg_.width || x_t.c != 3)
        throw std::invalid_argument("CnnDenoiser::eps_predict: input shape " +
                                    x_t.shape_str() + " does not match model");
    Tape tape;
    tape.set_threads(cfg_.threads);
    std::vector<Value> handles;
    Value out = forward_on_tape(tape, tape.constant(x_t), t, handles);
    return tape.value(out);
}

TrainTrace train_prior(CnnDenoiser& model, const std::vector<Tensor3>& dataset,
                       const NoiseSchedule& schedule, const TrainConfig& cfg) {
    if (dataset.empty())
        throw std::invalid_argument("train_prior: dataset is empty");
    if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0))
        throw std::invalid_argument("train_prior: bad training config");
    for (const auto& m : dataset)
        if (m.h != model.height() || m.w != model.width() || m.c != 3)
            throw std::invalid_argument("train_prior: dataset shape mismatch");

    Rng rng(cfg.seed, "train");
    Adam adam({cfg.learning_rate, 0.9, 0.999, 1e-8});
    TrainTrace trace;
    int global_step = 0;

    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0u);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with the run's stream
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1],
                      order[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);
        double epoch_sum = 0.0;
        int epoch_steps = 0;
        for (size_t off = 0; off < order.size(); off += static_cast<size_t>(cfg.batch_size)) {
            size_t batch_end = std::min(order.size(), off + static_cast<size_t>(cfg.batch_size));
            std::vector<Tensor3> grad_sum;
            double batch_loss = 0.0;
            int nb = static_cast<int>(batch_end - off);
            for (size_t bi = off; bi < batch_end; ++bi) {
                const Tensor3& map = dataset[order[bi]];
                int t = rng.uniform_int(schedule.T) + 1;
                Tensor3 x0 = map;
                if (cfg.augment && map.w > 1) {  // rotations/flips of a single
                    int shift = rng.uniform_int(map.w);  // column are identities
                    bool flip = rng.uniform() < 0.5;
                    if (flip) x0 = flip_columns(x0);
                    if (shift != 0) x0 = rotate_columns(x0, shift);
                }
                Tensor3 eps = Tensor3::zeros_like(x0);
                rng.fill_normal(eps);
                Tensor3 x_t = forward_marginal(schedule, x0, t, eps);

                Tape tape;
                tape.set_threads(model.config().threads);
                std::vector<Value> handles;
                Value out = model.forward_on_tape(tape, tape.constant(x_t), t, handles);
                Value loss = tape.mse(out, tape.constant(eps));
                double lv = tape.value(loss).v[0];
                if (!std::isfinite(lv))
                    throw TrainingError("train_prior: non-finite loss", global_step);
                batch_loss += lv;
                tape.backward(loss);
                if (grad_sum.empty()) {
                    for (auto& h : handles) grad_sum.push_back(tape.grad(h));
                } else {
                    for (size_t p = 0; p < handles.size(); ++p) {
                        const Tensor3& g = tape.grad(handles[p]);
                        for (size_t i = 0; i < g.size(); ++i) grad_sum[p].v[i] += g.v[i];
                    }
                }
            }
            for (auto& g : grad_sum)
                for (auto& x : g.v) x /= nb;
            batch_loss /= nb;

            std::vector<Tensor3*> ps;
            std::vector<const Tensor3*> gs;
            for (size_t p = 0; p < model.params().size(); ++p) {
                ps.push_back(&model.params()[p]);
                gs.push_back(&grad_sum[p]);
            }
            adam.step(ps, gs);

            trace.steps.push_back({epoch, global_step, batch_loss});
            epoch_sum += batch_loss;
            ++epoch_steps;
            ++global_step;
        }
        trace.epoch_mean.push_back(epoch_sum / std::max(epoch_steps, 1));
    }
    return trace;
}

namespace {

void put_u32(std::ofstream& f, uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x & 0xff),
                          static_cast<unsigned char>((x >> 8) & 0xff),
                          static_cast<unsigned char>((x >> 16) & 0xff),
                          static_cast<unsigned char>((x >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f64_block(std::ofstream& f, const std::vector<double>& v) {
    for (double x : v) {
        uint64_t bits;
        std::memcpy(&bits, &x, 8);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
        f.write(reinterpret_cast<const char*>(b), 8);
    }
}

void get_f64_block(std::ifstream& f, std::vector<double>& v) {
    for (double& x : v) {
        unsigned char b[8];
        f.read(reinterpret_cast<char*>(b), 8);
        uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
        std::memcpy(&x, &bits, 8);
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const CnnDenoiser& model) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot write " + path);
    f.write("DIFP", 4);
    put_u32(f, 1);  // version
    put_u32(f, static_cast<uint32_t>(model.height()));
    put_u32(f, static_cast<uint32_t>(model.width()));
    put_u32(f, static_cast<uint32_t>(model.channels()));
    put_u32(f, static_cast<uint32_t>(model.params().size()));
    for (const auto& p : model.params()) {
        put_u32(f, static_cast<uint32_t>(p.h));
        put_u32(f, static_cast<uint32_t>(p.w));
        put_u32(f, static_cast<uint32_t>(p.c));
        put_f64_block(f, p.v);
    }
    if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

CnnDenoiser load_checkpoint(const std::string& path, const CheckpointOptions& opts) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (std::memcmp(magic, "DIFP", 4) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    uint32_t version = get_u32(f);
    if (version != 1)
        throw std::runtime_error("load_checkpoint: unsupported version " +
                                 std::to_string(version));
    uint32_t H = get_u32(f), W = get_u32(f), C = get_u32(f);
    uint32_t layers = get_u32(f);
    if (C != 3) throw std::runtime_error("load_checkpoint: expected 3 channels");
    if (layers < 6 || (layers - 2) % 4 != 0)
        throw std::runtime_error("load_checkpoint: unexpected layer count " +
                                 std::to_string(layers));
    std::vector<Tensor3> params;
    for (uint32_t l = 0; l < layers; ++l) {
        uint32_t h = get_u32(f), w = get_u32(f), c = get_u32(f);
        Tensor3 p(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
        get_f64_block(f, p.v);
        params.push_back(std::move(p));
    }
    if (!f) throw std::runtime_error("load_checkpoint: truncated file " + path);

    DenoiserConfig cfg;
    cfg.height = static_cast<int>(H);
    cfg.width = static_cast<int>(W);
    cfg.blocks = static_cast<int>((layers - 2) / 4);
    cfg.hidden_channels = params[0].c;
    cfg.temb_dim = params[2].w;
    cfg.padding = opts.padding;
    cfg.T = opts.T;
    cfg.threads = opts.threads;
    Rng dummy(0);
    CnnDenoiser model(cfg, dummy);
    if (model.params().size() != params.size())
        throw std::runtime_error("load_checkpoint: layer count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        if (!model.params()[i].same_shape(params[i]))
            throw std::runtime_error("load_checkpoint: layer shape mismatch at " +
                                     std::to_string(i));
        model.params()[i] = params[i];
    }
    return model;
}

}  // namespace envdiff
