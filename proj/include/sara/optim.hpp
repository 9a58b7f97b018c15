// optim.hpp - named parameter store, AdamW, and the linear warmup/decay
// schedule.

#ifndef SARA_OPTIM_HPP
#define SARA_OPTIM_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "sara/matrix.hpp"

namespace sara {

struct Param {
    Matrix value;
    Matrix grad;
    Matrix adam_m;
    Matrix adam_v;
    bool trainable = true;
    std::uint64_t steps = 0; // per-param AdamW step count for bias correction

    Param() = default;

    explicit Param(Matrix v, bool trainable_ = true)
        : value(std::move(v)),
          grad(value.rows(), value.cols()),
          adam_m(value.rows(), value.cols()),
          adam_v(value.rows(), value.cols()),
          trainable(trainable_) {}

    void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

// std::map keeps iteration order and therefore update order deterministic.
using ParamStore = std::map<std::string, Param>;

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One decoupled-weight-decay Adam step at the given learning rate. Frozen
// params are untouched, including their optimizer state.
inline void adamw_step(ParamStore& params, double lr, double weight_decay,
                       const AdamConfig& cfg = {}) {
    for (auto& [name, p] : params) {
        if (!p.trainable) {
            continue;
        }
        p.steps += 1;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.steps));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.steps));
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad.data()[i];
            double& m = p.adam_m.data()[i];
            double& v = p.adam_v.data()[i];
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            double& x = p.value.data()[i];
            x -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + weight_decay * x);
        }
    }
}

// Linear ramp 0 -> lr over warmup_steps, then linear decay lr -> 0 at
// total_steps; 0 beyond.
inline double lr_at(std::uint64_t step, double lr, std::uint64_t warmup_steps,
                    std::uint64_t total_steps) {
    if (warmup_steps > total_steps) {
        throw std::invalid_argument("lr_at: warmup_steps > total_steps");
    }
    if (step >= total_steps) {
        return 0.0;
    }
    if (step < warmup_steps) {
        return lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    return lr * static_cast<double>(total_steps - step) /
           static_cast<double>(total_steps - warmup_steps);
}

inline double grad_norm(const ParamStore& params) {
    double acc = 0.0;
    for (const auto& [name, p] : params) {
        if (!p.trainable) {
            continue;
        }
        for (double g : p.grad.data()) {
            acc += g * g;
        }
    }
    return std::sqrt(acc);
}

} // namespace sara

#endif // SARA_OPTIM_HPP
