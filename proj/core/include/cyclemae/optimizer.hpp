#pragma once

#include "cyclemae/params.hpp"

#include <cstdint>
#include <vector>

namespace cyclemae {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.05;
};

/// Linear warmup to `base` over `warmup` updates, then cosine decay to zero
/// at `total`. `step` counts completed updates.
double scheduled_lr(double base, std::int64_t step, std::int64_t warmup, std::int64_t total);

/// AdamW with decoupled weight decay applied only to parameters flagged
/// `decay` (weight matrices).
class AdamW {
public:
    AdamW() = default;
    AdamW(const ParamSet& params, AdamWConfig cfg);

    /// One update. When `active` is given, only parameters flagged true
    /// change (moments of the others are left untouched as well).
    void step(ParamSet& params, const Gradients& grads, double lr,
              const std::vector<bool>* active = nullptr);

    const AdamWConfig& config() const { return cfg_; }
    std::int64_t updates() const { return updates_; }
    const Gradients& first_moment() const { return m_; }
    const Gradients& second_moment() const { return v_; }

    /// Restores saved state; moment shapes must match the parameter set.
    void restore(std::int64_t updates, Gradients m, Gradients v);

private:
    AdamWConfig cfg_;
    std::int64_t updates_ = 0;
    Gradients m_;
    Gradients v_;
};

}  // namespace cyclemae
