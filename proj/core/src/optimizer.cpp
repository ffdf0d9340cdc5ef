#include "cyclemae/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cyclemae {

double scheduled_lr(double base, std::int64_t step, std::int64_t warmup, std::int64_t total) {
    if (warmup > 0 && step < warmup) {
        return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
    }
    const std::int64_t span = std::max<std::int64_t>(1, total - warmup);
    const double progress =
        std::clamp(static_cast<double>(step - warmup) / static_cast<double>(span), 0.0, 1.0);
    return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(const ParamSet& params, AdamWConfig cfg) : cfg_(cfg), m_(params), v_(params) {
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0) ||
        !(cfg.eps > 0.0) || cfg.weight_decay < 0.0) {
        throw std::invalid_argument("AdamW: invalid hyperparameters");
    }
}

void AdamW::step(ParamSet& params, const Gradients& grads, double lr,
                 const std::vector<bool>* active) {
    if (grads.size() != params.size() || m_.size() != params.size()) {
        throw std::invalid_argument("AdamW: gradient count does not match parameters");
    }
    if (active != nullptr && active->size() != params.size()) {
        throw std::invalid_argument("AdamW: active mask size does not match parameters");
    }
    ++updates_;
    const double t = static_cast<double>(updates_);
    const double c1 = 1.0 - std::pow(cfg_.beta1, t);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (active != nullptr && !(*active)[i]) {
            continue;
        }
        Parameter& p = params[i];
        const Mat& g = grads[i];
        Mat& m = m_[i];
        Mat& v = v_[i];
        if (g.rows() != p.value.rows() || g.cols() != p.value.cols()) {
            throw std::invalid_argument("AdamW: gradient shape mismatch for " + p.name);
        }
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        if (p.decay && cfg_.weight_decay > 0.0) {
            p.value *= 1.0 - lr * cfg_.weight_decay;
        }
        p.value.array() -=
            lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
    }
}

void AdamW::restore(std::int64_t updates, Gradients m, Gradients v) {
    if (m.size() != m_.size() || v.size() != v_.size()) {
        throw std::invalid_argument("AdamW: restored moment count does not match");
    }
    for (std::size_t i = 0; i < m_.size(); ++i) {
        if (m[i].rows() != m_[i].rows() || m[i].cols() != m_[i].cols() ||
            v[i].rows() != v_[i].rows() || v[i].cols() != v_[i].cols()) {
            throw std::invalid_argument("AdamW: restored moment shape mismatch at index " +
                                        std::to_string(i));
        }
    }
    updates_ = updates;
    m_ = std::move(m);
    v_ = std::move(v);
}

}  // namespace cyclemae
