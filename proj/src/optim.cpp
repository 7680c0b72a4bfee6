// SPDX-License-Identifier: Apache-2.0
#include "cotforget/optim.hpp"

#include <algorithm>
#include <cmath>

#include "cotforget/error.hpp"

namespace cotforget {

AdamW::AdamW(size_t n, std::vector<std::uint8_t> decay_mask, Options options)
    : opt_(options), decay_(std::move(decay_mask)), m_(n, 0.0), v_(n, 0.0) {
    if (decay_.size() != n) throw ValidationError("AdamW: decay mask size mismatch");
}

void AdamW::step(std::span<double> params, std::span<const double> grad, double lr) {
    if (params.size() != m_.size() || grad.size() != m_.size()) throw ValidationError("AdamW: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * g;
        v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * g * g;
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        if (decay_[i]) params[i] -= lr * opt_.weight_decay * params[i];
        params[i] -= lr * mhat / (std::sqrt(vhat) + opt_.eps);
    }
}

WarmupLinearSchedule::WarmupLinearSchedule(double peak, long warmup_steps, long total_steps)
    : peak_(peak), warmup_(warmup_steps), total_(total_steps) {
    if (warmup_ < 1 || total_ < warmup_) throw ConfigError("schedule needs 1 <= warmup_steps <= total_steps");
}

double WarmupLinearSchedule::at(long step) const {
    if (step <= 0) return 0.0;
    if (step <= warmup_) return peak_ * static_cast<double>(step) / static_cast<double>(warmup_);
    if (step >= total_) return 0.0;
    return peak_ * static_cast<double>(total_ - step) / static_cast<double>(total_ - warmup_);
}

}  // namespace cotforget
