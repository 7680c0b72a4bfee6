// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cotforget {

/// Adam with decoupled weight decay. `decay_mask` selects the parameters that decay.
class AdamW {
public:
    struct Options {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.01;
    };

    AdamW(size_t n, std::vector<std::uint8_t> decay_mask, Options options);

    void step(std::span<double> params, std::span<const double> grad, double lr);
    long steps() const noexcept { return t_; }

private:
    Options opt_;
    std::vector<std::uint8_t> decay_;
    std::vector<double> m_, v_;
    long t_ = 0;
};

/// Linear warmup from 0 at step 0 to `peak` at `warmup_steps`, then linear
/// decay to 0 at `total_steps`.
class WarmupLinearSchedule {
public:
    WarmupLinearSchedule(double peak, long warmup_steps, long total_steps);
    double at(long step) const;
    long warmup_steps() const noexcept { return warmup_; }
    long total_steps() const noexcept { return total_; }

private:
    double peak_;
    long warmup_;
    long total_;
};

}  // namespace cotforget
