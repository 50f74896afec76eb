#pragma once

#include <vector>

#include "learnlock/tensor.hpp"

namespace learnlock {

enum class LrSchedule { constant, cosine };

/// SGD with momentum and optional cosine annealing:
/// lr(t) = lr0 * (1 + cos(pi * t / T)) / 2.
class Sgd {
public:
    Sgd(float lr, float momentum = 0.0f, LrSchedule schedule = LrSchedule::constant,
        int total_steps = 0)
        : lr0_(lr), momentum_(momentum), schedule_(schedule), total_steps_(total_steps) {
        LL_CHECK(lr > 0.0f, "sgd: learning rate must be positive");
        LL_CHECK(momentum >= 0.0f && momentum < 1.0f, "sgd: momentum must be in [0,1)");
        LL_CHECK(schedule == LrSchedule::constant || total_steps > 0,
                 "sgd: cosine schedule needs total_steps > 0");
    }

    float lr() const;
    int step_count() const { return t_; }

    /// v <- momentum*v + g;  p <- p - lr(t)*v.  Every parameter must carry a
    /// gradient. Gradients are consumed (zeroed) by the step.
    void step(std::vector<Tensor>& params);

private:
    float lr0_;
    float momentum_;
    LrSchedule schedule_;
    int total_steps_;
    int t_ = 0;
    std::vector<std::vector<float>> velocity_;
};

}  // namespace learnlock
