#include "learnlock/sgd.hpp"

#include <cmath>

namespace learnlock {

float Sgd::lr() const {
    if (schedule_ == LrSchedule::constant) return lr0_;
    const double frac = std::min(1.0, static_cast<double>(t_) / total_steps_);
    return static_cast<float>(lr0_ * (1.0 + std::cos(M_PI * frac)) / 2.0);
}

void Sgd::step(std::vector<Tensor>& params) {
    if (velocity_.empty()) {
        velocity_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i)
            velocity_[i].assign(static_cast<std::size_t>(params[i].size()), 0.0f);
    }
    LL_CHECK(velocity_.size() == params.size(), "sgd: parameter set changed between steps");
    const float cur_lr = lr();
    for (std::size_t i = 0; i < params.size(); ++i) {
        LL_CHECK(params[i].has_grad(), "sgd: parameter " + std::to_string(i) + " has no gradient");
        auto g = params[i].grad();
        auto p = params[i].value();
        auto& v = velocity_[i];
        LL_CHECK(v.size() == g.size(), "sgd: gradient shape mismatch");
        for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] = momentum_ * v[j] + g[j];
            p[j] -= cur_lr * v[j];
        }
        params[i].zero_grad();
    }
    ++t_;
}

}  // namespace learnlock
