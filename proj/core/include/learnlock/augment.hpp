#pragma once

#include <string>
#include <vector>

#include "learnlock/rng.hpp"

namespace learnlock {

enum class AugmentKind {
    none,
    random_noise,   // per-batch uniform L-inf noise
    gaussian_blur,  // fixed kernel blur
    standard,       // flip + pad-crop + small rotation
    cutout,         // zeroed square patch
    mixup,          // convex sample mixing, Beta(alpha, alpha)
    cutmix          // box swap, label weight by area
};

struct AugmentPolicy {
    AugmentKind kind = AugmentKind::none;
    float noise_budget = 8.0f / 255.0f;
    int blur_kernel = 3;
    float blur_sigma = 1.0f;
    int cutout_patch = 0;  // 0 -> 25% of image side
    float alpha = 1.0f;

    std::string name() const;
};

AugmentPolicy parse_augment(const std::string& name);

/// Applies the policy in place to a batch [n,C,H,W]. Mixup/cutmix replace
/// integer labels with per-row probability targets in `soft_targets` (n*K)
/// and set `used_soft`.
void apply_augment(const AugmentPolicy& policy, std::vector<float>& batch, int n, int C, int H,
                   int W, const std::vector<int>& labels, int K, Rng& rng,
                   std::vector<float>& soft_targets, bool& used_soft);

}  // namespace learnlock
