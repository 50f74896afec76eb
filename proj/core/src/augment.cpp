#include "learnlock/augment.hpp"

#include <algorithm>
#include <cmath>

#include "learnlock/common.hpp"

namespace learnlock {

namespace {

void blur_image(float* img, int C, int H, int W, int k, float sigma) {
    const int r = k / 2;
    std::vector<float> kernel(static_cast<std::size_t>(k) * k);
    double ksum = 0.0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            const float di = static_cast<float>(i - r), dj = static_cast<float>(j - r);
            kernel[static_cast<std::size_t>(i) * k + j] =
                std::exp(-(di * di + dj * dj) / (2.0f * sigma * sigma));
            ksum += kernel[static_cast<std::size_t>(i) * k + j];
        }
    for (auto& v : kernel) v = static_cast<float>(v / ksum);

    std::vector<float> out(static_cast<std::size_t>(H) * W);
    for (int c = 0; c < C; ++c) {
        float* plane = img + static_cast<std::size_t>(c) * H * W;
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                float acc = 0.0f;
                for (int di = 0; di < k; ++di) {
                    for (int dj = 0; dj < k; ++dj) {
                        const int si = std::clamp(i + di - r, 0, H - 1);
                        const int sj = std::clamp(j + dj - r, 0, W - 1);
                        acc += kernel[static_cast<std::size_t>(di) * k + dj] *
                               plane[static_cast<std::size_t>(si) * W + sj];
                    }
                }
                out[static_cast<std::size_t>(i) * W + j] = acc;
            }
        }
        std::copy(out.begin(), out.end(), plane);
    }
}

void flip_horizontal(float* img, int C, int H, int W) {
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < H; ++i) {
            float* row = img + (static_cast<std::size_t>(c) * H + i) * W;
            std::reverse(row, row + W);
        }
}

void shift_image(float* img, int C, int H, int W, int dx, int dy) {
    std::vector<float> out(static_cast<std::size_t>(H) * W);
    for (int c = 0; c < C; ++c) {
        float* plane = img + static_cast<std::size_t>(c) * H * W;
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                const int si = i + dx, sj = j + dy;
                out[static_cast<std::size_t>(i) * W + j] =
                    (si >= 0 && si < H && sj >= 0 && sj < W)
                        ? plane[static_cast<std::size_t>(si) * W + sj]
                        : 0.0f;
            }
        std::copy(out.begin(), out.end(), plane);
    }
}

void rotate_image(float* img, int C, int H, int W, float degrees) {
    const float rad = degrees * 3.14159265f / 180.0f;
    const float cs = std::cos(rad), sn = std::sin(rad);
    const float cy = (H - 1) / 2.0f, cx = (W - 1) / 2.0f;
    std::vector<float> out(static_cast<std::size_t>(H) * W);
    for (int c = 0; c < C; ++c) {
        float* plane = img + static_cast<std::size_t>(c) * H * W;
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                const float yi = cs * (i - cy) - sn * (j - cx) + cy;
                const float xj = sn * (i - cy) + cs * (j - cx) + cx;
                const int i0 = static_cast<int>(std::floor(yi)), j0 = static_cast<int>(std::floor(xj));
                float v = 0.0f;
                if (i0 >= 0 && i0 + 1 < H && j0 >= 0 && j0 + 1 < W) {
                    const float fy = yi - i0, fx = xj - j0;
                    v = (1 - fy) * (1 - fx) * plane[static_cast<std::size_t>(i0) * W + j0] +
                        (1 - fy) * fx * plane[static_cast<std::size_t>(i0) * W + j0 + 1] +
                        fy * (1 - fx) * plane[static_cast<std::size_t>(i0 + 1) * W + j0] +
                        fy * fx * plane[static_cast<std::size_t>(i0 + 1) * W + j0 + 1];
                }
                out[static_cast<std::size_t>(i) * W + j] = v;
            }
        }
        std::copy(out.begin(), out.end(), plane);
    }
}

float beta_sample(Rng& rng, float alpha) {
    if (alpha <= 1e-6f) return uniform(rng, 0.0f, 1.0f) < 0.5f ? 0.0f : 1.0f;
    std::gamma_distribution<float> g(alpha, 1.0f);
    const float a = g(rng), b = g(rng);
    return (a + b) > 0.0f ? a / (a + b) : 0.5f;
}

}  // namespace

std::string AugmentPolicy::name() const {
    switch (kind) {
        case AugmentKind::none: return "none";
        case AugmentKind::random_noise: return "random_noise";
        case AugmentKind::gaussian_blur: return "gaussian_blur";
        case AugmentKind::standard: return "standard";
        case AugmentKind::cutout: return "cutout";
        case AugmentKind::mixup: return "mixup";
        case AugmentKind::cutmix: return "cutmix";
    }
    return "?";
}

AugmentPolicy parse_augment(const std::string& name) {
    AugmentPolicy p;
    if (name == "none") p.kind = AugmentKind::none;
    else if (name == "random_noise") p.kind = AugmentKind::random_noise;
    else if (name == "gaussian_blur") p.kind = AugmentKind::gaussian_blur;
    else if (name == "standard") p.kind = AugmentKind::standard;
    else if (name == "cutout") p.kind = AugmentKind::cutout;
    else if (name == "mixup") p.kind = AugmentKind::mixup;
    else if (name == "cutmix") p.kind = AugmentKind::cutmix;
    else throw Error("unknown augmentation policy: " + name);
    return p;
}

void apply_augment(const AugmentPolicy& policy, std::vector<float>& batch, int n, int C, int H,
                   int W, const std::vector<int>& labels, int K, Rng& rng,
                   std::vector<float>& soft_targets, bool& used_soft) {
    used_soft = false;
    const std::int64_t d = static_cast<std::int64_t>(C) * H * W;
    LL_CHECK(static_cast<std::int64_t>(batch.size()) == n * d, "augment: batch size mismatch");

    switch (policy.kind) {
        case AugmentKind::none:
            return;
        case AugmentKind::random_noise: {
            LL_CHECK(policy.noise_budget > 0.0f, "random_noise: budget must be positive");
            for (auto& v : batch)
                v = std::clamp(v + uniform(rng, -policy.noise_budget, policy.noise_budget), 0.0f,
                               1.0f);
            return;
        }
        case AugmentKind::gaussian_blur: {
            LL_CHECK(policy.blur_kernel % 2 == 1 && policy.blur_sigma > 0.0f,
                     "gaussian_blur: invalid kernel/sigma");
            for (int s = 0; s < n; ++s) blur_image(batch.data() + s * d, C, H, W,
                                                   policy.blur_kernel, policy.blur_sigma);
            return;
        }
        case AugmentKind::standard: {
            for (int s = 0; s < n; ++s) {
                float* img = batch.data() + s * d;
                if (uniform(rng, 0.0f, 1.0f) < 0.5f) flip_horizontal(img, C, H, W);
                const int dx = static_cast<int>(uniform(rng, 0.0f, 8.999f)) - 4;
                const int dy = static_cast<int>(uniform(rng, 0.0f, 8.999f)) - 4;
                shift_image(img, C, H, W, dx, dy);
                const float deg = uniform(rng, -15.0f, 15.0f);
                rotate_image(img, C, H, W, deg);
            }
            return;
        }
        case AugmentKind::cutout: {
            const int patch = policy.cutout_patch > 0 ? policy.cutout_patch
                                                      : std::max(1, std::min(H, W) / 4);
            for (int s = 0; s < n; ++s) {
                const int ci = static_cast<int>(uniform(rng, 0.0f, static_cast<float>(H) - 1e-3f));
                const int cj = static_cast<int>(uniform(rng, 0.0f, static_cast<float>(W) - 1e-3f));
                float* img = batch.data() + s * d;
                for (int c = 0; c < C; ++c)
                    for (int i = std::max(0, ci - patch / 2);
                         i < std::min(H, ci - patch / 2 + patch); ++i)
                        for (int j = std::max(0, cj - patch / 2);
                             j < std::min(W, cj - patch / 2 + patch); ++j)
                            img[(static_cast<std::size_t>(c) * H + i) * W + j] = 0.0f;
            }
            return;
        }
        case AugmentKind::mixup:
        case AugmentKind::cutmix: {
            soft_targets.assign(static_cast<std::size_t>(n) * K, 0.0f);
            std::vector<int> perm(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
            std::shuffle(perm.begin(), perm.end(), rng);
            const std::vector<float> orig = batch;
            for (int s = 0; s < n; ++s) {
                const int o = perm[static_cast<std::size_t>(s)];
                float lam = beta_sample(rng, policy.alpha);
                float* img = batch.data() + s * d;
                const float* other = orig.data() + o * d;
                if (policy.kind == AugmentKind::mixup) {
                    for (std::int64_t i = 0; i < d; ++i)
                        img[i] = lam * img[i] + (1.0f - lam) * other[i];
                } else {
                    // cutmix: paste a box of the partner; lambda = kept area.
                    const float cut = std::sqrt(1.0f - lam);
                    const int bh = static_cast<int>(cut * H), bw = static_cast<int>(cut * W);
                    const int ci = static_cast<int>(uniform(rng, 0.0f, static_cast<float>(H) - 1e-3f));
                    const int cj = static_cast<int>(uniform(rng, 0.0f, static_cast<float>(W) - 1e-3f));
                    const int i0 = std::clamp(ci - bh / 2, 0, H), i1 = std::clamp(ci - bh / 2 + bh, 0, H);
                    const int j0 = std::clamp(cj - bw / 2, 0, W), j1 = std::clamp(cj - bw / 2 + bw, 0, W);
                    for (int c = 0; c < C; ++c)
                        for (int i = i0; i < i1; ++i)
                            for (int j = j0; j < j1; ++j)
                                img[(static_cast<std::size_t>(c) * H + i) * W + j] =
                                    other[(static_cast<std::size_t>(c) * H + i) * W + j];
                    lam = 1.0f - static_cast<float>(i1 - i0) * (j1 - j0) /
                                     (static_cast<float>(H) * W);
                }
                soft_targets[static_cast<std::size_t>(s) * K + labels[static_cast<std::size_t>(s)]] +=
                    lam;
                soft_targets[static_cast<std::size_t>(s) * K + labels[static_cast<std::size_t>(o)]] +=
                    1.0f - lam;
            }
            used_soft = true;
            return;
        }
    }
}

}  // namespace learnlock
