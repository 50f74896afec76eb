#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

#include "learnlock/dataio.hpp"
#include "learnlock/ops.hpp"

namespace learnlock {

/// Per-class element-wise affine transform x' = w (.) x + b with
/// w in [1-eps/2, 1+eps/2] and b in [-eps/2, eps/2], which bounds the
/// pre-clip perturbation by eps on [0,1] inputs and keeps w invertible.
struct LinearKey {
    float epsilon = 0.0f;
    Shape img;  // {C,H,W}
    std::vector<std::vector<float>> w;  // one entry per class (or one, global)
    std::vector<std::vector<float>> b;

    std::int64_t dim() const { return numel(img); }
    void validate() const;
};

struct ConvLayerSpec {
    int in_ch = 0, out_ch = 0, kernel = 3, pad = 1;
};

/// Layer plan of the residual transform h: channels 8,16,16,8,C with
/// 3,3,1,3,3 kernels, stride 1, shape-preserving padding, ReLU after each.
/// Channel counts scale with width_mult.
std::vector<ConvLayerSpec> residual_layer_plan(int img_channels, float width_mult = 1.0f);

/// One class's residual map h: a stack of spectrally normalized conv layers.
/// Weight tensors double as trainable parameters during crafting.
struct ResidualTransform {
    Shape img;  // {C,H,W}
    std::vector<ConvLayerSpec> layers;
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;
    // Power-iteration state: one input-space unit vector per layer.
    std::vector<std::vector<float>> u;

    static ResidualTransform init(const Shape& img, float width_mult, std::uint64_t seed,
                                  float weight_scale = 0.5f);

    /// Autodiff-capable forward (records on the active tape).
    Tensor forward(const Tensor& x) const;
    /// Inference path on raw buffers, batch of N images.
    void forward_raw(const float* x, float* y, int N) const;
};

/// One power-iteration step on layer `li`'s conv operator, then divides the
/// weights by max(1, sigma_hat). Returns the pre-division estimate.
float spectral_normalize(ResidualTransform& h, int li, int iterations = 1);

/// Estimate of the current spectral norm without modifying weights.
float spectral_norm_estimate(const ResidualTransform& h, int li, int iterations = 50);

/// Residual lock family x' = x + eps * tanh(h(x)); inverted by fixed-point
/// iteration (contraction since eps < 1 and Lip(h) <= 1).
struct ConvKey {
    float epsilon = 0.0f;
    Shape img;
    int fixed_point_iters = 5;
    std::vector<ResidualTransform> h;  // one per class (or one, global)

    void validate(float slack = 1e-3f) const;
};

enum class LockVariant : std::uint8_t {
    linear = 1,
    conv = 2,
    mixture = 3,
    global_linear = 4,
    global_conv = 5,
};

std::string variant_name(LockVariant v);

struct KeyScope {
    std::vector<std::uint8_t> class_mask;  // size K, 1 = controlled
    float percent = 1.0f;                  // fraction of in-scope samples
    std::uint64_t select_seed = 0;

    bool covers(int cls) const { return class_mask[static_cast<std::size_t>(cls)] != 0; }
    bool all_classes() const;
};

struct LockKey {
    LockVariant variant = LockVariant::linear;
    float epsilon = 0.0f;
    int num_classes = 0;
    Shape img;
    KeyScope scope;
    std::array<std::uint8_t, 32> fingerprint{};

    std::optional<LinearKey> linear;
    std::optional<ConvKey> conv;
    // mixture only: per class, LockVariant::linear or LockVariant::conv
    std::vector<std::uint8_t> class_variant;

    bool is_global() const {
        return variant == LockVariant::global_linear || variant == LockVariant::global_conv;
    }
    /// Index into the linear/conv parameter tables for a class.
    int transform_index(int cls) const { return is_global() ? 0 : cls; }
    void validate() const;
};

LockKey make_identity_linear_key(int num_classes, const Shape& img, float epsilon);

// Single-image transforms. `cls` selects the class transform; out-of-range
// or out-of-scope classes are the caller's responsibility.
void linear_lock_image(const LinearKey& key, int index, const float* x, float* out,
                       bool clip_output = true);
void linear_unlock_image(const LinearKey& key, int index, const float* x, float* out,
                         bool clip_output = true);
void conv_lock_image(const ConvKey& key, int index, const float* x, float* out,
                     bool clip_output = true);
/// Returns the final fixed-point residual max-norm.
float conv_unlock_image(const ConvKey& key, int index, const float* x, float* out,
                        bool clip_output = true);

/// Mask of samples a scope transforms: class in scope and, for percent < 1,
/// membership in the seeded uniform selection.
std::vector<std::uint8_t> selected_mask(const KeyScope& scope, const Dataset& ds);
std::vector<std::uint8_t> selected_mask(const LockKey& key, const Dataset& ds);

Dataset apply_lock(const Dataset& ds, const LockKey& key, bool force = false);
Dataset apply_unlock(const Dataset& ds, const LockKey& key, bool force = false);

std::vector<std::uint8_t> encode_key(const LockKey& key);
LockKey decode_key(const std::vector<std::uint8_t>& bytes);
void save_key(const LockKey& key, const std::filesystem::path& path);
LockKey load_key(const std::filesystem::path& path);

}  // namespace learnlock
