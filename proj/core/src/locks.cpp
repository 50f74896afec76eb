#include "learnlock/locks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "learnlock/rng.hpp"

namespace learnlock {

namespace {

constexpr char kKeyMagic[4] = {'L', 'L', 'K', 'Y'};
constexpr std::uint16_t kKeyVersion = 1;

double vec_norm(const float* v, std::int64_t n) {
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += static_cast<double>(v[i]) * v[i];
    return std::sqrt(s);
}

void fill_unit_random(std::vector<float>& v, Rng& rng) {
    for (auto& x : v) x = gaussian(rng, 0.0f, 1.0f);
    const double n = vec_norm(v.data(), static_cast<std::int64_t>(v.size()));
    if (n > 0)
        for (auto& x : v) x = static_cast<float>(x / n);
}

// One forward/adjoint power-iteration step for a conv layer viewed as a
// linear operator on its (spatially preserved) input shape. Returns the
// sigma estimate; u is updated in place.
float power_iteration(const float* w, const ConvLayerSpec& layer, int H, int W,
                      std::vector<float>& u, int iterations) {
    const std::int64_t in_n = static_cast<std::int64_t>(layer.in_ch) * H * W;
    const std::int64_t out_n = static_cast<std::int64_t>(layer.out_ch) * H * W;
    std::vector<float> z(static_cast<std::size_t>(out_n));
    std::vector<float> unew(static_cast<std::size_t>(in_n));
    float sigma = 0.0f;
    for (int it = 0; it < iterations; ++it) {
        ops::raw::conv2d_forward(u.data(), w, nullptr, z.data(), 1, layer.in_ch, H, W,
                                 layer.out_ch, layer.kernel, layer.kernel, 1, layer.pad);
        const double zn = vec_norm(z.data(), out_n);
        if (zn == 0.0) return 0.0f;
        for (std::int64_t i = 0; i < out_n; ++i) z[static_cast<std::size_t>(i)] =
            static_cast<float>(z[static_cast<std::size_t>(i)] / zn);
        ops::raw::conv2d_grad_input(z.data(), w, unew.data(), 1, layer.in_ch, H, W, layer.out_ch,
                                    layer.kernel, layer.kernel, 1, layer.pad);
        const double un = vec_norm(unew.data(), in_n);
        sigma = static_cast<float>(un);
        if (un == 0.0) return 0.0f;
        for (std::int64_t i = 0; i < in_n; ++i)
            u[static_cast<std::size_t>(i)] = static_cast<float>(unew[static_cast<std::size_t>(i)] / un);
    }
    return sigma;
}

template <class T>
void put(std::vector<std::uint8_t>& buf, const T& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf.insert(buf.end(), p, p + sizeof(T));
}

void put_floats(std::vector<std::uint8_t>& buf, const std::vector<float>& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
    buf.insert(buf.end(), p, p + v.size() * sizeof(float));
}

struct Reader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;

    template <class T>
    T get(const char* what) {
        if (pos + sizeof(T) > buf.size())
            throw KeyFormatError(std::string("key: truncated stream while reading ") + what);
        T v;
        std::memcpy(&v, buf.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }

    std::vector<float> get_floats(std::size_t n, const char* what) {
        if (pos + n * sizeof(float) > buf.size())
            throw KeyFormatError(std::string("key: truncated stream while reading ") + what);
        std::vector<float> v(n);
        std::memcpy(v.data(), buf.data() + pos, n * sizeof(float));
        pos += n * sizeof(float);
        return v;
    }
};

}  // namespace

void LinearKey::validate() const {
    LL_CHECK(epsilon > 0.0f && epsilon < 1.0f, "linear key: epsilon outside (0,1)");
    LL_CHECK(img.size() == 3, "linear key: image shape must be C,H,W");
    const float wlo = 1.0f - epsilon / 2.0f, whi = 1.0f + epsilon / 2.0f;
    const float bhi = epsilon / 2.0f;
    LL_CHECK(w.size() == b.size() && !w.empty(), "linear key: missing parameters");
    for (std::size_t c = 0; c < w.size(); ++c) {
        LL_CHECK(static_cast<std::int64_t>(w[c].size()) == dim() &&
                     static_cast<std::int64_t>(b[c].size()) == dim(),
                 "linear key: parameter length mismatch");
        for (float v : w[c])
            LL_CHECK(v >= wlo && v <= whi, "linear key: weight entry outside [1-eps/2, 1+eps/2]");
        for (float v : b[c])
            LL_CHECK(v >= -bhi && v <= bhi, "linear key: bias entry outside [-eps/2, eps/2]");
    }
}

std::vector<ConvLayerSpec> residual_layer_plan(int img_channels, float width_mult) {
    auto ch = [&](int base) {
        return std::max(2, static_cast<int>(std::lround(base * width_mult)));
    };
    return {
        {img_channels, ch(8), 3, 1},
        {ch(8), ch(16), 3, 1},
        {ch(16), ch(16), 1, 0},
        {ch(16), ch(8), 3, 1},
        {ch(8), img_channels, 3, 1},
    };
}

ResidualTransform ResidualTransform::init(const Shape& img, float width_mult,
                                          std::uint64_t seed, float weight_scale) {
    LL_CHECK(img.size() == 3, "residual transform: image shape must be C,H,W");
    ResidualTransform h;
    h.img = img;
    h.layers = residual_layer_plan(img[0], width_mult);
    Rng rng(derive_seed(seed, 0x4e51d));
    const int H = img[1], W = img[2];
    for (const auto& layer : h.layers) {
        Tensor w({layer.out_ch, layer.in_ch, layer.kernel, layer.kernel}, 0.0f, true);
        const float s = weight_scale /
                        std::sqrt(static_cast<float>(layer.in_ch * layer.kernel * layer.kernel));
        for (auto& v : w.value()) v = uniform(rng, -s, s);
        h.weights.push_back(std::move(w));
        h.biases.push_back(Tensor({layer.out_ch}, 0.0f, true));
        std::vector<float> u(static_cast<std::size_t>(layer.in_ch) * H * W);
        fill_unit_random(u, rng);
        h.u.push_back(std::move(u));
    }
    for (int li = 0; li < static_cast<int>(h.layers.size()); ++li)
        spectral_normalize(h, li, 10);
    return h;
}

Tensor ResidualTransform::forward(const Tensor& x) const {
    LL_CHECK_SHAPE(x.shape().size() == 4 && x.shape()[1] == img[0] && x.shape()[2] == img[1] &&
                       x.shape()[3] == img[2],
                   "residual transform: input shape " + shape_str(x.shape()) +
                       " does not match " + shape_str(img));
    Tensor out = x;
    for (std::size_t li = 0; li < layers.size(); ++li)
        out = ops::relu(ops::conv2d(out, weights[li], biases[li], 1, layers[li].pad));
    return out;
}

void ResidualTransform::forward_raw(const float* x, float* y, int N) const {
    const int H = img[1], W = img[2];
    int max_ch = img[0];
    for (const auto& l : layers) max_ch = std::max(max_ch, l.out_ch);
    std::vector<float> a(static_cast<std::size_t>(N) * max_ch * H * W);
    std::vector<float> b(static_cast<std::size_t>(N) * max_ch * H * W);
    const float* cur = x;
    float* dst = a.data();
    float* alt = b.data();
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const auto& l = layers[li];
        ops::raw::conv2d_forward(cur, weights[li].value().data(), biases[li].value().data(), dst,
                                 N, l.in_ch, H, W, l.out_ch, l.kernel, l.kernel, 1, l.pad);
        const std::int64_t n = static_cast<std::int64_t>(N) * l.out_ch * H * W;
        for (std::int64_t i = 0; i < n; ++i)
            if (dst[i] < 0.0f) dst[i] = 0.0f;
        cur = dst;
        std::swap(dst, alt);
    }
    std::memcpy(y, cur, sizeof(float) * static_cast<std::size_t>(N) * img[0] * H * W);
}

float spectral_normalize(ResidualTransform& h, int li, int iterations) {
    auto& layer = h.layers[static_cast<std::size_t>(li)];
    auto w = h.weights[static_cast<std::size_t>(li)].value();
    const float sigma =
        power_iteration(w.data(), layer, h.img[1], h.img[2], h.u[static_cast<std::size_t>(li)],
                        iterations);
    if (sigma > 1.0f) {
        const float inv = 1.0f / sigma;
        for (auto& v : w) v *= inv;
    }
    return sigma;
}

float spectral_norm_estimate(const ResidualTransform& h, int li, int iterations) {
    const auto& layer = h.layers[static_cast<std::size_t>(li)];
    std::vector<float> u(static_cast<std::size_t>(layer.in_ch) * h.img[1] * h.img[2]);
    Rng rng(derive_seed(0xa0d17u, static_cast<std::uint64_t>(li)));
    fill_unit_random(u, rng);
    return power_iteration(h.weights[static_cast<std::size_t>(li)].value().data(), layer,
                           h.img[1], h.img[2], u, iterations);
}

void ConvKey::validate(float slack) const {
    LL_CHECK(epsilon > 0.0f && epsilon < 1.0f, "conv key: epsilon outside (0,1)");
    LL_CHECK(fixed_point_iters >= 1, "conv key: fixed_point_iters must be >= 1");
    for (const auto& hc : h) {
        LL_CHECK(!hc.layers.empty() && hc.layers.back().out_ch == img[0],
                 "conv key: h output channels do not match image");
        for (int li = 0; li < static_cast<int>(hc.layers.size()); ++li) {
            const float sigma = spectral_norm_estimate(hc, li);
            LL_CHECK(sigma <= 1.0f + slack,
                     "conv key: layer " + std::to_string(li) + " spectral norm " +
                         std::to_string(sigma) + " exceeds 1");
        }
    }
}

std::string variant_name(LockVariant v) {
    switch (v) {
        case LockVariant::linear: return "linear";
        case LockVariant::conv: return "conv";
        case LockVariant::mixture: return "mixture";
        case LockVariant::global_linear: return "global-linear";
        case LockVariant::global_conv: return "global-conv";
    }
    return "?";
}

bool KeyScope::all_classes() const {
    return std::all_of(class_mask.begin(), class_mask.end(),
                       [](std::uint8_t m) { return m != 0; });
}

void LockKey::validate() const {
    LL_CHECK(num_classes >= 1, "key: no classes");
    LL_CHECK(static_cast<int>(scope.class_mask.size()) == num_classes,
             "key: scope mask size mismatch");
    LL_CHECK(scope.percent > 0.0f && scope.percent <= 1.0f, "key: percent outside (0,1]");
    switch (variant) {
        case LockVariant::linear:
        case LockVariant::global_linear:
            LL_CHECK(linear.has_value(), "key: missing linear payload");
            linear->validate();
            LL_CHECK(static_cast<int>(linear->w.size()) == (is_global() ? 1 : num_classes),
                     "key: linear class count mismatch");
            break;
        case LockVariant::conv:
        case LockVariant::global_conv:
            LL_CHECK(conv.has_value(), "key: missing conv payload");
            conv->validate();
            LL_CHECK(static_cast<int>(conv->h.size()) == (is_global() ? 1 : num_classes),
                     "key: conv class count mismatch");
            break;
        case LockVariant::mixture:
            LL_CHECK(linear.has_value() && conv.has_value() &&
                         static_cast<int>(class_variant.size()) == num_classes,
                     "key: incomplete mixture payload");
            linear->validate();
            conv->validate();
            for (auto v : class_variant)
                LL_CHECK(v == static_cast<std::uint8_t>(LockVariant::linear) ||
                             v == static_cast<std::uint8_t>(LockVariant::conv),
                         "key: mixture class variant must be linear or conv");
            break;
    }
}

LockKey make_identity_linear_key(int num_classes, const Shape& img, float epsilon) {
    LockKey key;
    key.variant = LockVariant::linear;
    key.epsilon = epsilon;
    key.num_classes = num_classes;
    key.img = img;
    key.scope.class_mask.assign(static_cast<std::size_t>(num_classes), 1);
    LinearKey lk;
    lk.epsilon = epsilon;
    lk.img = img;
    const auto d = static_cast<std::size_t>(numel(img));
    lk.w.assign(static_cast<std::size_t>(num_classes), std::vector<float>(d, 1.0f));
    lk.b.assign(static_cast<std::size_t>(num_classes), std::vector<float>(d, 0.0f));
    key.linear = std::move(lk);
    return key;
}

void linear_lock_image(const LinearKey& key, int index, const float* x, float* out,
                       bool clip_output) {
    const auto& w = key.w[static_cast<std::size_t>(index)];
    const auto& b = key.b[static_cast<std::size_t>(index)];
    const std::int64_t d = key.dim();
    for (std::int64_t j = 0; j < d; ++j) {
        float v = w[static_cast<std::size_t>(j)] * x[j] + b[static_cast<std::size_t>(j)];
        if (clip_output) v = std::clamp(v, 0.0f, 1.0f);
        out[j] = v;
    }
}

void linear_unlock_image(const LinearKey& key, int index, const float* x, float* out,
                         bool clip_output) {
    const auto& w = key.w[static_cast<std::size_t>(index)];
    const auto& b = key.b[static_cast<std::size_t>(index)];
    const std::int64_t d = key.dim();
    for (std::int64_t j = 0; j < d; ++j) {
        const float wj = w[static_cast<std::size_t>(j)];
        if (wj <= 0.0f) throw Error("linear unlock: non-positive weight entry (corrupt key)");
        float v = (x[j] - b[static_cast<std::size_t>(j)]) / wj;
        if (clip_output) v = std::clamp(v, 0.0f, 1.0f);
        out[j] = v;
    }
}

void conv_lock_image(const ConvKey& key, int index, const float* x, float* out,
                     bool clip_output) {
    const auto& h = key.h[static_cast<std::size_t>(index)];
    const std::int64_t d = numel(key.img);
    std::vector<float> noise(static_cast<std::size_t>(d));
    h.forward_raw(x, noise.data(), 1);
    for (std::int64_t j = 0; j < d; ++j) {
        float v = x[j] + key.epsilon * std::tanh(noise[static_cast<std::size_t>(j)]);
        if (!std::isfinite(v)) throw NumericError("conv lock: non-finite output");
        if (clip_output) v = std::clamp(v, 0.0f, 1.0f);
        out[j] = v;
    }
}

float conv_unlock_image(const ConvKey& key, int index, const float* x, float* out,
                        bool clip_output) {
    const auto& h = key.h[static_cast<std::size_t>(index)];
    const std::int64_t d = numel(key.img);
    std::vector<float> cur(x, x + d);
    std::vector<float> noise(static_cast<std::size_t>(d));
    for (int it = 0; it < key.fixed_point_iters; ++it) {
        h.forward_raw(cur.data(), noise.data(), 1);
        for (std::int64_t j = 0; j < d; ++j) {
            cur[static_cast<std::size_t>(j)] =
                x[j] - key.epsilon * std::tanh(noise[static_cast<std::size_t>(j)]);
            if (!std::isfinite(cur[static_cast<std::size_t>(j)]))
                throw NumericError("conv unlock: non-finite iterate");
        }
    }
    // Residual of the fixed-point equation at the returned iterate.
    h.forward_raw(cur.data(), noise.data(), 1);
    float residual = 0.0f;
    for (std::int64_t j = 0; j < d; ++j) {
        const float next = x[j] - key.epsilon * std::tanh(noise[static_cast<std::size_t>(j)]);
        residual = std::max(residual, std::abs(cur[static_cast<std::size_t>(j)] - next));
        out[j] = clip_output ? std::clamp(cur[static_cast<std::size_t>(j)], 0.0f, 1.0f)
                             : cur[static_cast<std::size_t>(j)];
    }
    return residual;
}

std::vector<std::uint8_t> selected_mask(const KeyScope& scope, const Dataset& ds) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(ds.size()), 0);
    std::vector<int> in_scope;
    for (int i = 0; i < ds.size(); ++i)
        if (scope.covers(ds.labels[static_cast<std::size_t>(i)])) in_scope.push_back(i);
    if (scope.percent >= 1.0f) {
        for (int i : in_scope) mask[static_cast<std::size_t>(i)] = 1;
        return mask;
    }
    Rng rng(derive_seed(scope.select_seed, 0x5e1ec7));
    std::shuffle(in_scope.begin(), in_scope.end(), rng);
    const auto take = static_cast<std::size_t>(
        std::lround(scope.percent * static_cast<double>(in_scope.size())));
    for (std::size_t i = 0; i < take && i < in_scope.size(); ++i)
        mask[static_cast<std::size_t>(in_scope[i])] = 1;
    return mask;
}

std::vector<std::uint8_t> selected_mask(const LockKey& key, const Dataset& ds) {
    return selected_mask(key.scope, ds);
}

namespace {

Dataset apply_transform(const Dataset& ds, const LockKey& key, bool force, bool unlock) {
    key.validate();
    LL_CHECK(ds.num_classes == key.num_classes,
             "apply: dataset class count does not match key");
    if (!force && dataset_fingerprint(ds) != key.fingerprint)
        throw FingerprintMismatch("dataset fingerprint does not match key (use force to override)");

    Dataset out = ds;
    const auto mask = selected_mask(key, ds);
    const std::int64_t d = ds.image_size();
    LL_CHECK(numel(key.img) == d, "apply: key image shape does not match dataset");
    for (int i = 0; i < ds.size(); ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        const int y = ds.labels[static_cast<std::size_t>(i)];
        const int idx = key.transform_index(y);
        LockVariant v = key.variant;
        if (v == LockVariant::mixture)
            v = static_cast<LockVariant>(key.class_variant[static_cast<std::size_t>(y)]);
        const float* src = ds.image(i);
        float* dst = out.image(i);
        switch (v) {
            case LockVariant::linear:
            case LockVariant::global_linear:
                if (unlock) linear_unlock_image(*key.linear, idx, src, dst);
                else linear_lock_image(*key.linear, idx, src, dst);
                break;
            case LockVariant::conv:
            case LockVariant::global_conv:
                if (unlock) conv_unlock_image(*key.conv, idx, src, dst);
                else conv_lock_image(*key.conv, idx, src, dst);
                break;
            default:
                throw Error("apply: invalid per-class variant");
        }
    }
    return out;
}

}  // namespace

Dataset apply_lock(const Dataset& ds, const LockKey& key, bool force) {
    return apply_transform(ds, key, force, /*unlock=*/false);
}

Dataset apply_unlock(const Dataset& ds, const LockKey& key, bool force) {
    return apply_transform(ds, key, force, /*unlock=*/true);
}

namespace {

void encode_conv_payload(std::vector<std::uint8_t>& buf, const ConvKey& ck) {
    put(buf, static_cast<std::uint32_t>(ck.fixed_point_iters));
    const auto& plan = ck.h.front().layers;
    put(buf, static_cast<std::uint8_t>(plan.size()));
    for (const auto& l : plan) {
        put(buf, static_cast<std::uint16_t>(l.out_ch));
        put(buf, static_cast<std::uint16_t>(l.in_ch));
        put(buf, static_cast<std::uint16_t>(l.kernel));
        put(buf, static_cast<std::uint16_t>(l.pad));
    }
}

void encode_conv_entry(std::vector<std::uint8_t>& buf, const ResidualTransform& h) {
    for (std::size_t li = 0; li < h.layers.size(); ++li) {
        put_floats(buf, {h.weights[li].value().begin(), h.weights[li].value().end()});
        put_floats(buf, {h.biases[li].value().begin(), h.biases[li].value().end()});
    }
}

struct ConvPlanHeader {
    int m = 0;
    std::vector<ConvLayerSpec> plan;
};

ConvPlanHeader decode_conv_payload(Reader& r) {
    ConvPlanHeader hdr;
    hdr.m = static_cast<int>(r.get<std::uint32_t>("fixed-point iterations"));
    const int nl = r.get<std::uint8_t>("layer count");
    for (int i = 0; i < nl; ++i) {
        ConvLayerSpec l;
        l.out_ch = r.get<std::uint16_t>("layer out channels");
        l.in_ch = r.get<std::uint16_t>("layer in channels");
        l.kernel = r.get<std::uint16_t>("layer kernel");
        l.pad = r.get<std::uint16_t>("layer padding");
        hdr.plan.push_back(l);
    }
    return hdr;
}

// Identity placeholder (h == 0) for mixture classes of the other family.
ResidualTransform make_zero_transform(const Shape& img, const std::vector<ConvLayerSpec>& plan) {
    ResidualTransform h;
    h.img = img;
    h.layers = plan;
    for (const auto& l : plan) {
        h.weights.push_back(Tensor({l.out_ch, l.in_ch, l.kernel, l.kernel}, 0.0f, true));
        h.biases.push_back(Tensor({l.out_ch}, 0.0f, true));
        h.u.push_back(std::vector<float>(static_cast<std::size_t>(l.in_ch) * img[1] * img[2],
                                         0.0f));
    }
    return h;
}

ResidualTransform decode_conv_entry(Reader& r, const Shape& img,
                                    const std::vector<ConvLayerSpec>& plan,
                                    std::uint64_t useed) {
    ResidualTransform h;
    h.img = img;
    h.layers = plan;
    Rng rng(derive_seed(useed, 0xdec0de));
    for (const auto& l : plan) {
        const std::size_t wn = static_cast<std::size_t>(l.out_ch) * l.in_ch * l.kernel * l.kernel;
        Tensor w = Tensor::from({l.out_ch, l.in_ch, l.kernel, l.kernel},
                                r.get_floats(wn, "layer weights"), true);
        Tensor b = Tensor::from({l.out_ch}, r.get_floats(static_cast<std::size_t>(l.out_ch),
                                                         "layer bias"),
                                true);
        h.weights.push_back(std::move(w));
        h.biases.push_back(std::move(b));
        std::vector<float> u(static_cast<std::size_t>(l.in_ch) * img[1] * img[2]);
        fill_unit_random(u, rng);
        h.u.push_back(std::move(u));
    }
    return h;
}

}  // namespace

std::vector<std::uint8_t> encode_key(const LockKey& key) {
    key.validate();
    std::vector<std::uint8_t> buf;
    buf.insert(buf.end(), kKeyMagic, kKeyMagic + 4);
    put(buf, kKeyVersion);
    put(buf, static_cast<std::uint8_t>(key.variant));
    put(buf, key.epsilon);
    put(buf, static_cast<std::uint32_t>(key.num_classes));
    put(buf, static_cast<std::uint16_t>(key.img[0]));
    put(buf, static_cast<std::uint16_t>(key.img[1]));
    put(buf, static_cast<std::uint16_t>(key.img[2]));
    // scope bitmap
    const int nbytes = (key.num_classes + 7) / 8;
    for (int i = 0; i < nbytes; ++i) {
        std::uint8_t b = 0;
        for (int j = 0; j < 8; ++j) {
            const int cls = i * 8 + j;
            if (cls < key.num_classes && key.scope.covers(cls)) b |= (1u << j);
        }
        put(buf, b);
    }
    put(buf, key.scope.percent);
    put(buf, key.scope.select_seed);
    buf.insert(buf.end(), key.fingerprint.begin(), key.fingerprint.end());

    switch (key.variant) {
        case LockVariant::linear:
        case LockVariant::global_linear:
            for (std::size_t c = 0; c < key.linear->w.size(); ++c) {
                put_floats(buf, key.linear->w[c]);
                put_floats(buf, key.linear->b[c]);
            }
            break;
        case LockVariant::conv:
        case LockVariant::global_conv:
            encode_conv_payload(buf, *key.conv);
            for (const auto& h : key.conv->h) encode_conv_entry(buf, h);
            break;
        case LockVariant::mixture:
            encode_conv_payload(buf, *key.conv);
            for (auto v : key.class_variant) put(buf, v);
            for (int c = 0; c < key.num_classes; ++c) {
                if (key.class_variant[static_cast<std::size_t>(c)] ==
                    static_cast<std::uint8_t>(LockVariant::linear)) {
                    put_floats(buf, key.linear->w[static_cast<std::size_t>(c)]);
                    put_floats(buf, key.linear->b[static_cast<std::size_t>(c)]);
                } else {
                    encode_conv_entry(buf, key.conv->h[static_cast<std::size_t>(c)]);
                }
            }
            break;
    }
    return buf;
}

LockKey decode_key(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kKeyMagic, 4) != 0)
        throw KeyFormatError("key: bad magic");
    Reader r{bytes, 4};
    const auto version = r.get<std::uint16_t>("version");
    if (version != kKeyVersion)
        throw KeyFormatError("key: unsupported version " + std::to_string(version));
    LockKey key;
    key.variant = static_cast<LockVariant>(r.get<std::uint8_t>("variant"));
    key.epsilon = r.get<float>("epsilon");
    key.num_classes = static_cast<int>(r.get<std::uint32_t>("class count"));
    LL_CHECK(key.num_classes >= 1 && key.num_classes < 65536, "key: invalid class count");
    key.img = {r.get<std::uint16_t>("channels"), r.get<std::uint16_t>("height"),
               r.get<std::uint16_t>("width")};
    key.scope.class_mask.assign(static_cast<std::size_t>(key.num_classes), 0);
    const int nbytes = (key.num_classes + 7) / 8;
    for (int i = 0; i < nbytes; ++i) {
        const auto b = r.get<std::uint8_t>("scope bitmap");
        for (int j = 0; j < 8; ++j) {
            const int cls = i * 8 + j;
            if (cls < key.num_classes)
                key.scope.class_mask[static_cast<std::size_t>(cls)] = (b >> j) & 1u;
        }
    }
    key.scope.percent = r.get<float>("scope percent");
    key.scope.select_seed = r.get<std::uint64_t>("scope seed");
    for (auto& b : key.fingerprint) b = r.get<std::uint8_t>("fingerprint");

    const auto d = static_cast<std::size_t>(numel(key.img));
    switch (key.variant) {
        case LockVariant::linear:
        case LockVariant::global_linear: {
            LinearKey lk;
            lk.epsilon = key.epsilon;
            lk.img = key.img;
            const int entries = key.variant == LockVariant::global_linear ? 1 : key.num_classes;
            for (int c = 0; c < entries; ++c) {
                lk.w.push_back(r.get_floats(d, "linear weights"));
                lk.b.push_back(r.get_floats(d, "linear biases"));
            }
            key.linear = std::move(lk);
            break;
        }
        case LockVariant::conv:
        case LockVariant::global_conv: {
            const auto hdr = decode_conv_payload(r);
            ConvKey ck;
            ck.epsilon = key.epsilon;
            ck.img = key.img;
            ck.fixed_point_iters = hdr.m;
            const int entries = key.variant == LockVariant::global_conv ? 1 : key.num_classes;
            for (int c = 0; c < entries; ++c)
                ck.h.push_back(decode_conv_entry(r, key.img, hdr.plan,
                                                 static_cast<std::uint64_t>(c)));
            key.conv = std::move(ck);
            break;
        }
        case LockVariant::mixture: {
            const auto hdr = decode_conv_payload(r);
            LinearKey lk;
            lk.epsilon = key.epsilon;
            lk.img = key.img;
            ConvKey ck;
            ck.epsilon = key.epsilon;
            ck.img = key.img;
            ck.fixed_point_iters = hdr.m;
            key.class_variant.resize(static_cast<std::size_t>(key.num_classes));
            for (auto& v : key.class_variant) v = r.get<std::uint8_t>("mixture class variant");
            // Both tables are indexed by class; classes of the other family
            // hold identity placeholders.
            for (int c = 0; c < key.num_classes; ++c) {
                if (key.class_variant[static_cast<std::size_t>(c)] ==
                    static_cast<std::uint8_t>(LockVariant::linear)) {
                    lk.w.push_back(r.get_floats(d, "linear weights"));
                    lk.b.push_back(r.get_floats(d, "linear biases"));
                    ck.h.push_back(make_zero_transform(key.img, hdr.plan));
                } else {
                    lk.w.push_back(std::vector<float>(d, 1.0f));
                    lk.b.push_back(std::vector<float>(d, 0.0f));
                    ck.h.push_back(decode_conv_entry(r, key.img, hdr.plan,
                                                     static_cast<std::uint64_t>(c)));
                }
            }
            key.linear = std::move(lk);
            key.conv = std::move(ck);
            break;
        }
        default:
            throw KeyFormatError("key: unknown variant byte");
    }
    if (r.pos != bytes.size()) throw KeyFormatError("key: trailing bytes after payload");
    key.validate();
    return key;
}

void save_key(const LockKey& key, const std::filesystem::path& path) {
    const auto bytes = encode_key(key);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create key file " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("key write failed: " + path.string());
}

LockKey load_key(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open key file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_key(bytes);
}

}  // namespace learnlock
