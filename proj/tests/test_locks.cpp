#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "learnlock/dataio.hpp"
#include "learnlock/locks.hpp"
#include "learnlock/rng.hpp"

using namespace learnlock;
namespace fs = std::filesystem;

namespace {

Dataset interior_data(std::uint64_t seed, int per_class = 6) {
    SyntheticSpec spec;
    spec.num_classes = 3;
    spec.train_per_class = per_class;
    spec.test_per_class = 2;
    spec.height = 12;
    spec.width = 12;
    spec.pixel_margin = 0.1f;
    spec.seed = seed;
    return generate_synthetic(spec).first;
}

LinearKey random_linear_key(int K, const Shape& img, float eps, std::uint64_t seed) {
    LinearKey key;
    key.epsilon = eps;
    key.img = img;
    Rng rng(seed);
    const auto d = static_cast<std::size_t>(numel(img));
    for (int c = 0; c < K; ++c) {
        std::vector<float> w(d), b(d);
        for (auto& v : w) v = uniform(rng, 1.0f - eps / 2.0f, 1.0f + eps / 2.0f);
        for (auto& v : b) v = uniform(rng, -eps / 2.0f, eps / 2.0f);
        key.w.push_back(std::move(w));
        key.b.push_back(std::move(b));
    }
    return key;
}

ConvKey random_conv_key(int K, const Shape& img, float eps, std::uint64_t seed) {
    ConvKey key;
    key.epsilon = eps;
    key.img = img;
    for (int c = 0; c < K; ++c) {
        ResidualTransform h = ResidualTransform::init(img, 1.0f, derive_seed(seed, c));
        for (int li = 0; li < static_cast<int>(h.layers.size()); ++li)
            spectral_normalize(h, li, 50);
        key.h.push_back(std::move(h));
    }
    return key;
}

// A residual map with zeroed weights and a single bias on the last layer is
// the constant function h(x) = relu(bias), which makes the lock analytically
// checkable.
ResidualTransform constant_transform(const Shape& img, float bias) {
    ResidualTransform h = ResidualTransform::init(img, 1.0f, 77);
    for (auto& w : h.weights) {
        auto v = w.value();
        std::fill(v.begin(), v.end(), 0.0f);
    }
    for (std::size_t li = 0; li < h.biases.size(); ++li) {
        auto v = h.biases[li].value();
        std::fill(v.begin(), v.end(), li + 1 == h.biases.size() ? bias : 0.0f);
    }
    return h;
}

LockKey wrap_linear(LinearKey lk, int K, const Dataset& ds) {
    LockKey key;
    key.variant = LockVariant::linear;
    key.epsilon = lk.epsilon;
    key.num_classes = K;
    key.img = lk.img;
    key.scope.class_mask.assign(static_cast<std::size_t>(K), 1);
    key.fingerprint = dataset_fingerprint(ds);
    key.linear = std::move(lk);
    return key;
}

}  // namespace

TEST_CASE("constant residual map gives the analytic lock value") {
    const Shape img = {1, 4, 4};
    ConvKey key;
    key.epsilon = 0.1f;
    key.img = img;
    key.h.push_back(constant_transform(img, 0.4f));

    std::vector<float> x(16, 0.8f), out(16);
    conv_lock_image(key, 0, x.data(), out.data(), false);
    const float expected = 0.8f + 0.1f * std::tanh(0.4f);
    for (float v : out) CHECK(v == doctest::Approx(expected).epsilon(1e-6));

    // The inverse of a constant shift is exact after one iteration.
    ConvKey one_iter = key;
    one_iter.fixed_point_iters = 1;
    std::vector<float> back(16);
    conv_unlock_image(one_iter, 0, out.data(), back.data(), false);
    for (float v : back) CHECK(v == doctest::Approx(0.8f).epsilon(1e-6));
}

TEST_CASE("linear lock is exactly invertible on interior pixels") {
    const Dataset ds = interior_data(21);
    const Shape img = {ds.channels, ds.height, ds.width};
    const LinearKey key = random_linear_key(ds.num_classes, img, 0.1f, 33);

    std::vector<float> locked(static_cast<std::size_t>(ds.image_size()));
    std::vector<float> back(locked.size());
    float max_err = 0.0f;
    for (int i = 0; i < ds.size(); ++i) {
        linear_lock_image(key, ds.labels[static_cast<std::size_t>(i)], ds.image(i),
                          locked.data());
        linear_unlock_image(key, ds.labels[static_cast<std::size_t>(i)], locked.data(),
                            back.data());
        for (std::int64_t j = 0; j < ds.image_size(); ++j)
            max_err = std::max(max_err, std::abs(back[static_cast<std::size_t>(j)] -
                                                 ds.image(i)[j]));
    }
    CHECK(max_err <= 1e-6f);
}

TEST_CASE("both lock families respect the epsilon bound before clipping") {
    const Dataset ds = interior_data(22);
    const Shape img = {ds.channels, ds.height, ds.width};
    const float eps = 0.08f;
    const LinearKey lin = random_linear_key(ds.num_classes, img, eps, 44);
    const ConvKey conv = random_conv_key(ds.num_classes, img, eps, 45);

    std::vector<float> out(static_cast<std::size_t>(ds.image_size()));
    for (int i = 0; i < ds.size(); ++i) {
        const int c = ds.labels[static_cast<std::size_t>(i)];
        linear_lock_image(lin, c, ds.image(i), out.data(), false);
        for (std::int64_t j = 0; j < ds.image_size(); ++j)
            CHECK(std::abs(out[static_cast<std::size_t>(j)] - ds.image(i)[j]) <= eps + 1e-6f);
        conv_lock_image(conv, c, ds.image(i), out.data(), false);
        for (std::int64_t j = 0; j < ds.image_size(); ++j)
            CHECK(std::abs(out[static_cast<std::size_t>(j)] - ds.image(i)[j]) <= eps + 1e-6f);
    }
}

TEST_CASE("fixed-point unlock error decreases with iteration count") {
    const Dataset ds = interior_data(23, 2);
    const Shape img = {ds.channels, ds.height, ds.width};
    ConvKey key = random_conv_key(ds.num_classes, img, 0.1f, 46);

    std::vector<float> locked(static_cast<std::size_t>(ds.image_size()));
    std::vector<float> back(locked.size());
    double prev = 1e9;
    for (int m = 1; m <= 8; ++m) {
        key.fixed_point_iters = m;
        double worst = 0.0;
        for (int i = 0; i < ds.size(); ++i) {
            conv_lock_image(key, ds.labels[static_cast<std::size_t>(i)], ds.image(i),
                            locked.data(), false);
            conv_unlock_image(key, ds.labels[static_cast<std::size_t>(i)], locked.data(),
                              back.data(), false);
            double err = 0.0;
            for (std::int64_t j = 0; j < ds.image_size(); ++j) {
                const double d = back[static_cast<std::size_t>(j)] - ds.image(i)[j];
                err += d * d;
            }
            worst = std::max(worst, std::sqrt(err));
        }
        CAPTURE(m);
        // Strictly contracting until the iterate hits the float32 fixed
        // point, after which the error sits exactly at zero.
        if (prev > 1e-7) CHECK(worst < prev);
        prev = worst;
        if (m == 5) CHECK(worst <= 1e-2);
    }
}

TEST_CASE("power iteration matches the materialized conv operator norm") {
    // Single small layer so the dense operator fits comfortably in memory.
    const Shape img = {2, 5, 5};
    ResidualTransform h = ResidualTransform::init(img, 1.0f, 91, 1.5f);
    const int li = 0;
    const auto& spec = h.layers[static_cast<std::size_t>(li)];
    const int in_dim = spec.in_ch * 5 * 5;
    const int out_dim = spec.out_ch * 5 * 5;

    Eigen::MatrixXf op(out_dim, in_dim);
    std::vector<float> basis(static_cast<std::size_t>(in_dim), 0.0f);
    std::vector<float> col(static_cast<std::size_t>(out_dim));
    auto wv = h.weights[static_cast<std::size_t>(li)].value();
    for (int j = 0; j < in_dim; ++j) {
        basis[static_cast<std::size_t>(j)] = 1.0f;
        ops::raw::conv2d_forward(basis.data(), wv.data(), nullptr, col.data(), 1, spec.in_ch, 5,
                                 5, spec.out_ch, spec.kernel, spec.kernel, 1, spec.pad);
        for (int i = 0; i < out_dim; ++i) op(i, j) = col[static_cast<std::size_t>(i)];
        basis[static_cast<std::size_t>(j)] = 0.0f;
    }
    const float svd_norm = Eigen::JacobiSVD<Eigen::MatrixXf>(op).singularValues()(0);
    const float pi_norm = spectral_norm_estimate(h, li, 100);
    CHECK(pi_norm == doctest::Approx(svd_norm).epsilon(1e-3));

    // Normalizing caps the estimate at one.
    spectral_normalize(h, li, 100);
    CHECK(spectral_norm_estimate(h, li, 100) <= 1.0f + 1e-3f);
}

TEST_CASE("key codec round trips bitwise for every variant") {
    const Dataset ds = interior_data(25);
    const Shape img = {ds.channels, ds.height, ds.width};
    const int K = ds.num_classes;

    std::vector<LockKey> keys;
    keys.push_back(wrap_linear(random_linear_key(K, img, 0.1f, 50), K, ds));

    LockKey conv_key = keys[0];
    conv_key.variant = LockVariant::conv;
    conv_key.linear.reset();
    conv_key.conv = random_conv_key(K, img, 0.1f, 51);
    keys.push_back(conv_key);

    LockKey mix = keys[0];
    mix.variant = LockVariant::mixture;
    mix.conv = random_conv_key(K, img, 0.1f, 52);
    mix.class_variant = {static_cast<std::uint8_t>(LockVariant::conv),
                         static_cast<std::uint8_t>(LockVariant::linear),
                         static_cast<std::uint8_t>(LockVariant::conv)};
    keys.push_back(mix);

    LockKey glin = keys[0];
    glin.variant = LockVariant::global_linear;
    glin.linear = random_linear_key(1, img, 0.1f, 53);
    keys.push_back(glin);

    LockKey gconv = conv_key;
    gconv.variant = LockVariant::global_conv;
    gconv.conv = random_conv_key(1, img, 0.1f, 54);
    keys.push_back(gconv);

    for (const auto& key : keys) {
        CAPTURE(variant_name(key.variant));
        const auto bytes = encode_key(key);
        const LockKey back = decode_key(bytes);
        CHECK(encode_key(back) == bytes);
        CHECK(back.variant == key.variant);
        CHECK(back.fingerprint == key.fingerprint);
    }

    SUBCASE("file round trip") {
        const fs::path path = fs::temp_directory_path() / "learnlock_test_key.llky";
        save_key(keys[1], path);
        const LockKey back = load_key(path);
        CHECK(encode_key(back) == encode_key(keys[1]));
        fs::remove(path);
    }
}

TEST_CASE("key codec rejects malformed input") {
    const Dataset ds = interior_data(26);
    const Shape img = {ds.channels, ds.height, ds.width};
    LockKey key = wrap_linear(random_linear_key(ds.num_classes, img, 0.1f, 55), ds.num_classes,
                              ds);
    auto bytes = encode_key(key);

    SUBCASE("bad magic") {
        bytes[0] = 'X';
        CHECK_THROWS_AS(decode_key(bytes), KeyFormatError);
    }
    SUBCASE("truncation") {
        bytes.resize(bytes.size() / 2);
        CHECK_THROWS_AS(decode_key(bytes), KeyFormatError);
    }
    SUBCASE("trailing bytes") {
        bytes.push_back(0);
        CHECK_THROWS_AS(decode_key(bytes), KeyFormatError);
    }
}

TEST_CASE("linear key parameter table holds exactly 2 K d values") {
    const Shape img = {3, 12, 12};
    const int K = 3;
    const LinearKey key = random_linear_key(K, img, 0.1f, 60);
    std::size_t total = 0;
    for (const auto& w : key.w) total += w.size();
    for (const auto& b : key.b) total += b.size();
    CHECK(total == static_cast<std::size_t>(2 * K * numel(img)));

    // The encoded payload carries the table verbatim: size grows by exactly
    // four bytes per added parameter value.
    const Dataset ds = interior_data(27);
    const LockKey a = wrap_linear(random_linear_key(K, img, 0.1f, 61), K, ds);
    LockKey b = a;
    b.linear = random_linear_key(K, {3, 12, 13}, 0.1f, 61);
    b.img = {3, 12, 13};
    const std::ptrdiff_t diff = static_cast<std::ptrdiff_t>(encode_key(b).size()) -
                                static_cast<std::ptrdiff_t>(encode_key(a).size());
    CHECK(diff == 2 * K * (numel({3, 12, 13}) - numel({3, 12, 12})) * 4);
}

TEST_CASE("scope selection masks") {
    const Dataset ds = interior_data(28, 20);

    SUBCASE("class mask limits selection to controlled classes") {
        KeyScope scope;
        scope.class_mask = {1, 0, 0};
        const auto mask = selected_mask(scope, ds);
        for (int i = 0; i < ds.size(); ++i)
            CHECK(static_cast<bool>(mask[static_cast<std::size_t>(i)]) ==
                  (ds.labels[static_cast<std::size_t>(i)] == 0));
    }
    SUBCASE("percent selects a seeded fraction, deterministically") {
        KeyScope scope;
        scope.class_mask = {1, 1, 1};
        scope.percent = 0.5f;
        scope.select_seed = 4;
        const auto mask = selected_mask(scope, ds);
        CHECK(mask == selected_mask(scope, ds));
        int on = 0;
        for (auto v : mask) on += v;
        CHECK(on > ds.size() / 4);
        CHECK(on < 3 * ds.size() / 4);

        scope.select_seed = 5;
        CHECK(mask != selected_mask(scope, ds));
    }
}

TEST_CASE("identity key locks to the identical dataset") {
    const Dataset ds = interior_data(29);
    const Shape img = {ds.channels, ds.height, ds.width};
    LockKey key = make_identity_linear_key(ds.num_classes, img, 0.1f);
    key.fingerprint = dataset_fingerprint(ds);
    const Dataset locked = apply_lock(ds, key);
    CHECK(locked.images == ds.images);
    CHECK(locked.labels == ds.labels);
}

TEST_CASE("lock and unlock round trip through a dataset") {
    const Dataset ds = interior_data(30);
    const Shape img = {ds.channels, ds.height, ds.width};
    LockKey key = wrap_linear(random_linear_key(ds.num_classes, img, 0.1f, 70),
                              ds.num_classes, ds);

    const Dataset locked = apply_lock(ds, key);
    CHECK(locked.images != ds.images);
    const Dataset back = apply_unlock(locked, key);
    double mean_l2 = 0.0;
    for (int i = 0; i < ds.size(); ++i) {
        double err = 0.0;
        for (std::int64_t j = 0; j < ds.image_size(); ++j) {
            const double d = back.image(i)[j] - ds.image(i)[j];
            err += d * d;
        }
        mean_l2 += std::sqrt(err);
    }
    mean_l2 /= ds.size();
    CHECK(mean_l2 <= 1e-4);
}

TEST_CASE("fingerprint gate blocks foreign datasets unless forced") {
    const Dataset ds = interior_data(31);
    const Dataset other = interior_data(32, 7);  // different per-class counts
    const Shape img = {ds.channels, ds.height, ds.width};
    LockKey key = wrap_linear(random_linear_key(ds.num_classes, img, 0.1f, 71),
                              ds.num_classes, ds);

    CHECK_THROWS_AS(apply_lock(other, key), FingerprintMismatch);
    CHECK_THROWS_AS(apply_unlock(other, key), FingerprintMismatch);
    CHECK_NOTHROW(apply_lock(other, key, true));
}
