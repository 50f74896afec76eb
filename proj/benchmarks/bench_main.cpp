#include <benchmark/benchmark.h>

#include "learnlock/locks.hpp"
#include "learnlock/models.hpp"
#include "learnlock/rng.hpp"

namespace {

using namespace learnlock;

std::vector<float> random_image(std::int64_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = uniform(rng, 0.0f, 1.0f);
    return v;
}

void BM_Conv2dForward(benchmark::State& state) {
    const int N = static_cast<int>(state.range(0));
    Tensor x = Tensor::from({N, 3, 32, 32}, random_image(N * 3 * 32 * 32, 1));
    Tensor w = Tensor::from({16, 3, 3, 3}, random_image(16 * 3 * 3 * 3, 2));
    Tensor b({16});
    for (auto _ : state) {
        Tensor y = ops::conv2d(x, w, b, 1, 1);
        benchmark::DoNotOptimize(y.value().data());
    }
    state.SetItemsProcessed(state.iterations() * N);
}
BENCHMARK(BM_Conv2dForward)->Arg(1)->Arg(64);

void BM_LinearLockImage(benchmark::State& state) {
    const Shape img = {3, 32, 32};
    LockKey key = make_identity_linear_key(3, img, 8.0f / 255.0f);
    auto x = random_image(numel(img), 3);
    std::vector<float> out(x.size());
    for (auto _ : state) {
        linear_lock_image(*key.linear, 0, x.data(), out.data());
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_LinearLockImage);

void BM_ConvLockImage(benchmark::State& state) {
    const Shape img = {3, 32, 32};
    ConvKey key;
    key.epsilon = 8.0f / 255.0f;
    key.img = img;
    key.h.push_back(ResidualTransform::init(img, 1.0f, 7));
    for (std::size_t li = 0; li < key.h[0].layers.size(); ++li)
        spectral_normalize(key.h[0], static_cast<int>(li), 50);
    auto x = random_image(numel(img), 4);
    std::vector<float> out(x.size());
    for (auto _ : state) {
        conv_lock_image(key, 0, x.data(), out.data());
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_ConvLockImage);

void BM_ConvUnlockFixedPoint(benchmark::State& state) {
    const Shape img = {3, 32, 32};
    ConvKey key;
    key.epsilon = 8.0f / 255.0f;
    key.img = img;
    key.fixed_point_iters = static_cast<int>(state.range(0));
    key.h.push_back(ResidualTransform::init(img, 1.0f, 7));
    for (std::size_t li = 0; li < key.h[0].layers.size(); ++li)
        spectral_normalize(key.h[0], static_cast<int>(li), 50);
    auto x = random_image(numel(img), 5);
    std::vector<float> locked(x.size()), out(x.size());
    conv_lock_image(key, 0, x.data(), locked.data());
    for (auto _ : state) {
        conv_unlock_image(key, 0, locked.data(), out.data());
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_ConvUnlockFixedPoint)->Arg(1)->Arg(5)->Arg(8);

void BM_TrainStep(benchmark::State& state) {
    ClassifierSpec spec;
    spec.num_classes = 3;
    spec.arch = Arch::mini_resnet;
    ClassifierState model = init_classifier(spec, 11);
    const int N = 64;
    Tensor x = Tensor::from({N, 3, 32, 32}, random_image(N * 3 * 32 * 32, 6));
    std::vector<int> y(N);
    for (int i = 0; i < N; ++i) y[static_cast<std::size_t>(i)] = i % 3;
    Sgd sgd(0.01f, 0.9f);
    for (auto _ : state) {
        Tape tape;
        Tensor loss = ops::cross_entropy_with_logits(predict(model, x), y);
        tape.backward(loss);
        sgd.step(model.params);
        benchmark::DoNotOptimize(loss.item());
    }
    state.SetItemsProcessed(state.iterations() * N);
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
