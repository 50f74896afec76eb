// End-to-end acceptance harness for the learnability-lock pipeline. Runs the
// full desk-scale benchmark (3 classes, 3000 train / 600 test, 3x32x32) with
// fixed seeds and prints one pass/fail line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "learnlock/eval.hpp"

using namespace learnlock;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;
std::chrono::steady_clock::time_point g_start;

double elapsed_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - g_start).count();
}

void report(int criterion, const char* title, bool pass, const std::string& detail) {
    if (!pass) ++g_failures;
    std::printf("criterion %2d [%s] %s: %s (t=%.0fs)\n", criterion, pass ? "PASS" : "FAIL",
                title, detail.c_str(), elapsed_s());
    std::fflush(stdout);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

// ---- shared experiment configuration ------------------------------------

constexpr std::uint64_t kSeed = 7;
constexpr float kEpsilon = 0.1f;

SyntheticSpec bench_spec() {
    SyntheticSpec spec;  // defaults: 3 classes, 1000/200 per class, 3x32x32
    spec.seed = kSeed;
    return spec;
}

ClassifierSpec eval_arch(Arch arch) {
    ClassifierSpec s;
    s.num_classes = 3;
    s.arch = arch;
    return s;
}

TrainConfig eval_train(std::uint64_t seed = kSeed) {
    TrainConfig cfg;
    cfg.epochs = 12;
    cfg.batch_size = 64;
    cfg.lr = 0.02f;
    cfg.seed = seed;
    return cfg;
}

CraftConfig craft_base(LockVariant variant) {
    CraftConfig cfg;
    cfg.variant = variant;
    cfg.epsilon = kEpsilon;
    cfg.seed = kSeed;
    cfg.model.arch = Arch::mini_resnet;
    if (variant == LockVariant::conv || variant == LockVariant::global_conv ||
        variant == LockVariant::mixture) {
        cfg.outer_steps = 25;
        cfg.inner_steps = 3;
        cfg.exit_error = 0.2f;
    }
    return cfg;
}

// Training with access to the fitted model, seeded identically to
// train_and_eval so accuracies line up across criteria.
ClassifierState train_model(const Dataset& train, Arch arch, const TrainConfig& cfg) {
    ClassifierSpec spec = eval_arch(arch);
    spec.channels = train.channels;
    spec.height = train.height;
    spec.width = train.width;
    ClassifierState model = init_classifier(spec, derive_seed(cfg.seed, 0xa11ce));
    train_classifier(model, train, nullptr, cfg);
    return model;
}

std::vector<double> recalls(const ClassifierState& model, const Dataset& test) {
    const auto cm = confusion_matrix(model, test);
    std::vector<double> out;
    for (std::size_t r = 0; r < cm.size(); ++r) {
        long total = 0;
        for (int v : cm[r]) total += v;
        out.push_back(total > 0 ? static_cast<double>(cm[r][r]) / total : 0.0);
    }
    return out;
}

double mean_image_l2(const Dataset& a, const Dataset& b) {
    double sum = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        double err = 0.0;
        for (std::int64_t j = 0; j < a.image_size(); ++j) {
            const double d = static_cast<double>(a.image(i)[j]) - b.image(i)[j];
            err += d * d;
        }
        sum += std::sqrt(err);
    }
    return sum / a.size();
}

float max_abs_diff(const Dataset& a, const Dataset& b) {
    float worst = 0.0f;
    for (std::size_t i = 0; i < a.images.size(); ++i)
        worst = std::max(worst, std::abs(a.images[i] - b.images[i]));
    return worst;
}

// ---- criterion 1: finite-difference audit of every autodiff primitive ----

std::vector<float> rand_vec(std::int64_t n, std::uint64_t seed, float lo = -1.0f,
                            float hi = 1.0f) {
    Rng rng(seed);
    std::vector<float> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = uniform(rng, lo, hi);
    return v;
}

template <class F>
bool grad_check(F f, std::vector<Tensor> inputs, double tol = 1e-4, float h = 1e-2f) {
    for (auto& t : inputs) t.set_requires_grad(true);
    Tensor wts;
    {
        Tensor probe = f(inputs);
        wts = Tensor::from(probe.shape(), rand_vec(probe.size(), 999, 0.1f, 1.0f));
    }
    auto loss_value = [&]() -> double {
        Tensor out = f(inputs);
        auto ov = out.value();
        auto wv = wts.value();
        double s = 0.0;
        for (std::int64_t i = 0; i < out.size(); ++i) s += static_cast<double>(ov[i]) * wv[i];
        return s;
    };
    {
        Tape tape;
        Tensor loss = ops::sum(ops::mul(f(inputs), wts));
        tape.backward(loss);
    }
    for (auto& input : inputs) {
        auto xv = input.value();
        auto ad = input.grad();
        for (std::int64_t i = 0; i < input.size(); ++i) {
            const float orig = xv[i];
            xv[i] = orig + h;
            const double lp = loss_value();
            xv[i] = orig - h;
            const double lm = loss_value();
            xv[i] = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double denom =
                std::max({std::abs(fd), std::abs(static_cast<double>(ad[i])), 0.1});
            if (std::abs(fd - ad[i]) / denom > tol) return false;
        }
    }
    return true;
}

bool check_all_primitives() {
    using namespace ops;
    auto t = [](Shape s, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
        return Tensor::from(s, rand_vec(numel(s), seed, lo, hi));
    };
    bool ok = true;
    ok &= grad_check([](auto& v) { return add(v[0], v[1]); }, {t({3, 4}, 1), t({3, 4}, 2)});
    ok &= grad_check([](auto& v) { return sub(v[0], v[1]); }, {t({3, 4}, 3), t({3, 4}, 4)});
    ok &= grad_check([](auto& v) { return mul(v[0], v[1]); }, {t({3, 4}, 5), t({3, 4}, 6)});
    // Denominators away from zero and a small step keep the central
    // difference's curvature bias under the tolerance.
    ok &= grad_check([](auto& v) { return div(v[0], v[1]); },
                     {t({3, 4}, 7), t({3, 4}, 8, 1.0f, 2.0f)}, 1e-4, 5e-3f);
    ok &= grad_check([](auto& v) { return add(v[0], v[1]); },
                     {t({2, 3, 2, 2}, 9), t({3}, 10)});  // per-channel broadcast
    ok &= grad_check([](auto& v) { return add_scalar(v[0], 0.7f); }, {t({3, 4}, 11)});
    ok &= grad_check([](auto& v) { return mul_scalar(v[0], -1.3f); }, {t({3, 4}, 12)});
    ok &= grad_check([](auto& v) { return matmul(v[0], v[1]); },
                     {t({3, 4}, 13), t({4, 2}, 14)}, 1e-4, 5e-2f);
    ok &= grad_check([](auto& v) { return conv2d(v[0], v[1], v[2], 1, 1); },
                     {t({2, 2, 4, 4}, 15), t({3, 2, 3, 3}, 16), t({3}, 17)}, 1e-4, 5e-2f);
    ok &= grad_check([](auto& v) { return conv2d(v[0], v[1], 2, 0); },
                     {t({1, 2, 5, 5}, 18), t({2, 2, 3, 3}, 19)}, 1e-4, 5e-2f);
    ok &= grad_check([](auto& v) { return relu(v[0]); }, {t({3, 4}, 20, 0.2f, 1.0f)});
    ok &= grad_check([](auto& v) { return tanh(v[0]); }, {t({3, 4}, 21)});
    ok &= grad_check([](auto& v) { return softmax(v[0]); }, {t({3, 4}, 22)});
    ok &= grad_check(
        [](auto& v) { return cross_entropy_with_logits(v[0], {0, 2, 1}); }, {t({3, 3}, 23)});
    Tensor targets = Tensor::from({3, 3}, {0.2f, 0.5f, 0.3f, 1.0f, 0.0f, 0.0f,
                                           0.1f, 0.1f, 0.8f});
    ok &= grad_check([&](auto& v) { return cross_entropy_soft(v[0], targets); },
                     {t({3, 3}, 24)});
    ok &= grad_check([](auto& v) { return sum(v[0]); }, {t({3, 4}, 25)});
    ok &= grad_check([](auto& v) { return mean(v[0]); }, {t({3, 4}, 26)});
    ok &= grad_check([](auto& v) { return clip(v[0], -0.5f, 0.5f); },
                     {t({3, 4}, 27, 0.6f, 1.0f)});  // saturated region
    ok &= grad_check([](auto& v) { return clip(v[0], -2.0f, 2.0f); }, {t({3, 4}, 28)});
    ok &= grad_check([](auto& v) { return max_pool2d(v[0]); }, {t({1, 2, 4, 4}, 29)});
    ok &= grad_check([](auto& v) { return global_avg_pool(v[0]); }, {t({2, 3, 3, 3}, 30)});
    ok &= grad_check([](auto& v) { return reshape(v[0], {4, 3}); }, {t({3, 4}, 31)});
    return ok;
}

// ---- criterion 2 helper: random keys for the bound audit ------------------

LinearKey random_linear_params(int K, const Shape& img, float eps, std::uint64_t seed) {
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

}  // namespace

int main() {
    g_start = std::chrono::steady_clock::now();
    std::printf("learnability-lock acceptance run (seed %llu, epsilon %.3g)\n",
                static_cast<unsigned long long>(kSeed), static_cast<double>(kEpsilon));

    // Criterion 1: gradient fidelity across all primitives.
    report(1, "gradient fidelity", check_all_primitives(),
           "finite-difference audit of every primitive, rel err <= 1e-4");

    auto [clean_train, clean_test] = generate_synthetic(bench_spec());
    const Shape img = {clean_train.channels, clean_train.height, clean_train.width};
    const int K = clean_train.num_classes;

    // Criterion 2: epsilon bound over 10,000 (sample, key) pairs per family.
    {
        std::vector<float> out(static_cast<std::size_t>(clean_train.image_size()));
        Rng pick(derive_seed(kSeed, 0xb0a));
        float worst_lin = 0.0f;
        long pairs = 0;
        for (int k = 0; k < 50; ++k) {
            const LinearKey lin = random_linear_params(K, img, kEpsilon, 1000 + k);
            for (int s = 0; s < 200; ++s, ++pairs) {
                const int i = static_cast<int>(pick() % clean_train.size());
                const int cls = clean_train.labels[static_cast<std::size_t>(i)];
                linear_lock_image(lin, cls, clean_train.image(i), out.data(), false);
                for (std::int64_t j = 0; j < clean_train.image_size(); ++j)
                    worst_lin = std::max(
                        worst_lin, std::abs(out[static_cast<std::size_t>(j)] -
                                            clean_train.image(i)[j]));
            }
        }
        float worst_conv = 0.0f;
        for (int k = 0; k < 10; ++k) {
            ConvKey conv;
            conv.epsilon = kEpsilon;
            conv.img = img;
            for (int c = 0; c < K; ++c) {
                ResidualTransform h =
                    ResidualTransform::init(img, 1.0f, derive_seed(2000 + k, c));
                for (int li = 0; li < static_cast<int>(h.layers.size()); ++li)
                    spectral_normalize(h, li, 50);
                conv.h.push_back(std::move(h));
            }
            for (int s = 0; s < 1000; ++s, ++pairs) {
                const int i = static_cast<int>(pick() % clean_train.size());
                const int cls = clean_train.labels[static_cast<std::size_t>(i)];
                conv_lock_image(conv, cls, clean_train.image(i), out.data(), false);
                for (std::int64_t j = 0; j < clean_train.image_size(); ++j)
                    worst_conv = std::max(
                        worst_conv, std::abs(out[static_cast<std::size_t>(j)] -
                                             clean_train.image(i)[j]));
            }
        }
        report(2, "epsilon bound",
               worst_lin <= kEpsilon + 1e-6f && worst_conv <= kEpsilon + 1e-6f,
               "20000 pairs, worst |x'-x|: linear " + fmt(worst_lin) + ", conv " +
                   fmt(worst_conv));
    }

    // Craft the two primary keys.
    const CraftResult lin = craft(clean_train, craft_base(LockVariant::linear));
    const CraftResult conv = craft(clean_train, craft_base(LockVariant::conv));
    const Dataset lin_recovered = apply_unlock(lin.locked, lin.key);
    const Dataset conv_recovered = apply_unlock(conv.locked, conv.key);

    // Criterion 3: linear invertibility.
    {
        const float linf = max_abs_diff(lin_recovered, clean_train);
        const double l2 = mean_image_l2(lin_recovered, clean_train);
        report(3, "linear invertibility", linf <= 1e-6f && l2 <= 1e-4,
               "unlock(lock(x)) max |err| " + fmt(linf) + ", mean L2 " + fmt(l2) +
                   (lin.trace.converged ? "" : " [craft did not converge]"));
    }

    // Criterion 4: conv invertibility, contraction in m, spectral audit.
    {
        bool decreasing = true;
        double prev = 1e9, at_m5 = -1.0;
        std::string curve;
        LockKey probe = conv.key;
        for (int m = 1; m <= 8; ++m) {
            probe.conv->fixed_point_iters = m;
            const double l2 = mean_image_l2(apply_unlock(conv.locked, probe), clean_train);
            // Strict contraction until the iterates saturate at float32
            // round-off (a per-image L2 of ~1e-7 is about one ulp per pixel).
            if (l2 >= prev && prev > 1e-6) decreasing = false;
            prev = l2;
            if (m == 5) at_m5 = l2;
            curve += (curve.empty() ? "" : " ") + fmt(l2);
        }
        float worst_norm = 0.0f;
        for (const auto& h : conv.key.conv->h)
            for (int li = 0; li < static_cast<int>(h.layers.size()); ++li)
                worst_norm = std::max(worst_norm, spectral_norm_estimate(h, li, 50));
        report(4, "conv invertibility",
               at_m5 <= 1e-2 && decreasing && worst_norm <= 1.0f + 1e-3f,
               "mean L2 at m=1..8: " + curve +
                   (decreasing ? ", contracting" : ", NOT contracting") +
                   ", max layer norm " + fmt(worst_norm) +
                   (conv.trace.converged ? "" : " [craft did not converge]"));
    }

    // Criterion 5: learnability gap, linear lock.
    const TrainConfig tc = eval_train();
    const ClassifierState clean_model = train_model(clean_train, Arch::mini_resnet, tc);
    const double clean_acc = evaluate_accuracy(clean_model, clean_test);
    const double lin_locked_acc =
        train_and_eval(lin.locked, clean_test, eval_arch(Arch::mini_resnet), tc);
    {
        const double rec =
            train_and_eval(lin_recovered, clean_test, eval_arch(Arch::mini_resnet), tc);
        report(5, "learnability gap (linear)",
               clean_acc >= 0.90 && lin_locked_acc <= 0.43 && rec >= clean_acc - 0.03,
               "clean " + fmt(clean_acc) + ", locked " + fmt(lin_locked_acc) +
                   ", recovered " + fmt(rec));
    }

    // Criterion 6: learnability gap, conv lock.
    {
        const double locked =
            train_and_eval(conv.locked, clean_test, eval_arch(Arch::mini_resnet), tc);
        const double rec =
            train_and_eval(conv_recovered, clean_test, eval_arch(Arch::mini_resnet), tc);
        report(6, "learnability gap (conv)", locked <= 0.48 && rec >= clean_acc - 0.03,
               "locked " + fmt(locked) + ", recovered " + fmt(rec));
    }

    // Criterion 7: the key transfers across evaluator architectures.
    {
        const double on_cnn =
            train_and_eval(lin.locked, clean_test, eval_arch(Arch::mini_cnn), tc);
        const double on_vgg =
            train_and_eval(lin.locked, clean_test, eval_arch(Arch::mini_vgg), tc);
        report(7, "architecture transfer", on_cnn <= 0.50 && on_vgg <= 0.50,
               "locked accuracy: mini_cnn " + fmt(on_cnn) + ", mini_vgg " + fmt(on_vgg));
    }

    // Criterion 8: locking a single class suppresses only that class.
    {
        CraftConfig cfg = craft_base(LockVariant::linear);
        cfg.scope_classes = {0};
        const CraftResult scoped = craft(clean_train, cfg);
        const auto clean_recall = recalls(clean_model, clean_test);
        const auto locked_recall =
            recalls(train_model(scoped.locked, Arch::mini_resnet, tc), clean_test);
        const auto restored_recall = recalls(
            train_model(apply_unlock(scoped.locked, scoped.key), Arch::mini_resnet, tc),
            clean_test);
        const bool pass = locked_recall[0] <= 0.20 && locked_recall[1] >= 0.80 &&
                          locked_recall[2] >= 0.80 &&
                          restored_recall[0] >= clean_recall[0] - 0.05;
        report(8, "single-class control", pass,
               "locked recalls " + fmt(locked_recall[0]) + "/" + fmt(locked_recall[1]) + "/" +
                   fmt(locked_recall[2]) + ", restored class-0 recall " +
                   fmt(restored_recall[0]) + " vs clean " + fmt(clean_recall[0]));
    }

    // Criterion 9: perturbation percentage sweep.
    {
        const auto pts = sweep(SweepParam::percentage, {0.2f, 0.4f, 0.6f, 0.8f, 1.0f},
                               clean_train, clean_test, craft_base(LockVariant::linear), tc);
        bool monotone = true;
        for (std::size_t i = 1; i < pts.size(); ++i)
            if (pts[i].locked_acc > pts[i - 1].locked_acc + 0.05) monotone = false;
        const double drop = pts.front().locked_acc - pts.back().locked_acc;
        std::string curve;
        for (const auto& p : pts) curve += (curve.empty() ? "" : " ") + fmt(p.locked_acc);
        report(9, "percentage sweep", drop >= 0.35 && monotone,
               "locked accuracy at 20..100%: " + curve);
    }

    // Criterion 10: augmentation and preprocessing defenses.
    {
        std::vector<AugmentPolicy> policies;
        for (const char* name : {"none", "random_noise", "gaussian_blur", "standard",
                                 "cutout", "mixup", "cutmix"})
            policies.push_back(parse_augment(name));
        const auto rows =
            eval_defenses(lin.locked, clean_test, eval_arch(Arch::mini_resnet),
                          eval_train(9), policies);
        bool all_low = true;
        double worst = 0.0, none_row = -1.0;
        std::string detail;
        for (const auto& r : rows) {
            all_low = all_low && r.accuracy <= 0.60;
            worst = std::max(worst, r.accuracy);
            if (r.policy == "none") none_row = r.accuracy;
            detail += (detail.empty() ? "" : " ") + r.policy + "=" + fmt(r.accuracy);
        }
        const bool anchored = std::abs(none_row - lin_locked_acc) <= 0.02;
        report(10, "defense resistance", all_low && anchored, detail);
    }

    // Criterion 11: PGD adversarial training on the locked set.
    {
        PgdConfig pgd;
        pgd.steps = 10;
        pgd.epsilon = kEpsilon;
        const double adv = adversarial_train_and_eval(lin.locked, clean_test,
                                                      eval_arch(Arch::mini_resnet), tc, pgd);
        report(11, "adversarial training", adv > lin_locked_acc && adv <= clean_acc - 0.15,
               "pgd-trained " + fmt(adv) + " vs standard-on-locked " + fmt(lin_locked_acc) +
                   ", clean " + fmt(clean_acc));
    }

    // Criterion 12: a key unlocks only its own dataset.
    {
        CraftConfig cfg = craft_base(LockVariant::linear);
        cfg.seed = 9;
        const CraftResult other = craft(clean_train, cfg);
        const UniquenessReport rep = eval_uniqueness(clean_train, clean_test, lin.key,
                                                     other.key, eval_arch(Arch::mini_resnet),
                                                     tc);
        const double chance = 1.0 / K;
        const bool pass = rep.matched_a >= clean_acc - 0.03 &&
                          rep.matched_b >= clean_acc - 0.03 &&
                          rep.cross_ab <= chance + 0.15 && rep.cross_ba <= chance + 0.15;
        report(12, "key uniqueness", pass,
               "matched " + fmt(rep.matched_a) + "/" + fmt(rep.matched_b) + ", cross " +
                   fmt(rep.cross_ab) + "/" + fmt(rep.cross_ba));
    }

    // Criterion 13: mixed linear/conv key, per-class properties intact.
    {
        CraftConfig cfg = craft_base(LockVariant::mixture);
        cfg.mixture_variants.clear();
        for (int c = 0; c < K; ++c)
            cfg.mixture_variants.push_back(static_cast<std::uint8_t>(
                c % 2 == 1 ? LockVariant::linear : LockVariant::conv));
        const CraftResult mix = craft(clean_train, cfg);
        const float bound = max_abs_diff(mix.locked, clean_train);
        const Dataset rec = apply_unlock(mix.locked, mix.key);
        // Per-class reconstruction: exact for linear classes, fixed-point for
        // conv classes.
        double worst_lin_err = 0.0, conv_l2 = 0.0;
        int conv_count = 0;
        for (int i = 0; i < clean_train.size(); ++i) {
            const int cls = clean_train.labels[static_cast<std::size_t>(i)];
            double err = 0.0;
            float linf = 0.0f;
            for (std::int64_t j = 0; j < clean_train.image_size(); ++j) {
                const double d =
                    static_cast<double>(rec.image(i)[j]) - clean_train.image(i)[j];
                err += d * d;
                linf = std::max(linf, std::abs(static_cast<float>(d)));
            }
            if (cls % 2 == 1) {
                worst_lin_err = std::max(worst_lin_err, static_cast<double>(linf));
            } else {
                conv_l2 += std::sqrt(err);
                ++conv_count;
            }
        }
        conv_l2 /= std::max(conv_count, 1);
        const double locked_acc =
            train_and_eval(mix.locked, clean_test, eval_arch(Arch::mini_resnet), tc);
        const bool pass = bound <= kEpsilon + 1e-6f && worst_lin_err <= 1e-6 &&
                          conv_l2 <= 1e-2 && locked_acc <= 0.50;
        report(13, "mixture key", pass,
               "bound " + fmt(bound) + ", linear-class max err " + fmt(worst_lin_err) +
                   ", conv-class mean L2 " + fmt(conv_l2) + ", locked " + fmt(locked_acc));
    }

    // Criterion 14: one shared transform still hurts learnability. The
    // shared map cannot encode labels, so the degradation comes from the
    // train/test distribution shift and needs a wider budget.
    {
        CraftConfig cfg = craft_base(LockVariant::global_linear);
        cfg.epsilon = 0.2f;
        const CraftResult global = craft(clean_train, cfg);
        const double locked_acc =
            train_and_eval(global.locked, clean_test, eval_arch(Arch::mini_resnet), tc);
        report(14, "global lock", locked_acc <= clean_acc - 0.15,
               "locked " + fmt(locked_acc) + " vs clean " + fmt(clean_acc) +
                   " (epsilon 0.2)");
    }

    // Criterion 15: key codec round trip and linear payload size.
    {
        bool round_trips = true;
        std::string tried;
        LockKey gconv;
        gconv.variant = LockVariant::global_conv;
        gconv.epsilon = kEpsilon;
        gconv.num_classes = K;
        gconv.img = img;
        gconv.scope.class_mask.assign(static_cast<std::size_t>(K), 1);
        gconv.fingerprint = dataset_fingerprint(clean_train);
        ConvKey gc;
        gc.epsilon = kEpsilon;
        gc.img = img;
        gc.h.push_back(ResidualTransform::init(img, 1.0f, 5));
        gconv.conv = std::move(gc);

        CraftConfig glcfg = craft_base(LockVariant::global_linear);
        glcfg.max_rounds = 1;
        const LockKey glin = craft(clean_train, glcfg).key;

        CraftConfig mixcfg = craft_base(LockVariant::mixture);
        mixcfg.max_rounds = 1;
        for (int c = 0; c < K; ++c)
            mixcfg.mixture_variants.push_back(static_cast<std::uint8_t>(
                c % 2 == 1 ? LockVariant::linear : LockVariant::conv));
        const LockKey mix = craft(clean_train, mixcfg).key;

        const std::vector<const LockKey*> all_keys = {&lin.key, &conv.key, &mix, &glin,
                                                      &gconv};
        for (const LockKey* key : all_keys) {
            const auto bytes = encode_key(*key);
            round_trips = round_trips && encode_key(decode_key(bytes)) == bytes;
            tried += (tried.empty() ? "" : " ") + variant_name(key->variant);
        }
        std::size_t table = 0;
        for (const auto& w : lin.key.linear->w) table += w.size();
        for (const auto& b : lin.key.linear->b) table += b.size();
        const bool payload = table == static_cast<std::size_t>(2 * K * numel(img));
        report(15, "key codec", round_trips && payload,
               "bitwise round trip for " + tried + ", linear table " +
                   std::to_string(table) + " = 2*K*d values");
    }

    // Criterion 16: the whole pipeline is bitwise reproducible.
    {
        auto [train2, test2] = generate_synthetic(bench_spec());
        const CraftResult lin2 = craft(train2, craft_base(LockVariant::linear));
        const bool datasets = train2.images == clean_train.images &&
                              test2.images == clean_test.images;
        const bool keys = encode_key(lin2.key) == encode_key(lin.key);
        const bool locked = lin2.locked.images == lin.locked.images;

        auto csv_bytes = [&](const CraftResult& r, const fs::path& p) {
            write_reconstruction_csv(eval_reconstruction(clean_train, r.key, 64, kSeed), p);
            std::ifstream in(p, std::ios::binary);
            std::stringstream ss;
            ss << in.rdbuf();
            return ss.str();
        };
        const fs::path tmp = fs::temp_directory_path();
        const bool reports = csv_bytes(lin, tmp / "ll_accept_a.csv") ==
                             csv_bytes(lin2, tmp / "ll_accept_b.csv");
        fs::remove(tmp / "ll_accept_a.csv");
        fs::remove(tmp / "ll_accept_b.csv");
        report(16, "determinism", datasets && keys && locked && reports,
               std::string("datasets ") + (datasets ? "ok" : "DIFFER") + ", keys " +
                   (keys ? "ok" : "DIFFER") + ", locked data " + (locked ? "ok" : "DIFFER") +
                   ", reports " + (reports ? "ok" : "DIFFER"));
    }

    std::printf("%d/16 criteria passed in %.0fs\n", 16 - g_failures, elapsed_s());
    return g_failures;
}
