#include "learnlock/crafting.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"
#include "learnlock/rng.hpp"

namespace learnlock {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// One trainable class-wise transform: either the affine pair (w, b) or a
// residual conv network h.
struct ClassTransform {
    bool is_linear = true;
    Tensor w, b;
    ResidualTransform h;
};

void transform_raw_batch(const ClassTransform& t, float epsilon, const float* x, float* out,
                         int n, std::int64_t d, bool clip_output) {
    if (t.is_linear) {
        auto wv = t.w.value();
        auto bv = t.b.value();
        for (int s = 0; s < n; ++s) {
            const float* xi = x + s * d;
            float* oi = out + s * d;
            for (std::int64_t j = 0; j < d; ++j) {
                float v = wv[j] * xi[j] + bv[j];
                if (clip_output) v = std::clamp(v, 0.0f, 1.0f);
                oi[j] = v;
            }
        }
    } else {
        std::vector<float> noise(static_cast<std::size_t>(n) * d);
        t.h.forward_raw(x, noise.data(), n);
        for (std::int64_t i = 0; i < n * d; ++i) {
            float v = x[i] + epsilon * std::tanh(noise[static_cast<std::size_t>(i)]);
            if (clip_output) v = std::clamp(v, 0.0f, 1.0f);
            out[i] = v;
        }
    }
}

Tensor transform_graph(const ClassTransform& t, float epsilon, const Tensor& x) {
    if (t.is_linear) return ops::add(ops::mul(x, t.w), t.b);
    return ops::add(x, ops::mul_scalar(ops::tanh(t.h.forward(x)), epsilon));
}

}  // namespace

void CraftConfig::validate() const {
    LL_CHECK(outer_steps >= 1, "craft: outer steps I must be >= 1");
    LL_CHECK(inner_steps >= 1, "craft: inner steps J must be >= 1");
    LL_CHECK(exit_error > 0.0f && exit_error < 1.0f, "craft: exit error must be in (0,1)");
    LL_CHECK(epsilon > 0.0f && epsilon < 1.0f, "craft: epsilon must be in (0,1)");
    LL_CHECK(eta1 > 0.0f && eta2 > 0.0f, "craft: transform learning rates must be positive");
    LL_CHECK(batch_size >= 1, "craft: batch size must be >= 1");
    LL_CHECK(max_rounds >= 0, "craft: max rounds must be >= 0");
    LL_CHECK(percent > 0.0f && percent <= 1.0f, "craft: percent must be in (0,1]");
}

CraftResult craft(const Dataset& clean_train, const CraftConfig& cfg) {
    cfg.validate();
    clean_train.validate();
    LL_CHECK(clean_train.size() > 0, "craft: empty dataset");
    const int K = clean_train.num_classes;
    const int n = clean_train.size();
    const std::int64_t d = clean_train.image_size();
    const Shape img = {clean_train.channels, clean_train.height, clean_train.width};
    const bool global =
        cfg.variant == LockVariant::global_linear || cfg.variant == LockVariant::global_conv;

    // Scope
    KeyScope scope;
    scope.class_mask.assign(static_cast<std::size_t>(K), cfg.scope_classes.empty() ? 1 : 0);
    const auto counts = clean_train.class_counts();
    for (int c : cfg.scope_classes) {
        LL_CHECK(c >= 0 && c < K, "craft: scope class " + std::to_string(c) + " out of range");
        LL_CHECK(counts[static_cast<std::size_t>(c)] > 0,
                 "craft: scope class " + std::to_string(c) + " absent from dataset");
        scope.class_mask[static_cast<std::size_t>(c)] = 1;
    }
    scope.percent = cfg.percent;
    scope.select_seed = cfg.seed;
    const auto mask = selected_mask(scope, clean_train);

    // Per-class transform family
    std::vector<std::uint8_t> family(static_cast<std::size_t>(K), 0);
    if (cfg.variant == LockVariant::mixture) {
        LL_CHECK(static_cast<int>(cfg.mixture_variants.size()) == K,
                 "craft: mixture needs one variant per class");
        family = cfg.mixture_variants;
    } else {
        const bool lin =
            cfg.variant == LockVariant::linear || cfg.variant == LockVariant::global_linear;
        std::fill(family.begin(), family.end(),
                  static_cast<std::uint8_t>(lin ? LockVariant::linear : LockVariant::conv));
    }

    // Transforms: identity-initialized linear pairs, seeded random conv nets
    // (zeroed when no optimization rounds will run).
    const int T = global ? 1 : K;
    std::vector<ClassTransform> transforms(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        const int cls = global ? 0 : t;
        auto& tr = transforms[static_cast<std::size_t>(t)];
        tr.is_linear = family[static_cast<std::size_t>(cls)] ==
                       static_cast<std::uint8_t>(LockVariant::linear);
        if (tr.is_linear) {
            tr.w = Tensor(img, 1.0f, true);
            tr.b = Tensor(img, 0.0f, true);
        } else {
            const bool in_scope = global || scope.covers(cls);
            if (in_scope && cfg.max_rounds > 0) {
                tr.h = ResidualTransform::init(img, cfg.h_width_mult,
                                               derive_seed(cfg.seed, 0x100u + static_cast<std::uint64_t>(t)));
            } else {
                ResidualTransform z;
                z.img = img;
                z.layers = residual_layer_plan(img[0], cfg.h_width_mult);
                for (const auto& l : z.layers) {
                    z.weights.push_back(Tensor({l.out_ch, l.in_ch, l.kernel, l.kernel}, 0.0f, true));
                    z.biases.push_back(Tensor({l.out_ch}, 0.0f, true));
                    z.u.push_back(std::vector<float>(
                        static_cast<std::size_t>(l.in_ch) * img[1] * img[2], 0.0f));
                }
                tr.h = std::move(z);
            }
        }
    }

    // Crafting model
    ClassifierSpec mspec = cfg.model;
    mspec.channels = img[0];
    mspec.height = img[1];
    mspec.width = img[2];
    mspec.num_classes = K;
    ClassifierState theta = init_classifier(mspec, derive_seed(cfg.seed, 1));
    Sgd sgd_theta(cfg.theta_lr, cfg.theta_momentum, LrSchedule::cosine,
                  std::max(1, cfg.max_rounds) * cfg.outer_steps);

    Dataset dp = clean_train;
    auto rebuild_dp = [&]() {
        // Selected samples re-transformed from the clean originals; [0,1] clip.
        for (int c = 0; c < K; ++c) {
            std::vector<int> idx;
            for (int i = 0; i < n; ++i)
                if (mask[static_cast<std::size_t>(i)] &&
                    clean_train.labels[static_cast<std::size_t>(i)] == c)
                    idx.push_back(i);
            if (idx.empty()) continue;
            const auto& tr = transforms[static_cast<std::size_t>(global ? 0 : c)];
            std::vector<float> xin(idx.size() * static_cast<std::size_t>(d));
            for (std::size_t s = 0; s < idx.size(); ++s)
                std::memcpy(xin.data() + s * static_cast<std::size_t>(d),
                            clean_train.image(idx[s]), sizeof(float) * static_cast<std::size_t>(d));
            std::vector<float> xout(xin.size());
            transform_raw_batch(tr, cfg.epsilon, xin.data(), xout.data(),
                                static_cast<int>(idx.size()), d, /*clip=*/true);
            for (std::size_t s = 0; s < idx.size(); ++s)
                std::memcpy(dp.image(idx[s]), xout.data() + s * static_cast<std::size_t>(d),
                            sizeof(float) * static_cast<std::size_t>(d));
        }
    };

    CraftTrace trace;
    const auto t_start = Clock::now();
    Rng rng_theta(derive_seed(cfg.seed, 2));
    Rng rng_psi(derive_seed(cfg.seed, 3));

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::size_t cursor = order.size();  // force shuffle on first use

    std::vector<int> selected;
    for (int i = 0; i < n; ++i)
        if (mask[static_cast<std::size_t>(i)]) selected.push_back(i);

    const int bs = std::min(cfg.batch_size, n);

    for (int round = 1; round <= cfg.max_rounds; ++round) {
        const auto t_round = Clock::now();
        rebuild_dp();

        // --- theta phase: I batches of SGD on the crafting model, each batch
        // passed through the current transform once more.
        double theta_loss_sum = 0.0;
        for (int step = 0; step < cfg.outer_steps; ++step) {
            std::vector<int> batch;
            batch.reserve(static_cast<std::size_t>(bs));
            while (static_cast<int>(batch.size()) < bs) {
                if (cursor >= order.size()) {
                    std::shuffle(order.begin(), order.end(), rng_theta);
                    cursor = 0;
                }
                batch.push_back(order[cursor++]);
            }
            std::vector<float> bx(static_cast<std::size_t>(bs) * d);
            std::vector<int> by(static_cast<std::size_t>(bs));
            for (int i = 0; i < bs; ++i) {
                std::memcpy(bx.data() + static_cast<std::size_t>(i) * d,
                            dp.image(batch[static_cast<std::size_t>(i)]),
                            sizeof(float) * static_cast<std::size_t>(d));
                by[static_cast<std::size_t>(i)] =
                    dp.labels[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])];
            }
            // Re-apply the transform to selected samples (no [0,1] clip here).
            for (int c = 0; c < K; ++c) {
                std::vector<int> loc;
                for (int i = 0; i < bs; ++i)
                    if (by[static_cast<std::size_t>(i)] == c &&
                        mask[static_cast<std::size_t>(batch[static_cast<std::size_t>(i)])])
                        loc.push_back(i);
                if (loc.empty()) continue;
                const auto& tr = transforms[static_cast<std::size_t>(global ? 0 : c)];
                std::vector<float> xin(loc.size() * static_cast<std::size_t>(d));
                for (std::size_t s = 0; s < loc.size(); ++s)
                    std::memcpy(xin.data() + s * static_cast<std::size_t>(d),
                                bx.data() + static_cast<std::size_t>(loc[s]) * d,
                                sizeof(float) * static_cast<std::size_t>(d));
                std::vector<float> xout(xin.size());
                transform_raw_batch(tr, cfg.epsilon, xin.data(), xout.data(),
                                    static_cast<int>(loc.size()), d, /*clip=*/false);
                for (std::size_t s = 0; s < loc.size(); ++s)
                    std::memcpy(bx.data() + static_cast<std::size_t>(loc[s]) * d,
                                xout.data() + s * static_cast<std::size_t>(d),
                                sizeof(float) * static_cast<std::size_t>(d));
            }
            Tape tape;
            Tensor x = Tensor::from({bs, img[0], img[1], img[2]}, std::move(bx));
            Tensor loss = ops::cross_entropy_with_logits(predict(theta, x), by);
            if (!std::isfinite(loss.item())) throw NumericError("craft: NaN loss in theta phase");
            tape.backward(loss);
            sgd_theta.step(theta.params);
            theta_loss_sum += loss.item();
        }

        // --- psi phase: J passes over the selected samples, class-grouped.
        double psi_loss_sum = 0.0;
        int psi_batches = 0;
        for (int pass = 0; pass < cfg.inner_steps; ++pass) {
            std::shuffle(selected.begin(), selected.end(), rng_psi);
            for (std::size_t lo = 0; lo < selected.size(); lo += static_cast<std::size_t>(bs)) {
                const std::size_t hi = std::min(selected.size(), lo + static_cast<std::size_t>(bs));
                std::map<int, std::vector<int>> groups;
                for (std::size_t i = lo; i < hi; ++i)
                    groups[dp.labels[static_cast<std::size_t>(selected[i])]].push_back(selected[i]);
                for (auto& [cls, idx] : groups) {
                    auto& tr = transforms[static_cast<std::size_t>(global ? 0 : cls)];
                    const int m = static_cast<int>(idx.size());
                    std::vector<float> bx(static_cast<std::size_t>(m) * d);
                    for (int i = 0; i < m; ++i)
                        std::memcpy(bx.data() + static_cast<std::size_t>(i) * d,
                                    dp.image(idx[static_cast<std::size_t>(i)]),
                                    sizeof(float) * static_cast<std::size_t>(d));
                    std::vector<int> by(static_cast<std::size_t>(m), cls);

                    Tape tape;
                    Tensor x = Tensor::from({m, img[0], img[1], img[2]}, std::move(bx));
                    Tensor x2 = transform_graph(tr, cfg.epsilon, x);
                    Tensor loss = ops::cross_entropy_with_logits(predict(theta, x2), by);
                    if (!std::isfinite(loss.item()))
                        throw NumericError("craft: NaN loss in psi phase");
                    tape.backward(loss);
                    psi_loss_sum += loss.item();
                    ++psi_batches;

                    if (tr.is_linear) {
                        auto wv = tr.w.value();
                        auto gw = tr.w.grad();
                        const float wlo = 1.0f - cfg.epsilon / 2.0f, whi = 1.0f + cfg.epsilon / 2.0f;
                        for (std::int64_t j = 0; j < d; ++j)
                            wv[j] = std::clamp(wv[j] - cfg.eta1 * gw[j], wlo, whi);
                        auto bv = tr.b.value();
                        auto gb = tr.b.grad();
                        const float bhi = cfg.epsilon / 2.0f;
                        for (std::int64_t j = 0; j < d; ++j)
                            bv[j] = std::clamp(bv[j] - cfg.eta2 * gb[j], -bhi, bhi);
                        tr.w.zero_grad();
                        tr.b.zero_grad();
                    } else {
                        for (std::size_t li = 0; li < tr.h.layers.size(); ++li) {
                            auto wv = tr.h.weights[li].value();
                            auto gw = tr.h.weights[li].grad();
                            for (std::size_t j = 0; j < wv.size(); ++j)
                                wv[j] -= cfg.eta1 * gw[j];
                            auto bv = tr.h.biases[li].value();
                            auto gb = tr.h.biases[li].grad();
                            for (std::size_t j = 0; j < bv.size(); ++j)
                                bv[j] -= cfg.eta2 * gb[j];
                            tr.h.weights[li].zero_grad();
                            tr.h.biases[li].zero_grad();
                            spectral_normalize(tr.h, static_cast<int>(li), 1);
                        }
                    }
                    for (auto& p : theta.params) p.zero_grad();
                }
            }
        }

        // Exit error measured on the view the crafting model is trained on:
        // selected samples carry the transform applied once more.
        Dataset dp2 = dp;
        for (int c = 0; c < K; ++c) {
            std::vector<int> idx;
            for (int i = 0; i < n; ++i)
                if (mask[static_cast<std::size_t>(i)] &&
                    dp.labels[static_cast<std::size_t>(i)] == c)
                    idx.push_back(i);
            if (idx.empty()) continue;
            const auto& tr = transforms[static_cast<std::size_t>(global ? 0 : c)];
            std::vector<float> xin(idx.size() * static_cast<std::size_t>(d));
            for (std::size_t s = 0; s < idx.size(); ++s)
                std::memcpy(xin.data() + s * static_cast<std::size_t>(d), dp.image(idx[s]),
                            sizeof(float) * static_cast<std::size_t>(d));
            std::vector<float> xout(xin.size());
            transform_raw_batch(tr, cfg.epsilon, xin.data(), xout.data(),
                                static_cast<int>(idx.size()), d, /*clip=*/false);
            for (std::size_t s = 0; s < idx.size(); ++s)
                std::memcpy(dp2.image(idx[s]), xout.data() + s * static_cast<std::size_t>(d),
                            sizeof(float) * static_cast<std::size_t>(d));
        }
        const double error = 1.0 - evaluate_accuracy(theta, dp2);
        RoundStats stats;
        stats.round = round;
        stats.train_error = error;
        stats.theta_loss = theta_loss_sum / cfg.outer_steps;
        stats.psi_loss = psi_batches ? psi_loss_sum / psi_batches : 0.0;
        stats.seconds = seconds_since(t_round);
        trace.rounds.push_back(stats);
        if (error <= cfg.exit_error) {
            trace.converged = true;
            break;
        }
    }

    // Finalize: tighten the spectral estimates, then rebuild D_p so the
    // locked dataset is exactly apply_lock(clean, key).
    for (auto& tr : transforms) {
        if (!tr.is_linear) {
            for (std::size_t li = 0; li < tr.h.layers.size(); ++li)
                spectral_normalize(tr.h, static_cast<int>(li), 50);
        }
    }
    rebuild_dp();
    trace.total_seconds = seconds_since(t_start);

    LockKey key;
    key.variant = cfg.variant;
    key.epsilon = cfg.epsilon;
    key.num_classes = K;
    key.img = img;
    key.scope = scope;
    key.fingerprint = dataset_fingerprint(clean_train);

    auto linear_entry = [&](const ClassTransform& tr) {
        return std::pair<std::vector<float>, std::vector<float>>{
            {tr.w.value().begin(), tr.w.value().end()},
            {tr.b.value().begin(), tr.b.value().end()}};
    };

    const bool wants_linear = cfg.variant == LockVariant::linear ||
                              cfg.variant == LockVariant::global_linear ||
                              cfg.variant == LockVariant::mixture;
    const bool wants_conv = cfg.variant == LockVariant::conv ||
                            cfg.variant == LockVariant::global_conv ||
                            cfg.variant == LockVariant::mixture;
    if (wants_linear) {
        LinearKey lk;
        lk.epsilon = cfg.epsilon;
        lk.img = img;
        for (int t = 0; t < T; ++t) {
            const auto& tr = transforms[static_cast<std::size_t>(t)];
            if (tr.is_linear) {
                auto [w, b] = linear_entry(tr);
                lk.w.push_back(std::move(w));
                lk.b.push_back(std::move(b));
            } else {
                lk.w.push_back(std::vector<float>(static_cast<std::size_t>(d), 1.0f));
                lk.b.push_back(std::vector<float>(static_cast<std::size_t>(d), 0.0f));
            }
        }
        key.linear = std::move(lk);
    }
    if (wants_conv) {
        ConvKey ck;
        ck.epsilon = cfg.epsilon;
        ck.img = img;
        ck.fixed_point_iters = cfg.fixed_point_iters;
        for (int t = 0; t < T; ++t) {
            auto& tr = transforms[static_cast<std::size_t>(t)];
            if (!tr.is_linear) {
                ck.h.push_back(std::move(tr.h));
            } else {
                ResidualTransform z;
                z.img = img;
                z.layers = residual_layer_plan(img[0], cfg.h_width_mult);
                for (const auto& l : z.layers) {
                    z.weights.push_back(Tensor({l.out_ch, l.in_ch, l.kernel, l.kernel}, 0.0f, true));
                    z.biases.push_back(Tensor({l.out_ch}, 0.0f, true));
                    z.u.push_back(std::vector<float>(
                        static_cast<std::size_t>(l.in_ch) * img[1] * img[2], 0.0f));
                }
                ck.h.push_back(std::move(z));
            }
        }
        key.conv = std::move(ck);
    }
    if (cfg.variant == LockVariant::mixture) key.class_variant = family;
    key.validate();

    return {std::move(key), std::move(dp), std::move(trace)};
}

void write_trace_jsonl(const CraftTrace& trace, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot create trace file " + path.string());
    for (const auto& r : trace.rounds) {
        nlohmann::json j{{"round", r.round},
                         {"train_error", r.train_error},
                         {"theta_loss_mean", r.theta_loss},
                         {"psi_loss_mean", r.psi_loss},
                         {"seconds", r.seconds}};
        out << j.dump() << "\n";
    }
    nlohmann::json tail{{"converged", trace.converged}, {"total_seconds", trace.total_seconds}};
    out << tail.dump() << "\n";
}

}  // namespace learnlock
