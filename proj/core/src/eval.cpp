#include "learnlock/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "learnlock/rng.hpp"

namespace learnlock {

namespace {

ClassifierSpec fitted_spec(ClassifierSpec spec, const Dataset& ds) {
    spec.channels = ds.channels;
    spec.height = ds.height;
    spec.width = ds.width;
    spec.num_classes = ds.num_classes;
    return spec;
}

void write_csv_header(std::ofstream& out, const std::filesystem::path& path) {
    if (!out) throw IoError("cannot create csv file " + path.string());
}

}  // namespace

double train_and_eval(const Dataset& train, const Dataset& test, const ClassifierSpec& spec,
                      const TrainConfig& cfg, History* history) {
    ClassifierState model = init_classifier(fitted_spec(spec, train), derive_seed(cfg.seed, 0xa11ce));
    History h = train_classifier(model, train, history ? &test : nullptr, cfg);
    if (history) *history = std::move(h);
    return evaluate_accuracy(model, test);
}

std::vector<TripleRow> eval_triple(const Dataset& clean_train, const Dataset& clean_test,
                                   const LockKey& key, const std::vector<ClassifierSpec>& specs,
                                   const TrainConfig& cfg) {
    const Dataset locked = apply_lock(clean_train, key);
    const Dataset recovered = apply_unlock(locked, key);
    std::vector<TripleRow> rows;
    for (const auto& spec : specs) {
        TripleRow row;
        row.arch = arch_name(spec.arch);
        row.clean_acc = train_and_eval(clean_train, clean_test, spec, cfg);
        row.locked_acc = train_and_eval(locked, clean_test, spec, cfg);
        row.unlocked_acc = train_and_eval(recovered, clean_test, spec, cfg);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<DefenseRow> eval_defenses(const Dataset& locked_train, const Dataset& clean_test,
                                      const ClassifierSpec& spec, const TrainConfig& cfg,
                                      const std::vector<AugmentPolicy>& policies) {
    std::vector<DefenseRow> rows;
    for (const auto& policy : policies) {
        TrainConfig run = cfg;
        run.augment = policy;
        rows.push_back({policy.name(), train_and_eval(locked_train, clean_test, spec, run)});
    }
    return rows;
}

double adversarial_train_and_eval(const Dataset& train, const Dataset& test,
                                  const ClassifierSpec& spec, const TrainConfig& cfg,
                                  const PgdConfig& pgd) {
    LL_CHECK(pgd.steps >= 0, "pgd: steps must be >= 0");
    LL_CHECK(pgd.epsilon >= 0.0f, "pgd: epsilon must be >= 0");
    ClassifierState model = init_classifier(fitted_spec(spec, train), derive_seed(cfg.seed, 0xa11ce));

    const int n = train.size();
    const std::int64_t d = train.image_size();
    const int bs = std::min(cfg.batch_size, n);
    const int batches_per_epoch = (n + bs - 1) / bs;
    Sgd sgd(cfg.lr, cfg.momentum, cfg.schedule,
            cfg.schedule == LrSchedule::cosine ? cfg.epochs * batches_per_epoch : 0);
    Rng rng(derive_seed(cfg.seed, 0xeb0c));
    Rng attack_rng(derive_seed(cfg.seed, 0xad7));
    const float step = pgd.resolved_step();

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (int b = 0; b < batches_per_epoch; ++b) {
            const int lo = b * bs, hi = std::min(n, lo + bs);
            const int m = hi - lo;
            std::vector<float> orig(static_cast<std::size_t>(m) * d);
            std::vector<int> by(static_cast<std::size_t>(m));
            for (int i = 0; i < m; ++i) {
                const int src = order[static_cast<std::size_t>(lo + i)];
                std::memcpy(orig.data() + static_cast<std::int64_t>(i) * d, train.image(src),
                            sizeof(float) * static_cast<std::size_t>(d));
                by[static_cast<std::size_t>(i)] = train.labels[static_cast<std::size_t>(src)];
            }

            std::vector<float> adv = orig;
            if (pgd.steps > 0) {
                if (pgd.random_start)
                    for (auto& v : adv)
                        v = std::clamp(v + uniform(attack_rng, -pgd.epsilon, pgd.epsilon), 0.0f, 1.0f);
                for (int s = 0; s < pgd.steps; ++s) {
                    Tape tape;
                    Tensor x = Tensor::from({m, train.channels, train.height, train.width}, adv,
                                            /*requires_grad=*/true);
                    Tensor loss = ops::cross_entropy_with_logits(predict(model, x), by);
                    if (!std::isfinite(loss.item()))
                        throw NumericError("adversarial training: non-finite attack loss");
                    tape.backward(loss);
                    auto g = x.grad();
                    for (std::size_t j = 0; j < adv.size(); ++j) {
                        float v = adv[j] + step * (g[j] > 0.0f ? 1.0f : (g[j] < 0.0f ? -1.0f : 0.0f));
                        v = std::clamp(v, orig[j] - pgd.epsilon, orig[j] + pgd.epsilon);
                        adv[j] = std::clamp(v, 0.0f, 1.0f);
                    }
                    for (auto& p : model.params) p.zero_grad();
                }
            }

            Tape tape;
            Tensor x = Tensor::from({m, train.channels, train.height, train.width}, std::move(adv));
            Tensor loss = ops::cross_entropy_with_logits(predict(model, x), by);
            if (!std::isfinite(loss.item()))
                throw NumericError("adversarial training: non-finite training loss");
            tape.backward(loss);
            sgd.step(model.params);
        }
    }
    return evaluate_accuracy(model, test);
}

UniquenessReport eval_uniqueness(const Dataset& clean_train, const Dataset& clean_test,
                                 const LockKey& key_a, const LockKey& key_b,
                                 const ClassifierSpec& spec, const TrainConfig& cfg) {
    const Dataset locked_a = apply_lock(clean_train, key_a);
    const Dataset locked_b = apply_lock(clean_train, key_b);
    UniquenessReport r;
    r.matched_a = train_and_eval(apply_unlock(locked_a, key_a), clean_test, spec, cfg);
    r.matched_b = train_and_eval(apply_unlock(locked_b, key_b), clean_test, spec, cfg);
    // Cross cells misuse keys on purpose; force past the fingerprint check.
    r.cross_ab = train_and_eval(apply_unlock(locked_b, key_a, /*force=*/true), clean_test, spec, cfg);
    r.cross_ba = train_and_eval(apply_unlock(locked_a, key_b, /*force=*/true), clean_test, spec, cfg);
    return r;
}

ReconStats eval_reconstruction(const Dataset& clean, const LockKey& key, int samples,
                               std::uint64_t seed) {
    LL_CHECK(samples > 0, "reconstruction: sample count must be positive");
    const Dataset locked = apply_lock(clean, key);
    const Dataset recovered = apply_unlock(locked, key);
    const int n = clean.size();
    const std::int64_t d = clean.image_size();
    samples = std::min(samples, n);

    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    Rng rng(derive_seed(seed, 0x5a3));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(samples));

    auto l2 = [&](const Dataset& a, int i) {
        double s = 0.0;
        const float* pa = a.image(i);
        const float* pc = clean.image(i);
        for (std::int64_t j = 0; j < d; ++j) {
            const double diff = static_cast<double>(pa[j]) - pc[j];
            s += diff * diff;
        }
        return std::sqrt(s);
    };
    auto stats = [&](const Dataset& ds, double& mean, double& stdev) {
        double s = 0.0, s2 = 0.0;
        for (int i : idx) {
            const double v = l2(ds, i);
            s += v;
            s2 += v * v;
        }
        mean = s / samples;
        stdev = std::sqrt(std::max(0.0, s2 / samples - mean * mean));
    };
    ReconStats r;
    r.samples = samples;
    stats(locked, r.locked_mean, r.locked_std);
    stats(recovered, r.recovered_mean, r.recovered_std);
    return r;
}

std::vector<SweepPoint> sweep(SweepParam param, const std::vector<float>& values,
                              const Dataset& clean_train, const Dataset& clean_test,
                              CraftConfig craft_cfg, const TrainConfig& train_cfg) {
    LL_CHECK(!values.empty(), "sweep: values must be nonempty");
    LL_CHECK(std::is_sorted(values.begin(), values.end()), "sweep: values must be sorted");
    std::vector<SweepPoint> points;
    for (float v : values) {
        SweepPoint pt;
        pt.value = v;
        if (param == SweepParam::percentage && v <= 0.0f) {
            // Nothing perturbed: the locked set is the clean set.
            pt.locked_acc =
                train_and_eval(clean_train, clean_test, craft_cfg.model, train_cfg, &pt.history);
            points.push_back(std::move(pt));
            continue;
        }
        CraftConfig cc = craft_cfg;
        if (param == SweepParam::epsilon)
            cc.epsilon = v;
        else
            cc.percent = v;
        CraftResult res = craft(clean_train, cc);
        pt.locked_acc =
            train_and_eval(res.locked, clean_test, craft_cfg.model, train_cfg, &pt.history);
        points.push_back(std::move(pt));
    }
    return points;
}

void write_triple_csv(const std::vector<TripleRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    write_csv_header(out, path);
    out << "arch,clean_acc,locked_acc,unlocked_acc\n";
    for (const auto& r : rows)
        out << r.arch << ',' << r.clean_acc << ',' << r.locked_acc << ',' << r.unlocked_acc << '\n';
}

void write_defense_csv(const std::vector<DefenseRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    write_csv_header(out, path);
    out << "policy,accuracy\n";
    for (const auto& r : rows) out << r.policy << ',' << r.accuracy << '\n';
}

void write_adv_csv(const AdvTrainResult& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    write_csv_header(out, path);
    out << "setting,accuracy\n";
    out << "pgd_on_locked," << r.adversarial_acc << '\n';
    out << "standard_on_locked," << r.standard_acc << '\n';
    out << "standard_on_clean," << r.clean_acc << '\n';
}

void write_uniqueness_csv(const UniquenessReport& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    write_csv_header(out, path);
    out << "unlock_key,data_key,accuracy\n";
    out << "a,a," << r.matched_a << '\n';
    out << "b,b," << r.matched_b << '\n';
    out << "a,b," << r.cross_ab << '\n';
    out << "b,a," << r.cross_ba << '\n';
}

void write_reconstruction_csv(const ReconStats& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    write_csv_header(out, path);
    out << "pair,samples,l2_mean,l2_std\n";
    out << "locked_vs_clean," << r.samples << ',' << r.locked_mean << ',' << r.locked_std << '\n';
    out << "recovered_vs_clean," << r.samples << ',' << r.recovered_mean << ',' << r.recovered_std
        << '\n';
}

void write_sweep_csv(const std::vector<SweepPoint>& pts, const std::filesystem::path& path) {
    std::ofstream out(path);
    write_csv_header(out, path);
    out << "value,locked_acc,epoch_test_accs\n";
    for (const auto& p : pts) {
        out << p.value << ',' << p.locked_acc << ',';
        for (std::size_t e = 0; e < p.history.size(); ++e) {
            if (e) out << ';';
            out << p.history[e].test_acc;
        }
        out << '\n';
    }
}

}  // namespace learnlock
