// learnlock: craft, apply, and evaluate invertible class-wise dataset locks.
//
// Exit codes: 0 ok, 1 internal error, 2 configuration error,
// 3 crafting did not converge (artifacts still written),
// 4 key/dataset fingerprint mismatch (use --force to override).

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "learnlock/crafting.hpp"
#include "learnlock/eval.hpp"
#include "learnlock/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace learnlock;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNoConverge = 3;
constexpr int kExitFingerprint = 4;

std::uint64_t env_seed() {
    if (const char* s = std::getenv("LEARNLOCK_SEED")) {
        try {
            return std::stoull(s);
        } catch (...) {
            throw Error("LEARNLOCK_SEED is not an integer: " + std::string(s));
        }
    }
    return 0;
}

struct OutDirs {
    fs::path root, key, data, runs, reports;
};

OutDirs make_out(const std::string& out) {
    OutDirs d;
    d.root = out;
    d.key = d.root / "key";
    d.data = d.root / "data";
    d.runs = d.root / "runs";
    d.reports = d.root / "reports";
    for (const auto& p : {d.root, d.key, d.data, d.runs, d.reports}) fs::create_directories(p);
    return d;
}

void write_run_config(const fs::path& path, const json& cfg) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write run config " + path.string());
    out << cfg.dump(2) << "\n";
}

LockVariant parse_variant(const std::string& name, std::vector<std::uint8_t>* mixture_out) {
    if (name == "linear") return LockVariant::linear;
    if (name == "conv") return LockVariant::conv;
    if (name == "global-linear") return LockVariant::global_linear;
    if (name == "global-conv") return LockVariant::global_conv;
    if (name == "mixture" || name.rfind("mixture:", 0) == 0) {
        if (mixture_out && name.size() > 8) {
            std::stringstream ss(name.substr(8));
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                if (tok == "l" || tok == "linear")
                    mixture_out->push_back(static_cast<std::uint8_t>(LockVariant::linear));
                else if (tok == "c" || tok == "conv")
                    mixture_out->push_back(static_cast<std::uint8_t>(LockVariant::conv));
                else
                    throw Error("mixture spec entries must be l/linear or c/conv, got: " + tok);
            }
        }
        return LockVariant::mixture;
    }
    throw Error("unknown transform '" + name +
                "' (expected linear, conv, global-linear, global-conv, mixture[:l,c,...])");
}

// Odd classes linear, even classes conv, when no explicit mixture spec given.
std::vector<std::uint8_t> default_mixture(int num_classes) {
    std::vector<std::uint8_t> v;
    for (int c = 0; c < num_classes; ++c)
        v.push_back(static_cast<std::uint8_t>(c % 2 == 1 ? LockVariant::linear
                                                         : LockVariant::conv));
    return v;
}

json history_json(const History& h) {
    json arr = json::array();
    for (const auto& e : h)
        arr.push_back({{"train_loss", e.train_loss},
                       {"train_acc", e.train_acc},
                       {"test_acc", e.test_acc}});
    return arr;
}

// ---------------------------------------------------------------- commands

struct CraftArgs {
    std::string dataset, out = "out", transform = "linear", arch = "mini_resnet";
    float epsilon = 8.0f / 255.0f, lambda = 0.1f, eta1 = 0.1f, eta2 = 0.1f, percent = 1.0f;
    float width_mult = 1.0f;
    int I = 20, J = 1, batch_size = 64, max_rounds = 30, fp_iters = 5;
    std::vector<int> classes;
    std::string mixture_spec;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int cmd_craft(const CraftArgs& a) {
    const auto dirs = make_out(a.out);
    const Dataset train = load_dataset(a.dataset);

    CraftConfig cfg;
    std::vector<std::uint8_t> mixture;
    cfg.variant = parse_variant(a.transform, &mixture);
    if (cfg.variant == LockVariant::mixture)
        cfg.mixture_variants = mixture.empty() ? default_mixture(train.num_classes) : mixture;
    cfg.epsilon = a.epsilon;
    cfg.outer_steps = a.I;
    cfg.inner_steps = a.J;
    cfg.exit_error = a.lambda;
    cfg.eta1 = a.eta1;
    cfg.eta2 = a.eta2;
    cfg.batch_size = a.batch_size;
    cfg.max_rounds = a.max_rounds;
    cfg.seed = a.seed_set ? a.seed : env_seed();
    cfg.scope_classes = a.classes;
    cfg.percent = a.percent;
    cfg.model.arch = parse_arch(a.arch);
    cfg.h_width_mult = a.width_mult;
    cfg.fixed_point_iters = a.fp_iters;

    write_run_config(dirs.runs / "craft.config.json",
                     {{"subcommand", "craft"},
                      {"dataset", a.dataset},
                      {"transform", a.transform},
                      {"epsilon", cfg.epsilon},
                      {"I", cfg.outer_steps},
                      {"J", cfg.inner_steps},
                      {"lambda", cfg.exit_error},
                      {"eta1", cfg.eta1},
                      {"eta2", cfg.eta2},
                      {"batch_size", cfg.batch_size},
                      {"max_rounds", cfg.max_rounds},
                      {"classes", cfg.scope_classes},
                      {"percent", cfg.percent},
                      {"arch", a.arch},
                      {"width_mult", cfg.h_width_mult},
                      {"fixed_point_iters", cfg.fixed_point_iters},
                      {"seed", cfg.seed}});

    if (cfg.max_rounds == 0)
        std::cerr << "warning: --max-rounds 0, emitting an identity key\n";

    CraftResult res = craft(train, cfg);
    save_key(res.key, dirs.key / "key.llky");
    save_dataset(res.locked, dirs.data / "locked.llds", DatasetFormat::raw);
    write_trace_jsonl(res.trace, dirs.runs / "craft_trace.jsonl");

    if (res.trace.converged) {
        const auto& last = res.trace.rounds.back();
        std::cout << "converged after " << last.round << " rounds, train error "
                  << last.train_error << " <= lambda " << cfg.exit_error << " ("
                  << res.trace.total_seconds << "s)\n";
        return 0;
    }
    std::cout << "did not reach train error " << cfg.exit_error << " in " << cfg.max_rounds
              << " rounds";
    if (!res.trace.rounds.empty())
        std::cout << " (last error " << res.trace.rounds.back().train_error << ")";
    std::cout << "; artifacts written\n";
    return kExitNoConverge;
}

struct ApplyArgs {
    std::string dataset, key, output, out = "out", format = "raw";
    bool force = false;
};

int cmd_apply(const ApplyArgs& a, bool lock) {
    const auto dirs = make_out(a.out);
    const Dataset ds = load_dataset(a.dataset);
    const LockKey key = load_key(a.key);
    const DatasetFormat fmt = [&] {
        if (a.format == "raw") return DatasetFormat::raw;
        if (a.format == "png") return DatasetFormat::png_tree;
        throw Error("unknown format '" + a.format + "' (expected raw or png)");
    }();
    fs::path out_path = a.output.empty()
                            ? dirs.data / (lock ? (a.format == "png" ? "locked_png" : "locked.llds")
                                                : (a.format == "png" ? "unlocked_png"
                                                                     : "unlocked.llds"))
                            : fs::path(a.output);
    write_run_config(dirs.runs / (lock ? "lock.config.json" : "unlock.config.json"),
                     {{"subcommand", lock ? "lock" : "unlock"},
                      {"dataset", a.dataset},
                      {"key", a.key},
                      {"output", out_path.string()},
                      {"format", a.format},
                      {"force", a.force}});
    Dataset result = lock ? apply_lock(ds, key, a.force) : apply_unlock(ds, key, a.force);
    save_dataset(result, out_path, fmt);
    std::cout << (lock ? "locked" : "unlocked") << " dataset written to " << out_path << "\n";
    return 0;
}

struct TrainArgs {
    std::string dataset, test, out = "out", arch = "mini_resnet", augment = "none";
    int epochs = 8, batch_size = 64;
    float lr = 0.05f, momentum = 0.9f;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int cmd_train(const TrainArgs& a) {
    const auto dirs = make_out(a.out);
    const Dataset train = load_dataset(a.dataset);
    Dataset test;
    if (!a.test.empty()) test = load_dataset(a.test);

    TrainConfig cfg;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch_size;
    cfg.lr = a.lr;
    cfg.momentum = a.momentum;
    cfg.seed = a.seed_set ? a.seed : env_seed();
    cfg.augment = parse_augment(a.augment);

    write_run_config(dirs.runs / "train.config.json",
                     {{"subcommand", "train"},
                      {"dataset", a.dataset},
                      {"test", a.test},
                      {"arch", a.arch},
                      {"augment", a.augment},
                      {"epochs", cfg.epochs},
                      {"batch_size", cfg.batch_size},
                      {"lr", cfg.lr},
                      {"momentum", cfg.momentum},
                      {"seed", cfg.seed}});

    ClassifierSpec spec;
    spec.arch = parse_arch(a.arch);
    spec.channels = train.channels;
    spec.height = train.height;
    spec.width = train.width;
    spec.num_classes = train.num_classes;
    ClassifierState model = init_classifier(spec, derive_seed(cfg.seed, 0xa11ce));
    History hist = train_classifier(model, train, a.test.empty() ? nullptr : &test, cfg);
    save_checkpoint(model, dirs.runs / "model.llck");

    json j{{"arch", a.arch}, {"epochs", history_json(hist)}};
    if (!a.test.empty()) {
        const double acc = evaluate_accuracy(model, test);
        j["test_acc"] = acc;
        std::cout << "test accuracy " << acc << "\n";
    }
    std::ofstream(dirs.runs / "train_history.json") << j.dump(2) << "\n";
    std::cout << "checkpoint written to " << (dirs.runs / "model.llck") << "\n";
    return 0;
}

struct EvalArgs {
    std::string experiment, dataset, test, key, key2, out = "out", arch = "mini_resnet";
    std::string transform = "linear";
    int epochs = 8, batch_size = 64, samples = 500, pgd_steps = 10;
    float lr = 0.05f, eps_at = 0.0f;
    std::vector<float> values;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int cmd_eval(const EvalArgs& a) {
    static const std::vector<std::string> kExperiments = {
        "triple",         "defenses",      "advtrain",        "uniqueness",
        "reconstruction", "sweep-epsilon", "sweep-percentage"};
    if (std::find(kExperiments.begin(), kExperiments.end(), a.experiment) == kExperiments.end()) {
        std::cerr << "unknown experiment '" << a.experiment << "'; valid names:";
        for (const auto& e : kExperiments) std::cerr << " " << e;
        std::cerr << "\n";
        return kExitConfig;
    }
    const auto dirs = make_out(a.out);
    const std::uint64_t seed = a.seed_set ? a.seed : env_seed();
    const std::string stem = a.experiment + "_s" + std::to_string(seed);

    const Dataset train = load_dataset(a.dataset);
    const Dataset test = load_dataset(a.test);

    TrainConfig tcfg;
    tcfg.epochs = a.epochs;
    tcfg.batch_size = a.batch_size;
    tcfg.lr = a.lr;
    tcfg.seed = seed;

    ClassifierSpec spec;
    spec.arch = parse_arch(a.arch);

    write_run_config(dirs.runs / (stem + ".config.json"),
                     {{"subcommand", "eval"},
                      {"experiment", a.experiment},
                      {"dataset", a.dataset},
                      {"test", a.test},
                      {"key", a.key},
                      {"key2", a.key2},
                      {"arch", a.arch},
                      {"epochs", a.epochs},
                      {"batch_size", a.batch_size},
                      {"lr", a.lr},
                      {"samples", a.samples},
                      {"pgd_steps", a.pgd_steps},
                      {"eps_at", a.eps_at},
                      {"values", a.values},
                      {"transform", a.transform},
                      {"seed", seed}});

    auto need_key = [&]() {
        if (a.key.empty()) throw Error("--key is required for experiment " + a.experiment);
        return load_key(a.key);
    };

    json report{{"experiment", a.experiment}, {"seed", seed}};
    if (a.experiment == "triple") {
        const LockKey key = need_key();
        std::vector<ClassifierSpec> specs;
        for (Arch arch : {Arch::mini_cnn, Arch::mini_resnet, Arch::mini_vgg}) {
            ClassifierSpec s = spec;
            s.arch = arch;
            specs.push_back(s);
        }
        auto rows = eval_triple(train, test, key, specs, tcfg);
        json jrows = json::array();
        for (const auto& r : rows)
            jrows.push_back({{"arch", r.arch},
                             {"clean_acc", r.clean_acc},
                             {"locked_acc", r.locked_acc},
                             {"unlocked_acc", r.unlocked_acc}});
        report["rows"] = jrows;
        write_triple_csv(rows, dirs.reports / (stem + ".csv"));
    } else if (a.experiment == "defenses") {
        const LockKey key = need_key();
        const Dataset locked = apply_lock(train, key);
        std::vector<AugmentPolicy> policies;
        for (const char* name : {"none", "random_noise", "gaussian_blur", "standard", "cutout",
                                 "mixup", "cutmix"}) {
            AugmentPolicy p = parse_augment(name);
            if (p.kind == AugmentKind::random_noise) p.noise_budget = key.epsilon;
            policies.push_back(p);
        }
        auto rows = eval_defenses(locked, test, spec, tcfg, policies);
        json jrows = json::array();
        for (const auto& r : rows) jrows.push_back({{"policy", r.policy}, {"accuracy", r.accuracy}});
        report["rows"] = jrows;
        write_defense_csv(rows, dirs.reports / (stem + ".csv"));
    } else if (a.experiment == "advtrain") {
        const LockKey key = need_key();
        const Dataset locked = apply_lock(train, key);
        PgdConfig pgd;
        pgd.steps = a.pgd_steps;
        pgd.epsilon = a.eps_at > 0.0f ? a.eps_at : key.epsilon;
        AdvTrainResult r;
        r.adversarial_acc = adversarial_train_and_eval(locked, test, spec, tcfg, pgd);
        r.standard_acc = train_and_eval(locked, test, spec, tcfg);
        r.clean_acc = train_and_eval(train, test, spec, tcfg);
        report["pgd_on_locked"] = r.adversarial_acc;
        report["standard_on_locked"] = r.standard_acc;
        report["standard_on_clean"] = r.clean_acc;
        write_adv_csv(r, dirs.reports / (stem + ".csv"));
    } else if (a.experiment == "uniqueness") {
        const LockKey key = need_key();
        if (a.key2.empty()) throw Error("--key2 is required for the uniqueness experiment");
        const LockKey key_b = load_key(a.key2);
        auto r = eval_uniqueness(train, test, key, key_b, spec, tcfg);
        report["matched_a"] = r.matched_a;
        report["matched_b"] = r.matched_b;
        report["cross_ab"] = r.cross_ab;
        report["cross_ba"] = r.cross_ba;
        write_uniqueness_csv(r, dirs.reports / (stem + ".csv"));
    } else if (a.experiment == "reconstruction") {
        const LockKey key = need_key();
        auto r = eval_reconstruction(train, key, a.samples, seed);
        report["samples"] = r.samples;
        report["locked_l2_mean"] = r.locked_mean;
        report["locked_l2_std"] = r.locked_std;
        report["recovered_l2_mean"] = r.recovered_mean;
        report["recovered_l2_std"] = r.recovered_std;
        write_reconstruction_csv(r, dirs.reports / (stem + ".csv"));
    } else {  // sweeps
        if (a.values.empty()) throw Error("--values is required for sweep experiments");
        CraftConfig cc;
        std::vector<std::uint8_t> mixture;
        cc.variant = parse_variant(a.transform, &mixture);
        if (cc.variant == LockVariant::mixture)
            cc.mixture_variants = mixture.empty() ? default_mixture(train.num_classes) : mixture;
        if (cc.variant == LockVariant::conv || cc.variant == LockVariant::global_conv) {
            cc.outer_steps = 25;
            cc.inner_steps = 3;
            cc.exit_error = 0.2f;
        }
        cc.seed = seed;
        cc.model = spec;
        const auto param = a.experiment == "sweep-epsilon" ? SweepParam::epsilon
                                                           : SweepParam::percentage;
        auto pts = sweep(param, a.values, train, test, cc, tcfg);
        json jrows = json::array();
        for (const auto& p : pts) {
            json epochs = json::array();
            for (const auto& e : p.history) epochs.push_back(e.test_acc);
            jrows.push_back(
                {{"value", p.value}, {"locked_acc", p.locked_acc}, {"epoch_test_acc", epochs}});
        }
        report["points"] = jrows;
        write_sweep_csv(pts, dirs.reports / (stem + ".csv"));
    }

    std::ofstream(dirs.reports / (stem + ".json")) << report.dump(2) << "\n";
    std::cout << "report written to " << (dirs.reports / (stem + ".json")) << "\n";
    return 0;
}

int cmd_report(const std::string& out) {
    const auto dirs = make_out(out);
    // Merge per-run JSON reports into one CSV table per experiment family.
    std::map<std::string, std::vector<json>> by_experiment;
    for (const auto& entry : fs::directory_iterator(dirs.reports)) {
        if (entry.path().extension() != ".json") continue;
        std::ifstream in(entry.path());
        json j;
        in >> j;
        if (j.contains("experiment")) by_experiment[j["experiment"]].push_back(j);
    }
    if (by_experiment.empty()) {
        std::cerr << "no eval reports found under " << dirs.reports << "\n";
        return kExitConfig;
    }
    int tables = 0;
    for (auto& [exp, reports] : by_experiment) {
        std::sort(reports.begin(), reports.end(),
                  [](const json& x, const json& y) { return x["seed"] < y["seed"]; });
        const fs::path path = dirs.reports / ("table_" + exp + ".csv");
        std::ofstream csv(path);
        if (exp == "triple") {
            csv << "seed,arch,clean_acc,locked_acc,unlocked_acc\n";
            for (const auto& r : reports)
                for (const auto& row : r["rows"])
                    csv << r["seed"] << ',' << row["arch"].get<std::string>() << ','
                        << row["clean_acc"] << ',' << row["locked_acc"] << ','
                        << row["unlocked_acc"] << '\n';
        } else if (exp == "defenses") {
            csv << "seed,policy,accuracy\n";
            for (const auto& r : reports)
                for (const auto& row : r["rows"])
                    csv << r["seed"] << ',' << row["policy"].get<std::string>() << ','
                        << row["accuracy"] << '\n';
        } else if (exp == "advtrain") {
            csv << "seed,pgd_on_locked,standard_on_locked,standard_on_clean\n";
            for (const auto& r : reports)
                csv << r["seed"] << ',' << r["pgd_on_locked"] << ',' << r["standard_on_locked"]
                    << ',' << r["standard_on_clean"] << '\n';
        } else if (exp == "uniqueness") {
            csv << "seed,matched_a,matched_b,cross_ab,cross_ba\n";
            for (const auto& r : reports)
                csv << r["seed"] << ',' << r["matched_a"] << ',' << r["matched_b"] << ','
                    << r["cross_ab"] << ',' << r["cross_ba"] << '\n';
        } else if (exp == "reconstruction") {
            csv << "seed,samples,locked_l2_mean,locked_l2_std,recovered_l2_mean,recovered_l2_std\n";
            for (const auto& r : reports)
                csv << r["seed"] << ',' << r["samples"] << ',' << r["locked_l2_mean"] << ','
                    << r["locked_l2_std"] << ',' << r["recovered_l2_mean"] << ','
                    << r["recovered_l2_std"] << '\n';
        } else {  // sweeps
            csv << "seed,value,locked_acc\n";
            for (const auto& r : reports)
                for (const auto& p : r["points"])
                    csv << r["seed"] << ',' << p["value"] << ',' << p["locked_acc"] << '\n';
        }
        std::cout << "wrote " << path << "\n";
        ++tables;
    }
    std::cout << tables << " table(s) written\n";
    return 0;
}

struct GenArgs {
    std::string out = "out";
    int classes = 3, train_per_class = 1000, test_per_class = 200;
    float signal = -1.0f, background = -1.0f, noise = -1.0f;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int cmd_gen(const GenArgs& a) {
    const auto dirs = make_out(a.out);
    SyntheticSpec spec;
    spec.num_classes = a.classes;
    spec.train_per_class = a.train_per_class;
    spec.test_per_class = a.test_per_class;
    if (a.signal > 0.0f) spec.signal_amplitude = a.signal;
    if (a.background >= 0.0f) spec.background_amplitude = a.background;
    if (a.noise >= 0.0f) spec.noise_amplitude = a.noise;
    spec.seed = a.seed_set ? a.seed : env_seed();
    write_run_config(dirs.runs / "gen.config.json", {{"subcommand", "gen"},
                                                     {"classes", spec.num_classes},
                                                     {"train_per_class", spec.train_per_class},
                                                     {"test_per_class", spec.test_per_class},
                                                     {"seed", spec.seed}});
    auto [train, test] = generate_synthetic(spec);
    save_dataset(train, dirs.data / "clean_train.llds", DatasetFormat::raw);
    save_dataset(test, dirs.data / "clean_test.llds", DatasetFormat::raw);
    std::cout << "wrote " << (dirs.data / "clean_train.llds") << " (" << train.size()
              << " samples) and " << (dirs.data / "clean_test.llds") << " (" << test.size()
              << " samples)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"invertible class-wise dataset locks: craft, apply, evaluate"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* sgen = app.add_subcommand("gen", "generate the synthetic benchmark dataset");
    sgen->add_option("--out", gen.out, "output directory");
    sgen->add_option("--classes", gen.classes, "number of classes");
    sgen->add_option("--train-per-class", gen.train_per_class);
    sgen->add_option("--test-per-class", gen.test_per_class);
    sgen->add_option("--signal", gen.signal, "class signal amplitude");
    sgen->add_option("--background", gen.background, "shared background amplitude");
    sgen->add_option("--noise", gen.noise, "pixel noise amplitude");
    auto* gseed = sgen->add_option("--seed", gen.seed, "RNG seed (env LEARNLOCK_SEED fallback)");

    CraftArgs craft;
    auto* scraft = app.add_subcommand("craft", "craft a lock key on a clean dataset");
    scraft->add_option("--dataset", craft.dataset, "clean training dataset")->required();
    scraft->add_option("--out", craft.out, "output directory");
    scraft->add_option("--transform", craft.transform,
                       "linear | conv | global-linear | global-conv | mixture[:l,c,...]");
    scraft->add_option("--epsilon", craft.epsilon,
                       "perturbation budget on [0,1] (0.0314 is the 8/255 default)");
    scraft->add_option("--I", craft.I, "crafting-model batches per round");
    scraft->add_option("--J", craft.J, "transform passes per round");
    scraft->add_option("--lambda", craft.lambda, "exit train-error threshold");
    scraft->add_option("--eta1", craft.eta1, "transform weight lr");
    scraft->add_option("--eta2", craft.eta2, "transform bias lr");
    scraft->add_option("--batch-size", craft.batch_size);
    scraft->add_option("--max-rounds", craft.max_rounds);
    scraft->add_option("--classes", craft.classes, "scope: classes to lock (default all)");
    scraft->add_option("--percent", craft.percent, "scope: fraction of in-scope samples");
    scraft->add_option("--arch", craft.arch, "crafting model architecture");
    scraft->add_option("--width-mult", craft.width_mult, "conv transform width multiplier");
    scraft->add_option("--fp-iters", craft.fp_iters, "fixed-point iterations stored in the key");
    auto* cseed = scraft->add_option("--seed", craft.seed);

    ApplyArgs lock_args, unlock_args;
    auto* slock = app.add_subcommand("lock", "apply a key to a clean dataset");
    auto* sunlock = app.add_subcommand("unlock", "invert a key on a locked dataset");
    for (auto [sub, args] : {std::pair{slock, &lock_args}, std::pair{sunlock, &unlock_args}}) {
        sub->add_option("--dataset", args->dataset)->required();
        sub->add_option("--key", args->key)->required();
        sub->add_option("--output", args->output, "explicit output path");
        sub->add_option("--out", args->out, "output directory");
        sub->add_option("--format", args->format, "raw | png");
        sub->add_flag("--force", args->force, "ignore fingerprint mismatch");
    }

    TrainArgs train;
    auto* strain = app.add_subcommand("train", "train a classifier on a dataset");
    strain->add_option("--dataset", train.dataset)->required();
    strain->add_option("--test", train.test, "clean test dataset");
    strain->add_option("--out", train.out);
    strain->add_option("--arch", train.arch, "mini_cnn | mini_resnet | mini_vgg");
    strain->add_option("--augment", train.augment,
                       "none | random_noise | gaussian_blur | standard | cutout | mixup | cutmix");
    strain->add_option("--epochs", train.epochs);
    strain->add_option("--batch-size", train.batch_size);
    strain->add_option("--lr", train.lr);
    strain->add_option("--momentum", train.momentum);
    auto* tseed = strain->add_option("--seed", train.seed);

    EvalArgs ev;
    auto* seval = app.add_subcommand("eval", "run a named experiment");
    seval->add_option("--experiment", ev.experiment,
                      "triple | defenses | advtrain | uniqueness | reconstruction | "
                      "sweep-epsilon | sweep-percentage")
        ->required();
    seval->add_option("--dataset", ev.dataset, "clean training dataset")->required();
    seval->add_option("--test", ev.test, "clean test dataset")->required();
    seval->add_option("--key", ev.key);
    seval->add_option("--key2", ev.key2, "second key (uniqueness)");
    seval->add_option("--out", ev.out);
    seval->add_option("--arch", ev.arch);
    seval->add_option("--transform", ev.transform, "lock family for sweep crafting");
    seval->add_option("--epochs", ev.epochs);
    seval->add_option("--batch-size", ev.batch_size);
    seval->add_option("--lr", ev.lr);
    seval->add_option("--samples", ev.samples, "reconstruction sample count");
    seval->add_option("--pgd-steps", ev.pgd_steps);
    seval->add_option("--eps-at", ev.eps_at, "PGD budget (default: key epsilon)");
    seval->add_option("--values", ev.values, "sweep values, ascending");
    auto* eseed = seval->add_option("--seed", ev.seed);

    std::string report_out = "out";
    auto* sreport = app.add_subcommand("report", "merge eval reports into CSV tables");
    sreport->add_option("--out", report_out, "output directory holding reports/");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    gen.seed_set = gseed->count() > 0;
    craft.seed_set = cseed->count() > 0;
    train.seed_set = tseed->count() > 0;
    ev.seed_set = eseed->count() > 0;

    try {
        if (sgen->parsed()) return cmd_gen(gen);
        if (scraft->parsed()) return cmd_craft(craft);
        if (slock->parsed()) return cmd_apply(lock_args, true);
        if (sunlock->parsed()) return cmd_apply(unlock_args, false);
        if (strain->parsed()) return cmd_train(train);
        if (seval->parsed()) return cmd_eval(ev);
        if (sreport->parsed()) return cmd_report(report_out);
    } catch (const FingerprintMismatch& e) {
        std::cerr << "error: " << e.what() << " (pass --force to override)\n";
        return kExitFingerprint;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return kExitConfig;
}
