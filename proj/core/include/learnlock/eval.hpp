#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "learnlock/crafting.hpp"
#include "learnlock/locks.hpp"
#include "learnlock/models.hpp"

namespace learnlock {

/// PGD attack settings for adversarial training. step_size <= 0 means
/// epsilon / 4.
struct PgdConfig {
    int steps = 10;
    float epsilon = 8.0f / 255.0f;
    float step_size = 0.0f;
    bool random_start = true;

    float resolved_step() const { return step_size > 0.0f ? step_size : epsilon / 4.0f; }
};

struct TripleRow {
    std::string arch;
    double clean_acc = 0.0;
    double locked_acc = 0.0;
    double unlocked_acc = 0.0;
};

struct DefenseRow {
    std::string policy;
    double accuracy = 0.0;
};

struct AdvTrainResult {
    double adversarial_acc = 0.0;  // PGD-trained on D_p, clean-test accuracy
    double standard_acc = 0.0;     // standard-trained on D_p
    double clean_acc = 0.0;        // standard-trained on D_c
};

struct UniquenessReport {
    double matched_a = 0.0;  // unlock D_p(a) with key a
    double matched_b = 0.0;
    double cross_ab = 0.0;  // unlock D_p(b) with key a
    double cross_ba = 0.0;
};

struct ReconStats {
    int samples = 0;
    double locked_mean = 0.0, locked_std = 0.0;        // L2(D_p, D_c) per image
    double recovered_mean = 0.0, recovered_std = 0.0;  // L2(D_c~, D_c)
};

enum class SweepParam { epsilon, percentage };

struct SweepPoint {
    float value = 0.0f;
    double locked_acc = 0.0;
    History history;  // per-epoch stats of the locked-training run
};

/// Trains a fresh seeded model and returns clean-test accuracy. The optional
/// history captures per-epoch stats.
double train_and_eval(const Dataset& train, const Dataset& test, const ClassifierSpec& spec,
                      const TrainConfig& cfg, History* history = nullptr);

/// Accuracy triple (clean / locked / recovered training data, clean test) per
/// architecture.
std::vector<TripleRow> eval_triple(const Dataset& clean_train, const Dataset& clean_test,
                                   const LockKey& key, const std::vector<ClassifierSpec>& specs,
                                   const TrainConfig& cfg);

/// Clean-test accuracy after training on the locked set under each policy.
std::vector<DefenseRow> eval_defenses(const Dataset& locked_train, const Dataset& clean_test,
                                      const ClassifierSpec& spec, const TrainConfig& cfg,
                                      const std::vector<AugmentPolicy>& policies);

/// Min-max training: each batch is replaced by PGD adversarial examples
/// before the SGD step. steps == 0 reduces to standard training.
double adversarial_train_and_eval(const Dataset& train, const Dataset& test,
                                  const ClassifierSpec& spec, const TrainConfig& cfg,
                                  const PgdConfig& pgd);

/// 2x2 matched/cross unlock table for two independently crafted keys.
/// Cross-key unlocks force past the fingerprint check by design.
UniquenessReport eval_uniqueness(const Dataset& clean_train, const Dataset& clean_test,
                                 const LockKey& key_a, const LockKey& key_b,
                                 const ClassifierSpec& spec, const TrainConfig& cfg);

/// Per-image L2 statistics of the locked and recovered sets against the clean
/// set, over `samples` seeded draws.
ReconStats eval_reconstruction(const Dataset& clean, const LockKey& key, int samples,
                               std::uint64_t seed);

/// Full craft + locked-training pipeline per value of epsilon or percentage.
std::vector<SweepPoint> sweep(SweepParam param, const std::vector<float>& values,
                              const Dataset& clean_train, const Dataset& clean_test,
                              CraftConfig craft_cfg, const TrainConfig& train_cfg);

void write_triple_csv(const std::vector<TripleRow>& rows, const std::filesystem::path& path);
void write_defense_csv(const std::vector<DefenseRow>& rows, const std::filesystem::path& path);
void write_adv_csv(const AdvTrainResult& r, const std::filesystem::path& path);
void write_uniqueness_csv(const UniquenessReport& r, const std::filesystem::path& path);
void write_reconstruction_csv(const ReconStats& r, const std::filesystem::path& path);
void write_sweep_csv(const std::vector<SweepPoint>& pts, const std::filesystem::path& path);

}  // namespace learnlock
