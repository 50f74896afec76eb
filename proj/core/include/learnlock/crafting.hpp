#pragma once

#include <filesystem>

#include "learnlock/locks.hpp"
#include "learnlock/models.hpp"

namespace learnlock {

/// Alternating min-min crafting configuration. Defaults follow the linear
/// recipe (I=20, J=1, eta=0.1, lambda=0.1); conv runs typically use I=25,
/// J=3, lambda=0.2.
struct CraftConfig {
    LockVariant variant = LockVariant::linear;
    float epsilon = 8.0f / 255.0f;
    int outer_steps = 20;      // I: crafting-model batches per round
    int inner_steps = 1;       // J: full passes of transform updates per round
    float exit_error = 0.1f;   // lambda: stop once train error on D_p drops below
    float eta1 = 0.1f;         // lr for transform weights
    float eta2 = 0.1f;         // lr for transform biases
    int batch_size = 64;
    int max_rounds = 30;
    std::uint64_t seed = 0;

    std::vector<int> scope_classes;  // empty = all classes
    float percent = 1.0f;            // fraction of in-scope samples to lock
    std::vector<std::uint8_t> mixture_variants;  // per class, mixture only

    ClassifierSpec model;  // crafting model; input shape/K are taken from data
    float theta_lr = 0.05f;
    float theta_momentum = 0.9f;

    float h_width_mult = 1.0f;
    int fixed_point_iters = 5;

    void validate() const;
};

struct RoundStats {
    int round = 0;
    double train_error = 1.0;  // error rate of the crafting model on D_p
    double theta_loss = 0.0;   // mean loss over the round's theta batches
    double psi_loss = 0.0;     // mean loss over the round's psi batches
    double seconds = 0.0;
};

struct CraftTrace {
    std::vector<RoundStats> rounds;
    bool converged = false;
    double total_seconds = 0.0;
};

struct CraftResult {
    LockKey key;
    Dataset locked;
    CraftTrace trace;
};

/// Runs the alternating optimization for the configured lock family and
/// returns the key, the locked dataset, and the per-round trace. Hitting
/// max_rounds without reaching the exit error returns artifacts with
/// trace.converged == false rather than throwing.
CraftResult craft(const Dataset& clean_train, const CraftConfig& cfg);

void write_trace_jsonl(const CraftTrace& trace, const std::filesystem::path& path);

}  // namespace learnlock
