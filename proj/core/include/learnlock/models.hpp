#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "learnlock/augment.hpp"
#include "learnlock/dataio.hpp"
#include "learnlock/ops.hpp"
#include "learnlock/sgd.hpp"

namespace learnlock {

enum class Arch { mini_cnn, mini_resnet, mini_vgg };

Arch parse_arch(const std::string& name);
std::string arch_name(Arch arch);

/// Residual connections in the forward graph; nonzero only for mini_resnet.
int residual_connections(Arch arch);
int conv_layer_count(Arch arch);

struct ClassifierSpec {
    int channels = 3, height = 32, width = 32;
    int num_classes = 10;
    Arch arch = Arch::mini_resnet;
    float width_mult = 1.0f;
};

struct ClassifierState {
    ClassifierSpec spec;
    std::vector<Tensor> params;
    std::uint64_t seed = 0;
};

/// Deterministic uniform fan-in initialization.
ClassifierState init_classifier(const ClassifierSpec& spec, std::uint64_t seed);

/// batch [N,C,H,W] -> logits [N,K]. Records on the active tape, if any.
Tensor predict(const ClassifierState& state, const Tensor& batch);

struct TrainConfig {
    int epochs = 10;
    int batch_size = 64;
    float lr = 0.05f;
    float momentum = 0.9f;
    LrSchedule schedule = LrSchedule::cosine;
    std::uint64_t seed = 0;
    AugmentPolicy augment;
};

struct EpochStats {
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = -1.0;  // -1 when no test set supplied
};
using History = std::vector<EpochStats>;

History train_classifier(ClassifierState& state, const Dataset& train, const Dataset* test,
                         const TrainConfig& cfg);

double evaluate_accuracy(const ClassifierState& state, const Dataset& ds, int batch_size = 128);

/// rows = true class, cols = predicted class; row sums are per-class counts.
std::vector<std::vector<int>> confusion_matrix(const ClassifierState& state, const Dataset& ds,
                                               int batch_size = 128);

void save_checkpoint(const ClassifierState& state, const std::filesystem::path& path);
ClassifierState load_checkpoint(const std::filesystem::path& path);

}  // namespace learnlock
