#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "learnlock/common.hpp"

namespace learnlock {

/// Labeled image tensors in [0,1], row-major N x C x H x W.
struct Dataset {
    int channels = 0, height = 0, width = 0, num_classes = 0;
    std::vector<float> images;
    std::vector<int> labels;
    std::vector<std::string> class_names;
    std::string split = "train";

    int size() const { return static_cast<int>(labels.size()); }
    std::int64_t image_size() const {
        return static_cast<std::int64_t>(channels) * height * width;
    }
    float* image(int i) { return images.data() + i * image_size(); }
    const float* image(int i) const { return images.data() + i * image_size(); }

    void validate() const;
    std::vector<int> class_counts() const;
};

/// SHA-256 over shape, class count, sample count and per-class counts.
/// Invariant under any pixel-value transform that keeps layout and labels.
std::array<std::uint8_t, 32> dataset_fingerprint(const Dataset& ds);

enum class DatasetFormat { raw, png_tree };

/// Raw binary ("LLDS") or class_name/*.png directory tree; the format is
/// inferred from the path (file with LLDS magic vs directory).
Dataset load_dataset(const std::filesystem::path& path);

/// Writes the dataset plus a JSON manifest (shape, counts, fingerprint).
void save_dataset(const Dataset& ds, const std::filesystem::path& path, DatasetFormat format);

/// Desk-scale synthetic image classification benchmark. Each class is a
/// seeded mixture of oriented gratings over a shared random background, with
/// per-sample jitter and pixel noise.
struct SyntheticSpec {
    int num_classes = 3;
    int train_per_class = 1000;
    int test_per_class = 200;
    int channels = 3, height = 32, width = 32;
    float margin = 1.0f;           // required template L2 separation
    float signal_amplitude = 0.06f;
    float background_amplitude = 0.25f;
    float noise_amplitude = 0.18f;
    // Pixels stay in [pixel_margin, 1-pixel_margin] so epsilon-bounded locks
    // do not run into the [0,1] clip and stay exactly invertible.
    float pixel_margin = 0.1f;
    std::uint64_t seed = 0;
};

std::pair<Dataset, Dataset> generate_synthetic(const SyntheticSpec& spec);

std::string fingerprint_hex(const std::array<std::uint8_t, 32>& fp);

}  // namespace learnlock
