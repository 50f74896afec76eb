#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "learnlock/dataio.hpp"
#include "learnlock/rng.hpp"

using namespace learnlock;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
    fs::path p = fs::temp_directory_path() / (std::string("learnlock_test_") + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Small deterministic dataset; pixels on the k/255 grid so PNG quantization
// is exact where the test needs it to be.
Dataset small_dataset(bool on_grid) {
    Dataset ds;
    ds.channels = 3;
    ds.height = 4;
    ds.width = 5;
    ds.num_classes = 2;
    ds.class_names = {"circle", "square"};
    Rng rng(42);
    for (int i = 0; i < 6; ++i) {
        ds.labels.push_back(i % 2);
        for (std::int64_t j = 0; j < ds.image_size(); ++j) {
            if (on_grid) {
                const int level = static_cast<int>(uniform(rng, 0.0f, 255.999f));
                ds.images.push_back(static_cast<float>(level) / 255.0f);
            } else {
                ds.images.push_back(uniform(rng, 0.0f, 1.0f));
            }
        }
    }
    return ds;
}

}  // namespace

TEST_CASE("raw dataset round trip is bitwise exact") {
    const fs::path dir = temp_dir("raw_rt");
    const Dataset ds = small_dataset(false);
    save_dataset(ds, dir / "d.llds", DatasetFormat::raw);

    const Dataset back = load_dataset(dir / "d.llds");
    CHECK(back.channels == ds.channels);
    CHECK(back.height == ds.height);
    CHECK(back.width == ds.width);
    CHECK(back.num_classes == ds.num_classes);
    CHECK(back.labels == ds.labels);
    REQUIRE(back.images.size() == ds.images.size());
    CHECK(std::memcmp(back.images.data(), ds.images.data(),
                      ds.images.size() * sizeof(float)) == 0);
    // Class names travel through the side-car manifest.
    CHECK(back.class_names == ds.class_names);
    CHECK(fs::exists(dir / "manifest.json"));
}

TEST_CASE("raw loader rejects bad magic and truncation") {
    const fs::path dir = temp_dir("raw_bad");
    const Dataset ds = small_dataset(false);
    save_dataset(ds, dir / "d.llds", DatasetFormat::raw);

    SUBCASE("bad magic") {
        std::fstream f(dir / "d.llds", std::ios::in | std::ios::out | std::ios::binary);
        f.write("NOPE", 4);
        f.close();
        CHECK_THROWS_AS(load_dataset(dir / "d.llds"), IoError);
    }
    SUBCASE("truncated payload") {
        const auto full = fs::file_size(dir / "d.llds");
        fs::resize_file(dir / "d.llds", full - 16);
        CHECK_THROWS_AS(load_dataset(dir / "d.llds"), IoError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_dataset(dir / "absent.llds"), IoError);
    }
}

TEST_CASE("png tree round trip") {
    const fs::path dir = temp_dir("png_rt");

    SUBCASE("values on the 8-bit grid survive exactly") {
        const Dataset ds = small_dataset(true);
        save_dataset(ds, dir / "tree", DatasetFormat::png_tree);
        const Dataset back = load_dataset(dir / "tree");
        CHECK(back.labels.size() == ds.labels.size());
        CHECK(back.num_classes == ds.num_classes);
        // Directory order is alphabetical, matching the original class order
        // here ("circle" < "square"); per-class sample order is preserved.
        REQUIRE(back.images.size() == ds.images.size());
        // Labels 0/1 alternate in the source; PNG trees group by class.
        std::vector<int> counts_src = ds.class_counts();
        std::vector<int> counts_back = back.class_counts();
        CHECK(counts_src == counts_back);
        // Compare per class in original order.
        std::vector<std::vector<const float*>> src_by_class(2), back_by_class(2);
        for (int i = 0; i < ds.size(); ++i)
            src_by_class[static_cast<std::size_t>(ds.labels[i])].push_back(ds.image(i));
        for (int i = 0; i < back.size(); ++i)
            back_by_class[static_cast<std::size_t>(back.labels[i])].push_back(back.image(i));
        for (int c = 0; c < 2; ++c)
            for (std::size_t k = 0; k < src_by_class[c].size(); ++k)
                for (std::int64_t j = 0; j < ds.image_size(); ++j)
                    CHECK(src_by_class[c][k][j] == back_by_class[c][k][j]);
    }

    SUBCASE("255 maps to exactly 1.0 and quantization error is at most 1/510") {
        Dataset ds = small_dataset(false);
        ds.images[0] = 1.0f;
        save_dataset(ds, dir / "tree2", DatasetFormat::png_tree);
        const Dataset back = load_dataset(dir / "tree2");
        float max_err = 0.0f;
        bool saw_one = false;
        for (std::size_t i = 0; i < back.images.size(); ++i) {
            if (back.images[i] == 1.0f) saw_one = true;
        }
        std::vector<std::vector<const float*>> src_by_class(2), back_by_class(2);
        for (int i = 0; i < ds.size(); ++i)
            src_by_class[static_cast<std::size_t>(ds.labels[i])].push_back(ds.image(i));
        for (int i = 0; i < back.size(); ++i)
            back_by_class[static_cast<std::size_t>(back.labels[i])].push_back(back.image(i));
        for (int c = 0; c < 2; ++c)
            for (std::size_t k = 0; k < src_by_class[c].size(); ++k)
                for (std::int64_t j = 0; j < ds.image_size(); ++j)
                    max_err = std::max(max_err,
                                       std::abs(src_by_class[c][k][j] - back_by_class[c][k][j]));
        CHECK(saw_one);
        CHECK(max_err <= 1.0f / 510.0f + 1e-7f);
    }
}

TEST_CASE("png tree loader rejects directories without class folders") {
    const fs::path dir = temp_dir("png_empty");
    CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("no classes found"), IoError);
}

TEST_CASE("dataset validation") {
    Dataset ds = small_dataset(false);
    SUBCASE("label outside range") {
        ds.labels[0] = 7;
        CHECK_THROWS_AS(ds.validate(), Error);
    }
    SUBCASE("pixel outside [0,1]") {
        ds.images[3] = 1.5f;
        CHECK_THROWS_AS(ds.validate(), Error);
    }
    SUBCASE("buffer size mismatch") {
        ds.images.pop_back();
        CHECK_THROWS_AS(ds.validate(), Error);
    }
}

TEST_CASE("fingerprint covers layout and label counts, not pixel values") {
    Dataset ds = small_dataset(false);
    const auto fp = dataset_fingerprint(ds);

    SUBCASE("stable across pixel-value transforms") {
        Dataset scaled = ds;
        for (auto& v : scaled.images) v *= 0.5f;
        CHECK(dataset_fingerprint(scaled) == fp);
    }
    SUBCASE("changes when a label moves between classes") {
        Dataset relabeled = ds;
        relabeled.labels[0] = 1;
        CHECK(dataset_fingerprint(relabeled) != fp);
    }
    SUBCASE("changes with shape") {
        Dataset reshaped = ds;
        std::swap(reshaped.height, reshaped.width);
        CHECK(dataset_fingerprint(reshaped) != fp);
    }
    SUBCASE("hex string is 64 lowercase hex chars") {
        const std::string hex = fingerprint_hex(fp);
        CHECK(hex.size() == 64);
        for (char c : hex) CHECK(((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f')));
    }
}

TEST_CASE("synthetic generator") {
    SyntheticSpec spec;
    spec.num_classes = 3;
    spec.train_per_class = 8;
    spec.test_per_class = 4;
    spec.height = 16;
    spec.width = 16;
    spec.seed = 11;

    SUBCASE("deterministic for a fixed seed") {
        auto [tr1, te1] = generate_synthetic(spec);
        auto [tr2, te2] = generate_synthetic(spec);
        CHECK(tr1.images == tr2.images);
        CHECK(tr1.labels == tr2.labels);
        CHECK(te1.images == te2.images);
    }
    SUBCASE("different seeds differ") {
        auto [tr1, te1] = generate_synthetic(spec);
        spec.seed = 12;
        auto [tr2, te2] = generate_synthetic(spec);
        CHECK(tr1.images != tr2.images);
    }
    SUBCASE("shape and balanced class counts") {
        auto [tr, te] = generate_synthetic(spec);
        CHECK(tr.size() == 24);
        CHECK(te.size() == 12);
        CHECK(tr.class_counts() == std::vector<int>{8, 8, 8});
        CHECK(te.class_counts() == std::vector<int>{4, 4, 4});
    }
    SUBCASE("pixels respect the configured margin band") {
        spec.pixel_margin = 0.1f;
        auto [tr, te] = generate_synthetic(spec);
        for (float v : tr.images) {
            CHECK(v >= 0.1f);
            CHECK(v <= 0.9f);
        }
    }
    SUBCASE("zero template margin is rejected") {
        spec.margin = 0.0f;
        CHECK_THROWS_AS(generate_synthetic(spec), Error);
    }
    SUBCASE("pixel margin of one half or more is rejected") {
        spec.pixel_margin = 0.5f;
        CHECK_THROWS_AS(generate_synthetic(spec), Error);
    }
    SUBCASE("fewer than two classes is rejected") {
        spec.num_classes = 1;
        CHECK_THROWS_AS(generate_synthetic(spec), Error);
    }
}
