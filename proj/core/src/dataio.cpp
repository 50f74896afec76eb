#include "learnlock/dataio.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"
#include "learnlock/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace learnlock {

namespace {

constexpr char kRawMagic[4] = {'L', 'L', 'D', 'S'};
constexpr std::uint16_t kRawVersion = 1;

template <class T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is, const char* what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError(std::string("truncated dataset file while reading ") + what);
    return v;
}

struct PngImage {
    int width = 0, height = 0, channels = 0;
    std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

PngImage read_png(const fs::path& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (fp) std::fclose(fp);
        throw IoError("libpng init failed for " + path.string());
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("failed to decode PNG " + path.string());
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_packing(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    PngImage img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = static_cast<int>(png_get_channels(png, info));
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int r = 0; r < img.height; ++r)
        rows[static_cast<std::size_t>(r)] =
            img.pixels.data() + static_cast<std::size_t>(r) * img.width * img.channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

void write_png(const fs::path& path, int width, int height, int channels,
               const std::uint8_t* pixels) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot create " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        std::fclose(fp);
        throw IoError("libpng init failed for " + path.string());
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("failed to encode PNG " + path.string());
    }
    png_init_io(png, fp);
    const int color = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int r = 0; r < height; ++r)
        rows[static_cast<std::size_t>(r)] = const_cast<png_bytep>(
            pixels + static_cast<std::size_t>(r) * width * channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

void write_manifest(const Dataset& ds, const fs::path& dir, const std::string& format) {
    json m;
    m["format"] = format;
    m["num_samples"] = ds.size();
    m["channels"] = ds.channels;
    m["height"] = ds.height;
    m["width"] = ds.width;
    m["num_classes"] = ds.num_classes;
    m["class_names"] = ds.class_names;
    m["class_counts"] = ds.class_counts();
    m["split"] = ds.split;
    m["fingerprint"] = fingerprint_hex(dataset_fingerprint(ds));
    std::ofstream out(dir / "manifest.json");
    out << m.dump(2) << "\n";
}

Dataset load_raw(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kRawMagic, 4) != 0)
        throw IoError("not a raw dataset file (bad magic): " + path.string());
    const auto version = read_pod<std::uint16_t>(in, "version");
    if (version != kRawVersion)
        throw IoError("unsupported dataset version " + std::to_string(version));
    const auto n = read_pod<std::uint32_t>(in, "sample count");
    Dataset ds;
    ds.channels = read_pod<std::uint16_t>(in, "channels");
    ds.height = read_pod<std::uint16_t>(in, "height");
    ds.width = read_pod<std::uint16_t>(in, "width");
    ds.num_classes = read_pod<std::uint16_t>(in, "class count");
    ds.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) ds.labels[i] = read_pod<std::uint16_t>(in, "label");
    ds.images.resize(static_cast<std::size_t>(n) * ds.image_size());
    in.read(reinterpret_cast<char*>(ds.images.data()),
            static_cast<std::streamsize>(ds.images.size() * sizeof(float)));
    if (!in) throw IoError("truncated dataset payload in " + path.string());

    const fs::path manifest = path.parent_path() / "manifest.json";
    if (fs::exists(manifest)) {
        std::ifstream mi(manifest);
        json m = json::parse(mi, nullptr, false);
        if (!m.is_discarded()) {
            if (m.contains("class_names")) ds.class_names = m["class_names"].get<std::vector<std::string>>();
            if (m.contains("split")) ds.split = m["split"].get<std::string>();
        }
    }
    if (ds.class_names.empty())
        for (int c = 0; c < ds.num_classes; ++c) ds.class_names.push_back("class_" + std::to_string(c));
    ds.validate();
    return ds;
}

Dataset load_png_tree(const fs::path& dir) {
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) class_dirs.push_back(e.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) throw IoError("no classes found under " + dir.string());

    Dataset ds;
    ds.num_classes = static_cast<int>(class_dirs.size());
    int label = 0;
    for (const auto& cdir : class_dirs) {
        ds.class_names.push_back(cdir.filename().string());
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(cdir))
            if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            PngImage img = read_png(f);
            if (ds.size() == 0) {
                ds.channels = img.channels;
                ds.height = img.height;
                ds.width = img.width;
            } else if (img.channels != ds.channels || img.height != ds.height ||
                       img.width != ds.width) {
                throw IoError("inconsistent image size in " + f.string());
            }
            // Interleaved 8-bit -> planar float /255.
            const std::size_t base = ds.images.size();
            ds.images.resize(base + static_cast<std::size_t>(ds.image_size()));
            for (int c = 0; c < ds.channels; ++c)
                for (int i = 0; i < ds.height; ++i)
                    for (int j = 0; j < ds.width; ++j)
                        ds.images[base + (static_cast<std::size_t>(c) * ds.height + i) * ds.width + j] =
                            img.pixels[(static_cast<std::size_t>(i) * ds.width + j) * ds.channels + c] /
                            255.0f;
            ds.labels.push_back(label);
        }
        ++label;
    }
    if (ds.size() == 0) throw IoError("no PNG images found under " + dir.string());
    const fs::path manifest = dir / "manifest.json";
    if (fs::exists(manifest)) {
        std::ifstream mi(manifest);
        json m = json::parse(mi, nullptr, false);
        if (!m.is_discarded() && m.contains("split")) ds.split = m["split"].get<std::string>();
    }
    ds.validate();
    return ds;
}

}  // namespace

void Dataset::validate() const {
    LL_CHECK(static_cast<std::int64_t>(labels.size()) * image_size() ==
                 static_cast<std::int64_t>(images.size()),
             "dataset: image buffer does not match sample count");
    for (int y : labels)
        LL_CHECK(y >= 0 && y < num_classes,
                 "dataset: label " + std::to_string(y) + " outside [0," +
                     std::to_string(num_classes) + ")");
    for (float v : images)
        if (!(v >= 0.0f && v <= 1.0f))
            throw Error("dataset: pixel value " + std::to_string(v) + " outside [0,1]");
}

std::vector<int> Dataset::class_counts() const {
    std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
}

std::array<std::uint8_t, 32> dataset_fingerprint(const Dataset& ds) {
    std::vector<std::int64_t> fields = {ds.channels, ds.height, ds.width, ds.num_classes,
                                        ds.size()};
    for (int c : ds.class_counts()) fields.push_back(c);
    std::array<std::uint8_t, 32> out{};
    unsigned int len = 0;
    EVP_Digest(fields.data(), fields.size() * sizeof(std::int64_t), out.data(), &len,
               EVP_sha256(), nullptr);
    return out;
}

std::string fingerprint_hex(const std::array<std::uint8_t, 32>& fp) {
    static const char* hex = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (auto b : fp) {
        s.push_back(hex[b >> 4]);
        s.push_back(hex[b & 0xf]);
    }
    return s;
}

Dataset load_dataset(const fs::path& path) {
    if (fs::is_directory(path)) return load_png_tree(path);
    if (!fs::exists(path)) throw IoError("dataset path does not exist: " + path.string());
    return load_raw(path);
}

void save_dataset(const Dataset& ds, const fs::path& path, DatasetFormat format) {
    ds.validate();
    if (format == DatasetFormat::raw) {
        fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot create " + path.string());
        out.write(kRawMagic, 4);
        write_pod(out, kRawVersion);
        write_pod(out, static_cast<std::uint32_t>(ds.size()));
        write_pod(out, static_cast<std::uint16_t>(ds.channels));
        write_pod(out, static_cast<std::uint16_t>(ds.height));
        write_pod(out, static_cast<std::uint16_t>(ds.width));
        write_pod(out, static_cast<std::uint16_t>(ds.num_classes));
        for (int y : ds.labels) write_pod(out, static_cast<std::uint16_t>(y));
        out.write(reinterpret_cast<const char*>(ds.images.data()),
                  static_cast<std::streamsize>(ds.images.size() * sizeof(float)));
        if (!out) throw IoError("write failed: " + path.string());
        write_manifest(ds, path.parent_path().empty() ? fs::path(".") : path.parent_path(),
                       "raw");
        return;
    }

    // png_tree: one directory per class, 8-bit quantization (round half up).
    fs::create_directories(path);
    std::vector<std::string> names = ds.class_names;
    if (names.empty())
        for (int c = 0; c < ds.num_classes; ++c) names.push_back("class_" + std::to_string(c));
    std::vector<int> counter(static_cast<std::size_t>(ds.num_classes), 0);
    std::vector<std::uint8_t> pix(static_cast<std::size_t>(ds.channels) * ds.height * ds.width);
    for (int i = 0; i < ds.size(); ++i) {
        const int y = ds.labels[static_cast<std::size_t>(i)];
        const fs::path cdir = path / names[static_cast<std::size_t>(y)];
        fs::create_directories(cdir);
        const float* img = ds.image(i);
        for (int c = 0; c < ds.channels; ++c)
            for (int r = 0; r < ds.height; ++r)
                for (int col = 0; col < ds.width; ++col)
                    pix[(static_cast<std::size_t>(r) * ds.width + col) * ds.channels + c] =
                        static_cast<std::uint8_t>(std::floor(
                            img[(static_cast<std::size_t>(c) * ds.height + r) * ds.width + col] *
                                255.0f +
                            0.5f));
        char name[16];
        std::snprintf(name, sizeof(name), "%06d.png", counter[static_cast<std::size_t>(y)]++);
        write_png(cdir / name, ds.width, ds.height, ds.channels, pix.data());
    }
    write_manifest(ds, path, "png_tree");
}

std::pair<Dataset, Dataset> generate_synthetic(const SyntheticSpec& spec) {
    LL_CHECK(spec.margin > 0.0f, "synthetic: template margin must be positive");
    LL_CHECK(spec.num_classes >= 2, "synthetic: need at least two classes");
    LL_CHECK(spec.pixel_margin >= 0.0f && spec.pixel_margin < 0.5f,
             "synthetic: pixel margin must be in [0, 0.5)");

    const int C = spec.channels, H = spec.height, W = spec.width, K = spec.num_classes;
    const std::int64_t d = static_cast<std::int64_t>(C) * H * W;

    // Class templates: two oriented gratings per channel with class-seeded
    // frequency/orientation/phase, scaled to the signal amplitude.
    Rng trng(derive_seed(spec.seed, 0));
    std::vector<std::vector<float>> templates(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        auto& t = templates[static_cast<std::size_t>(k)];
        t.assign(static_cast<std::size_t>(d), 0.0f);
        for (int c = 0; c < C; ++c) {
            for (int g = 0; g < 2; ++g) {
                const float fx = uniform(trng, 1.0f, 5.0f);
                const float fy = uniform(trng, 1.0f, 5.0f);
                const float phase = uniform(trng, 0.0f, 6.2831853f);
                const float amp = uniform(trng, 0.5f, 1.0f);
                for (int i = 0; i < H; ++i)
                    for (int j = 0; j < W; ++j)
                        t[(static_cast<std::size_t>(c) * H + i) * W + j] +=
                            amp * std::sin(6.2831853f * (fx * i / H + fy * j / W) + phase);
            }
        }
        // Normalize to unit RMS, then scale.
        double ss = 0.0;
        for (float v : t) ss += static_cast<double>(v) * v;
        const float scale =
            spec.signal_amplitude / static_cast<float>(std::sqrt(ss / static_cast<double>(d)));
        for (float& v : t) v *= scale;
    }

    // Margin check on scaled templates.
    for (int a = 0; a < K; ++a) {
        for (int b = a + 1; b < K; ++b) {
            double ss = 0.0;
            for (std::int64_t i = 0; i < d; ++i) {
                const double diff = templates[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)] -
                                    templates[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
                ss += diff * diff;
            }
            if (std::sqrt(ss) < spec.margin)
                throw Error("synthetic: template separation " + std::to_string(std::sqrt(ss)) +
                            " below requested margin for classes " + std::to_string(a) + "," +
                            std::to_string(b));
        }
    }

    auto make_split = [&](int per_class, std::uint64_t stream, const char* split) {
        Dataset ds;
        ds.channels = C;
        ds.height = H;
        ds.width = W;
        ds.num_classes = K;
        ds.split = split;
        for (int k = 0; k < K; ++k) ds.class_names.push_back("class_" + std::to_string(k));
        Rng rng(derive_seed(spec.seed, stream));
        ds.images.reserve(static_cast<std::size_t>(per_class) * K * d);
        for (int k = 0; k < K; ++k) {
            const auto& t = templates[static_cast<std::size_t>(k)];
            for (int s = 0; s < per_class; ++s) {
                // Shared low-frequency background, template jitter, pixel noise.
                const float bfx = uniform(rng, 0.5f, 2.0f);
                const float bfy = uniform(rng, 0.5f, 2.0f);
                const float bphase = uniform(rng, 0.0f, 6.2831853f);
                const float bamp = spec.background_amplitude * uniform(rng, 0.3f, 1.0f);
                const int dx = static_cast<int>(uniform(rng, 0.0f, 4.999f)) - 2;
                const int dy = static_cast<int>(uniform(rng, 0.0f, 4.999f)) - 2;
                const std::size_t base = ds.images.size();
                ds.images.resize(base + static_cast<std::size_t>(d));
                for (int c = 0; c < C; ++c) {
                    for (int i = 0; i < H; ++i) {
                        for (int j = 0; j < W; ++j) {
                            const int si = ((i + dx) % H + H) % H;
                            const int sj = ((j + dy) % W + W) % W;
                            float v = 0.5f +
                                      t[(static_cast<std::size_t>(c) * H + si) * W + sj] +
                                      bamp * std::sin(6.2831853f * (bfx * i / H + bfy * j / W) +
                                                      bphase) +
                                      uniform(rng, -spec.noise_amplitude, spec.noise_amplitude);
                            ds.images[base + (static_cast<std::size_t>(c) * H + i) * W + j] =
                                std::clamp(v, spec.pixel_margin, 1.0f - spec.pixel_margin);
                        }
                    }
                }
                ds.labels.push_back(k);
            }
        }
        return ds;
    };

    Dataset train = make_split(spec.train_per_class, 1, "train");
    Dataset test = make_split(spec.test_per_class, 2, "test");
    return {std::move(train), std::move(test)};
}

}  // namespace learnlock
