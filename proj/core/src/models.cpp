#include "learnlock/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "learnlock/rng.hpp"

namespace learnlock {

namespace {

constexpr char kCkptMagic[4] = {'L', 'L', 'C', 'K'};
constexpr std::uint16_t kCkptVersion = 1;

int ch(const ClassifierSpec& spec, int base) {
    return std::max(4, static_cast<int>(std::lround(base * spec.width_mult)));
}

// Parameter tensor shapes in forward order: (w, b) per conv, then (w, b) for
// the linear head.
std::vector<Shape> param_shapes(const ClassifierSpec& spec) {
    const int C = spec.channels, K = spec.num_classes;
    std::vector<Shape> s;
    auto conv = [&](int ci, int co, int k) {
        s.push_back({co, ci, k, k});
        s.push_back({co});
    };
    switch (spec.arch) {
        case Arch::mini_cnn: {
            const int c1 = ch(spec, 8), c2 = ch(spec, 16);
            conv(C, c1, 3);
            conv(c1, c2, 3);
            conv(c2, c2, 3);
            conv(c2, c2, 3);
            s.push_back({c2, K});
            s.push_back({K});
            break;
        }
        case Arch::mini_resnet: {
            const int c = ch(spec, 12);
            conv(C, c, 3);  // stem
            conv(c, c, 3);  // block 1
            conv(c, c, 3);
            conv(c, c, 3);  // block 2
            conv(c, c, 3);
            s.push_back({c, K});
            s.push_back({K});
            break;
        }
        case Arch::mini_vgg: {
            const int c1 = ch(spec, 8), c2 = ch(spec, 16);
            conv(C, c1, 3);
            conv(c1, c1, 3);
            conv(c1, c2, 3);
            conv(c2, c2, 3);
            conv(c2, c2, 3);
            conv(c2, c2, 3);
            const int fh = spec.height / 8, fw = spec.width / 8;
            LL_CHECK(fh > 0 && fw > 0, "mini_vgg: input too small for three pooling stages");
            s.push_back({c2 * fh * fw, K});
            s.push_back({K});
            break;
        }
    }
    return s;
}

}  // namespace

Arch parse_arch(const std::string& name) {
    if (name == "mini_cnn") return Arch::mini_cnn;
    if (name == "mini_resnet") return Arch::mini_resnet;
    if (name == "mini_vgg") return Arch::mini_vgg;
    throw Error("unknown architecture: " + name);
}

std::string arch_name(Arch arch) {
    switch (arch) {
        case Arch::mini_cnn: return "mini_cnn";
        case Arch::mini_resnet: return "mini_resnet";
        case Arch::mini_vgg: return "mini_vgg";
    }
    return "?";
}

int residual_connections(Arch arch) { return arch == Arch::mini_resnet ? 2 : 0; }

int conv_layer_count(Arch arch) {
    switch (arch) {
        case Arch::mini_cnn: return 4;
        case Arch::mini_resnet: return 5;
        case Arch::mini_vgg: return 6;
    }
    return 0;
}

ClassifierState init_classifier(const ClassifierSpec& spec, std::uint64_t seed) {
    LL_CHECK(spec.num_classes >= 2, "classifier needs at least 2 classes");
    LL_CHECK(spec.channels > 0 && spec.height > 0 && spec.width > 0,
             "classifier: invalid input shape");
    ClassifierState state;
    state.spec = spec;
    state.seed = seed;
    Rng rng(derive_seed(seed, 0x90de1));
    for (const Shape& shape : param_shapes(spec)) {
        Tensor p(shape, 0.0f, true);
        if (shape.size() > 1) {
            // fan-in: Ci*kh*kw for conv [Co,Ci,kh,kw], input width for linear [in,out]
            std::int64_t fan_in = shape.size() == 2 ? shape[0]
                                                    : static_cast<std::int64_t>(shape[1]) *
                                                          shape[2] * shape[3];
            const float s = 1.0f / std::sqrt(static_cast<float>(fan_in));
            for (auto& v : p.value()) v = uniform(rng, -s, s);
        }
        state.params.push_back(std::move(p));
    }
    return state;
}

Tensor predict(const ClassifierState& state, const Tensor& batch) {
    const auto& spec = state.spec;
    LL_CHECK_SHAPE(batch.shape().size() == 4 && batch.shape()[1] == spec.channels &&
                       batch.shape()[2] == spec.height && batch.shape()[3] == spec.width,
                   "predict: batch shape " + shape_str(batch.shape()) +
                       " does not match classifier input");
    const auto& p = state.params;
    using namespace ops;
    auto conv_relu = [&](const Tensor& x, int i) {
        return relu(conv2d(x, p[static_cast<std::size_t>(2 * i)],
                           p[static_cast<std::size_t>(2 * i + 1)], 1, 1));
    };
    // center [0,1] pixels to [-1,1]; raw positive inputs slow early training
    Tensor input = mul_scalar(add_scalar(batch, -0.5f), 2.0f);
    Tensor feat;
    switch (spec.arch) {
        case Arch::mini_cnn: {
            Tensor x = max_pool2d(conv_relu(input, 0));
            x = max_pool2d(conv_relu(x, 1));
            x = max_pool2d(conv_relu(x, 2));
            x = conv_relu(x, 3);
            feat = global_avg_pool(x);
            break;
        }
        case Arch::mini_resnet: {
            Tensor x = max_pool2d(conv_relu(input, 0));
            Tensor r = conv_relu(x, 1);
            r = conv2d(r, p[4], p[5], 1, 1);
            x = relu(add(x, r));
            x = max_pool2d(x);
            r = conv_relu(x, 3);
            r = conv2d(r, p[8], p[9], 1, 1);
            x = relu(add(x, r));
            feat = global_avg_pool(x);
            break;
        }
        case Arch::mini_vgg: {
            Tensor x = conv_relu(input, 0);
            x = max_pool2d(conv_relu(x, 1));
            x = conv_relu(x, 2);
            x = max_pool2d(conv_relu(x, 3));
            x = conv_relu(x, 4);
            x = max_pool2d(conv_relu(x, 5));
            feat = reshape(x, {x.shape()[0], x.shape()[1] * x.shape()[2] * x.shape()[3]});
            break;
        }
    }
    const std::size_t np = state.params.size();
    Tensor logits = ops::add(ops::matmul(feat, p[np - 2]), p[np - 1]);
    for (float v : logits.value())
        if (!std::isfinite(v)) throw NumericError("predict: non-finite logits (diverged model)");
    return logits;
}

History train_classifier(ClassifierState& state, const Dataset& train, const Dataset* test,
                         const TrainConfig& cfg) {
    LL_CHECK(train.size() > 0, "train_classifier: empty dataset");
    LL_CHECK(train.num_classes == state.spec.num_classes,
             "train_classifier: dataset classes do not match classifier");
    History history;
    if (cfg.epochs <= 0) return history;

    const int n = train.size();
    const std::int64_t d = train.image_size();
    const int bs = std::min(cfg.batch_size, n);
    const int batches_per_epoch = (n + bs - 1) / bs;
    Sgd sgd(cfg.lr, cfg.momentum, cfg.schedule,
            cfg.schedule == LrSchedule::cosine ? cfg.epochs * batches_per_epoch : 0);
    Rng rng(derive_seed(cfg.seed, 0xeb0c));

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    std::vector<float> bx;
    std::vector<int> by;
    std::vector<float> soft;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::int64_t correct = 0;
        for (int b = 0; b < batches_per_epoch; ++b) {
            const int lo = b * bs, hi = std::min(n, lo + bs);
            const int m = hi - lo;
            bx.assign(static_cast<std::size_t>(m) * d, 0.0f);
            by.resize(static_cast<std::size_t>(m));
            for (int i = 0; i < m; ++i) {
                const int src = order[static_cast<std::size_t>(lo + i)];
                std::memcpy(bx.data() + static_cast<std::int64_t>(i) * d, train.image(src),
                            sizeof(float) * static_cast<std::size_t>(d));
                by[static_cast<std::size_t>(i)] = train.labels[static_cast<std::size_t>(src)];
            }
            bool used_soft = false;
            apply_augment(cfg.augment, bx, m, train.channels, train.height, train.width, by,
                          train.num_classes, rng, soft, used_soft);

            Tape tape;
            Tensor x = Tensor::from({m, train.channels, train.height, train.width}, bx);
            Tensor logits = predict(state, x);
            Tensor loss = used_soft
                              ? ops::cross_entropy_soft(
                                    logits, Tensor::from({m, train.num_classes}, soft))
                              : ops::cross_entropy_with_logits(logits, by);
            if (!std::isfinite(loss.item()))
                throw NumericError("train_classifier: NaN/Inf loss");
            tape.backward(loss);
            sgd.step(state.params);

            loss_sum += loss.item() * m;
            auto lv = logits.value();
            for (int i = 0; i < m; ++i) {
                int best = 0;
                for (int k = 1; k < train.num_classes; ++k)
                    if (lv[static_cast<std::size_t>(i) * train.num_classes + k] >
                        lv[static_cast<std::size_t>(i) * train.num_classes + best])
                        best = k;
                if (best == by[static_cast<std::size_t>(i)]) ++correct;
            }
        }
        EpochStats stats;
        stats.train_loss = loss_sum / n;
        stats.train_acc = static_cast<double>(correct) / n;
        if (test) stats.test_acc = evaluate_accuracy(state, *test);
        history.push_back(stats);
    }
    return history;
}

double evaluate_accuracy(const ClassifierState& state, const Dataset& ds, int batch_size) {
    LL_CHECK(ds.size() > 0, "evaluate_accuracy: empty dataset");
    const auto cm = confusion_matrix(state, ds, batch_size);
    std::int64_t correct = 0;
    for (std::size_t k = 0; k < cm.size(); ++k) correct += cm[k][k];
    return static_cast<double>(correct) / ds.size();
}

std::vector<std::vector<int>> confusion_matrix(const ClassifierState& state, const Dataset& ds,
                                               int batch_size) {
    const int n = ds.size();
    const std::int64_t d = ds.image_size();
    const int K = ds.num_classes;
    std::vector<std::vector<int>> cm(static_cast<std::size_t>(K),
                                     std::vector<int>(static_cast<std::size_t>(K), 0));
    for (int lo = 0; lo < n; lo += batch_size) {
        const int m = std::min(batch_size, n - lo);
        Tensor x = Tensor::from(
            {m, ds.channels, ds.height, ds.width},
            std::vector<float>(ds.images.begin() + lo * d, ds.images.begin() + (lo + m) * d));
        Tensor logits = predict(state, x);
        auto lv = logits.value();
        for (int i = 0; i < m; ++i) {
            int best = 0;
            for (int k = 1; k < K; ++k)
                if (lv[static_cast<std::size_t>(i) * K + k] >
                    lv[static_cast<std::size_t>(i) * K + best])
                    best = k;
            ++cm[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(lo + i)])]
                [static_cast<std::size_t>(best)];
        }
    }
    return cm;
}

void save_checkpoint(const ClassifierState& state, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create checkpoint " + path.string());
    out.write(kCkptMagic, 4);
    auto w16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
    auto w32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    w16(kCkptVersion);
    w16(static_cast<std::uint16_t>(state.spec.arch));
    w16(static_cast<std::uint16_t>(state.spec.channels));
    w16(static_cast<std::uint16_t>(state.spec.height));
    w16(static_cast<std::uint16_t>(state.spec.width));
    w16(static_cast<std::uint16_t>(state.spec.num_classes));
    const float wm = state.spec.width_mult;
    out.write(reinterpret_cast<const char*>(&wm), 4);
    const std::uint64_t seed = state.seed;
    out.write(reinterpret_cast<const char*>(&seed), 8);
    w32(static_cast<std::uint32_t>(state.params.size()));
    for (const auto& p : state.params) {
        w32(static_cast<std::uint32_t>(p.size()));
        out.write(reinterpret_cast<const char*>(p.value().data()),
                  static_cast<std::streamsize>(p.size() * sizeof(float)));
    }
    if (!out) throw IoError("checkpoint write failed: " + path.string());
}

ClassifierState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCkptMagic, 4) != 0)
        throw IoError("bad checkpoint magic in " + path.string());
    auto r16 = [&]() {
        std::uint16_t v;
        in.read(reinterpret_cast<char*>(&v), 2);
        if (!in) throw IoError("truncated checkpoint " + path.string());
        return v;
    };
    const std::uint16_t version = r16();
    if (version != kCkptVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    ClassifierSpec spec;
    spec.arch = static_cast<Arch>(r16());
    spec.channels = r16();
    spec.height = r16();
    spec.width = r16();
    spec.num_classes = r16();
    in.read(reinterpret_cast<char*>(&spec.width_mult), 4);
    std::uint64_t seed = 0;
    in.read(reinterpret_cast<char*>(&seed), 8);
    std::uint32_t nparams = 0;
    in.read(reinterpret_cast<char*>(&nparams), 4);
    if (!in) throw IoError("truncated checkpoint " + path.string());

    ClassifierState state = init_classifier(spec, seed);
    LL_CHECK(nparams == state.params.size(), "checkpoint parameter count mismatch");
    for (auto& p : state.params) {
        std::uint32_t count = 0;
        in.read(reinterpret_cast<char*>(&count), 4);
        LL_CHECK(in && count == p.size(), "checkpoint parameter shape mismatch");
        in.read(reinterpret_cast<char*>(p.value().data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (!in) throw IoError("truncated checkpoint payload " + path.string());
    }
    return state;
}

}  // namespace learnlock
