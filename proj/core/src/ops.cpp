#include "learnlock/ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <limits>

namespace learnlock::ops {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

enum class Bcast { same, scalar, row, channel };

Bcast bcast_mode(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Bcast::same;
    if (b.size() == 1) return Bcast::scalar;
    if (a.shape().size() == 4 && b.shape().size() == 1 && b.size() == a.shape()[1] &&
        b.size() != a.size() / a.shape()[0]) {
        return Bcast::channel;
    }
    if (a.shape().size() >= 2 && b.size() == a.size() / a.shape()[0]) return Bcast::row;
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
}

// Maps a flat index of `a` to the corresponding flat index of `b`.
struct BcastIndex {
    Bcast mode;
    std::int64_t row_size = 1;    // for row
    std::int64_t plane = 1;       // H*W for channel
    std::int64_t channels = 1;    // C for channel
    std::int64_t operator()(std::int64_t i) const {
        switch (mode) {
            case Bcast::same: return i;
            case Bcast::scalar: return 0;
            case Bcast::row: return i % row_size;
            case Bcast::channel: return (i / plane) % channels;
        }
        return 0;
    }
};

BcastIndex make_index(Bcast mode, const Tensor& a, const Tensor& b) {
    BcastIndex ix{mode};
    if (mode == Bcast::row) ix.row_size = b.size();
    if (mode == Bcast::channel) {
        ix.plane = static_cast<std::int64_t>(a.shape()[2]) * a.shape()[3];
        ix.channels = a.shape()[1];
    }
    return ix;
}

template <class Fwd, class Da, class Db>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Da da_coef,
                 Db db_coef) {
    const Bcast mode = bcast_mode(a, b, name);
    const BcastIndex ix = make_index(mode, a, b);

    Tensor out(a.shape());
    auto ov = out.value();
    auto av = a.value();
    auto bv = b.value();
    const std::int64_t n = a.size();
    for (std::int64_t i = 0; i < n; ++i) ov[i] = fwd(av[i], bv[ix(i)]);

    Tape* tape = Tape::active();
    if (tape && (tape->tracked(a) || tape->tracked(b))) {
        const bool need_a = tape->tracked(a);
        const bool need_b = tape->tracked(b);
        Tensor ta = a, tb = b;  // non-const handles to the shared buffers
        tape->record(out, [=]() mutable {
            auto g = out.grad();
            auto av2 = ta.value();
            auto bv2 = tb.value();
            if (need_a) {
                auto ga = ta.grad();
                for (std::int64_t i = 0; i < n; ++i)
                    ga[i] += g[i] * da_coef(av2[i], bv2[ix(i)]);
            }
            if (need_b) {
                auto gb = tb.grad();
                for (std::int64_t i = 0; i < n; ++i)
                    gb[ix(i)] += g[i] * db_coef(av2[i], bv2[ix(i)]);
            }
        });
    }
    return out;
}

template <class Fwd, class Dx>
Tensor unary_op(const Tensor& x, Fwd fwd, Dx dx_coef) {
    Tensor out(x.shape());
    auto ov = out.value();
    auto xv = x.value();
    const std::int64_t n = x.size();
    for (std::int64_t i = 0; i < n; ++i) ov[i] = fwd(xv[i]);

    Tape* tape = Tape::active();
    if (tape && tape->tracked(x)) {
        Tensor tx = x;
        tape->record(out, [=]() mutable {
            auto g = out.grad();
            auto gx = tx.grad();
            auto xv2 = tx.value();
            auto ov2 = out.value();
            for (std::int64_t i = 0; i < n; ++i) gx[i] += g[i] * dx_coef(xv2[i], ov2[i]);
        });
    }
    return out;
}

void im2col(const float* x, int Ci, int H, int W, int kh, int kw, int stride, int pad,
            int Ho, int Wo, float* col) {
    // col layout: [Ci*kh*kw][Ho*Wo], row-major
    for (int c = 0; c < Ci; ++c) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                float* dst = col + (static_cast<std::int64_t>((c * kh + i) * kw + j)) * Ho * Wo;
                for (int ho = 0; ho < Ho; ++ho) {
                    const int hi = ho * stride - pad + i;
                    if (hi < 0 || hi >= H) {
                        std::memset(dst + static_cast<std::int64_t>(ho) * Wo, 0,
                                    sizeof(float) * Wo);
                        continue;
                    }
                    const float* src = x + (static_cast<std::int64_t>(c) * H + hi) * W;
                    for (int wo = 0; wo < Wo; ++wo) {
                        const int wi = wo * stride - pad + j;
                        dst[static_cast<std::int64_t>(ho) * Wo + wo] =
                            (wi >= 0 && wi < W) ? src[wi] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_add(const float* col, int Ci, int H, int W, int kh, int kw, int stride, int pad,
                int Ho, int Wo, float* x) {
    for (int c = 0; c < Ci; ++c) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                const float* src = col + (static_cast<std::int64_t>((c * kh + i) * kw + j)) * Ho * Wo;
                for (int ho = 0; ho < Ho; ++ho) {
                    const int hi = ho * stride - pad + i;
                    if (hi < 0 || hi >= H) continue;
                    float* dst = x + (static_cast<std::int64_t>(c) * H + hi) * W;
                    for (int wo = 0; wo < Wo; ++wo) {
                        const int wi = wo * stride - pad + j;
                        if (wi >= 0 && wi < W) dst[wi] += src[static_cast<std::int64_t>(ho) * Wo + wo];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "add", [](float x, float y) { return x + y; },
        [](float, float) { return 1.0f; }, [](float, float) { return 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "sub", [](float x, float y) { return x - y; },
        [](float, float) { return 1.0f; }, [](float, float) { return -1.0f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "mul", [](float x, float y) { return x * y; },
        [](float, float y) { return y; }, [](float x, float) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "div", [](float x, float y) { return x / y; },
        [](float, float y) { return 1.0f / y; },
        [](float x, float y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& a, float c) {
    return unary_op(
        a, [c](float x) { return x + c; }, [](float, float) { return 1.0f; });
}

Tensor mul_scalar(const Tensor& a, float c) {
    return unary_op(
        a, [c](float x) { return x * c; }, [c](float, float) { return c; });
}

Tensor relu(const Tensor& x) {
    return unary_op(
        x, [](float v) { return v > 0.0f ? v : 0.0f; },
        [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor tanh(const Tensor& x) {
    return unary_op(
        x, [](float v) { return std::tanh(v); },
        [](float, float y) { return 1.0f - y * y; });
}

Tensor clip(const Tensor& x, float lo, float hi) {
    LL_CHECK(lo <= hi, "clip: lo > hi");
    return unary_op(
        x, [lo, hi](float v) { return v < lo ? lo : (v > hi ? hi : v); },
        [lo, hi](float v, float) { return (v > lo && v < hi) ? 1.0f : 0.0f; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    LL_CHECK_SHAPE(a.shape().size() == 2 && b.shape().size() == 2 &&
                       a.shape()[1] == b.shape()[0],
                   "matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor out({m, n});
    {
        ConstMatMap A(a.value().data(), m, k), B(b.value().data(), k, n);
        MatMap O(out.value().data(), m, n);
        O.noalias() = A * B;
    }
    Tape* tape = Tape::active();
    if (tape && (tape->tracked(a) || tape->tracked(b))) {
        const bool need_a = tape->tracked(a);
        const bool need_b = tape->tracked(b);
        Tensor ta = a, tb = b;
        tape->record(out, [=]() mutable {
            ConstMatMap G(out.grad().data(), m, n);
            if (need_a) {
                ConstMatMap B(tb.value().data(), k, n);
                MatMap GA(ta.grad().data(), m, k);
                GA.noalias() += G * B.transpose();
            }
            if (need_b) {
                ConstMatMap A(ta.value().data(), m, k);
                MatMap GB(tb.grad().data(), k, n);
                GB.noalias() += A.transpose() * G;
            }
        });
    }
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
    return conv2d(x, w, Tensor(), stride, pad);
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    LL_CHECK_SHAPE(x.shape().size() == 4 && w.shape().size() == 4,
                   "conv2d: expected 4-D input and weight, got " + shape_str(x.shape()) +
                       " and " + shape_str(w.shape()));
    const int N = x.shape()[0], Ci = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const int Co = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
    LL_CHECK_SHAPE(w.shape()[1] == Ci, "conv2d: weight in-channels " +
                                           std::to_string(w.shape()[1]) + " != input channels " +
                                           std::to_string(Ci));
    const int Ho = raw::conv_out_dim(H, kh, stride, pad);
    const int Wo = raw::conv_out_dim(W, kw, stride, pad);
    LL_CHECK_SHAPE(Ho > 0 && Wo > 0, "conv2d: kernel larger than padded input");
    const bool has_bias = bias.defined();
    if (has_bias)
        LL_CHECK_SHAPE(bias.size() == Co, "conv2d: bias length " + std::to_string(bias.size()) +
                                              " != out channels " + std::to_string(Co));

    Tensor out({N, Co, Ho, Wo});
    const std::int64_t ckk = static_cast<std::int64_t>(Ci) * kh * kw;
    const std::int64_t ospatial = static_cast<std::int64_t>(Ho) * Wo;
    std::vector<float> col(static_cast<std::size_t>(ckk * ospatial));
    ConstMatMap Wm(w.value().data(), Co, ckk);
    for (int n = 0; n < N; ++n) {
        im2col(x.value().data() + static_cast<std::int64_t>(n) * Ci * H * W, Ci, H, W, kh, kw,
               stride, pad, Ho, Wo, col.data());
        ConstMatMap C(col.data(), ckk, ospatial);
        MatMap O(out.value().data() + static_cast<std::int64_t>(n) * Co * ospatial, Co, ospatial);
        O.noalias() = Wm * C;
        if (has_bias) {
            auto bv = bias.value();
            for (int co = 0; co < Co; ++co) O.row(co).array() += bv[co];
        }
    }

    Tape* tape = Tape::active();
    if (tape && (tape->tracked(x) || tape->tracked(w) || (has_bias && tape->tracked(bias)))) {
        const bool need_x = tape->tracked(x);
        const bool need_w = tape->tracked(w);
        const bool need_b = has_bias && tape->tracked(bias);
        Tensor tx = x, tw = w, tbias = bias;
        tape->record(out, [=]() mutable {
            std::vector<float> col2(static_cast<std::size_t>(ckk * ospatial));
            std::vector<float> dcol(static_cast<std::size_t>(ckk * ospatial));
            for (int n = 0; n < N; ++n) {
                ConstMatMap G(out.grad().data() + static_cast<std::int64_t>(n) * Co * ospatial,
                              Co, ospatial);
                if (need_w || need_x) {
                    if (need_w) {
                        im2col(tx.value().data() + static_cast<std::int64_t>(n) * Ci * H * W, Ci,
                               H, W, kh, kw, stride, pad, Ho, Wo, col2.data());
                        ConstMatMap C(col2.data(), ckk, ospatial);
                        MatMap GW(tw.grad().data(), Co, ckk);
                        GW.noalias() += G * C.transpose();
                    }
                    if (need_x) {
                        ConstMatMap Wm2(tw.value().data(), Co, ckk);
                        MatMap DC(dcol.data(), ckk, ospatial);
                        DC.noalias() = Wm2.transpose() * G;
                        col2im_add(dcol.data(), Ci, H, W, kh, kw, stride, pad, Ho, Wo,
                                   tx.grad().data() + static_cast<std::int64_t>(n) * Ci * H * W);
                    }
                }
                if (need_b) {
                    auto gb = tbias.grad();
                    for (int co = 0; co < Co; ++co) {
                        double s = 0.0;
                        const float* gr =
                            out.grad().data() + (static_cast<std::int64_t>(n) * Co + co) * ospatial;
                        for (std::int64_t i = 0; i < ospatial; ++i) s += gr[i];
                        gb[co] += static_cast<float>(s);
                    }
                }
            }
        });
    }
    return out;
}

Tensor softmax(const Tensor& logits) {
    LL_CHECK_SHAPE(logits.shape().size() == 2,
                   "softmax: expected 2-D logits, got " + shape_str(logits.shape()));
    const int N = logits.shape()[0], K = logits.shape()[1];
    Tensor out({N, K});
    auto lv = logits.value();
    auto ov = out.value();
    for (int n = 0; n < N; ++n) {
        const float* row = lv.data() + static_cast<std::int64_t>(n) * K;
        float* orow = ov.data() + static_cast<std::int64_t>(n) * K;
        float mx = row[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double z = 0.0;
        for (int k = 0; k < K; ++k) {
            orow[k] = std::exp(row[k] - mx);
            z += orow[k];
        }
        const float inv = static_cast<float>(1.0 / z);
        for (int k = 0; k < K; ++k) orow[k] *= inv;
    }
    Tape* tape = Tape::active();
    if (tape && tape->tracked(logits)) {
        Tensor tl = logits;
        tape->record(out, [=]() mutable {
            auto g = out.grad();
            auto y = out.value();
            auto gl = tl.grad();
            for (int n = 0; n < N; ++n) {
                const std::int64_t off = static_cast<std::int64_t>(n) * K;
                double dot = 0.0;
                for (int k = 0; k < K; ++k) dot += static_cast<double>(g[off + k]) * y[off + k];
                for (int k = 0; k < K; ++k)
                    gl[off + k] += y[off + k] * (g[off + k] - static_cast<float>(dot));
            }
        });
    }
    return out;
}

Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& labels) {
    LL_CHECK_SHAPE(logits.shape().size() == 2,
                   "cross_entropy: expected 2-D logits, got " + shape_str(logits.shape()));
    const int N = logits.shape()[0], K = logits.shape()[1];
    LL_CHECK_SHAPE(static_cast<int>(labels.size()) == N,
                   "cross_entropy: label count != batch size");
    for (int y : labels)
        LL_CHECK(y >= 0 && y < K, "cross_entropy: label " + std::to_string(y) + " out of range");

    auto lv = logits.value();
    double total = 0.0;
    for (int n = 0; n < N; ++n) {
        const float* row = lv.data() + static_cast<std::int64_t>(n) * K;
        float mx = row[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double z = 0.0;
        for (int k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k]) - mx);
        total += std::log(z) + mx - row[labels[static_cast<std::size_t>(n)]];
    }
    Tensor out = Tensor::scalar(static_cast<float>(total / N));
    Tape* tape = Tape::active();
    if (tape && tape->tracked(logits)) {
        Tensor tl = logits;
        tape->record(out, [=]() mutable {
            const float g = out.grad()[0] / static_cast<float>(N);
            auto gl = tl.grad();
            auto lv2 = tl.value();
            for (int n = 0; n < N; ++n) {
                const std::int64_t off = static_cast<std::int64_t>(n) * K;
                float mx = lv2[off];
                for (int k = 1; k < K; ++k) mx = std::max(mx, lv2[off + k]);
                double z = 0.0;
                for (int k = 0; k < K; ++k) z += std::exp(static_cast<double>(lv2[off + k]) - mx);
                for (int k = 0; k < K; ++k) {
                    const float p = static_cast<float>(
                        std::exp(static_cast<double>(lv2[off + k]) - mx) / z);
                    gl[off + k] += g * (p - (k == labels[static_cast<std::size_t>(n)] ? 1.0f : 0.0f));
                }
            }
        });
    }
    return out;
}

Tensor cross_entropy_soft(const Tensor& logits, const Tensor& targets) {
    LL_CHECK_SHAPE(logits.shape() == targets.shape() && logits.shape().size() == 2,
                   "cross_entropy_soft: logits/targets shape mismatch");
    const int N = logits.shape()[0], K = logits.shape()[1];
    auto lv = logits.value();
    auto tv = targets.value();
    double total = 0.0;
    for (int n = 0; n < N; ++n) {
        const std::int64_t off = static_cast<std::int64_t>(n) * K;
        float mx = lv[off];
        for (int k = 1; k < K; ++k) mx = std::max(mx, lv[off + k]);
        double z = 0.0;
        for (int k = 0; k < K; ++k) z += std::exp(static_cast<double>(lv[off + k]) - mx);
        const double lse = std::log(z) + mx;
        for (int k = 0; k < K; ++k) total += tv[off + k] * (lse - lv[off + k]);
    }
    Tensor out = Tensor::scalar(static_cast<float>(total / N));
    Tape* tape = Tape::active();
    if (tape && tape->tracked(logits)) {
        Tensor tl = logits, tt = targets;
        tape->record(out, [=]() mutable {
            const float g = out.grad()[0] / static_cast<float>(N);
            auto gl = tl.grad();
            auto lv2 = tl.value();
            auto tv2 = tt.value();
            for (int n = 0; n < N; ++n) {
                const std::int64_t off = static_cast<std::int64_t>(n) * K;
                float mx = lv2[off];
                for (int k = 1; k < K; ++k) mx = std::max(mx, lv2[off + k]);
                double z = 0.0, tsum = 0.0;
                for (int k = 0; k < K; ++k) {
                    z += std::exp(static_cast<double>(lv2[off + k]) - mx);
                    tsum += tv2[off + k];
                }
                for (int k = 0; k < K; ++k) {
                    const float p = static_cast<float>(
                        std::exp(static_cast<double>(lv2[off + k]) - mx) / z);
                    gl[off + k] += g * (static_cast<float>(tsum) * p - tv2[off + k]);
                }
            }
        });
    }
    return out;
}

Tensor sum(const Tensor& x) {
    auto xv = x.value();
    double s = 0.0;
    for (float v : xv) s += v;
    Tensor out = Tensor::scalar(static_cast<float>(s));
    Tape* tape = Tape::active();
    if (tape && tape->tracked(x)) {
        Tensor tx = x;
        tape->record(out, [=]() mutable {
            const float g = out.grad()[0];
            auto gx = tx.grad();
            for (auto& v : gx) v += g;
        });
    }
    return out;
}

Tensor mean(const Tensor& x) {
    const std::int64_t n = x.size();
    auto xv = x.value();
    double s = 0.0;
    for (float v : xv) s += v;
    Tensor out = Tensor::scalar(static_cast<float>(s / static_cast<double>(n)));
    Tape* tape = Tape::active();
    if (tape && tape->tracked(x)) {
        Tensor tx = x;
        tape->record(out, [=]() mutable {
            const float g = out.grad()[0] / static_cast<float>(n);
            auto gx = tx.grad();
            for (auto& v : gx) v += g;
        });
    }
    return out;
}

Tensor max_pool2d(const Tensor& x) {
    LL_CHECK_SHAPE(x.shape().size() == 4,
                   "max_pool2d: expected 4-D input, got " + shape_str(x.shape()));
    const int N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const int Ho = H / 2, Wo = W / 2;
    LL_CHECK_SHAPE(Ho > 0 && Wo > 0, "max_pool2d: input too small");
    Tensor out({N, C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
    auto xv = x.value();
    auto ov = out.value();
    std::int64_t oi = 0;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * H * W;
            for (int ho = 0; ho < Ho; ++ho) {
                for (int wo = 0; wo < Wo; ++wo, ++oi) {
                    float best = -std::numeric_limits<float>::infinity();
                    std::int64_t bi = -1;
                    for (int di = 0; di < 2; ++di) {
                        for (int dj = 0; dj < 2; ++dj) {
                            const std::int64_t idx =
                                base + static_cast<std::int64_t>(ho * 2 + di) * W + (wo * 2 + dj);
                            if (xv[idx] > best) {
                                best = xv[idx];
                                bi = idx;
                            }
                        }
                    }
                    ov[oi] = best;
                    (*argmax)[oi] = bi;
                }
            }
        }
    }
    Tape* tape = Tape::active();
    if (tape && tape->tracked(x)) {
        Tensor tx = x;
        tape->record(out, [=]() mutable {
            auto g = out.grad();
            auto gx = tx.grad();
            for (std::int64_t i = 0; i < out.size(); ++i) gx[(*argmax)[i]] += g[i];
        });
    }
    return out;
}

Tensor global_avg_pool(const Tensor& x) {
    LL_CHECK_SHAPE(x.shape().size() == 4,
                   "global_avg_pool: expected 4-D input, got " + shape_str(x.shape()));
    const int N = x.shape()[0], C = x.shape()[1];
    const std::int64_t plane = static_cast<std::int64_t>(x.shape()[2]) * x.shape()[3];
    Tensor out({N, C});
    auto xv = x.value();
    auto ov = out.value();
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(N) * C; ++i) {
        double s = 0.0;
        const float* p = xv.data() + i * plane;
        for (std::int64_t j = 0; j < plane; ++j) s += p[j];
        ov[i] = static_cast<float>(s / static_cast<double>(plane));
    }
    Tape* tape = Tape::active();
    if (tape && tape->tracked(x)) {
        Tensor tx = x;
        tape->record(out, [=]() mutable {
            auto g = out.grad();
            auto gx = tx.grad();
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(N) * C; ++i) {
                const float gi = g[i] / static_cast<float>(plane);
                float* p = gx.data() + i * plane;
                for (std::int64_t j = 0; j < plane; ++j) p[j] += gi;
            }
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    LL_CHECK_SHAPE(numel(shape) == x.size(),
                   "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    Tensor out = Tensor::from(std::move(shape),
                              std::vector<float>(x.value().begin(), x.value().end()));
    Tape* tape = Tape::active();
    if (tape && tape->tracked(x)) {
        Tensor tx = x;
        tape->record(out, [=]() mutable {
            auto g = out.grad();
            auto gx = tx.grad();
            for (std::int64_t i = 0; i < tx.size(); ++i) gx[i] += g[i];
        });
    }
    return out;
}

namespace raw {

void conv2d_forward(const float* x, const float* w, const float* bias, float* y, int N, int Ci,
                    int H, int W, int Co, int kh, int kw, int stride, int pad) {
    const int Ho = conv_out_dim(H, kh, stride, pad);
    const int Wo = conv_out_dim(W, kw, stride, pad);
    const std::int64_t ckk = static_cast<std::int64_t>(Ci) * kh * kw;
    const std::int64_t ospatial = static_cast<std::int64_t>(Ho) * Wo;
    std::vector<float> col(static_cast<std::size_t>(ckk * ospatial));
    ConstMatMap Wm(w, Co, ckk);
    for (int n = 0; n < N; ++n) {
        im2col(x + static_cast<std::int64_t>(n) * Ci * H * W, Ci, H, W, kh, kw, stride, pad, Ho,
               Wo, col.data());
        ConstMatMap C(col.data(), ckk, ospatial);
        MatMap O(y + static_cast<std::int64_t>(n) * Co * ospatial, Co, ospatial);
        O.noalias() = Wm * C;
        if (bias) {
            for (int co = 0; co < Co; ++co) O.row(co).array() += bias[co];
        }
    }
}

void conv2d_grad_input(const float* dy, const float* w, float* dx, int N, int Ci, int H, int W,
                       int Co, int kh, int kw, int stride, int pad) {
    const int Ho = conv_out_dim(H, kh, stride, pad);
    const int Wo = conv_out_dim(W, kw, stride, pad);
    const std::int64_t ckk = static_cast<std::int64_t>(Ci) * kh * kw;
    const std::int64_t ospatial = static_cast<std::int64_t>(Ho) * Wo;
    std::vector<float> dcol(static_cast<std::size_t>(ckk * ospatial));
    ConstMatMap Wm(w, Co, ckk);
    std::fill(dx, dx + static_cast<std::int64_t>(N) * Ci * H * W, 0.0f);
    for (int n = 0; n < N; ++n) {
        ConstMatMap G(dy + static_cast<std::int64_t>(n) * Co * ospatial, Co, ospatial);
        MatMap DC(dcol.data(), ckk, ospatial);
        DC.noalias() = Wm.transpose() * G;
        col2im_add(dcol.data(), Ci, H, W, kh, kw, stride, pad, Ho, Wo,
                   dx + static_cast<std::int64_t>(n) * Ci * H * W);
    }
}

}  // namespace raw

}  // namespace learnlock::ops
