#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "learnlock/common.hpp"

namespace learnlock {

class Tape;

namespace detail {

struct TensorData {
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad;  // empty until first needed
    bool requires_grad = false;
    Tape* tape = nullptr;  // tape that produced this tensor, if any
    std::uint64_t tape_id = 0;
    int node = -1;

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0f);
    }
};

}  // namespace detail

/// Dense row-major f32 tensor with shared-value semantics. Copies are
/// handles to the same buffer; use clone() for a deep copy.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, float fill = 0.0f, bool requires_grad = false)
        : d_(std::make_shared<detail::TensorData>()) {
        d_->shape = std::move(shape);
        d_->value.assign(static_cast<std::size_t>(numel(d_->shape)), fill);
        d_->requires_grad = requires_grad;
    }

    static Tensor from(Shape shape, std::vector<float> data, bool requires_grad = false) {
        LL_CHECK_SHAPE(numel(shape) == static_cast<std::int64_t>(data.size()),
                       "tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
        Tensor t;
        t.d_ = std::make_shared<detail::TensorData>();
        t.d_->shape = std::move(shape);
        t.d_->value = std::move(data);
        t.d_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(float v, bool requires_grad = false) {
        return from({1}, {v}, requires_grad);
    }

    bool defined() const { return d_ != nullptr; }
    const Shape& shape() const { return d_->shape; }
    std::int64_t size() const { return static_cast<std::int64_t>(d_->value.size()); }

    std::span<float> value() { return d_->value; }
    std::span<const float> value() const { return d_->value; }
    float item() const {
        LL_CHECK_SHAPE(size() == 1, "item() on non-scalar tensor " + shape_str(shape()));
        return d_->value[0];
    }

    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool rg) { d_->requires_grad = rg; }

    bool has_grad() const { return !d_->grad.empty(); }
    std::span<float> grad() {
        d_->ensure_grad();
        return d_->grad;
    }
    std::span<const float> grad() const {
        d_->ensure_grad();
        return d_->grad;
    }
    void zero_grad() {
        if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0f);
    }

    Tensor clone() const {
        return from(d_->shape, d_->value, d_->requires_grad);
    }

    /// View with a new shape over the same buffer (same element count).
    Tensor reshaped(Shape shape) const;

    std::shared_ptr<detail::TensorData> impl() const { return d_; }

private:
    std::shared_ptr<detail::TensorData> d_;
    friend class Tape;
};

/// Records primitive ops in execution order (already topological) and replays
/// their adjoint rules in reverse. One tape per forward pass; recording is
/// single-threaded.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    /// Marks `out` as produced on this tape with the given adjoint rule.
    void record(const Tensor& out, std::function<void()> backward);

    /// Whether a tensor participates in gradient flow on this tape.
    bool tracked(const Tensor& t) const {
        const auto& d = *t.impl();
        return d.requires_grad || (d.tape == this && d.tape_id == id_ && d.node >= 0);
    }

    /// Reverse pass from a scalar loss. Leaf gradients accumulate across
    /// calls; intermediate gradients are reset per call.
    void backward(const Tensor& loss);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::shared_ptr<detail::TensorData> out;
        std::function<void()> backward;
    };
    std::vector<Node> nodes_;
    Tape* prev_ = nullptr;
    // Distinguishes this tape from a destroyed one reusing the same address.
    std::uint64_t id_ = 0;
};

}  // namespace learnlock
