#include "learnlock/tensor.hpp"

namespace learnlock {

namespace {
Tape* g_active = nullptr;
std::uint64_t g_tape_counter = 0;
}

Tensor Tensor::reshaped(Shape shape) const {
    LL_CHECK_SHAPE(numel(shape) == size(),
                   "reshape " + shape_str(d_->shape) + " -> " + shape_str(shape));
    Tensor t;
    t.d_ = std::make_shared<detail::TensorData>(*d_);
    t.d_->shape = std::move(shape);
    // Gradient flow for reshape is handled in ops (reshape op); a bare
    // reshaped() view is value-only.
    t.d_->tape = nullptr;
    t.d_->tape_id = 0;
    t.d_->node = -1;
    return t;
}

Tape::Tape() {
    prev_ = g_active;
    g_active = this;
    id_ = ++g_tape_counter;
}

Tape::~Tape() {
    g_active = prev_;
}

Tape* Tape::active() { return g_active; }

void Tape::record(const Tensor& out, std::function<void()> backward) {
    auto d = out.impl();
    d->tape = this;
    d->tape_id = id_;
    d->node = static_cast<int>(nodes_.size());
    nodes_.push_back({std::move(d), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    LL_CHECK_SHAPE(loss.size() == 1, "backward() requires a scalar loss");
    const auto& ld = *loss.impl();
    LL_CHECK(ld.tape == this && ld.tape_id == id_ && ld.node >= 0 &&
                 ld.node < static_cast<int>(nodes_.size()),
             "loss is not reachable from the recorded graph");

    // Intermediates are reset each pass; leaves (not on this tape) keep
    // accumulating.
    for (auto& n : nodes_) {
        if (!n.out->grad.empty()) std::fill(n.out->grad.begin(), n.out->grad.end(), 0.0f);
    }
    loss.impl()->ensure_grad();
    loss.impl()->grad[0] = 1.0f;

    for (int i = ld.node; i >= 0; --i) {
        auto& n = nodes_[static_cast<std::size_t>(i)];
        if (n.out->grad.empty()) continue;  // no gradient reached this node
        if (n.backward) n.backward();
    }
}

}  // namespace learnlock
