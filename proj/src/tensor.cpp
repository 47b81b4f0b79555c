#include "hit/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace hit {

struct TapeState {
    Tape* owner = nullptr;
};

namespace {
Tape* g_active_tape = nullptr;

std::int64_t product(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor extents must be positive, got " + shape_to_string(shape));
        n *= d;
    }
    return n;
}
}  // namespace

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<real>>(static_cast<std::size_t>(product(shape_)), real(0))) {}

Tensor::Tensor(std::vector<int> shape, std::vector<real> values) : shape_(std::move(shape)) {
    const std::int64_t n = product(shape_);
    if (n != static_cast<std::int64_t>(values.size()))
        throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_to_string(shape_));
    data_ = std::make_shared<std::vector<real>>(std::move(values));
}

Tensor Tensor::full(std::vector<int> shape, real value) {
    Tensor t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), value);
    return t;
}

Tensor Tensor::eye(int n) {
    Tensor t({n, n});
    for (int i = 0; i < n; ++i) t.mutable_data()[static_cast<std::size_t>(i) * n + i] = real(1);
    return t;
}

std::int64_t Tensor::numel() const {
    if (!defined()) return 0;
    return static_cast<std::int64_t>(data_->size());
}

real Tensor::at(std::initializer_list<int> idx) const {
    std::int64_t flat = 0;
    std::size_t axis = 0;
    for (int i : idx) {
        flat = flat * shape_[axis] + i;
        ++axis;
    }
    return (*data_)[static_cast<std::size_t>(flat)];
}

real Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() requires a single-element tensor, got " + shape_str());
    return (*data_)[0];
}

Tensor& Tensor::set_requires_grad(bool v) {
    if (!meta_) meta_ = std::make_shared<GradMeta>();
    meta_->requires_grad = v;
    return *this;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
    std::int64_t n = 1;
    for (int d : new_shape) n *= d;
    if (n != numel())
        throw ShapeError("cannot reshape " + shape_str() + " to " + shape_to_string(new_shape));
    Tensor t;
    t.shape_ = std::move(new_shape);
    t.data_ = data_;
    return t;
}

bool Tensor::all_finite() const {
    for (real v : *data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tape::Tape() : state_(std::make_shared<TapeState>()) {
    if (g_active_tape) throw TapeError("a tape is already active; the tape is single-writer");
    state_->owner = this;
    g_active_tape = this;
}

Tape::~Tape() {
    state_->owner = nullptr;
    g_active_tape = nullptr;
}

Tape* Tape::active() noexcept { return g_active_tape; }

int Tape::track(const Tensor& t) {
    if (!t.defined()) return -1;
    if (t.meta_ && t.meta_->node >= 0) {
        if (auto s = t.meta_->tape.lock(); s && s->owner == this) return t.meta_->node;
    }
    if (!t.meta_ || !t.meta_->requires_grad) return -1;
    // First touch of a leaf on this tape.
    nodes_.push_back(Node{{}, nullptr, t.shape_});
    t.meta_->tape = state_;
    t.meta_->node = static_cast<int>(nodes_.size()) - 1;
    return t.meta_->node;
}

void Tape::record(Tensor& result, std::vector<int> parents,
                  std::function<std::vector<Tensor>(const Tensor&)> grad_fn) {
    nodes_.push_back(Node{std::move(parents), std::move(grad_fn), result.shape_});
    if (!result.meta_) result.meta_ = std::make_shared<GradMeta>();
    result.meta_->tape = state_;
    result.meta_->node = static_cast<int>(nodes_.size()) - 1;
}

GradMap Tape::backward(const Tensor& loss) const {
    if (!loss.meta_ || loss.meta_->node < 0)
        throw TapeError("backward() called on a tensor that is not tracked on any tape");
    if (auto s = loss.meta_->tape.lock(); !s || s->owner != this)
        throw TapeError("backward() called on a tensor tracked by a different tape");
    if (loss.numel() != 1)
        throw TapeError("backward() requires a scalar loss, got shape " + loss.shape_str());

    GradMap out;
    out.state_ = state_;
    out.grads_.resize(nodes_.size());
    out.grads_[static_cast<std::size_t>(loss.meta_->node)] = Tensor::full(loss.shape(), real(1));

    for (int i = loss.meta_->node; i >= 0; --i) {
        const Node& node = nodes_[static_cast<std::size_t>(i)];
        Tensor& gout = out.grads_[static_cast<std::size_t>(i)];
        if (!gout.defined() || !node.grad_fn) continue;
        std::vector<Tensor> pg = node.grad_fn(gout);
        for (std::size_t k = 0; k < node.parents.size(); ++k) {
            const int p = node.parents[k];
            if (p < 0 || k >= pg.size() || !pg[k].defined()) continue;
            if (pg[k].shape() != nodes_[static_cast<std::size_t>(p)].shape)
                throw TapeError("gradient shape " + pg[k].shape_str() + " does not match primal shape " +
                                shape_to_string(nodes_[static_cast<std::size_t>(p)].shape));
            Tensor& slot = out.grads_[static_cast<std::size_t>(p)];
            if (!slot.defined()) {
                slot = pg[k];
            } else {
                Tensor sum(slot.shape());
                const real* a = slot.data();
                const real* b = pg[k].data();
                real* d = sum.mutable_data();
                const std::int64_t n = sum.numel();
                for (std::int64_t j = 0; j < n; ++j) d[j] = a[j] + b[j];
                slot = sum;
            }
        }
    }
    return out;
}

bool GradMap::has(const Tensor& t) const { return grad(t).defined(); }

Tensor GradMap::grad(const Tensor& t) const {
    if (!t.meta_ || t.meta_->node < 0) return Tensor();
    auto s = t.meta_->tape.lock();
    if (!s || s != state_) return Tensor();
    const auto idx = static_cast<std::size_t>(t.meta_->node);
    if (idx >= grads_.size()) return Tensor();
    return grads_[idx];
}

}  // namespace hit
