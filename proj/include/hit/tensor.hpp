#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hit/common.hpp"

namespace hit {

class Tape;
struct TapeState;

// Autodiff bookkeeping attached to a tensor. Shared between value copies so
// that every copy of a parameter refers to the same tape leaf.
struct GradMeta {
    bool requires_grad = false;
    std::weak_ptr<TapeState> tape;
    int node = -1;
};

// Dense row-major N-d array. Immutable after construction: kernels fill the
// buffer while building a result and never touch it afterwards, so tensors
// are safe to share across threads.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<real> values);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, real value);
    static Tensor scalar(real value) { return Tensor({1}, {value}); }
    static Tensor eye(int n);

    bool defined() const { return data_ != nullptr; }
    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const;

    const real* data() const { return data_->data(); }
    // Construction-time access only; results are frozen once returned.
    real* mutable_data() { return data_->data(); }

    real at(std::initializer_list<int> idx) const;
    real item() const;  // single-element tensors

    bool requires_grad() const { return meta_ && meta_->requires_grad; }
    Tensor& set_requires_grad(bool v);

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;
    bool all_finite() const;

    // Shares the buffer under a new shape (same element count). The result
    // carries no autodiff metadata; the reshape op records its own node.
    Tensor reshaped(std::vector<int> new_shape) const;

private:
    std::vector<int> shape_;
    std::shared_ptr<std::vector<real>> data_;
    std::shared_ptr<GradMeta> meta_;

    friend class Tape;
    friend class GradMap;
};

std::string shape_to_string(const std::vector<int>& shape);

// Gradients produced by one backward() sweep, addressed by the primal
// tensors that were tracked on the tape.
class GradMap {
public:
    bool has(const Tensor& t) const;
    // Gradient of the loss w.r.t. t; undefined Tensor when t never received one.
    Tensor grad(const Tensor& t) const;

private:
    std::shared_ptr<TapeState> state_;
    std::vector<Tensor> grads_;
    friend class Tape;
};

// Reverse-mode tape. Define-by-run: ops record themselves while the tape is
// active. Single-writer: constructing a second active tape throws.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active() noexcept;

    // Node id of t on this tape; registers a leaf when t requires_grad.
    // Returns -1 for untracked tensors.
    int track(const Tensor& t);

    // Records an op node. parents holds node ids aligned with the gradients
    // grad_fn returns (-1 entries and undefined gradients are skipped).
    void record(Tensor& result, std::vector<int> parents,
                std::function<std::vector<Tensor>(const Tensor&)> grad_fn);

    // Reverse sweep from a tracked scalar loss. Visits nodes exactly once,
    // in reverse insertion order. Seed: d loss / d loss = 1.
    GradMap backward(const Tensor& loss) const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        std::vector<int> parents;
        std::function<std::vector<Tensor>(const Tensor&)> grad_fn;
        std::vector<int> shape;
    };
    std::vector<Node> nodes_;
    std::shared_ptr<TapeState> state_;
};

}  // namespace hit
