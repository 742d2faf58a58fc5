#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lgnn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced by a forward operation, or a domain violation such as log(0).
class NumericError : public Error {
public:
    using Error::Error;
};

/// Misuse of the tape (non-scalar loss, double backward).
class TapeError : public Error {
public:
    using Error::Error;
};

template <class T>
struct TensorStorage {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> value;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
};

/// Dense row-major matrix with an optional gradient buffer.
///
/// Tensor is a handle: copies share storage. Use clone() for a deep copy.
/// Parameters outlive tapes; intermediate tensors are owned by the closures
/// recorded on the tape that produced them.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() : s_(std::make_shared<TensorStorage<T>>()) {}

    Tensor(std::size_t rows, std::size_t cols, bool requires_grad = false)
        : s_(std::make_shared<TensorStorage<T>>()) {
        s_->rows = rows;
        s_->cols = cols;
        s_->value.assign(rows * cols, T(0));
        s_->requires_grad = requires_grad;
    }

    Tensor(std::size_t rows, std::size_t cols, std::vector<T> values, bool requires_grad = false)
        : s_(std::make_shared<TensorStorage<T>>()) {
        if (values.size() != rows * cols) {
            throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                             std::to_string(rows) + "x" + std::to_string(cols));
        }
        s_->rows = rows;
        s_->cols = cols;
        s_->value = std::move(values);
        s_->requires_grad = requires_grad;
    }

    static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false) {
        return Tensor(rows, cols, requires_grad);
    }

    static Tensor filled(std::size_t rows, std::size_t cols, T v, bool requires_grad = false) {
        Tensor t(rows, cols, requires_grad);
        std::fill(t.s_->value.begin(), t.s_->value.end(), v);
        return t;
    }

    /// Builds a tensor from nested rows, e.g. {{1, 2}, {3, 4}}.
    static Tensor from_rows(std::initializer_list<std::initializer_list<T>> rows,
                            bool requires_grad = false) {
        const std::size_t r = rows.size();
        const std::size_t c = r == 0 ? 0 : rows.begin()->size();
        std::vector<T> v;
        v.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw ShapeError("tensor: ragged row list");
            v.insert(v.end(), row.begin(), row.end());
        }
        return Tensor(r, c, std::move(v), requires_grad);
    }

    std::size_t rows() const { return s_->rows; }
    std::size_t cols() const { return s_->cols; }
    std::size_t size() const { return s_->value.size(); }
    bool is_scalar() const { return s_->rows == 1 && s_->cols == 1; }

    std::span<T> data() { return s_->value; }
    std::span<const T> data() const { return s_->value; }
    std::vector<T>& values() { return s_->value; }
    const std::vector<T>& values() const { return s_->value; }

    T& operator()(std::size_t r, std::size_t c) { return s_->value[r * s_->cols + c]; }
    T operator()(std::size_t r, std::size_t c) const { return s_->value[r * s_->cols + c]; }
    T item() const {
        if (!is_scalar()) throw ShapeError("tensor: item() on non-scalar");
        return s_->value[0];
    }

    std::span<T> row(std::size_t r) { return {s_->value.data() + r * s_->cols, s_->cols}; }
    std::span<const T> row(std::size_t r) const {
        return {s_->value.data() + r * s_->cols, s_->cols};
    }

    bool requires_grad() const { return s_->requires_grad; }
    void set_requires_grad(bool on) { s_->requires_grad = on; }

    bool has_grad() const { return !s_->grad.empty(); }
    /// Gradient buffer, allocated (zeroed) on first access. The handle is
    /// shallow-const: copies captured by backward rules share the buffer.
    std::span<T> grad() const {
        if (s_->grad.empty()) s_->grad.assign(s_->value.size(), T(0));
        return s_->grad;
    }
    void zero_grad() { std::fill(s_->grad.begin(), s_->grad.end(), T(0)); }
    void clear_grad() { s_->grad.clear(); }

    Tensor clone() const {
        Tensor t;
        *t.s_ = *s_;
        return t;
    }

    bool same_storage(const Tensor& other) const { return s_ == other.s_; }
    const void* id() const { return s_.get(); }

private:
    std::shared_ptr<TensorStorage<T>> s_;
};

/// Ordered record of differentiable operations for one forward pass.
///
/// Each node stores the identities of its inputs and output and a closure
/// that propagates the output gradient into the inputs. A tape is built per
/// training step and consumed by a single backward().
template <class T>
class Tape {
public:
    struct Node {
        std::string op;
        std::vector<const void*> inputs;
        const void* output = nullptr;
        std::function<void()> backward;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) noexcept = default;
    Tape& operator=(Tape&&) noexcept = default;

    /// A tape that records nothing; ops evaluated against it produce
    /// tensors with requires_grad == false.
    static Tape inference() {
        Tape t;
        t.recording_ = false;
        return t;
    }

    bool recording() const { return recording_; }
    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }
    const std::vector<Node>& nodes() const { return nodes_; }

    /// True when an op on these inputs must be recorded.
    template <class... Ts>
    bool wants(const Ts&... inputs) const {
        return recording_ && (inputs.requires_grad() || ...);
    }

    void record(std::string op, std::vector<const void*> inputs, const void* output,
                std::function<void()> backward) {
        if (consumed_) throw TapeError("tape: record after backward");
        nodes_.push_back({std::move(op), std::move(inputs), output, std::move(backward)});
    }

    /// Seeds d(loss)/d(loss) = 1 and replays the recorded rules in reverse.
    void backward(Tensor<T>& loss) {
        if (!loss.is_scalar()) {
            throw TapeError("backward: loss must be 1x1, got " + std::to_string(loss.rows()) +
                            "x" + std::to_string(loss.cols()));
        }
        if (consumed_) throw TapeError("backward: tape already consumed");
        consumed_ = true;
        if (!loss.requires_grad()) return;
        loss.grad()[0] += T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
    }

private:
    std::vector<Node> nodes_;
    bool recording_ = true;
    bool consumed_ = false;
};

namespace detail {

template <class T>
void check_finite(const Tensor<T>& t, const char* op) {
    for (T v : t.data()) {
        if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite output");
    }
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
}

}  // namespace detail

}  // namespace lgnn
