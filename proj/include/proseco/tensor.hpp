#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "proseco/errors.hpp"

namespace proseco {

// Dense f32 tensor with reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared node holding shape, values and an
// optional gradient buffer. Ops record a backward closure onto the thread's
// active Tape only while a Tape::Scope is alive and some input requires
// gradients; otherwise they evaluate eagerly and the result is a constant.
// The teacher side of training runs outside any scope and therefore never
// receives gradients.
class Tensor {
public:
    struct Node {
        std::vector<int> shape;
        std::vector<float> value;
        std::vector<float> grad;  // empty until first accumulation
        bool requires_grad = false;
    };

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, float v);
    static Tensor from(std::vector<int> shape, std::vector<float> values);
    static Tensor scalar(float v) { return from({1}, {v}); }
    /// Leaf participating in differentiation (parameters, grad-check inputs).
    static Tensor leaf(std::vector<int> shape, std::vector<float> values);

    bool defined() const { return n_ != nullptr; }
    const std::vector<int>& shape() const { return node().shape; }
    int dim(int i) const { return node().shape.at(static_cast<size_t>(i)); }
    int rank() const { return static_cast<int>(node().shape.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(node().value.size()); }
    bool is_scalar() const { return numel() == 1; }
    bool requires_grad() const { return node().requires_grad; }

    std::span<const float> vals() const { return node().value; }
    std::span<float> mutable_vals() { return node().value; }
    float item() const;
    float at(int i) const { return node().value.at(static_cast<size_t>(i)); }
    float at(int r, int c) const;

    bool has_grad() const { return !node().grad.empty(); }
    std::span<const float> grad() const;
    void zero_grad() { node().grad.clear(); }
    void accumulate_grad(std::span<const float> g);

    /// Detached copy of the values (constant, off-tape).
    Tensor detached() const { return from(shape(), {node().value.begin(), node().value.end()}); }

    Node& node() const {
        if (!n_) throw ContractError("tensor: undefined handle");
        return *n_;
    }
    const std::shared_ptr<Node>& ptr() const { return n_; }

private:
    explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}
    std::shared_ptr<Node> n_;

    friend class Tape;
};

// Ordered record of differentiable ops. Creation order is topological by
// construction; backward() replays it once, in reverse.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Activates `t` as the recording target for the current thread.
    class Scope {
    public:
        explicit Scope(Tape& t);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;
    };

    static Tape* active();

    void record(std::shared_ptr<Tensor::Node> out, std::function<void(const Tensor::Node&)> back);
    bool contains(const Tensor& t) const;
    size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

    /// Seeds d(loss)/d(loss)=1 and propagates to every reachable
    /// requires_grad tensor. Gradients accumulate additively across fan-out.
    void backward(const Tensor& loss);

private:
    struct Entry {
        std::shared_ptr<Tensor::Node> out;
        std::function<void(const Tensor::Node&)> back;
    };
    std::vector<Entry> entries_;
};

// ---- op set ----------------------------------------------------------------

/// c = op(a,b) matrix product with optional operand transposition.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

/// Elementwise sum; also accepts a rank-1 bias broadcast over the rows of a.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Row softmax over unmasked entries; masked entries are exactly zero.
/// mask is row-major r*c, nonzero = keep. Empty mask keeps everything.
/// Stabilized by subtracting the row max over unmasked entries.
Tensor masked_softmax_rows(const Tensor& logits, const std::vector<std::uint8_t>& mask);
Tensor softmax_rows(const Tensor& logits);

Tensor l2_normalize_rows(const Tensor& a);

/// out[i, :] = a[idx[i], :]; backward scatter-adds into the gathered rows.
Tensor gather_rows(const Tensor& a, const std::vector<int>& idx);
Tensor concat_rows(const std::vector<Tensor>& parts);

// Compositions of the primitive set (no dedicated backward rules).
Tensor neg(const Tensor& a);
Tensor tabs(const Tensor& a);
Tensor tmax(const Tensor& a, const Tensor& b);
Tensor tmin(const Tensor& a, const Tensor& b);
/// 1/x for strictly positive x, as exp(-log(x)).
Tensor reciprocal(const Tensor& a);

namespace detail {
/// Extension point used internally by primitive ops; also lets tests build an
/// op with a deliberately wrong backward rule as a grad-check negative control.
Tensor make_op(std::vector<int> shape, std::vector<float> value,
               const std::vector<Tensor>& inputs,
               std::function<void(const Tensor::Node&)> back);
}  // namespace detail

// ---- gradient verification --------------------------------------------------

struct GradCheckReport {
    // max over coordinates of |analytic - numeric| / (|numeric| + floor);
    // rel < 1e-2 matches the usual rtol 1e-2 / atol 1e-3 acceptance envelope
    float max_rel_err = 0.f;
    float max_abs_diff = 0.f;
    int worst_index = -1;
};

/// Central-difference check of d(f)/dx at x. f must be scalar-valued and
/// deterministic (verified by double evaluation). Numeric side accumulates
/// in 64-bit.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, float step);

}  // namespace proseco
