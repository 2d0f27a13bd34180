#include "proseco/tensor.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

namespace proseco {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("tensor: negative dimension");
        n *= d;
    }
    return n;
}

#ifndef NDEBUG
void check_finite(const std::vector<float>& v, const char* op) {
    for (float x : v) assert(std::isfinite(x) && op);
    (void)op;
}
#else
void check_finite(const std::vector<float>&, const char*) {}
#endif

bool any_requires_grad(const std::vector<Tensor>& ts) {
    for (const auto& t : ts)
        if (t.requires_grad()) return true;
    return false;
}

void ensure_grad(Tensor::Node& n) {
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.f);
}

// Row-major gemm with transposition flags, f32 inputs, f32 output.
std::vector<float> raw_gemm(const std::vector<float>& a, int ar, int ac,
                            const std::vector<float>& b, int br, int bc,
                            bool ta, bool tb) {
    const int m = ta ? ac : ar;
    const int k = ta ? ar : ac;
    const int kb = tb ? bc : br;
    const int n = tb ? br : bc;
    if (k != kb) throw ShapeError("matmul: inner dimensions disagree");
    std::vector<float> c(static_cast<size_t>(m) * n, 0.f);
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const float av = ta ? a[static_cast<size_t>(p) * ac + i]
                                : a[static_cast<size_t>(i) * ac + p];
            if (av == 0.f) continue;
            const float* brow = tb ? nullptr : &b[static_cast<size_t>(p) * bc];
            float* crow = &c[static_cast<size_t>(i) * n];
            if (tb) {
                for (int j = 0; j < n; ++j)
                    crow[j] += av * b[static_cast<size_t>(j) * bc + p];
            } else {
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
    return c;
}

void require_rank2(const Tensor& t, const char* who) {
    if (t.rank() != 2) throw ShapeError(std::string(who) + ": expected a rank-2 tensor");
}

}  // namespace

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape) {
    return full(std::move(shape), 0.f);
}

Tensor Tensor::full(std::vector<int> shape, float v) {
    auto n = std::make_shared<Node>();
    const auto count = shape_numel(shape);
    n->shape = std::move(shape);
    n->value.assign(static_cast<size_t>(count), v);
    return Tensor(std::move(n));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<float> values) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
        throw ShapeError("tensor: shape does not match value count");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    return Tensor(std::move(n));
}

Tensor Tensor::leaf(std::vector<int> shape, std::vector<float> values) {
    Tensor t = from(std::move(shape), std::move(values));
    t.node().requires_grad = true;
    return t;
}

float Tensor::item() const {
    if (!is_scalar()) throw ShapeError("tensor: item() on non-scalar");
    return node().value[0];
}

float Tensor::at(int r, int c) const {
    if (rank() != 2) throw ShapeError("tensor: 2d access on non-matrix");
    return node().value.at(static_cast<size_t>(r) * dim(1) + c);
}

std::span<const float> Tensor::grad() const {
    return node().grad;
}

void Tensor::accumulate_grad(std::span<const float> g) {
    auto& n = node();
    if (g.size() != n.value.size()) throw ShapeError("tensor: gradient shape mismatch");
    ensure_grad(n);
    for (size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

// ---- Tape -------------------------------------------------------------------

Tape::Scope::Scope(Tape& t) {
    if (g_active_tape) throw ContractError("tape: nested scopes are not supported");
    g_active_tape = &t;
}

Tape::Scope::~Scope() { g_active_tape = nullptr; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::shared_ptr<Tensor::Node> out,
                  std::function<void(const Tensor::Node&)> back) {
    entries_.push_back({std::move(out), std::move(back)});
}

bool Tape::contains(const Tensor& t) const {
    for (const auto& e : entries_)
        if (e.out == t.ptr()) return true;
    return false;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.is_scalar()) throw ContractError("backward: loss must be scalar");
    if (!contains(loss)) throw ContractError("backward: loss is not on this tape");
    loss.node().grad.assign(1, 1.f);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (it->out->grad.empty()) continue;  // not reachable from the loss
        it->back(*it->out);
    }
}

// ---- op plumbing ------------------------------------------------------------

namespace detail {

Tensor make_op(std::vector<int> shape, std::vector<float> value,
               const std::vector<Tensor>& inputs,
               std::function<void(const Tensor::Node&)> back) {
    check_finite(value, "op output");
    Tensor out = Tensor::from(std::move(shape), std::move(value));
    Tape* tape = Tape::active();
    if (tape && any_requires_grad(inputs)) {
        out.node().requires_grad = true;
        tape->record(out.ptr(), std::move(back));
    }
    return out;
}

}  // namespace detail

// ---- primitive ops ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const int ar = a.dim(0), ac = a.dim(1), br = b.dim(0), bc = b.dim(1);
    const int m = trans_a ? ac : ar;
    const int n = trans_b ? br : bc;
    auto value = raw_gemm(a.node().value, ar, ac, b.node().value, br, bc, trans_a, trans_b);
    auto an = a.ptr();
    auto bn = b.ptr();
    return detail::make_op(
        {m, n}, std::move(value), {a, b},
        [an, bn, ar, ac, br, bc, m, n, trans_a, trans_b](const Tensor::Node& out) {
            // dA' = g * B'^T ; dB' = A'^T * g, then undo the transposition.
            if (an->requires_grad) {
                auto da = raw_gemm(out.grad, m, n, bn->value, br, bc, false, !trans_b);
                ensure_grad(*an);
                if (!trans_a) {
                    for (size_t i = 0; i < da.size(); ++i) an->grad[i] += da[i];
                } else {
                    // da has shape [m x k] = [ac x ar]; A is [ar x ac]
                    const int k = ar;
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < k; ++j)
                            an->grad[static_cast<size_t>(j) * ac + i] +=
                                da[static_cast<size_t>(i) * k + j];
                }
            }
            if (bn->requires_grad) {
                auto db = raw_gemm(an->value, ar, ac, out.grad, m, n, !trans_a, false);
                ensure_grad(*bn);
                if (!trans_b) {
                    for (size_t i = 0; i < db.size(); ++i) bn->grad[i] += db[i];
                } else {
                    // db has shape [k x n] = [bc x br]; B is [br x bc]
                    const int k = trans_a ? ar : ac;
                    for (int i = 0; i < k; ++i)
                        for (int j = 0; j < n; ++j)
                            bn->grad[static_cast<size_t>(j) * bc + i] +=
                                db[static_cast<size_t>(i) * n + j];
                }
            }
        });
}

Tensor add(const Tensor& a, const Tensor& b) {
    const bool bias = (b.rank() == 1 && a.rank() == 2 && b.dim(0) == a.dim(1));
    if (!bias && a.shape() != b.shape()) throw ShapeError("add: shape mismatch");
    std::vector<float> v(a.vals().begin(), a.vals().end());
    if (bias) {
        const int rows = a.dim(0), cols = a.dim(1);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) v[static_cast<size_t>(i) * cols + j] += b.at(j);
    } else {
        for (size_t i = 0; i < v.size(); ++i) v[i] += b.vals()[i];
    }
    auto an = a.ptr();
    auto bn = b.ptr();
    return detail::make_op(a.shape(), std::move(v), {a, b},
                           [an, bn, bias](const Tensor::Node& out) {
                               if (an->requires_grad) {
                                   ensure_grad(*an);
                                   for (size_t i = 0; i < out.grad.size(); ++i)
                                       an->grad[i] += out.grad[i];
                               }
                               if (bn->requires_grad) {
                                   ensure_grad(*bn);
                                   if (bias) {
                                       const size_t cols = bn->value.size();
                                       for (size_t i = 0; i < out.grad.size(); ++i)
                                           bn->grad[i % cols] += out.grad[i];
                                   } else {
                                       for (size_t i = 0; i < out.grad.size(); ++i)
                                           bn->grad[i] += out.grad[i];
                                   }
                               }
                           });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("mul: shape mismatch");
    std::vector<float> v(a.vals().begin(), a.vals().end());
    for (size_t i = 0; i < v.size(); ++i) v[i] *= b.vals()[i];
    auto an = a.ptr();
    auto bn = b.ptr();
    return detail::make_op(a.shape(), std::move(v), {a, b},
                           [an, bn](const Tensor::Node& out) {
                               if (an->requires_grad) {
                                   ensure_grad(*an);
                                   for (size_t i = 0; i < out.grad.size(); ++i)
                                       an->grad[i] += out.grad[i] * bn->value[i];
                               }
                               if (bn->requires_grad) {
                                   ensure_grad(*bn);
                                   for (size_t i = 0; i < out.grad.size(); ++i)
                                       bn->grad[i] += out.grad[i] * an->value[i];
                               }
                           });
}

Tensor scale(const Tensor& a, float s) {
    std::vector<float> v(a.vals().begin(), a.vals().end());
    for (float& x : v) x *= s;
    auto an = a.ptr();
    return detail::make_op(a.shape(), std::move(v), {a},
                           [an, s](const Tensor::Node& out) {
                               if (!an->requires_grad) return;
                               ensure_grad(*an);
                               for (size_t i = 0; i < out.grad.size(); ++i)
                                   an->grad[i] += out.grad[i] * s;
                           });
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd dydx) {
    std::vector<float> v(a.vals().begin(), a.vals().end());
    for (float& x : v) x = fwd(x);
    auto an = a.ptr();
    return detail::make_op(a.shape(), std::move(v), {a},
                           [an, dydx](const Tensor::Node& out) {
                               if (!an->requires_grad) return;
                               ensure_grad(*an);
                               for (size_t i = 0; i < out.grad.size(); ++i)
                                   an->grad[i] += out.grad[i] * dydx(an->value[i], out.value[i]);
                           });
}

}  // namespace

Tensor exp(const Tensor& a) {
    return unary_op(a, [](float x) { return std::exp(x); },
                    [](float, float y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary_op(a, [](float x) { return std::log(x); },
                    [](float x, float) { return 1.f / x; });
}

Tensor relu(const Tensor& a) {
    return unary_op(a, [](float x) { return x > 0.f ? x : 0.f; },
                    [](float x, float) { return x > 0.f ? 1.f : 0.f; });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(a,
                    [](float x) {
                        return x >= 0.f ? 1.f / (1.f + std::exp(-x))
                                        : std::exp(x) / (1.f + std::exp(x));
                    },
                    [](float, float y) { return y * (1.f - y); });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (float x : a.vals()) acc += x;
    auto an = a.ptr();
    return detail::make_op({1}, {static_cast<float>(acc)}, {a},
                           [an](const Tensor::Node& out) {
                               if (!an->requires_grad) return;
                               ensure_grad(*an);
                               for (float& g : an->grad) g += out.grad[0];
                           });
}

Tensor mean(const Tensor& a) {
    const auto n = a.numel();
    if (n == 0) throw ShapeError("mean: empty tensor");
    double acc = 0.0;
    for (float x : a.vals()) acc += x;
    auto an = a.ptr();
    const float inv = 1.f / static_cast<float>(n);
    return detail::make_op({1}, {static_cast<float>(acc / static_cast<double>(n))}, {a},
                           [an, inv](const Tensor::Node& out) {
                               if (!an->requires_grad) return;
                               ensure_grad(*an);
                               for (float& g : an->grad) g += out.grad[0] * inv;
                           });
}

Tensor masked_softmax_rows(const Tensor& logits, const std::vector<std::uint8_t>& mask) {
    require_rank2(logits, "masked_softmax_rows");
    const int rows = logits.dim(0), cols = logits.dim(1);
    if (!mask.empty() && mask.size() != static_cast<size_t>(rows) * cols)
        throw ShapeError("masked_softmax_rows: mask size mismatch");
    auto keep = [&mask, cols](int r, int c) {
        return mask.empty() || mask[static_cast<size_t>(r) * cols + c] != 0;
    };
    std::vector<float> v(static_cast<size_t>(rows) * cols, 0.f);
    for (int r = 0; r < rows; ++r) {
        // row max over the unmasked entries only
        float mx = -std::numeric_limits<float>::infinity();
        for (int c = 0; c < cols; ++c)
            if (keep(r, c)) mx = std::max(mx, logits.at(r, c));
        if (!std::isfinite(mx))
            throw DegenerateError("masked_softmax_rows: fully masked row " + std::to_string(r));
        double denom = 0.0;
        for (int c = 0; c < cols; ++c) {
            if (!keep(r, c)) continue;
            const float e = std::exp(logits.at(r, c) - mx);
            v[static_cast<size_t>(r) * cols + c] = e;
            denom += e;
        }
        const float inv = static_cast<float>(1.0 / denom);
        for (int c = 0; c < cols; ++c) v[static_cast<size_t>(r) * cols + c] *= inv;
    }
    auto ln = logits.ptr();
    return detail::make_op(
        logits.shape(), std::move(v), {logits},
        [ln, rows, cols](const Tensor::Node& out) {
            if (!ln->requires_grad) return;
            ensure_grad(*ln);
            // dx_c = y_c * (g_c - sum_j g_j y_j); masked entries have y = 0.
            for (int r = 0; r < rows; ++r) {
                const size_t off = static_cast<size_t>(r) * cols;
                double dot = 0.0;
                for (int c = 0; c < cols; ++c) dot += out.grad[off + c] * out.value[off + c];
                for (int c = 0; c < cols; ++c)
                    ln->grad[off + c] += out.value[off + c] *
                                         (out.grad[off + c] - static_cast<float>(dot));
            }
        });
}

Tensor softmax_rows(const Tensor& logits) {
    return masked_softmax_rows(logits, {});
}

Tensor l2_normalize_rows(const Tensor& a) {
    require_rank2(a, "l2_normalize_rows");
    const int rows = a.dim(0), cols = a.dim(1);
    constexpr float kEps = 1e-12f;
    std::vector<float> v(a.vals().begin(), a.vals().end());
    std::vector<float> inv_norm(static_cast<size_t>(rows));
    for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < cols; ++c) {
            const float x = a.at(r, c);
            s += static_cast<double>(x) * x;
        }
        const float inv = 1.f / std::sqrt(static_cast<float>(s) + kEps);
        inv_norm[static_cast<size_t>(r)] = inv;
        for (int c = 0; c < cols; ++c) v[static_cast<size_t>(r) * cols + c] *= inv;
    }
    auto an = a.ptr();
    return detail::make_op(
        a.shape(), std::move(v), {a},
        [an, rows, cols, inv_norm](const Tensor::Node& out) {
            if (!an->requires_grad) return;
            ensure_grad(*an);
            // y = x/r: dx = (g - y (g.y)) / r
            for (int r = 0; r < rows; ++r) {
                const size_t off = static_cast<size_t>(r) * cols;
                double dot = 0.0;
                for (int c = 0; c < cols; ++c) dot += out.grad[off + c] * out.value[off + c];
                const float inv = inv_norm[static_cast<size_t>(r)];
                for (int c = 0; c < cols; ++c)
                    an->grad[off + c] += (out.grad[off + c] -
                                          out.value[off + c] * static_cast<float>(dot)) *
                                         inv;
            }
        });
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& idx) {
    require_rank2(a, "gather_rows");
    const int rows = a.dim(0), cols = a.dim(1);
    std::vector<float> v(idx.size() * static_cast<size_t>(cols));
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= rows) throw ContractError("gather_rows: index out of range");
        std::copy_n(a.vals().begin() + static_cast<size_t>(idx[i]) * cols, cols,
                    v.begin() + i * static_cast<size_t>(cols));
    }
    auto an = a.ptr();
    return detail::make_op({static_cast<int>(idx.size()), cols}, std::move(v), {a},
                           [an, idx, cols](const Tensor::Node& out) {
                               if (!an->requires_grad) return;
                               ensure_grad(*an);
                               for (size_t i = 0; i < idx.size(); ++i)
                                   for (int c = 0; c < cols; ++c)
                                       an->grad[static_cast<size_t>(idx[i]) * cols + c] +=
                                           out.grad[i * static_cast<size_t>(cols) + c];
                           });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const int cols = parts[0].rank() == 2 ? parts[0].dim(1) : 0;
    int rows = 0;
    std::vector<float> v;
    for (const auto& p : parts) {
        require_rank2(p, "concat_rows");
        if (p.dim(1) != cols) throw ShapeError("concat_rows: column mismatch");
        rows += p.dim(0);
        v.insert(v.end(), p.vals().begin(), p.vals().end());
    }
    std::vector<std::shared_ptr<Tensor::Node>> nodes;
    nodes.reserve(parts.size());
    for (const auto& p : parts) nodes.push_back(p.ptr());
    return detail::make_op({rows, cols}, std::move(v), parts,
                           [nodes, cols](const Tensor::Node& out) {
                               size_t off = 0;
                               for (const auto& n : nodes) {
                                   const size_t count = n->value.size();
                                   if (n->requires_grad) {
                                       ensure_grad(*n);
                                       for (size_t i = 0; i < count; ++i)
                                           n->grad[i] += out.grad[off + i];
                                   }
                                   off += count;
                               }
                               (void)cols;
                           });
}

// ---- compositions -----------------------------------------------------------

Tensor neg(const Tensor& a) { return scale(a, -1.f); }
Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }
Tensor tabs(const Tensor& a) { return add(relu(a), relu(neg(a))); }
Tensor tmax(const Tensor& a, const Tensor& b) { return add(a, relu(sub(b, a))); }
Tensor tmin(const Tensor& a, const Tensor& b) { return sub(a, relu(sub(a, b))); }
Tensor reciprocal(const Tensor& a) { return exp(neg(log(a))); }

// ---- grad check ---------------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, float step) {
    if (Tape::active()) throw ContractError("grad_check: cannot run inside an active tape scope");

    auto eval = [&f](const std::vector<float>& values, const std::vector<int>& shape) {
        Tensor probe = Tensor::from(shape, values);
        Tensor y = f(probe);
        if (!y.is_scalar()) throw ContractError("grad_check: f must be scalar-valued");
        return y.item();
    };

    std::vector<float> base(x.vals().begin(), x.vals().end());
    const float f0 = eval(base, x.shape());
    const float f1 = eval(base, x.shape());
    if (std::memcmp(&f0, &f1, sizeof(float)) != 0)
        throw ContractError("grad_check: f is not deterministic");

    // analytic gradient on a fresh tape
    Tensor leaf = Tensor::leaf(x.shape(), base);
    Tape tape;
    {
        Tape::Scope scope(tape);
        Tensor loss = f(leaf);
        if (!loss.is_scalar()) throw ContractError("grad_check: f must be scalar-valued");
        tape.backward(loss);
    }
    std::vector<float> analytic(base.size(), 0.f);
    if (leaf.has_grad())
        analytic.assign(leaf.grad().begin(), leaf.grad().end());

    // rel < r here is the classic |a - n| < r*|n| + r*kFloor envelope; with
    // the default pass threshold of 1e-2 that is rtol 1e-2 / atol 1e-3.
    constexpr double kFloor = 0.1;
    GradCheckReport report;
    std::vector<float> bumped = base;
    for (size_t i = 0; i < base.size(); ++i) {
        bumped[i] = base[i] + step;
        const double fp = eval(bumped, x.shape());
        bumped[i] = base[i] - step;
        const double fm = eval(bumped, x.shape());
        bumped[i] = base[i];
        const double numeric = (fp - fm) / (2.0 * static_cast<double>(step));
        const double diff = std::abs(static_cast<double>(analytic[i]) - numeric);
        const double rel = diff / (std::abs(numeric) + kFloor);
        if (rel > report.max_rel_err) {
            report.max_rel_err = static_cast<float>(rel);
            report.worst_index = static_cast<int>(i);
        }
        report.max_abs_diff = std::max(report.max_abs_diff, static_cast<float>(diff));
    }
    return report;
}

}  // namespace proseco
