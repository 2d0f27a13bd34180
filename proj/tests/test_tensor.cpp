#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "proseco/rng.hpp"
#include "proseco/tensor.hpp"

using namespace proseco;

namespace {

Tensor rand_tensor(std::vector<int> shape, Rng& rng, bool leaf = false) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    std::vector<float> v(static_cast<size_t>(n));
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return leaf ? Tensor::leaf(shape, std::move(v)) : Tensor::from(shape, std::move(v));
}

}  // namespace

TEST_CASE("matmul identity and basis selection") {
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor out = matmul(eye, m);
    CHECK(out.at(0, 0) == 1.f);
    CHECK(out.at(0, 1) == 2.f);
    CHECK(out.at(1, 0) == 3.f);
    CHECK(out.at(1, 1) == 4.f);

    Tensor sel = Tensor::from({1, 2}, {1, 0});
    Tensor col = Tensor::from({2, 1}, {5, 7});
    CHECK(matmul(sel, col).item() == 5.f);
}

TEST_CASE("matmul shape mismatch throws") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
    CHECK_NOTHROW(matmul(a, b, false, true));
}

TEST_CASE("matmul gradient vs central differences") {
    Rng rng(11);
    Tensor b = rand_tensor({4, 2}, rng);
    Tensor x0 = rand_tensor({3, 4}, rng);
    auto f = [&b](const Tensor& x) { return sum(matmul(x, b)); };
    auto report = grad_check(f, x0, 1e-3f);
    CHECK(report.max_abs_diff < 1e-3f);

    // transposed operands take distinct backward paths
    Tensor c = rand_tensor({2, 4}, rng);
    auto ft = [&c](const Tensor& x) { return sum(matmul(c, x, true, true)); };
    Tensor x1 = rand_tensor({3, 2}, rng);
    CHECK(grad_check(ft, x1, 1e-3f).max_rel_err < 1e-2f);
}

TEST_CASE("masked softmax uniform row") {
    Tensor logits = Tensor::full({1, 4}, 0.7f);
    Tensor p = softmax_rows(logits);
    for (int c = 0; c < 4; ++c) CHECK(p.at(0, c) == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("masked softmax masks the middle entry") {
    Tensor logits = Tensor::from({1, 3}, {0.f, 0.f, 0.f});
    Tensor p = masked_softmax_rows(logits, {1, 0, 1});
    CHECK(p.at(0, 0) == doctest::Approx(0.5));
    CHECK(p.at(0, 1) == 0.f);
    CHECK(p.at(0, 2) == doctest::Approx(0.5));
}

TEST_CASE("masked softmax matches scalar recomputation") {
    Tensor logits = Tensor::from({1, 2}, {1.f, 2.f});
    Tensor p = softmax_rows(logits);
    const double e = std::exp(1.0);
    CHECK(p.at(0, 0) == doctest::Approx(1.0 / (1.0 + e)).epsilon(1e-6));
    CHECK(p.at(0, 1) == doctest::Approx(e / (1.0 + e)).epsilon(1e-6));
}

TEST_CASE("masked softmax rejects a fully masked row") {
    Tensor logits = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(masked_softmax_rows(logits, {1, 1, 0, 0}), DegenerateError);
}

TEST_CASE("masked softmax rows sum to one and survive huge logits") {
    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<float> v(12);
        std::vector<std::uint8_t> mask(12);
        bool ok = false;
        for (int i = 0; i < 12; ++i) {
            v[i] = static_cast<float>(rng.uniform(-1e4, 1e4));
            mask[i] = rng.bernoulli(0.7) ? 1 : 0;
        }
        for (int r = 0; r < 3; ++r) {
            ok = false;
            for (int c = 0; c < 4; ++c) ok = ok || mask[r * 4 + c];
            if (!ok) mask[r * 4] = 1;
        }
        Tensor x = Tensor::leaf({3, 4}, v);
        Tape tape;
        Tensor loss;
        {
            Tape::Scope scope(tape);
            Tensor p = masked_softmax_rows(x, mask);
            for (int r = 0; r < 3; ++r) {
                double s = 0;
                for (int c = 0; c < 4; ++c) s += p.at(r, c);
                CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
            }
            loss = sum(mul(p, p));
            tape.backward(loss);
        }
        for (float g : x.grad()) CHECK(std::isfinite(g));
    }
}

TEST_CASE("backward on sum gives ones") {
    Tensor x = Tensor::leaf({3}, {1.f, 2.f, 3.f});
    Tape tape;
    {
        Tape::Scope scope(tape);
        tape.backward(sum(x));
    }
    CHECK(x.grad()[0] == 1.f);
    CHECK(x.grad()[1] == 1.f);
    CHECK(x.grad()[2] == 1.f);
}

TEST_CASE("backward of sum(x*x) is 2x") {
    Tensor x = Tensor::leaf({2}, {2.f, -1.f});
    Tape tape;
    {
        Tape::Scope scope(tape);
        tape.backward(sum(mul(x, x)));
    }
    CHECK(x.grad()[0] == 4.f);
    CHECK(x.grad()[1] == -2.f);
}

TEST_CASE("backward requires a scalar on the tape") {
    Tensor x = Tensor::leaf({2}, {1.f, 2.f});
    Tape tape;
    Tape::Scope scope(tape);
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
    Tensor detached = Tensor::scalar(1.f);
    CHECK_THROWS_AS(tape.backward(detached), ContractError);
}

TEST_CASE("composite graph gradient matches finite differences") {
    Rng rng(23);
    Tensor w = rand_tensor({4, 3}, rng);
    auto f = [&w](const Tensor& x) {
        Tensor h = relu(matmul(x, w));
        Tensor z = l2_normalize_rows(add(h, Tensor::full({2, 3}, 0.3f)));
        Tensor p = softmax_rows(z);
        return mean(mul(p, sigmoid(z)));
    };
    Tensor x0 = rand_tensor({2, 4}, rng);
    auto report = grad_check(f, x0, 1e-3f);
    CHECK(report.max_rel_err < 1e-2f);
}

TEST_CASE("gather and concat gradients") {
    Rng rng(5);
    auto f = [](const Tensor& x) {
        Tensor g = gather_rows(x, {2, 0, 2});
        Tensor c = concat_rows({g, x});
        return sum(mul(c, c));
    };
    CHECK(grad_check(f, rand_tensor({3, 2}, rng), 1e-3f).max_rel_err < 1e-2f);
}

TEST_CASE("exp log sigmoid composition gradient") {
    Rng rng(9);
    auto f = [](const Tensor& x) {
        return sum(log(add(exp(x), Tensor::full({5}, 1.f))));
    };
    CHECK(grad_check(f, rand_tensor({5}, rng), 1e-3f).max_rel_err < 1e-2f);
}

TEST_CASE("relu compositions give abs min max and reciprocal") {
    Tensor a = Tensor::from({3}, {-2.f, 0.5f, 3.f});
    Tensor b = Tensor::from({3}, {1.f, -1.f, 3.f});
    Tensor ab = tabs(a);
    CHECK(ab.at(0) == 2.f);
    CHECK(ab.at(1) == 0.5f);
    Tensor mx = tmax(a, b);
    CHECK(mx.at(0) == 1.f);
    CHECK(mx.at(1) == 0.5f);
    Tensor mn = tmin(a, b);
    CHECK(mn.at(0) == -2.f);
    CHECK(mn.at(1) == -1.f);
    Tensor rc = reciprocal(Tensor::from({2}, {4.f, 0.25f}));
    CHECK(rc.at(0) == doctest::Approx(0.25));
    CHECK(rc.at(1) == doctest::Approx(4.0));
}

TEST_CASE("fan-out doubles the gradient exactly") {
    auto run = [](bool twice) {
        Tensor x = Tensor::leaf({3}, {0.3f, -0.7f, 1.2f});
        Tape tape;
        Tape::Scope scope(tape);
        Tensor f1 = sum(mul(x, x));
        Tensor loss = twice ? add(f1, sum(mul(x, x))) : f1;
        tape.backward(loss);
        return std::vector<float>(x.grad().begin(), x.grad().end());
    };
    auto g1 = run(false);
    auto g2 = run(true);
    for (size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == 2.f * g1[i]);
}

TEST_CASE("tape replay is bit-identical across runs") {
    auto run = [] {
        Rng rng(1234);
        Tensor x = rand_tensor({4, 4}, rng, true);
        Tensor w = rand_tensor({4, 4}, rng);
        Tape tape;
        Tape::Scope scope(tape);
        Tensor loss = sum(mul(softmax_rows(matmul(x, w)), x));
        tape.backward(loss);
        return std::vector<float>(x.grad().begin(), x.grad().end());
    };
    auto a = run();
    auto b = run();
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

TEST_CASE("no recording happens outside a tape scope") {
    Tensor x = Tensor::leaf({2}, {1.f, 2.f});
    Tensor y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
    Tape tape;
    {
        Tape::Scope scope(tape);
        Tensor z = mul(x, x);
        CHECK(z.requires_grad());
    }
    CHECK(tape.size() == 1);
}

TEST_CASE("grad_check of sum is exact") {
    Rng rng(3);
    auto f = [](const Tensor& x) { return sum(x); };
    auto report = grad_check(f, rand_tensor({6}, rng), 1e-3f);
    CHECK(report.max_rel_err < 1e-4f);
}

TEST_CASE("grad_check negative control: corrupted backward must fail") {
    auto bad_square = [](const Tensor& x) {
        std::vector<float> v(x.vals().begin(), x.vals().end());
        for (float& e : v) e = e * e;
        auto xn = x.ptr();
        Tensor y = detail::make_op(x.shape(), std::move(v), {x},
                                   [xn](const Tensor::Node& out) {
                                       if (!xn->requires_grad) return;
                                       if (xn->grad.empty())
                                           xn->grad.assign(xn->value.size(), 0.f);
                                       // wrong rule on purpose: claims d(x^2)/dx = 3x
                                       for (size_t i = 0; i < out.grad.size(); ++i)
                                           xn->grad[i] += out.grad[i] * 3.f * xn->value[i];
                                   });
        return sum(y);
    };
    Tensor x0 = Tensor::from({3}, {1.f, 2.f, -1.5f});
    auto report = grad_check(bad_square, x0, 1e-3f);
    CHECK(report.max_rel_err > 0.1f);
}

TEST_CASE("grad_check detects a non-deterministic function") {
    int calls = 0;
    auto f = [&calls](const Tensor& x) {
        ++calls;
        return sum(scale(x, static_cast<float>(calls)));
    };
    Tensor x0 = Tensor::from({2}, {1.f, 2.f});
    CHECK_THROWS_AS(grad_check(f, x0, 1e-3f), ContractError);
}
