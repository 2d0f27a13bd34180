#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "proseco/detector.hpp"
#include "proseco/rng.hpp"

using namespace proseco;

namespace {

DetectorConfig small_cfg() {
    DetectorConfig cfg;
    cfg.num_queries = 4;
    cfg.d_model = 16;
    cfg.d_proj = 8;
    cfg.projector_hidden = 16;
    cfg.grid = 4;
    cfg.input_size = 16;
    cfg.seed = 7;
    return cfg;
}

ImageTensor random_image(int size, Rng& rng) {
    ImageTensor img(size, size);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform(0, 1));
    return img;
}

}  // namespace

TEST_CASE("backbone: zero image gives bias-only features, reproducibly") {
    auto cfg = small_cfg();
    auto b1 = FrozenBackbone::make(cfg);
    auto b2 = FrozenBackbone::make(cfg);
    ImageTensor zero(cfg.input_size, cfg.input_size, 0.f);
    Tensor f1 = b1.features(zero);
    Tensor f2 = b2.features(zero);
    CHECK(std::memcmp(f1.vals().data(), f2.vals().data(),
                      f1.vals().size() * sizeof(float)) == 0);
    // bias-only: every cell identical
    for (int cell = 1; cell < cfg.grid * cfg.grid; ++cell)
        for (int d = 0; d < cfg.d_model; ++d) CHECK(f1.at(cell, d) == f1.at(0, d));
}

TEST_CASE("backbone: same image twice is bit-identical") {
    auto cfg = small_cfg();
    auto b = FrozenBackbone::make(cfg);
    Rng rng(3);
    ImageTensor img = random_image(cfg.input_size, rng);
    Tensor f1 = b.features(img);
    Tensor f2 = b.features(img);
    CHECK(std::memcmp(f1.vals().data(), f2.vals().data(),
                      f1.vals().size() * sizeof(float)) == 0);
}

TEST_CASE("backbone: a one-patch change moves exactly one cell") {
    auto cfg = small_cfg();
    auto b = FrozenBackbone::make(cfg);
    Rng rng(5);
    ImageTensor img = random_image(cfg.input_size, rng);
    ImageTensor img2 = img;
    // perturb one pixel inside patch (1, 2)
    img2.at(1 * cfg.patch_size() + 1, 2 * cfg.patch_size() + 1, 0) += 0.25f;
    Tensor f1 = b.features(img);
    Tensor f2 = b.features(img2);
    for (int cell = 0; cell < cfg.grid * cfg.grid; ++cell) {
        bool differs = false;
        for (int d = 0; d < cfg.d_model; ++d)
            differs = differs || f1.at(cell, d) != f2.at(cell, d);
        CHECK(differs == (cell == 1 * cfg.grid + 2));
    }
}

TEST_CASE("forward: shapes, sigmoid range and determinism") {
    auto cfg = small_cfg();
    auto pair = init_pair(cfg);
    Rng rng(11);
    ImageTensor img = random_image(cfg.input_size, rng);
    auto p = detector_forward(pair.student, pair.backbone, img);
    CHECK(p.embeddings.shape() == std::vector<int>{cfg.num_queries, cfg.d_proj});
    CHECK(p.box_tensor.shape() == std::vector<int>{cfg.num_queries, 4});
    CHECK(static_cast<int>(p.boxes.size()) == cfg.num_queries);
    for (int i = 0; i < cfg.num_queries; ++i) {
        for (int c = 0; c < 4; ++c) {
            CHECK(p.box_tensor.at(i, c) > 0.f);
            CHECK(p.box_tensor.at(i, c) < 1.f);
        }
        double norm = 0;
        for (int d = 0; d < cfg.d_proj; ++d)
            norm += static_cast<double>(p.embeddings.at(i, d)) * p.embeddings.at(i, d);
        CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-5));
    }
    auto p2 = detector_forward(pair.student, pair.backbone, img);
    CHECK(std::memcmp(p.embeddings.vals().data(), p2.embeddings.vals().data(),
                      p.embeddings.vals().size() * sizeof(float)) == 0);
    CHECK(std::memcmp(p.box_tensor.vals().data(), p2.box_tensor.vals().data(),
                      p.box_tensor.vals().size() * sizeof(float)) == 0);
}

TEST_CASE("forward: decoder weight gradient passes finite differences") {
    auto cfg = small_cfg();
    auto pair = init_pair(cfg);
    Rng rng(13);
    ImageTensor img = random_image(cfg.input_size, rng);

    const Tensor& w1 = pair.student.at("mlp.w1");
    auto f = [&pair, &img](const Tensor& x) {
        DetectorParams probe = pair.student.clone();
        // clone drops tape linkage; substitute the probed tensor
        probe.at("mlp.w1") = x;
        auto out = detector_forward(probe, pair.backbone, img);
        return sum(out.embeddings);
    };
    Tensor x0 = Tensor::from(w1.shape(), {w1.vals().begin(), w1.vals().end()});
    CHECK(grad_check(f, x0, 1e-3f).max_rel_err < 1e-2f);

    const Tensor& wq = pair.student.at("attn.wq");
    auto fq = [&pair, &img](const Tensor& x) {
        DetectorParams probe = pair.student.clone();
        probe.at("attn.wq") = x;
        auto out = detector_forward(probe, pair.backbone, img);
        return sum(out.box_tensor);
    };
    Tensor q0 = Tensor::from(wq.shape(), {wq.vals().begin(), wq.vals().end()});
    CHECK(grad_check(fq, q0, 1e-3f).max_rel_err < 1e-2f);
}

TEST_CASE("init: teacher equals student bitwise, seeds control everything") {
    auto cfg = small_cfg();
    auto a = init_pair(cfg);
    for (size_t i = 0; i < a.student.items().size(); ++i) {
        const auto& s = a.student.items()[i].second;
        const auto& t = a.teacher.items()[i].second;
        CHECK(a.student.items()[i].first == a.teacher.items()[i].first);
        CHECK(std::memcmp(s.vals().data(), t.vals().data(),
                          s.vals().size() * sizeof(float)) == 0);
    }

    auto b = init_pair(cfg);
    for (size_t i = 0; i < a.student.items().size(); ++i)
        CHECK(std::memcmp(a.student.items()[i].second.vals().data(),
                          b.student.items()[i].second.vals().data(),
                          a.student.items()[i].second.vals().size() * sizeof(float)) == 0);

    DetectorConfig other = cfg;
    other.seed = 8;
    auto c = init_pair(other);
    std::int64_t total = 0, differing = 0;
    for (size_t i = 0; i < a.student.items().size(); ++i) {
        auto av = a.student.items()[i].second.vals();
        auto cv = c.student.items()[i].second.vals();
        for (size_t j = 0; j < av.size(); ++j) {
            ++total;
            if (av[j] != cv[j]) ++differing;
        }
    }
    CHECK(static_cast<double>(differing) / static_cast<double>(total) >= 0.99);
}

TEST_CASE("ema: keep rate 1 and 0 are exact, 0.999 is the reference value") {
    auto cfg = small_cfg();
    auto pair = init_pair(cfg);
    auto before = pair.teacher.clone();

    // drift the student
    for (auto& [name, t] : pair.student.items())
        for (auto& v : t.mutable_vals()) v += 0.5f;

    ema_update(pair.teacher, pair.student, 1.0);
    for (size_t i = 0; i < pair.teacher.items().size(); ++i)
        CHECK(std::memcmp(pair.teacher.items()[i].second.vals().data(),
                          before.items()[i].second.vals().data(),
                          before.items()[i].second.vals().size() * sizeof(float)) == 0);

    ema_update(pair.teacher, pair.student, 0.0);
    for (size_t i = 0; i < pair.teacher.items().size(); ++i)
        CHECK(std::memcmp(pair.teacher.items()[i].second.vals().data(),
                          pair.student.items()[i].second.vals().data(),
                          pair.student.items()[i].second.vals().size() * sizeof(float)) == 0);

    DetectorParams t, s;
    t.add("w", Tensor::from({1}, {1.f}));
    s.add("w", Tensor::from({1}, {0.f}));
    ema_update(t, s, 0.999);
    CHECK(t.at("w").at(0) == doctest::Approx(0.999).epsilon(1e-6));
}

TEST_CASE("ema: contraction follows keep_rate^t at t = 10") {
    auto cfg = small_cfg();
    auto pair = init_pair(cfg);
    // freeze the student away from the teacher
    for (auto& [name, t] : pair.student.items())
        for (auto& v : t.mutable_vals()) v += 1.f;

    const double keep = 0.9;
    std::vector<float> gap0;
    for (auto& [name, t] : pair.teacher.items())
        for (size_t j = 0; j < t.vals().size(); ++j)
            gap0.push_back(t.vals()[j] - pair.student.at(name).vals()[j]);

    for (int step = 0; step < 10; ++step) ema_update(pair.teacher, pair.student, keep);

    const double factor = std::pow(keep, 10);
    size_t k = 0;
    for (auto& [name, t] : pair.teacher.items())
        for (size_t j = 0; j < t.vals().size(); ++j) {
            const double gap = t.vals()[j] - pair.student.at(name).vals()[j];
            CHECK(gap == doctest::Approx(factor * gap0[k]).epsilon(1e-5));
            ++k;
        }
}

TEST_CASE("ema: mismatched parameter sets are rejected") {
    DetectorParams t, s;
    t.add("a", Tensor::zeros({2}));
    s.add("b", Tensor::zeros({2}));
    CHECK_THROWS_AS(ema_update(t, s, 0.5), ContractError);
    DetectorParams s2;
    s2.add("a", Tensor::zeros({3}));
    CHECK_THROWS_AS(ema_update(t, s2, 0.5), ContractError);
}

TEST_CASE("backbone parameters never receive gradients") {
    auto cfg = small_cfg();
    auto pair = init_pair(cfg);
    Rng rng(17);
    ImageTensor img = random_image(cfg.input_size, rng);
    Tape tape;
    {
        Tape::Scope scope(tape);
        auto out = detector_forward(pair.student, pair.backbone, img);
        tape.backward(add(sum(out.embeddings), sum(out.box_tensor)));
    }
    // student got gradients; the backbone holds raw buffers with no grad at all
    CHECK(pair.student.at("query_embed").has_grad());
    CHECK(pair.student.at("proj.w2").has_grad());
    // teacher untouched
    for (const auto& [name, t] : pair.teacher.items()) CHECK_FALSE(t.has_grad());
}
