#include "proseco/detector.hpp"

#include <algorithm>
#include <cmath>

namespace proseco {

DetectorConfig DetectorConfig::from_run(const RunConfig& cfg) {
    DetectorConfig d;
    d.num_queries = cfg.num_queries;
    d.d_model = cfg.d_model;
    d.d_proj = cfg.d_proj;
    d.projector_hidden = cfg.projector_hidden;
    d.grid = cfg.grid;
    d.input_size = cfg.input_size;
    d.seed = cfg.seed;
    return d;
}

Tensor& DetectorParams::at(const std::string& name) {
    for (auto& [n, t] : items_)
        if (n == name) return t;
    throw ContractError("detector: unknown parameter '" + name + "'");
}

const Tensor& DetectorParams::at(const std::string& name) const {
    for (const auto& [n, t] : items_)
        if (n == name) return t;
    throw ContractError("detector: unknown parameter '" + name + "'");
}

void DetectorParams::add(std::string name, Tensor t) {
    for (const auto& [n, _] : items_)
        if (n == name) throw ContractError("detector: duplicate parameter '" + name + "'");
    items_.emplace_back(std::move(name), std::move(t));
}

DetectorParams DetectorParams::clone() const {
    DetectorParams out;
    for (const auto& [name, t] : items_) {
        Tensor copy = Tensor::from(t.shape(), {t.vals().begin(), t.vals().end()});
        copy.node().requires_grad = t.requires_grad();
        out.add(name, std::move(copy));
    }
    return out;
}

namespace {

Tensor xavier_uniform(int rows, int cols, Rng& rng) {
    const float limit = std::sqrt(6.f / static_cast<float>(rows + cols));
    std::vector<float> v(static_cast<size_t>(rows) * cols);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-limit, limit));
    Tensor t = Tensor::from({rows, cols}, std::move(v));
    t.node().requires_grad = true;
    return t;
}

Tensor small_bias(int n, Rng& rng) {
    std::vector<float> v(static_cast<size_t>(n));
    for (auto& x : v) x = static_cast<float>(rng.uniform(-0.01, 0.01));
    Tensor t = Tensor::from({n}, std::move(v));
    t.node().requires_grad = true;
    return t;
}

}  // namespace

FrozenBackbone FrozenBackbone::make(const DetectorConfig& cfg) {
    FrozenBackbone b;
    b.cfg = cfg;
    Rng rng(derive_seed(cfg.seed, "backbone"));
    const int pd = cfg.patch_dim();
    const float limit = std::sqrt(6.f / static_cast<float>(pd + cfg.d_model));
    b.weight.resize(static_cast<size_t>(pd) * cfg.d_model);
    for (auto& x : b.weight) x = static_cast<float>(rng.uniform(-limit, limit));
    b.bias.resize(static_cast<size_t>(cfg.d_model));
    for (auto& x : b.bias) x = static_cast<float>(rng.uniform(-0.1, 0.1));
    return b;
}

Tensor FrozenBackbone::features(const ImageTensor& img) const {
    if (img.height != cfg.input_size || img.width != cfg.input_size)
        throw ContractError("backbone: image must be resized to the configured input size");
    const int g = cfg.grid, ps = cfg.patch_size(), pd = cfg.patch_dim(), dm = cfg.d_model;
    // plain f32 arithmetic: the backbone is frozen, so nothing here records
    std::vector<float> out(static_cast<size_t>(g) * g * dm);
    std::vector<float> patch(static_cast<size_t>(pd));
    for (int gy = 0; gy < g; ++gy) {
        for (int gx = 0; gx < g; ++gx) {
            int k = 0;
            for (int y = 0; y < ps; ++y)
                for (int x = 0; x < ps; ++x)
                    for (int c = 0; c < 3; ++c)
                        patch[static_cast<size_t>(k++)] = img.at(gy * ps + y, gx * ps + x, c);
            float* cell = &out[(static_cast<size_t>(gy) * g + gx) * dm];
            for (int d = 0; d < dm; ++d) {
                float acc = bias[static_cast<size_t>(d)];
                for (int p = 0; p < pd; ++p)
                    acc += patch[static_cast<size_t>(p)] *
                           weight[static_cast<size_t>(p) * dm + d];
                cell[d] = std::tanh(acc);
            }
        }
    }
    return Tensor::from({g * g, dm}, std::move(out));
}

DetectorPair init_pair(const DetectorConfig& cfg) {
    if (cfg.num_queries < 1 || cfg.d_model < 1 || cfg.d_proj < 1 || cfg.projector_hidden < 1)
        throw ContractError("detector: dimensions must be >= 1");
    if (cfg.input_size % cfg.grid != 0)
        throw ContractError("detector: input_size must be divisible by grid");
    DetectorPair pair;
    pair.cfg = cfg;
    pair.backbone = FrozenBackbone::make(cfg);

    Rng rng(derive_seed(cfg.seed, "detector-init"));
    DetectorParams& p = pair.student;
    p.add("query_embed", xavier_uniform(cfg.num_queries, cfg.d_model, rng));
    p.add("attn.wq", xavier_uniform(cfg.d_model, cfg.d_model, rng));
    p.add("attn.wk", xavier_uniform(cfg.d_model, cfg.d_model, rng));
    p.add("attn.wv", xavier_uniform(cfg.d_model, cfg.d_model, rng));
    p.add("mlp.w1", xavier_uniform(cfg.d_model, cfg.d_model, rng));
    p.add("mlp.b1", small_bias(cfg.d_model, rng));
    p.add("mlp.w2", xavier_uniform(cfg.d_model, cfg.d_model, rng));
    p.add("mlp.b2", small_bias(cfg.d_model, rng));
    p.add("proj.w1", xavier_uniform(cfg.d_model, cfg.projector_hidden, rng));
    p.add("proj.b1", small_bias(cfg.projector_hidden, rng));
    p.add("proj.w2", xavier_uniform(cfg.projector_hidden, cfg.d_proj, rng));
    p.add("proj.b2", small_bias(cfg.d_proj, rng));
    p.add("box.w", xavier_uniform(cfg.d_model, 4, rng));
    p.add("box.b", small_bias(4, rng));

    pair.teacher = pair.student.clone();
    return pair;
}

ProposalSet detector_forward(const DetectorParams& params, const FrozenBackbone& backbone,
                             const ImageTensor& img) {
    const DetectorConfig& cfg = backbone.cfg;
    Tensor feats = backbone.features(img);

    const Tensor& queries = params.at("query_embed");
    Tensor q = matmul(queries, params.at("attn.wq"));
    Tensor k = matmul(feats, params.at("attn.wk"));
    Tensor v = matmul(feats, params.at("attn.wv"));
    Tensor attn = softmax_rows(
        scale(matmul(q, k, false, true), 1.f / std::sqrt(static_cast<float>(cfg.d_model))));
    Tensor h = add(queries, matmul(attn, v));

    Tensor t1 = relu(add(matmul(h, params.at("mlp.w1")), params.at("mlp.b1")));
    Tensor h2 = add(h, add(matmul(t1, params.at("mlp.w2")), params.at("mlp.b2")));

    Tensor p1 = relu(add(matmul(h2, params.at("proj.w1")), params.at("proj.b1")));
    Tensor z = l2_normalize_rows(add(matmul(p1, params.at("proj.w2")), params.at("proj.b2")));

    Tensor box_t = sigmoid(add(matmul(h2, params.at("box.w")), params.at("box.b")));

    ProposalSet out;
    out.embeddings = z;
    out.box_tensor = box_t;
    out.boxes.boxes.reserve(static_cast<size_t>(cfg.num_queries));
    for (int i = 0; i < cfg.num_queries; ++i)
        out.boxes.boxes.emplace_back(box_t.at(i, 0), box_t.at(i, 1), box_t.at(i, 2),
                                     box_t.at(i, 3));
    return out;
}

void ema_update(DetectorParams& teacher, const DetectorParams& student, double keep_rate) {
    if (keep_rate < 0.0 || keep_rate > 1.0)
        throw ContractError("ema_update: keep_rate outside [0,1]");
    auto& ti = teacher.items();
    const auto& si = student.items();
    if (ti.size() != si.size()) throw ContractError("ema_update: parameter sets differ");
    if (keep_rate == 1.0) return;
    const float m = static_cast<float>(keep_rate);
    for (size_t i = 0; i < ti.size(); ++i) {
        if (ti[i].first != si[i].first)
            throw ContractError("ema_update: parameter name mismatch at '" + ti[i].first + "'");
        auto tv = ti[i].second.mutable_vals();
        auto sv = si[i].second.vals();
        if (tv.size() != sv.size())
            throw ContractError("ema_update: shape mismatch at '" + ti[i].first + "'");
        if (keep_rate == 0.0) {
            std::copy(sv.begin(), sv.end(), tv.begin());
        } else {
            for (size_t j = 0; j < tv.size(); ++j)
                tv[j] = m * tv[j] + (1.f - m) * sv[j];
        }
    }
}

}  // namespace proseco
