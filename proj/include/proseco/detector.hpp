#pragma once

#include <string>
#include <utility>
#include <vector>

#include "proseco/config.hpp"
#include "proseco/image.hpp"
#include "proseco/matching.hpp"
#include "proseco/rng.hpp"
#include "proseco/tensor.hpp"

namespace proseco {

struct DetectorConfig {
    int num_queries = 8;
    int d_model = 64;
    int d_proj = 32;
    int projector_hidden = 64;
    int grid = 8;        // feature cells per side
    int input_size = 64; // square detector input
    std::uint64_t seed = 1;

    static DetectorConfig from_run(const RunConfig& cfg);
    int patch_size() const { return input_size / grid; }
    int patch_dim() const { return patch_size() * patch_size() * 3; }
};

/// Named parameter tensors of one detector (query embeddings, attention and
/// MLP weights, projector, box head). Names and shapes are fixed by the
/// config; student and teacher instances always agree on both.
class DetectorParams {
public:
    std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    void add(std::string name, Tensor t);

    /// Independent deep copy (fresh value buffers, gradients dropped).
    DetectorParams clone() const;

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

/// Frozen random-feature stand-in for a pretrained backbone: per-cell linear
/// map over raw patches followed by tanh. Weights live outside DetectorParams
/// and never join a tape.
struct FrozenBackbone {
    DetectorConfig cfg;
    std::vector<float> weight;  // [patch_dim x d_model]
    std::vector<float> bias;    // [d_model]

    static FrozenBackbone make(const DetectorConfig& cfg);
    /// [G*G x d_model] constant feature tensor; img must already be
    /// input_size x input_size.
    Tensor features(const ImageTensor& img) const;
};

/// Student and EMA teacher with a shared frozen backbone.
struct DetectorPair {
    DetectorConfig cfg;
    FrozenBackbone backbone;
    DetectorParams student;
    DetectorParams teacher;
};

/// Seeded init: student weights scaled-uniform, biases zero, teacher an exact
/// copy, backbone drawn from an independent seed stream.
DetectorPair init_pair(const DetectorConfig& cfg);

/// One detector pass: queries cross-attend over backbone features, a
/// per-query MLP refines them, the projector emits unit-norm embeddings and
/// the box head sigmoid-squashes (cx, cy, w, h). Records onto the active tape
/// if one is in scope (student); otherwise runs detached (teacher).
ProposalSet detector_forward(const DetectorParams& params, const FrozenBackbone& backbone,
                             const ImageTensor& img);

/// theta_t <- keep_rate * theta_t + (1 - keep_rate) * theta_s, elementwise.
/// keep_rate 1 leaves the teacher bit-identical; 0 copies the student.
void ema_update(DetectorParams& teacher, const DetectorParams& student, double keep_rate);

}  // namespace proseco
