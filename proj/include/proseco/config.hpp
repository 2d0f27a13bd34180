#pragma once

#include <cstdint>
#include <string>

namespace proseco {

enum class LossKind { locsce, sce, infonce, locnce };
enum class RelationMask { as_written, self_only };
enum class ImageScale { mid, large };
enum class DataSource { synthetic, image_dir };

const char* to_string(LossKind k);
const char* to_string(RelationMask m);
const char* to_string(ImageScale s);
const char* to_string(DataSource s);

/// Every scalar hyperparameter of a run. Defaults are the reference recipe;
/// batch size, query count and model dims are desk-scale.
struct RunConfig {
    int batch_size = 8;        // images per iteration
    int num_queries = 8;       // proposals per image
    int num_ss_boxes = 30;     // boxes sampled from the proposal cache (K)
    double iou_delta = 0.5;    // overlap threshold for extra positives
    double tau = 0.1;          // student-side temperature
    double tau_teacher = 0.07; // teacher relation temperature
    double lambda_sce = 0.5;
    double lambda_sim = 2.0;
    double lambda_coord = 5.0;
    double lambda_giou = 2.0;
    double lambda_contrast = 2.0;
    double ema_keep_rate = 0.999;
    double learning_rate = 2e-4;
    double weight_decay = 1e-4;
    double grad_clip_norm = 0.1;
    int iterations = 200;
    LossKind loss_kind = LossKind::locsce;
    RelationMask relation_mask = RelationMask::as_written;
    ImageScale image_scale = ImageScale::large;
    std::uint64_t seed = 1;

    DataSource data_source = DataSource::synthetic;
    std::string image_dir;     // with data_source = image_dir
    std::string ss_cache;      // proposal cache path for image_dir runs
    int dataset_size = 32;     // synthetic scene count

    // model dims (desk scale; larger values are legal)
    int input_size = 64;
    int d_model = 64;
    int d_proj = 32;
    int projector_hidden = 64;
    int grid = 8;

    // schedule
    bool lr_decay_enabled = false;
    double lr_decay_at = 0.8;     // fraction of iterations
    double lr_decay_factor = 0.1;

    // outputs
    int checkpoint_interval = 0;  // 0 = only at end
    std::string checkpoint_path = "checkpoint.bin";
    std::string metrics_path = "metrics.csv";

    /// Throws ConfigError on out-of-range values or unusable combinations.
    void validate() const;
};

/// Strict JSON loader: unknown keys are rejected, missing keys take defaults.
RunConfig load_config(const std::string& path);
std::string config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const std::string& text);

}  // namespace proseco
