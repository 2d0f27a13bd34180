#include "proseco/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "proseco/errors.hpp"

namespace proseco {

using nlohmann::json;

const char* to_string(LossKind k) {
    switch (k) {
        case LossKind::locsce: return "locsce";
        case LossKind::sce: return "sce";
        case LossKind::infonce: return "infonce";
        case LossKind::locnce: return "locnce";
    }
    return "?";
}

const char* to_string(RelationMask m) {
    return m == RelationMask::as_written ? "as_written" : "self_only";
}

const char* to_string(ImageScale s) { return s == ImageScale::mid ? "mid" : "large"; }

const char* to_string(DataSource s) { return s == DataSource::synthetic ? "synthetic" : "image_dir"; }

namespace {

template <typename T>
T parse_enum(const std::string& v, std::initializer_list<std::pair<const char*, T>> table,
             const char* field) {
    for (const auto& [name, value] : table)
        if (v == name) return value;
    throw ConfigError(std::string("config: invalid value '") + v + "' for " + field);
}

}  // namespace

void RunConfig::validate() const {
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (num_queries < 1) throw ConfigError("config: num_queries must be >= 1");
    if (num_ss_boxes < 0) throw ConfigError("config: num_ss_boxes must be >= 0");
    if (!(iou_delta > 0.0 && iou_delta <= 1.0))
        throw ConfigError("config: iou_delta must lie in (0, 1]");
    if (tau <= 0.0 || tau_teacher <= 0.0)
        throw ConfigError("config: temperatures must be positive");
    if (lambda_sce < 0.0 || lambda_sce > 1.0)
        throw ConfigError("config: lambda_sce must lie in [0, 1]");
    if (ema_keep_rate < 0.0 || ema_keep_rate > 1.0)
        throw ConfigError("config: ema_keep_rate must lie in [0, 1]");
    if (learning_rate < 0.0) throw ConfigError("config: learning_rate must be >= 0");
    if (iterations < 0) throw ConfigError("config: iterations must be >= 0");
    if (num_ss_boxes > num_queries)
        throw ConfigError("config: box matching needs num_ss_boxes <= num_queries (K <= N); "
                          "raise num_queries or lower num_ss_boxes");
    if (input_size < 8 || d_model < 1 || d_proj < 1 || projector_hidden < 1 || grid < 1)
        throw ConfigError("config: model dimensions out of range");
    if (input_size % grid != 0)
        throw ConfigError("config: input_size must be divisible by grid");
    if (data_source == DataSource::image_dir && image_dir.empty())
        throw ConfigError("config: image_dir data source needs an image_dir path");
    if (dataset_size < 1 && data_source == DataSource::synthetic)
        throw ConfigError("config: dataset_size must be >= 1");
}

RunConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");

    RunConfig cfg;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "batch_size") cfg.batch_size = value.get<int>();
            else if (key == "num_queries") cfg.num_queries = value.get<int>();
            else if (key == "num_ss_boxes") cfg.num_ss_boxes = value.get<int>();
            else if (key == "iou_delta") cfg.iou_delta = value.get<double>();
            else if (key == "tau") cfg.tau = value.get<double>();
            else if (key == "tau_teacher") cfg.tau_teacher = value.get<double>();
            else if (key == "lambda_sce") cfg.lambda_sce = value.get<double>();
            else if (key == "lambda_sim") cfg.lambda_sim = value.get<double>();
            else if (key == "lambda_coord") cfg.lambda_coord = value.get<double>();
            else if (key == "lambda_giou") cfg.lambda_giou = value.get<double>();
            else if (key == "lambda_contrast") cfg.lambda_contrast = value.get<double>();
            else if (key == "ema_keep_rate") cfg.ema_keep_rate = value.get<double>();
            else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
            else if (key == "weight_decay") cfg.weight_decay = value.get<double>();
            else if (key == "grad_clip_norm") cfg.grad_clip_norm = value.get<double>();
            else if (key == "iterations") cfg.iterations = value.get<int>();
            else if (key == "loss_kind")
                cfg.loss_kind = parse_enum<LossKind>(value.get<std::string>(),
                                                     {{"locsce", LossKind::locsce},
                                                      {"sce", LossKind::sce},
                                                      {"infonce", LossKind::infonce},
                                                      {"locnce", LossKind::locnce}},
                                                     "loss_kind");
            else if (key == "relation_mask")
                cfg.relation_mask = parse_enum<RelationMask>(
                    value.get<std::string>(),
                    {{"as_written", RelationMask::as_written},
                     {"self_only", RelationMask::self_only}},
                    "relation_mask");
            else if (key == "image_scale")
                cfg.image_scale = parse_enum<ImageScale>(
                    value.get<std::string>(),
                    {{"mid", ImageScale::mid}, {"large", ImageScale::large}}, "image_scale");
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else if (key == "data_source")
                cfg.data_source = parse_enum<DataSource>(
                    value.get<std::string>(),
                    {{"synthetic", DataSource::synthetic}, {"image_dir", DataSource::image_dir}},
                    "data_source");
            else if (key == "image_dir") cfg.image_dir = value.get<std::string>();
            else if (key == "ss_cache") cfg.ss_cache = value.get<std::string>();
            else if (key == "dataset_size") cfg.dataset_size = value.get<int>();
            else if (key == "input_size") cfg.input_size = value.get<int>();
            else if (key == "d_model") cfg.d_model = value.get<int>();
            else if (key == "d_proj") cfg.d_proj = value.get<int>();
            else if (key == "projector_hidden") cfg.projector_hidden = value.get<int>();
            else if (key == "grid") cfg.grid = value.get<int>();
            else if (key == "lr_decay_enabled") cfg.lr_decay_enabled = value.get<bool>();
            else if (key == "lr_decay_at") cfg.lr_decay_at = value.get<double>();
            else if (key == "lr_decay_factor") cfg.lr_decay_factor = value.get<double>();
            else if (key == "checkpoint_interval") cfg.checkpoint_interval = value.get<int>();
            else if (key == "checkpoint_path") cfg.checkpoint_path = value.get<std::string>();
            else if (key == "metrics_path") cfg.metrics_path = value.get<std::string>();
            else throw ConfigError("config: unknown key '" + key + "'");
        } catch (const json::exception& e) {
            throw ConfigError("config: bad value for '" + key + "': " + e.what());
        }
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

std::string config_to_json(const RunConfig& c) {
    json j;
    j["batch_size"] = c.batch_size;
    j["num_queries"] = c.num_queries;
    j["num_ss_boxes"] = c.num_ss_boxes;
    j["iou_delta"] = c.iou_delta;
    j["tau"] = c.tau;
    j["tau_teacher"] = c.tau_teacher;
    j["lambda_sce"] = c.lambda_sce;
    j["lambda_sim"] = c.lambda_sim;
    j["lambda_coord"] = c.lambda_coord;
    j["lambda_giou"] = c.lambda_giou;
    j["lambda_contrast"] = c.lambda_contrast;
    j["ema_keep_rate"] = c.ema_keep_rate;
    j["learning_rate"] = c.learning_rate;
    j["weight_decay"] = c.weight_decay;
    j["grad_clip_norm"] = c.grad_clip_norm;
    j["iterations"] = c.iterations;
    j["loss_kind"] = to_string(c.loss_kind);
    j["relation_mask"] = to_string(c.relation_mask);
    j["image_scale"] = to_string(c.image_scale);
    j["seed"] = c.seed;
    j["data_source"] = to_string(c.data_source);
    j["image_dir"] = c.image_dir;
    j["ss_cache"] = c.ss_cache;
    j["dataset_size"] = c.dataset_size;
    j["input_size"] = c.input_size;
    j["d_model"] = c.d_model;
    j["d_proj"] = c.d_proj;
    j["projector_hidden"] = c.projector_hidden;
    j["grid"] = c.grid;
    j["lr_decay_enabled"] = c.lr_decay_enabled;
    j["lr_decay_at"] = c.lr_decay_at;
    j["lr_decay_factor"] = c.lr_decay_factor;
    j["checkpoint_interval"] = c.checkpoint_interval;
    j["checkpoint_path"] = c.checkpoint_path;
    j["metrics_path"] = c.metrics_path;
    return j.dump(2);
}

}  // namespace proseco
