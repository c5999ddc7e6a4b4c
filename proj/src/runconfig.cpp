#include "pabnet/runconfig.hpp"

#include <fstream>
#include <set>

#include "pabnet/errors.hpp"

namespace pabnet {

namespace {

using nlohmann::json;

int get_int(const json& doc, const char* key, int fallback) {
    if (!doc.contains(key)) return fallback;
    const json& v = doc.at(key);
    if (!v.is_number_integer())
        throw ConfigError(std::string("config key '") + key + "' must be an integer");
    return v.get<int>();
}

double get_num(const json& doc, const char* key, double fallback) {
    if (!doc.contains(key)) return fallback;
    const json& v = doc.at(key);
    if (!v.is_number()) throw ConfigError(std::string("config key '") + key + "' must be a number");
    return v.get<double>();
}

bool get_bool(const json& doc, const char* key, bool fallback) {
    if (!doc.contains(key)) return fallback;
    const json& v = doc.at(key);
    if (!v.is_boolean())
        throw ConfigError(std::string("config key '") + key + "' must be a boolean");
    return v.get<bool>();
}

std::string get_str(const json& doc, const char* key, const std::string& fallback) {
    if (!doc.contains(key)) return fallback;
    const json& v = doc.at(key);
    if (!v.is_string()) throw ConfigError(std::string("config key '") + key + "' must be a string");
    return v.get<std::string>();
}

std::vector<double> get_num_array(const json& doc, const char* key,
                                  const std::vector<double>& fallback) {
    if (!doc.contains(key)) return fallback;
    const json& v = doc.at(key);
    if (!v.is_array())
        throw ConfigError(std::string("config key '") + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number())
            throw ConfigError(std::string("config key '") + key + "' must be an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

std::vector<int> get_int_array(const json& doc, const char* key,
                               const std::vector<int>& fallback) {
    if (!doc.contains(key)) return fallback;
    const json& v = doc.at(key);
    if (!v.is_array())
        throw ConfigError(std::string("config key '") + key + "' must be an array of integers");
    std::vector<int> out;
    for (const auto& e : v) {
        if (!e.is_number_integer())
            throw ConfigError(std::string("config key '") + key + "' must be an array of integers");
        out.push_back(e.get<int>());
    }
    return out;
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "n_identities", "yaw_grid", "image_size", "illumination_levels", "train_fraction",
        "stage_widths", "target_channels", "target_size", "embedding_dim",
        "frontal_threshold_deg", "pose_channels", "pose_spatial", "pose_widths",
        "pose_pretrain_steps", "pose_pretrain_batch", "pose_pretrain_lr", "attention_enabled",
        "pab_hidden", "attention_order", "spam_variant", "batch_size", "learning_rate",
        "adam_beta1", "adam_beta2", "adam_epsilon", "margin", "impostor_form", "steps", "seed",
        "eval_pairs", "n_folds", "far_targets", "rank_k", "hist_bins", "score_metric"};
    return keys;
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("configuration document must be a JSON object");
    for (const auto& [key, value] : doc.items())
        if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");

    RunConfig c;
    c.n_identities = get_int(doc, "n_identities", c.n_identities);
    c.yaw_grid = get_num_array(doc, "yaw_grid", c.yaw_grid);
    c.image_size = get_int(doc, "image_size", c.image_size);
    c.illumination_levels = get_num_array(doc, "illumination_levels", c.illumination_levels);
    c.train_fraction = get_num(doc, "train_fraction", c.train_fraction);
    c.stage_widths = get_int_array(doc, "stage_widths", c.stage_widths);
    c.target_channels = get_int(doc, "target_channels", c.target_channels);
    c.target_size = get_int(doc, "target_size", c.target_size);
    c.embedding_dim = get_int(doc, "embedding_dim", c.embedding_dim);
    c.frontal_threshold_deg = get_num(doc, "frontal_threshold_deg", c.frontal_threshold_deg);
    c.pose_channels = get_int(doc, "pose_channels", c.pose_channels);
    c.pose_spatial = get_int(doc, "pose_spatial", c.pose_spatial);
    c.pose_widths = get_int_array(doc, "pose_widths", c.pose_widths);
    c.pose_pretrain_steps = get_int(doc, "pose_pretrain_steps", c.pose_pretrain_steps);
    c.pose_pretrain_batch = get_int(doc, "pose_pretrain_batch", c.pose_pretrain_batch);
    c.pose_pretrain_lr = get_num(doc, "pose_pretrain_lr", c.pose_pretrain_lr);
    c.attention_enabled = get_bool(doc, "attention_enabled", c.attention_enabled);
    c.pab_hidden = get_int(doc, "pab_hidden", c.pab_hidden);
    c.attention_order = get_str(doc, "attention_order", c.attention_order);
    c.spam_variant = get_str(doc, "spam_variant", c.spam_variant);
    c.batch_size = get_int(doc, "batch_size", c.batch_size);
    c.learning_rate = get_num(doc, "learning_rate", c.learning_rate);
    c.adam_beta1 = get_num(doc, "adam_beta1", c.adam_beta1);
    c.adam_beta2 = get_num(doc, "adam_beta2", c.adam_beta2);
    c.adam_epsilon = get_num(doc, "adam_epsilon", c.adam_epsilon);
    c.margin = get_num(doc, "margin", c.margin);
    c.impostor_form = get_str(doc, "impostor_form", c.impostor_form);
    c.steps = get_int(doc, "steps", c.steps);
    if (doc.contains("seed")) {
        const json& v = doc.at("seed");
        if (!v.is_number_unsigned() && !v.is_number_integer())
            throw ConfigError("config key 'seed' must be a non-negative integer");
        c.seed = v.get<std::uint64_t>();
    }
    c.eval_pairs = get_int(doc, "eval_pairs", c.eval_pairs);
    c.n_folds = get_int(doc, "n_folds", c.n_folds);
    c.far_targets = get_num_array(doc, "far_targets", c.far_targets);
    c.rank_k = get_int(doc, "rank_k", c.rank_k);
    c.hist_bins = get_int(doc, "hist_bins", c.hist_bins);
    c.score_metric = get_str(doc, "score_metric", c.score_metric);

    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    nlohmann::json doc;
    try {
        f >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("unparseable config file " + path + ": " + e.what());
    }
    return from_json(doc);
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json doc;
    doc["n_identities"] = n_identities;
    doc["yaw_grid"] = yaw_grid;
    doc["image_size"] = image_size;
    doc["illumination_levels"] = illumination_levels;
    doc["train_fraction"] = train_fraction;
    doc["stage_widths"] = stage_widths;
    doc["target_channels"] = target_channels;
    doc["target_size"] = target_size;
    doc["embedding_dim"] = embedding_dim;
    doc["frontal_threshold_deg"] = frontal_threshold_deg;
    doc["pose_channels"] = pose_channels;
    doc["pose_spatial"] = pose_spatial;
    doc["pose_widths"] = pose_widths;
    doc["pose_pretrain_steps"] = pose_pretrain_steps;
    doc["pose_pretrain_batch"] = pose_pretrain_batch;
    doc["pose_pretrain_lr"] = pose_pretrain_lr;
    doc["attention_enabled"] = attention_enabled;
    doc["pab_hidden"] = pab_hidden;
    doc["attention_order"] = attention_order;
    doc["spam_variant"] = spam_variant;
    doc["batch_size"] = batch_size;
    doc["learning_rate"] = learning_rate;
    doc["adam_beta1"] = adam_beta1;
    doc["adam_beta2"] = adam_beta2;
    doc["adam_epsilon"] = adam_epsilon;
    doc["margin"] = margin;
    doc["impostor_form"] = impostor_form;
    doc["steps"] = steps;
    doc["seed"] = seed;
    doc["eval_pairs"] = eval_pairs;
    doc["n_folds"] = n_folds;
    doc["far_targets"] = far_targets;
    doc["rank_k"] = rank_k;
    doc["hist_bins"] = hist_bins;
    doc["score_metric"] = score_metric;
    return doc;
}

void RunConfig::validate() const {
    if (n_identities < 1) throw ConfigError("config key 'n_identities' must be positive");
    if (yaw_grid.empty()) throw ConfigError("config key 'yaw_grid' must be non-empty");
    for (double y : yaw_grid)
        if (y < -90.0 || y > 90.0)
            throw ConfigError("config key 'yaw_grid' has entry out of [-90, 90]: " +
                              std::to_string(y));
    if (illumination_levels.empty())
        throw ConfigError("config key 'illumination_levels' must be non-empty");
    for (double l : illumination_levels)
        if (!(l > 0.0)) throw ConfigError("config key 'illumination_levels' must be positive");
    if (!(train_fraction >= 0.0 && train_fraction <= 1.0))
        throw ConfigError("config key 'train_fraction' must lie in [0, 1]");
    if (embedding_dim != 128 && embedding_dim != 256 && embedding_dim != 512)
        throw ConfigError("config key 'embedding_dim' must be one of 128, 256, 512");
    attention_order_from_string(attention_order);
    spam_variant_from_string(spam_variant);
    impostor_form_from_string(impostor_form);
    if (eval_pairs < 2 || eval_pairs % 2 != 0)
        throw ConfigError("config key 'eval_pairs' must be even and at least 2");
    if (n_folds < 2) throw ConfigError("config key 'n_folds' must be at least 2");
    for (double t : far_targets)
        if (!(t > 0.0 && t < 1.0))
            throw ConfigError("config key 'far_targets' entries must lie strictly in (0, 1)");
    if (rank_k < 1) throw ConfigError("config key 'rank_k' must be positive");
    if (hist_bins < 2) throw ConfigError("config key 'hist_bins' must be at least 2");
    if (score_metric != "cosine" && score_metric != "euclidean")
        throw ConfigError("config key 'score_metric' must be 'cosine' or 'euclidean'");

    model_config().validate();
    train_config().validate();
}

SynthConfig RunConfig::synth_config() const {
    SynthConfig s;
    s.n_identities = n_identities;
    s.yaw_grid = yaw_grid;
    s.image_size = image_size;
    s.illumination_levels = illumination_levels;
    s.seed = seed;
    s.train_fraction = train_fraction;
    return s;
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.image_size = image_size;
    m.stage_widths = stage_widths;
    m.target_channels = target_channels;
    m.target_size = target_size;
    m.embedding_dim = embedding_dim;
    m.frontal_threshold_deg = frontal_threshold_deg;
    m.attention_enabled = attention_enabled;
    m.pab_hidden = pab_hidden;
    m.spam_variant = spam_variant_from_string(spam_variant);
    m.attention_order = attention_order_from_string(attention_order);
    m.pose_channels = pose_channels;
    m.pose_spatial = pose_spatial;
    m.pose_widths = pose_widths;
    m.pose_pretrain_steps = pose_pretrain_steps;
    m.pose_pretrain_batch = pose_pretrain_batch;
    m.pose_pretrain_lr = pose_pretrain_lr;
    return m;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.batch_size = batch_size;
    t.learning_rate = learning_rate;
    t.adam_beta1 = adam_beta1;
    t.adam_beta2 = adam_beta2;
    t.adam_epsilon = adam_epsilon;
    t.margin = margin;
    t.impostor_form = impostor_form_from_string(impostor_form);
    t.steps = steps;
    t.seed = seed;
    return t;
}

}  // namespace pabnet
