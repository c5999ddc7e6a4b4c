#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "pabnet/checkpoint.hpp"
#include "pabnet/embedding_io.hpp"
#include "pabnet/errors.hpp"
#include "pabnet/network.hpp"
#include "pabnet/rng.hpp"
#include "pabnet/runconfig.hpp"

using namespace pabnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const char* tag) {
    fs::path p = fs::temp_directory_path() / (std::string("pabnet_fmt_") + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("checkpoint: round trip restores float32-exact values") {
    const fs::path dir = scratch("ckpt");
    Vec a{1.5, -2.25, 0.1};
    Vec b{3.0};
    ParamRefs refs{{"alpha.w", {3}, &a}, {"beta.b", {1}, &b}};
    quantize_params_f32(refs);
    const Vec a_snap = a;

    nlohmann::json cfg;
    cfg["note"] = "test";
    const std::string path = (dir / "model.ckpt").string();
    save_checkpoint(path, cfg, refs);

    const CheckpointData data = load_checkpoint(path);
    CHECK(data.config.at("note") == "test");
    CHECK(data.names == std::vector<std::string>{"alpha.w", "beta.b"});
    CHECK(data.shapes.at("alpha.w") == std::vector<std::size_t>{3});

    Vec a2(3, 0.0), b2(1, 0.0);
    ParamRefs other{{"alpha.w", {3}, &a2}, {"beta.b", {1}, &b2}};
    restore_params(data, other);
    for (std::size_t i = 0; i < a_snap.size(); ++i) CHECK(a2[i] == a_snap[i]);
    CHECK(b2[0] == 3.0);

    // shape mismatch on restore
    Vec wrong(2, 0.0);
    ParamRefs bad{{"alpha.w", {2}, &wrong}};
    CHECK_THROWS_AS(restore_params(data, bad), FormatError);
    ParamRefs missing{{"gamma.w", {1}, &wrong}};
    CHECK_THROWS_AS(restore_params(data, missing), FormatError);
}

TEST_CASE("checkpoint: corrupted files are rejected") {
    const fs::path dir = scratch("ckpt_bad");
    const std::string path = (dir / "bad.ckpt").string();
    {
        std::ofstream f(path, std::ios::binary);
        f << "not-a-checkpoint\n12\n{}";
    }
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    CHECK_THROWS_AS(load_checkpoint((dir / "absent.ckpt").string()), FormatError);

    // truncated data block
    Vec a{1.0, 2.0, 3.0, 4.0};
    ParamRefs refs{{"w", {4}, &a}};
    const std::string full = (dir / "full.ckpt").string();
    save_checkpoint(full, nlohmann::json::object(), refs);
    std::error_code ec;
    const auto size = fs::file_size(full, ec);
    fs::resize_file(full, size - 8, ec);
    CHECK_THROWS_AS(load_checkpoint(full), FormatError);
}

TEST_CASE("checkpoint: a full model round-trips through the container") {
    const fs::path dir = scratch("ckpt_model");
    ModelConfig cfg;
    cfg.image_size = 32;
    cfg.stage_widths = {6, 10};
    cfg.target_channels = 12;
    cfg.target_size = 3;
    cfg.embedding_dim = 16;
    cfg.pose_channels = 8;
    cfg.pose_spatial = 7;
    cfg.pose_widths = {5};
    cfg.pab_hidden = 6;

    CoupledNet net = CoupledNet::init(cfg, 5);
    ParamRefs refs;
    net.collect_params(refs);
    quantize_params_f32(refs);

    const std::string path = (dir / "net.ckpt").string();
    save_checkpoint(path, nlohmann::json::object(), refs);
    const CheckpointData data = load_checkpoint(path);

    CoupledNet other = CoupledNet::init(cfg, 999);  // different init, same shapes
    ParamRefs other_refs;
    other.collect_params(other_refs);
    restore_params(data, other_refs);

    ParamRefs orig_refs;
    net.collect_params(orig_refs);
    for (std::size_t i = 0; i < orig_refs.size(); ++i) {
        const Vec& x = *orig_refs[i].data;
        const Vec& y = *other_refs[i].data;
        REQUIRE(x.size() == y.size());
        for (std::size_t j = 0; j < x.size(); ++j) CHECK(x[j] == y[j]);
    }
}

TEST_CASE("embedding file: round trip") {
    const fs::path dir = scratch("emb");
    Rng rng(3);
    EmbeddingFile file;
    file.dim = 8;
    file.metric = "cosine";
    file.config_echo = "{\"k\":1}";
    for (int i = 0; i < 5; ++i) {
        EmbeddingRecord r;
        r.id = "images/sample_" + std::to_string(i) + ".ppm";
        r.identity = "id" + std::to_string(i % 2);
        r.yaw_degrees = -90.0 + 37.5 * i;
        r.values.resize(8);
        for (double& v : r.values) v = rng.uniform(-1, 1);
        file.records.push_back(std::move(r));
    }
    const std::string path = (dir / "e.bin").string();
    write_embeddings(path, file);
    const EmbeddingFile back = read_embeddings(path);
    CHECK(back.dim == 8);
    CHECK(back.metric == "cosine");
    CHECK(back.config_echo == file.config_echo);
    REQUIRE(back.records.size() == 5);
    for (std::size_t i = 0; i < back.records.size(); ++i) {
        CHECK(back.records[i].id == file.records[i].id);
        CHECK(back.records[i].identity == file.records[i].identity);
        CHECK(back.records[i].yaw_degrees ==
              doctest::Approx(file.records[i].yaw_degrees).epsilon(1e-9));
        for (int d = 0; d < 8; ++d)
            CHECK(back.records[i].values[d] ==
                  static_cast<double>(static_cast<float>(file.records[i].values[d])));
    }

    // dim/record mismatch rejected on write
    EmbeddingFile bad = file;
    bad.records[0].values.resize(4);
    CHECK_THROWS_AS(write_embeddings((dir / "bad.bin").string(), bad), ShapeError);

    // truncated data block rejected on read
    std::error_code ec;
    fs::resize_file(path, fs::file_size(path, ec) - 4, ec);
    CHECK_THROWS_AS(read_embeddings(path), FormatError);
}

TEST_CASE("run config: defaults, echo, and unknown keys") {
    const RunConfig def = RunConfig::from_json(nlohmann::json::object());
    CHECK(def.batch_size == 32);
    CHECK(def.adam_beta1 == 0.5);
    CHECK(def.learning_rate == 1e-3);
    CHECK(def.margin == 1.0);
    CHECK(def.embedding_dim == 128);
    CHECK(def.pab_hidden == 128);
    CHECK(def.yaw_grid.size() == 13);

    // every key present in the echo, round-trips to the same config
    const nlohmann::json echo = def.to_json();
    CHECK(echo.size() == 35);
    const RunConfig back = RunConfig::from_json(echo);
    CHECK(back.to_json() == echo);

    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"learning_rte", 0.1}}),
                         doctest::Contains("learning_rte"), ConfigError);
}

TEST_CASE("run config: schema violations name the key") {
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"yaw_grid", {0.0, 120.0}}}),
                         doctest::Contains("yaw_grid"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"batch_size", 7}}),
                         doctest::Contains("batch_size"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"embedding_dim", 64}}),
                         doctest::Contains("embedding_dim"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json({{"spam_variant", "conv9x9"}}),
                         doctest::Contains("conv9x9"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json({{"image_size", 48}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json({{"learning_rate", "fast"}}), ConfigError);
}

TEST_CASE("run config: typed sub-configs carry the right fields") {
    nlohmann::json doc;
    doc["n_identities"] = 4;
    doc["image_size"] = 32;
    doc["stage_widths"] = {8, 12};
    doc["target_channels"] = 24;
    doc["pose_widths"] = {6};
    doc["pose_channels"] = 12;
    doc["margin"] = 0.75;
    doc["impostor_form"] = "hinge_sq_distance";
    doc["attention_order"] = "spatial_then_channel";
    doc["spam_variant"] = "conv1x1_maxpool";
    const RunConfig rc = RunConfig::from_json(doc);

    const SynthConfig sc = rc.synth_config();
    CHECK(sc.n_identities == 4);
    CHECK(sc.image_size == 32);

    const ModelConfig mc = rc.model_config();
    CHECK(mc.target_channels == 24);
    CHECK(mc.spam_variant == SpamVariant::conv1x1_maxpool);
    CHECK(mc.attention_order == AttentionOrder::spatial_then_channel);

    const TrainConfig tc = rc.train_config();
    CHECK(tc.margin == 0.75);
    CHECK(tc.impostor_form == ImpostorForm::hinge_sq_distance);
}
