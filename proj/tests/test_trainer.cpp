#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "pabnet/errors.hpp"
#include "pabnet/trainer.hpp"

using namespace pabnet;

namespace {

struct TinySetup {
    ModelConfig model;
    std::vector<ImageSample> samples;
    std::vector<ManifestRecord> records;
    CoupledNet net;
    YawPoseNet pose;
};

TinySetup make_setup(std::uint64_t seed, bool attention, int n_identities = 6) {
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
    cfg.pose_pretrain_steps = 10;
    cfg.pose_pretrain_batch = 4;
    cfg.attention_enabled = attention;

    SynthConfig synth;
    synth.n_identities = n_identities;
    synth.image_size = cfg.image_size;
    synth.seed = seed;
    const SynthDataset ds = generate_synthetic(synth);

    TinySetup setup{cfg, {}, ds.records, CoupledNet::init(cfg, seed),
                    attention ? YawPoseNet::build(cfg, seed) : YawPoseNet{}};
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        ImageSample s;
        s.id = ds.records[i].path;
        s.identity = ds.records[i].identity;
        s.yaw_degrees = ds.records[i].yaw_degrees;
        s.view = view_of(s.yaw_degrees);
        s.pixels = ds.images[i];
        setup.samples.push_back(std::move(s));
    }
    if (attention)
        setup.pose.pretrain(setup.samples, cfg.pose_pretrain_steps, cfg.pose_pretrain_batch,
                            1e-3, seed);
    return setup;
}

std::map<std::string, Vec> snapshot(CoupledNet& net, YawPoseNet* pose) {
    ParamRefs refs;
    net.collect_params(refs);
    if (pose) pose->collect_params(refs);
    std::map<std::string, Vec> out;
    for (const auto& r : refs) out[r.name] = *r.data;
    return out;
}

}  // namespace

TEST_CASE("adam: single scalar step matches a hand-rolled oracle") {
    Vec p{0.0};
    Vec g{1.0};
    AdamState state;
    AdamConfig cfg;  // lr 1e-3, beta1 0.5, beta2 0.999, eps 1e-8
    adam_step({&p}, {&g}, state, cfg);

    // oracle: one update by hand
    const double m = 0.5 * 0.0 + 0.5 * 1.0;
    const double v = 0.999 * 0.0 + 0.001 * 1.0;
    const double m_hat = m / (1.0 - 0.5);
    const double v_hat = v / (1.0 - 0.999);
    const double expected = -1e-3 * m_hat / (std::sqrt(v_hat) + 1e-8);
    CHECK(p[0] == doctest::Approx(expected).epsilon(1e-15));
    CHECK(p[0] == doctest::Approx(-9.9999999e-4).epsilon(1e-6));
}

TEST_CASE("adam: two identical-gradient steps follow the oracle trajectory") {
    Vec p{0.2};
    Vec g{0.7};
    AdamState state;
    AdamConfig cfg;

    // independent scalar oracle
    double op = 0.2, om = 0.0, ov = 0.0;
    for (int t = 1; t <= 2; ++t) {
        om = cfg.beta1 * om + (1 - cfg.beta1) * 0.7;
        ov = cfg.beta2 * ov + (1 - cfg.beta2) * 0.7 * 0.7;
        const double mh = om / (1 - std::pow(cfg.beta1, t));
        const double vh = ov / (1 - std::pow(cfg.beta2, t));
        op -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
        adam_step({&p}, {&g}, state, cfg);
        CHECK(p[0] == doctest::Approx(op).epsilon(1e-15));
    }
}

TEST_CASE("adam: zero gradients leave parameters fixed, moments decay toward zero") {
    Vec p{1.5};
    Vec zero{0.0};
    AdamState state;
    AdamConfig cfg;
    for (int t = 0; t < 5; ++t) adam_step({&p}, {&zero}, state, cfg);
    CHECK(p[0] == 1.5);
    CHECK(state.m[0][0] == 0.0);
    CHECK(state.v[0][0] == 0.0);

    // After one real gradient, zero gradients shrink the first moment
    // geometrically.
    Vec g{1.0};
    adam_step({&p}, {&g}, state, cfg);
    const double m_after = state.m[0][0];
    for (int t = 0; t < 4; ++t) adam_step({&p}, {&zero}, state, cfg);
    CHECK(state.m[0][0] == doctest::Approx(m_after * 0.5 * 0.5 * 0.5 * 0.5).epsilon(1e-12));
}

TEST_CASE("adam: shape mismatches raise shape errors") {
    Vec p{1.0, 2.0};
    Vec g{1.0};
    AdamState state;
    AdamConfig cfg;
    CHECK_THROWS_AS(adam_step({&p}, {&g}, state, cfg), ShapeError);
}

TEST_CASE("gradient checks pass their thresholds") {
    const GradCheckReport loss_report = grad_check("loss", 7);
    CHECK(loss_report.pass);
    CHECK(loss_report.max_rel_error < 1e-5);

    const GradCheckReport pab_report = grad_check("pab", 7);
    CHECK(pab_report.pass);
    CHECK(pab_report.max_rel_error < 1e-4);

    CHECK_THROWS_AS(grad_check("nonsense", 7), ConfigError);
}

TEST_CASE("training: zero learning rate changes nothing") {
    TinySetup setup = make_setup(21, true);
    const auto before = snapshot(setup.net, &setup.pose);
    TrainConfig tc;
    tc.batch_size = 64;  // covers every profile image: one batch slot per epoch
    tc.steps = 10;
    tc.learning_rate = 0.0;
    tc.seed = 21;
    const TrainLog log = train(setup.net, &setup.pose, setup.samples, setup.records, tc);
    const auto after = snapshot(setup.net, &setup.pose);
    for (const auto& [name, values] : before) {
        const Vec& now = after.at(name);
        for (std::size_t i = 0; i < values.size(); ++i) CHECK(values[i] == now[i]);
    }
    CHECK(log.entries.size() == 10);
    // constant parameters + the repeating epoch schedule: identical losses
    CHECK(log.entries.front().loss == log.entries.back().loss);
}

TEST_CASE("training: deterministic for a fixed seed") {
    TinySetup a = make_setup(33, true);
    TinySetup b = make_setup(33, true);
    TrainConfig tc;
    tc.batch_size = 8;
    tc.steps = 15;
    tc.seed = 5;
    const TrainLog la = train(a.net, &a.pose, a.samples, a.records, tc);
    const TrainLog lb = train(b.net, &b.pose, b.samples, b.records, tc);
    REQUIRE(la.entries.size() == lb.entries.size());
    for (std::size_t i = 0; i < la.entries.size(); ++i)
        CHECK(la.entries[i].loss == lb.entries[i].loss);  // bit-identical

    const auto sa = snapshot(a.net, &a.pose);
    const auto sb = snapshot(b.net, &b.pose);
    for (const auto& [name, values] : sa) {
        const Vec& other = sb.at(name);
        for (std::size_t i = 0; i < values.size(); ++i) CHECK(values[i] == other[i]);
    }
}

TEST_CASE("training: freeze contract and gradient flow") {
    TinySetup setup = make_setup(44, true);
    const auto before = snapshot(setup.net, &setup.pose);
    TrainConfig tc;
    tc.batch_size = 8;
    tc.steps = 30;
    tc.seed = 3;
    train(setup.net, &setup.pose, setup.samples, setup.records, tc);
    const auto after = snapshot(setup.net, &setup.pose);

    std::set<std::string> trainable_names;
    for (const auto& r : setup.net.trainable_params()) trainable_names.insert(r.name);

    for (const auto& [name, values] : before) {
        const Vec& now = after.at(name);
        bool changed = false;
        for (std::size_t i = 0; i < values.size(); ++i)
            if (values[i] != now[i]) changed = true;
        if (trainable_names.count(name)) {
            CHECK_MESSAGE(changed, name << " should receive updates");
        } else {
            CHECK_MESSAGE(!changed, name << " must stay bit-identical");
        }
    }

    // at least one attention parameter moved
    bool pab_changed = false;
    for (const auto& name : trainable_names)
        if (name.rfind("pab.", 0) == 0 && before.at(name) != after.at(name)) pab_changed = true;
    CHECK(pab_changed);
}

TEST_CASE("training: one step with attention disabled trains heads only") {
    TinySetup setup = make_setup(55, false);
    const auto before = snapshot(setup.net, nullptr);
    TrainConfig tc;
    tc.batch_size = 8;
    tc.steps = 5;
    tc.seed = 9;
    train(setup.net, nullptr, setup.samples, setup.records, tc);
    const auto after = snapshot(setup.net, nullptr);
    for (const auto& [name, values] : before) {
        const bool frozen = name.rfind("backbone.", 0) == 0;
        const bool changed = values != after.at(name);
        if (frozen)
            CHECK(!changed);
        else
            CHECK(changed);
    }
}

TEST_CASE("training: divergence aborts with a diagnostic") {
    TinySetup setup = make_setup(66, false);
    TrainConfig tc;
    tc.batch_size = 8;
    tc.steps = 50;
    tc.learning_rate = 1e200;
    tc.seed = 1;
    CHECK_THROWS_AS(train(setup.net, nullptr, setup.samples, setup.records, tc),
                    DivergenceError);
}

TEST_CASE("training: loss halves on the seeded reference run") {
    TinySetup setup = make_setup(77, true, 10);
    TrainConfig tc;
    tc.batch_size = 16;
    tc.steps = 500;
    tc.seed = 77;
    const TrainLog log = train(setup.net, &setup.pose, setup.samples, setup.records, tc);
    REQUIRE(log.entries.size() == 500);

    auto window_mean = [&](std::size_t from) {
        double acc = 0.0;
        for (std::size_t i = from; i < from + 50; ++i) acc += log.entries[i].loss;
        return acc / 50.0;
    };
    const double initial = window_mean(0);
    const double final = window_mean(450);
    CHECK(final < 0.5 * initial);
}

TEST_CASE("train log file format") {
    TinySetup setup = make_setup(88, false);
    TrainConfig tc;
    tc.batch_size = 8;
    tc.steps = 4;
    tc.seed = 2;
    const TrainLog log = train(setup.net, nullptr, setup.samples, setup.records, tc);

    const auto dir = std::filesystem::temp_directory_path() / "pabnet_test_trainlog";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "log.tsv").string();
    write_train_log(path, log, "{}");

    std::ifstream f(path);
    std::string line;
    REQUIRE(std::getline(f, line));
    CHECK(line == "#pab-trainlog-v1");
    REQUIRE(std::getline(f, line));
    CHECK(line.rfind("#cfg\t", 0) == 0);
    REQUIRE(std::getline(f, line));
    CHECK(line.rfind("#seed\t", 0) == 0);
    int steps = 0;
    while (std::getline(f, line)) {
        if (line.rfind("#", 0) == 0) continue;
        ++steps;
    }
    CHECK(steps == 4);
}
