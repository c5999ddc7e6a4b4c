#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "pabnet/data.hpp"
#include "pabnet/errors.hpp"

using namespace pabnet;
namespace fs = std::filesystem;

namespace {

double image_l2(const Tensor3& a, const Tensor3& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        const double d = a.v[i] - b.v[i];
        acc += d * d;
    }
    return std::sqrt(acc / a.v.size());
}

fs::path temp_dir(const char* tag) {
    fs::path p = fs::temp_directory_path() / (std::string("pabnet_test_") + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("synthetic generator: record count and determinism") {
    SynthConfig cfg;
    cfg.n_identities = 10;
    cfg.image_size = 24;
    const SynthDataset a = generate_synthetic(cfg);
    CHECK(a.records.size() == 10 * 13);
    CHECK(a.images.size() == a.records.size());

    const SynthDataset b = generate_synthetic(cfg);
    for (std::size_t i = 0; i < a.images.size(); ++i) {
        REQUIRE(a.images[i].v.size() == b.images[i].v.size());
        for (std::size_t j = 0; j < a.images[i].v.size(); ++j)
            CHECK(a.images[i].v[j] == b.images[i].v[j]);
    }

    // every identity at every yaw
    std::set<std::pair<std::string, double>> combos;
    for (const auto& r : a.records) combos.insert({r.identity, r.yaw_degrees});
    CHECK(combos.size() == a.records.size());
}

TEST_CASE("synthetic generator: config validation") {
    SynthConfig cfg;
    cfg.yaw_grid = {0.0, 120.0};
    CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
    SynthConfig cfg2;
    cfg2.n_identities = 0;
    CHECK_THROWS_AS(generate_synthetic(cfg2), ConfigError);
    SynthConfig cfg3;
    cfg3.illumination_levels = {};
    CHECK_THROWS_AS(generate_synthetic(cfg3), ConfigError);
}

TEST_CASE("synthetic generator: distance from frontal grows with yaw") {
    SynthConfig cfg;
    cfg.n_identities = 6;
    cfg.image_size = 32;
    cfg.seed = 3;
    const SynthDataset ds = generate_synthetic(cfg);

    for (int id = 0; id < cfg.n_identities; ++id) {
        // collect this identity's images by |yaw|
        const Tensor3* frontal = nullptr;
        for (std::size_t i = 0; i < ds.records.size(); ++i)
            if (ds.records[i].identity == ds.records[id * 13].identity &&
                ds.records[i].yaw_degrees == 0.0)
                frontal = &ds.images[i];
        REQUIRE(frontal != nullptr);

        double prev = -1.0;
        double first = 0.0, last = 0.0;
        for (double yaw : {15.0, 30.0, 45.0, 60.0, 75.0, 90.0}) {
            double dist = 0.0;
            int n = 0;
            for (std::size_t i = 0; i < ds.records.size(); ++i) {
                if (ds.records[i].identity != ds.records[id * 13].identity) continue;
                if (std::fabs(std::fabs(ds.records[i].yaw_degrees) - yaw) > 1e-9) continue;
                dist += image_l2(ds.images[i], *frontal);
                ++n;
            }
            REQUIRE(n == 2);
            dist /= n;
            CHECK(dist >= prev);
            if (yaw == 15.0) first = dist;
            if (yaw == 90.0) last = dist;
            prev = dist;
        }
        CHECK(last > first);  // full profile diverges strictly more than near-frontal
    }
}

TEST_CASE("view tagging and yaw buckets") {
    CHECK(view_of(0.0) == View::frontal);
    CHECK(view_of(15.0) == View::frontal);
    CHECK(view_of(-15.0) == View::frontal);
    CHECK(view_of(30.0) == View::profile);

    CHECK(yaw_bucket(-90.0) == 90);
    CHECK(yaw_bucket(22.5) == 30);  // tie goes to the larger bucket
    CHECK(yaw_bucket(5.0) == 15);
    CHECK(yaw_bucket(67.4) == 60);
    CHECK(yaw_bucket(67.5) == 75);

    std::vector<ManifestRecord> records;
    for (double y : {-90.0, -30.0, 0.0, 44.0, 90.0})
        records.push_back({"p", "id", y, "train"});
    const auto buckets = bucket_by_yaw(records);
    std::size_t total = 0;
    for (const auto& [bucket, members] : buckets) total += members.size();
    CHECK(total == records.size());
}

TEST_CASE("balanced pair sampling") {
    SynthConfig cfg;
    cfg.n_identities = 8;
    cfg.image_size = 16;
    const SynthDataset ds = generate_synthetic(cfg);

    Rng rng(17);
    const auto pairs = sample_balanced_pairs(ds.records, 10, rng);
    REQUIRE(pairs.size() == 10);
    int genuine = 0, impostor = 0;
    for (const auto& p : pairs) {
        const auto& prof = ds.records[p.profile_index];
        const auto& front = ds.records[p.frontal_index];
        CHECK(std::fabs(prof.yaw_degrees) > 15.0);
        CHECK(std::fabs(front.yaw_degrees) <= 15.0);
        if (p.label == PairLabel::genuine) {
            ++genuine;
            CHECK(prof.identity == front.identity);
        } else {
            ++impostor;
            CHECK(prof.identity != front.identity);
        }
    }
    CHECK(genuine == 5);
    CHECK(impostor == 5);

    // determinism under the same stream seed
    Rng rng2(17);
    const auto pairs2 = sample_balanced_pairs(ds.records, 10, rng2);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(pairs[i].profile_index == pairs2[i].profile_index);
        CHECK(pairs[i].frontal_index == pairs2[i].frontal_index);
    }

    CHECK_THROWS_AS(sample_balanced_pairs(ds.records, 9, rng), InvalidInputError);

    // one identity only: cannot build impostors
    std::vector<ManifestRecord> one;
    for (const auto& r : ds.records)
        if (r.identity == ds.records[0].identity) one.push_back(r);
    CHECK_THROWS_AS(sample_balanced_pairs(one, 4, rng), InvalidInputError);
}

TEST_CASE("fold splitting: identity disjointness and balance") {
    SynthConfig cfg;
    cfg.n_identities = 20;
    cfg.image_size = 16;
    cfg.seed = 5;
    const SynthDataset ds = generate_synthetic(cfg);

    Rng rng(23);
    const auto pairs = sample_balanced_pairs(ds.records, 4000, rng);
    const FoldSplit split = split_folds(pairs, ds.records, 4, 99);
    REQUIRE(split.folds.size() == 4);

    // equal sizes with equal genuine/impostor halves
    const std::size_t fold_size = split.folds[0].size();
    CHECK(fold_size >= 2);
    std::size_t kept = 0;
    for (const auto& fold : split.folds) {
        CHECK(fold.size() == fold_size);
        std::size_t genuine = 0;
        for (const auto& p : fold)
            if (p.label == PairLabel::genuine) ++genuine;
        CHECK(genuine * 2 == fold.size());
        kept += fold.size();
    }
    CHECK(kept + static_cast<std::size_t>(split.dropped) == pairs.size());

    // no identity in more than one fold
    std::vector<std::set<std::string>> fold_ids(split.folds.size());
    for (std::size_t f = 0; f < split.folds.size(); ++f)
        for (const auto& p : split.folds[f]) {
            fold_ids[f].insert(ds.records[p.profile_index].identity);
            fold_ids[f].insert(ds.records[p.frontal_index].identity);
        }
    for (std::size_t a = 0; a < fold_ids.size(); ++a)
        for (std::size_t b = a + 1; b < fold_ids.size(); ++b)
            for (const auto& id : fold_ids[a]) CHECK(fold_ids[b].count(id) == 0);

    CHECK_THROWS_AS(split_folds(pairs, ds.records, 25, 1), ProtocolError);
    CHECK_THROWS_AS(split_folds(pairs, ds.records, 1, 1), ProtocolError);
}

TEST_CASE("fold splitting: a drop-free instance partitions the input") {
    // Pairs crafted so that each fold's identities stay inside one group.
    SynthConfig cfg;
    cfg.n_identities = 4;
    cfg.image_size = 16;
    const SynthDataset ds = generate_synthetic(cfg);

    // find the group assignment the splitter would use by probing with
    // same-identity pairs only (genuine never straddles)
    std::vector<PairDescriptor> pairs;
    std::map<std::string, std::pair<int, int>> members;  // identity -> (profile idx, frontal idx)
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        auto& m = members[ds.records[i].identity];
        if (std::fabs(ds.records[i].yaw_degrees) > 15.0)
            m.first = static_cast<int>(i);
        else
            m.second = static_cast<int>(i);
    }
    for (const auto& [id, m] : members) {
        for (int rep = 0; rep < 3; ++rep) {
            pairs.push_back({m.first, m.second, PairLabel::genuine});
            pairs.push_back({m.first, m.second, PairLabel::impostor});
            // mislabeled on purpose: same-identity "impostor" keeps the
            // instance drop-free while exercising the partition logic
        }
    }
    const FoldSplit split = split_folds(pairs, ds.records, 2, 7);
    std::size_t kept = 0;
    for (const auto& fold : split.folds) kept += fold.size();
    CHECK(split.dropped == 0);
    CHECK(kept == pairs.size());
}

TEST_CASE("manifest round trip") {
    const fs::path dir = temp_dir("manifest");
    std::vector<ManifestRecord> records{
        {"images/a.ppm", "id000", -67.5, "train"},
        {"images/b.ppm", "id001", 15.0, "test"},
    };
    const std::string path = (dir / "manifest.tsv").string();
    write_manifest(path, records);
    const auto back = read_manifest(path);
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(back[i].path == records[i].path);
        CHECK(back[i].identity == records[i].identity);
        CHECK(back[i].yaw_degrees == records[i].yaw_degrees);
        CHECK(back[i].split == records[i].split);
    }

    std::ofstream bad((dir / "bad.tsv").string());
    bad << "#wrong-header\n";
    bad.close();
    CHECK_THROWS_AS(read_manifest((dir / "bad.tsv").string()), FormatError);
}

TEST_CASE("ppm round trip quantizes to 8 bits") {
    const fs::path dir = temp_dir("ppm");
    Tensor3 img(3, 5, 7);
    Rng rng(31);
    for (double& v : img.v) v = rng.uniform(0.0, 1.0);
    const std::string path = (dir / "img.ppm").string();
    write_ppm(path, img);
    const Tensor3 back = read_ppm(path);
    REQUIRE(back.height == 5);
    REQUIRE(back.width == 7);
    for (std::size_t i = 0; i < img.v.size(); ++i)
        CHECK(std::fabs(back.v[i] - img.v[i]) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("dataset write + load round trip") {
    const fs::path dir = temp_dir("dataset");
    SynthConfig cfg;
    cfg.n_identities = 3;
    cfg.image_size = 16;
    const SynthDataset ds = generate_synthetic(cfg);
    const std::string manifest = write_dataset(ds, dir.string());
    const auto samples = load_samples(manifest);
    REQUIRE(samples.size() == ds.records.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(samples[i].identity == ds.records[i].identity);
        CHECK(samples[i].view == view_of(ds.records[i].yaw_degrees));
        CHECK(samples[i].pixels.height == 16);
    }
}
