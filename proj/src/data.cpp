#include "pabnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "pabnet/errors.hpp"

namespace fs = std::filesystem;

namespace pabnet {

namespace {

constexpr double kPi = 3.14159265358979323846;

double format_round_trip(const std::string& s) {
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw FormatError("bad numeric field: '" + s + "'");
    }
}

std::string format_yaw(double yaw) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", yaw);
    return buf;
}

// Per-identity appearance: a base tone, a handful of low-frequency waves and
// landmark blobs, all drawn from the identity's own stream.
struct IdentityTexture {
    double base[3];
    struct Wave {
        double fx, fy, phase;
        double weight[3];
    };
    std::vector<Wave> waves;
    struct Blob {
        double cx, cy, sigma, gain;
        double color[3];
    };
    std::vector<Blob> blobs;
};

IdentityTexture make_identity_texture(std::uint64_t seed, int identity_index) {
    Rng rng(mix_seed(seed, 1000 + static_cast<std::uint64_t>(identity_index)));
    IdentityTexture t;
    for (double& b : t.base) b = rng.uniform(0.35, 0.65);
    for (int k = 0; k < 4; ++k) {
        IdentityTexture::Wave w;
        w.fx = rng.uniform(0.8, 2.6);
        w.fy = rng.uniform(0.8, 2.6);
        w.phase = rng.uniform(0.0, 2.0 * kPi);
        for (double& c : w.weight) c = rng.uniform(-0.11, 0.11);
        t.waves.push_back(w);
    }
    // Eyes, nose, mouth with identity-specific jitter.
    const double spots[4][2] = {{-0.17, -0.13}, {0.17, -0.13}, {0.0, 0.04}, {0.0, 0.22}};
    for (int k = 0; k < 4; ++k) {
        IdentityTexture::Blob b;
        b.cx = spots[k][0] + rng.uniform(-0.03, 0.03);
        b.cy = spots[k][1] + rng.uniform(-0.03, 0.03);
        b.sigma = rng.uniform(0.035, 0.06);
        b.gain = (k < 2 ? -1.0 : (rng.uniform() < 0.5 ? -1.0 : 1.0)) * rng.uniform(0.25, 0.45);
        for (double& c : b.color) c = rng.uniform(0.6, 1.0);
        t.blobs.push_back(b);
    }
    return t;
}

double texture_value(const IdentityTexture& t, int channel, double a, double b) {
    double v = t.base[channel];
    for (const auto& w : t.waves)
        v += w.weight[channel] * std::sin(2.0 * kPi * (w.fx * a + w.fy * b) + w.phase);
    for (const auto& bl : t.blobs) {
        const double dx = a - bl.cx;
        const double dy = b - bl.cy;
        v += bl.gain * bl.color[channel] *
             std::exp(-(dx * dx + dy * dy) / (2.0 * bl.sigma * bl.sigma));
    }
    return v;
}

Tensor3 render(const IdentityTexture& tex, int size, double yaw_deg, double illumination) {
    const double yaw = yaw_deg * kPi / 180.0;
    const double scale = 1.0 - 0.55 * std::sin(std::fabs(yaw));
    const double shift = 0.18 * std::sin(yaw);
    const double shear = 0.30 * std::sin(yaw);
    const double bg[3] = {0.08, 0.10, 0.12};

    Tensor3 img(3, size, size);
    for (int y = 0; y < size; ++y) {
        const double v = (y + 0.5) / size - 0.5;
        for (int x = 0; x < size; ++x) {
            const double u = (x + 0.5) / size - 0.5;
            const double a = (u - shift - shear * v) / scale;
            const double ea = a / 0.42;
            const double eb = v / 0.48;
            const bool inside = std::fabs(a) <= 0.5 && (ea * ea + eb * eb) <= 1.0;
            for (int c = 0; c < 3; ++c) {
                double val = inside ? texture_value(tex, c, a, v) : bg[c];
                val = std::clamp(val, 0.0, 1.0) * illumination;
                img.at(c, y, x) = std::clamp(val, 0.0, 1.0);
            }
        }
    }
    return img;
}

}  // namespace

SynthDataset generate_synthetic(const SynthConfig& config) {
    if (config.n_identities < 1) throw ConfigError("n_identities must be positive");
    if (config.image_size < 8) throw ConfigError("image_size must be at least 8");
    if (config.yaw_grid.empty()) throw ConfigError("yaw_grid must be non-empty");
    for (double y : config.yaw_grid)
        if (y < -90.0 || y > 90.0)
            throw ConfigError("yaw_grid entry out of [-90, 90]: " + format_yaw(y));
    if (config.illumination_levels.empty())
        throw ConfigError("illumination_levels must be non-empty");
    for (double l : config.illumination_levels)
        if (!(l > 0.0)) throw ConfigError("illumination level must be positive");

    const int n_train = std::clamp(
        static_cast<int>(std::lround(config.train_fraction * config.n_identities)), 0,
        config.n_identities);

    SynthDataset ds;
    for (int id = 0; id < config.n_identities; ++id) {
        const IdentityTexture tex = make_identity_texture(config.seed, id);
        char ident[16];
        std::snprintf(ident, sizeof(ident), "id%03d", id);
        const std::string split = id < n_train ? "train" : "test";
        for (std::size_t yi = 0; yi < config.yaw_grid.size(); ++yi) {
            for (std::size_t li = 0; li < config.illumination_levels.size(); ++li) {
                const double yaw = config.yaw_grid[yi];
                char path[128];
                std::snprintf(path, sizeof(path), "images/%s_y%+07.1f_il%zu.ppm", ident, yaw, li);
                ds.records.push_back({path, ident, yaw, split});
                ds.images.push_back(
                    render(tex, config.image_size, yaw, config.illumination_levels[li]));
            }
        }
    }
    return ds;
}

View view_of(double yaw_degrees, double frontal_threshold_deg) {
    return std::fabs(yaw_degrees) <= frontal_threshold_deg ? View::frontal : View::profile;
}

std::vector<PairDescriptor> sample_balanced_pairs(const std::vector<ManifestRecord>& records,
                                                  int n_pairs, Rng& rng,
                                                  double frontal_threshold_deg) {
    if (n_pairs <= 0 || n_pairs % 2 != 0)
        throw InvalidInputError("n_pairs must be even and positive");

    // identity -> indices by view
    std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> by_id;  // (front, prof)
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto& entry = by_id[records[i].identity];
        if (view_of(records[i].yaw_degrees, frontal_threshold_deg) == View::frontal)
            entry.first.push_back(static_cast<int>(i));
        else
            entry.second.push_back(static_cast<int>(i));
    }

    std::vector<std::string> both_ids, frontal_ids, profile_ids;
    for (const auto& [id, entry] : by_id) {
        if (!entry.first.empty()) frontal_ids.push_back(id);
        if (!entry.second.empty()) profile_ids.push_back(id);
        if (!entry.first.empty() && !entry.second.empty()) both_ids.push_back(id);
    }
    if (both_ids.size() < 2)
        throw InvalidInputError("balanced sampling needs at least 2 identities with both views");

    auto pick = [&](const std::vector<int>& v) { return v[rng.index(v.size())]; };

    std::vector<PairDescriptor> out;
    out.reserve(n_pairs);
    for (int k = 0; k < n_pairs / 2; ++k) {
        // genuine
        const std::string& gid = both_ids[rng.index(both_ids.size())];
        const auto& gentry = by_id[gid];
        out.push_back({pick(gentry.second), pick(gentry.first), PairLabel::genuine});

        // impostor: profile identity != frontal identity
        const std::string& pid = profile_ids[rng.index(profile_ids.size())];
        std::size_t skip = frontal_ids.size();
        for (std::size_t i = 0; i < frontal_ids.size(); ++i)
            if (frontal_ids[i] == pid) skip = i;
        const std::size_t choices = frontal_ids.size() - (skip < frontal_ids.size() ? 1 : 0);
        if (choices == 0)
            throw InvalidInputError("no impostor identity available for " + pid);
        std::size_t j = rng.index(choices);
        if (j >= skip) ++j;
        const std::string& fid = frontal_ids[j];
        out.push_back({pick(by_id[pid].second), pick(by_id[fid].first), PairLabel::impostor});
    }
    return out;
}

std::vector<std::vector<int>> partition_identities(const std::vector<ManifestRecord>& records,
                                                   int k, std::uint64_t seed) {
    if (k < 2) throw ProtocolError("fold count must be at least 2");
    std::set<std::string> id_set;
    for (const auto& r : records) id_set.insert(r.identity);
    if (static_cast<int>(id_set.size()) < k)
        throw ProtocolError("fewer identities (" + std::to_string(id_set.size()) +
                            ") than folds (" + std::to_string(k) + ")");

    std::vector<std::string> ids(id_set.begin(), id_set.end());
    Rng rng(mix_seed(seed, 77));
    for (std::size_t i = ids.size(); i > 1; --i)
        std::swap(ids[i - 1], ids[rng.index(i)]);

    std::map<std::string, int> group;
    for (std::size_t i = 0; i < ids.size(); ++i) group[ids[i]] = static_cast<int>(i % k);

    std::vector<std::vector<int>> out(k);
    for (std::size_t i = 0; i < records.size(); ++i)
        out[group[records[i].identity]].push_back(static_cast<int>(i));
    return out;
}

FoldSplit split_folds(const std::vector<PairDescriptor>& pairs,
                      const std::vector<ManifestRecord>& records, int k, std::uint64_t seed) {
    if (k < 2) throw ProtocolError("fold count must be at least 2");
    std::vector<ManifestRecord> pair_records;
    for (const auto& p : pairs) {
        pair_records.push_back(records.at(p.profile_index));
        pair_records.push_back(records.at(p.frontal_index));
    }
    const auto groups = partition_identities(pair_records, k, seed);
    std::map<std::string, int> group;
    for (int g = 0; g < k; ++g)
        for (int idx : groups[g]) group[pair_records[idx].identity] = g;

    std::vector<std::vector<PairDescriptor>> genuine(k), impostor(k);
    for (const auto& p : pairs) {
        const int gp = group[records[p.profile_index].identity];
        const int gf = group[records[p.frontal_index].identity];
        if (gp != gf) continue;  // straddles two folds: dropped
        (p.label == PairLabel::genuine ? genuine[gp] : impostor[gp]).push_back(p);
    }

    std::size_t m = pairs.size();
    for (int f = 0; f < k; ++f)
        m = std::min({m, genuine[f].size(), impostor[f].size()});
    if (m == 0)
        throw ProtocolError(
            "could not fill every fold with both genuine and impostor pairs; "
            "identity-disjoint folds need at least 2 identities per fold "
            "(use fewer folds or more identities)");

    FoldSplit out;
    out.folds.resize(k);
    for (int f = 0; f < k; ++f) {
        out.folds[f].insert(out.folds[f].end(), genuine[f].begin(), genuine[f].begin() + m);
        out.folds[f].insert(out.folds[f].end(), impostor[f].begin(), impostor[f].begin() + m);
    }
    out.dropped = static_cast<int>(pairs.size() - 2 * m * static_cast<std::size_t>(k));
    return out;
}

int yaw_bucket(double yaw_degrees) {
    const double a = std::fabs(yaw_degrees);
    static const int centers[] = {15, 30, 45, 60, 75, 90};
    int best = centers[0];
    double best_d = std::fabs(a - centers[0]);
    for (int c : centers) {
        const double d = std::fabs(a - c);
        if (d <= best_d) {  // ties go to the larger bucket
            best_d = d;
            best = c;
        }
    }
    return best;
}

std::map<int, std::vector<int>> bucket_by_yaw(const std::vector<ManifestRecord>& records) {
    std::map<int, std::vector<int>> out;
    for (std::size_t i = 0; i < records.size(); ++i)
        out[yaw_bucket(records[i].yaw_degrees)].push_back(static_cast<int>(i));
    return out;
}

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open manifest for writing: " + path);
    f << kManifestHeader << "\n";
    for (const auto& r : records)
        f << r.path << "\t" << r.identity << "\t" << format_yaw(r.yaw_degrees) << "\t" << r.split
          << "\n";
    if (!f) throw FormatError("failed writing manifest: " + path);
}

std::vector<ManifestRecord> read_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open manifest: " + path);
    std::string line;
    if (!std::getline(f, line) || line != kManifestHeader)
        throw FormatError("manifest missing " + std::string(kManifestHeader) + " header: " + path);
    std::vector<ManifestRecord> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        ManifestRecord r;
        std::string yaw;
        if (!std::getline(ss, r.path, '\t') || !std::getline(ss, r.identity, '\t') ||
            !std::getline(ss, yaw, '\t') || !std::getline(ss, r.split))
            throw FormatError("malformed manifest line: '" + line + "'");
        r.yaw_degrees = format_round_trip(yaw);
        if (r.identity.empty()) throw FormatError("manifest record with empty identity");
        if (r.yaw_degrees < -90.0 || r.yaw_degrees > 90.0)
            throw FormatError("manifest yaw out of range: " + yaw);
        out.push_back(std::move(r));
    }
    return out;
}

void write_ppm(const std::string& path, const Tensor3& image) {
    if (image.channels != 3) throw ShapeError("PPM writer expects a 3-channel image");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open image for writing: " + path);
    f << "P6\n" << image.width << " " << image.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * 3);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
                row[static_cast<std::size_t>(x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw FormatError("failed writing image: " + path);
}

Tensor3 read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open image: " + path);
    std::string magic;
    f >> magic;
    if (magic != "P6") throw FormatError("not a binary PPM: " + path);
    auto next_int = [&]() {
        // skip whitespace and '#' comments
        int ch = f.peek();
        while (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '#') {
            if (ch == '#') {
                std::string comment;
                std::getline(f, comment);
            } else {
                f.get();
            }
            ch = f.peek();
        }
        int value = 0;
        f >> value;
        return value;
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    if (w <= 0 || h <= 0 || maxval != 255) throw FormatError("unsupported PPM header: " + path);
    f.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (f.gcount() != static_cast<std::streamsize>(raw.size()))
        throw FormatError("truncated PPM data: " + path);
    Tensor3 img(3, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = raw[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0;
    return img;
}

std::string write_dataset(const SynthDataset& dataset, const std::string& out_dir) {
    fs::create_directories(fs::path(out_dir) / "images");
    for (std::size_t i = 0; i < dataset.records.size(); ++i)
        write_ppm((fs::path(out_dir) / dataset.records[i].path).string(), dataset.images[i]);
    const std::string manifest = (fs::path(out_dir) / "manifest.tsv").string();
    write_manifest(manifest, dataset.records);
    return manifest;
}

std::vector<ImageSample> load_samples(const std::string& manifest_path,
                                      double frontal_threshold_deg) {
    const auto records = read_manifest(manifest_path);
    const fs::path root = fs::path(manifest_path).parent_path();
    std::vector<ImageSample> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        ImageSample s;
        s.id = r.path;
        s.identity = r.identity;
        s.yaw_degrees = r.yaw_degrees;
        s.view = view_of(r.yaw_degrees, frontal_threshold_deg);
        s.pixels = read_ppm((root / r.path).string());
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace pabnet
