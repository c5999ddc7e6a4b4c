#include "pabnet/embedding_io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pabnet/errors.hpp"

namespace pabnet {

void write_embeddings(const std::string& path, const EmbeddingFile& file) {
    if (file.dim < 1) throw ShapeError("embedding dimension must be positive");
    for (const auto& r : file.records)
        if (static_cast<int>(r.values.size()) != file.dim)
            throw ShapeError("embedding for " + r.id + " has size " +
                             std::to_string(r.values.size()) + ", header says " +
                             std::to_string(file.dim));

    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open embedding file for writing: " + path);
    f << kEmbeddingVersion << "\tdim=" << file.dim << "\tcount=" << file.records.size()
      << "\tmetric=" << file.metric << "\n";
    f << "#cfg\t" << file.config_echo << "\n";
    char buf[64];
    for (const auto& r : file.records) {
        std::snprintf(buf, sizeof(buf), "%.10g", r.yaw_degrees);
        f << r.id << "\t" << r.identity << "\t" << buf << "\n";
    }
    std::string blob;
    blob.reserve(file.records.size() * file.dim * 4);
    for (const auto& r : file.records) {
        for (double v : r.values) {
            const std::uint32_t u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            blob.push_back(static_cast<char>(u & 0xff));
            blob.push_back(static_cast<char>((u >> 8) & 0xff));
            blob.push_back(static_cast<char>((u >> 16) & 0xff));
            blob.push_back(static_cast<char>((u >> 24) & 0xff));
        }
    }
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!f) throw FormatError("failed writing embeddings: " + path);
}

EmbeddingFile read_embeddings(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open embedding file: " + path);

    std::string header;
    if (!std::getline(f, header)) throw FormatError("empty embedding file: " + path);
    std::stringstream ss(header);
    std::string version, dim_field, count_field, metric_field;
    if (!std::getline(ss, version, '\t') || version != kEmbeddingVersion)
        throw FormatError("embedding file is not " + std::string(kEmbeddingVersion) + ": " +
                          path);
    if (!std::getline(ss, dim_field, '\t') || !std::getline(ss, count_field, '\t') ||
        !std::getline(ss, metric_field))
        throw FormatError("malformed embedding header: " + header);

    auto field_value = [](const std::string& field, const char* key) {
        const std::string prefix = std::string(key) + "=";
        if (field.rfind(prefix, 0) != 0)
            throw FormatError("expected '" + prefix + "...' in embedding header, got '" + field +
                              "'");
        return field.substr(prefix.size());
    };

    EmbeddingFile out;
    std::size_t count = 0;
    try {
        out.dim = std::stoi(field_value(dim_field, "dim"));
        count = std::stoull(field_value(count_field, "count"));
    } catch (const std::exception&) {
        throw FormatError("bad numeric field in embedding header: " + header);
    }
    out.metric = field_value(metric_field, "metric");
    if (out.dim < 1) throw FormatError("embedding header with non-positive dim");

    std::string cfg_line;
    if (!std::getline(f, cfg_line) || cfg_line.rfind("#cfg\t", 0) != 0)
        throw FormatError("embedding file missing #cfg line");
    out.config_echo = cfg_line.substr(5);

    out.records.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::string line;
        if (!std::getline(f, line)) throw FormatError("truncated embedding metadata");
        std::stringstream ls(line);
        std::string yaw;
        if (!std::getline(ls, out.records[i].id, '\t') ||
            !std::getline(ls, out.records[i].identity, '\t') || !std::getline(ls, yaw))
            throw FormatError("malformed embedding record line: '" + line + "'");
        try {
            out.records[i].yaw_degrees = std::stod(yaw);
        } catch (const std::exception&) {
            throw FormatError("bad yaw in embedding record: '" + line + "'");
        }
    }

    const std::size_t blob_size = count * static_cast<std::size_t>(out.dim) * 4;
    std::vector<unsigned char> blob(blob_size);
    f.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob_size));
    if (f.gcount() != static_cast<std::streamsize>(blob_size))
        throw FormatError("embedding data block shorter than header count");

    std::size_t off = 0;
    for (auto& r : out.records) {
        r.values.resize(out.dim);
        for (int d = 0; d < out.dim; ++d) {
            const std::uint32_t u = static_cast<std::uint32_t>(blob[off]) |
                                    (static_cast<std::uint32_t>(blob[off + 1]) << 8) |
                                    (static_cast<std::uint32_t>(blob[off + 2]) << 16) |
                                    (static_cast<std::uint32_t>(blob[off + 3]) << 24);
            r.values[d] = static_cast<double>(std::bit_cast<float>(u));
            off += 4;
        }
    }
    return out;
}

}  // namespace pabnet
