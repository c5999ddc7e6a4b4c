#pragma once

#include <string>
#include <vector>

#include "pabnet/tensor.hpp"

namespace pabnet {

inline constexpr const char* kEmbeddingVersion = "pab-emb-v1";

struct EmbeddingRecord {
    std::string id;
    std::string identity;
    double yaw_degrees = 0.0;
    Vec values;
};

struct EmbeddingFile {
    int dim = 0;
    std::string metric = "cosine";
    std::string config_echo;  // resolved configuration, one JSON line
    std::vector<EmbeddingRecord> records;
};

// Layout: a tab-separated header line (version, dim, count, metric), a "#cfg"
// line with the configuration echo, one metadata line per record, then the
// concatenated little-endian float32 embedding block in record order.
void write_embeddings(const std::string& path, const EmbeddingFile& file);
EmbeddingFile read_embeddings(const std::string& path);

}  // namespace pabnet
