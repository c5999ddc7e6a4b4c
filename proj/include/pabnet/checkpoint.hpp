#pragma once

#include <map>
#include <string>
#include <vector>

#include "pabnet/tensor.hpp"

#include "json.hpp"

namespace pabnet {

inline constexpr const char* kCheckpointVersion = "pabnet-v1";

// Named view into a live parameter array.
struct ParamRef {
    std::string name;
    std::vector<std::size_t> shape;
    Vec* data = nullptr;

    std::size_t count() const {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }
};

using ParamRefs = std::vector<ParamRef>;

// Serialized snapshot, independent of any model object.
struct CheckpointData {
    nlohmann::json config;
    std::vector<std::string> names;                       // array order
    std::map<std::string, std::vector<std::size_t>> shapes;
    std::map<std::string, Vec> arrays;

    bool has(const std::string& name) const { return arrays.count(name) != 0; }
};

// Container layout: version line, header-length line, JSON header (config
// echo plus array descriptors), then the raw little-endian float32 data in
// descriptor order.
void save_checkpoint(const std::string& path, const nlohmann::json& config,
                     const ParamRefs& params);

CheckpointData load_checkpoint(const std::string& path);

// Copies stored arrays into live refs; every ref must be present with a
// matching shape.
void restore_params(const CheckpointData& data, const ParamRefs& params);

// Float32 round-trip applied in-place; parameters hold exactly the values a
// checkpoint save/load cycle would produce.
void quantize_params_f32(const ParamRefs& params);

}  // namespace pabnet
