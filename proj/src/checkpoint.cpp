#include "pabnet/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "pabnet/errors.hpp"

namespace pabnet {

namespace {

void put_f32_le(std::string& out, float f) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(f);
    out.push_back(static_cast<char>(u & 0xff));
    out.push_back(static_cast<char>((u >> 8) & 0xff));
    out.push_back(static_cast<char>((u >> 16) & 0xff));
    out.push_back(static_cast<char>((u >> 24) & 0xff));
}

float get_f32_le(const unsigned char* p) {
    const std::uint32_t u = static_cast<std::uint32_t>(p[0]) |
                            (static_cast<std::uint32_t>(p[1]) << 8) |
                            (static_cast<std::uint32_t>(p[2]) << 16) |
                            (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(u);
}

}  // namespace

void save_checkpoint(const std::string& path, const nlohmann::json& config,
                     const ParamRefs& params) {
    nlohmann::json header;
    header["version"] = kCheckpointVersion;
    header["config"] = config;
    header["arrays"] = nlohmann::json::array();
    for (const auto& p : params) {
        if (p.count() != p.data->size())
            throw ShapeError("parameter " + p.name + " shape does not match its storage");
        header["arrays"].push_back({{"name", p.name}, {"shape", p.shape}, {"dtype", "f32"}});
    }

    std::string blob;
    for (const auto& p : params)
        for (double v : *p.data) put_f32_le(blob, static_cast<float>(v));

    const std::string header_str = header.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open checkpoint for writing: " + path);
    f << kCheckpointVersion << "\n" << header_str.size() << "\n" << header_str;
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!f) throw FormatError("failed writing checkpoint: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open checkpoint: " + path);
    std::string version;
    if (!std::getline(f, version) || version != kCheckpointVersion)
        throw FormatError("checkpoint is not " + std::string(kCheckpointVersion) + ": " + path);
    std::string len_line;
    if (!std::getline(f, len_line)) throw FormatError("checkpoint missing header length");
    std::size_t header_len = 0;
    try {
        header_len = std::stoull(len_line);
    } catch (const std::exception&) {
        throw FormatError("bad checkpoint header length: '" + len_line + "'");
    }
    std::string header_str(header_len, '\0');
    f.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (f.gcount() != static_cast<std::streamsize>(header_len))
        throw FormatError("truncated checkpoint header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("unparseable checkpoint header: ") + e.what());
    }

    CheckpointData data;
    data.config = header.value("config", nlohmann::json::object());
    for (const auto& entry : header.at("arrays")) {
        const std::string name = entry.at("name").get<std::string>();
        if (entry.at("dtype").get<std::string>() != "f32")
            throw FormatError("unsupported dtype for array " + name);
        std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
        std::size_t count = 1;
        for (std::size_t d : shape) count *= d;
        std::vector<unsigned char> raw(count * 4);
        f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (f.gcount() != static_cast<std::streamsize>(raw.size()))
            throw FormatError("truncated checkpoint data for array " + name);
        Vec values(count);
        for (std::size_t i = 0; i < count; ++i)
            values[i] = static_cast<double>(get_f32_le(&raw[i * 4]));
        data.names.push_back(name);
        data.shapes[name] = std::move(shape);
        data.arrays[name] = std::move(values);
    }
    return data;
}

void restore_params(const CheckpointData& data, const ParamRefs& params) {
    for (const auto& p : params) {
        const auto it = data.arrays.find(p.name);
        if (it == data.arrays.end())
            throw FormatError("checkpoint missing parameter " + p.name);
        if (data.shapes.at(p.name) != p.shape)
            throw FormatError("checkpoint shape mismatch for parameter " + p.name);
        *p.data = it->second;
    }
}

void quantize_params_f32(const ParamRefs& params) {
    for (const auto& p : params)
        for (double& v : *p.data) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace pabnet
