#pragma once

// Versioned binary checkpoint:
//
//   bytes 0..7   magic "SITADDA\0"
//   u32 LE       format version
//   u32 LE       header length N
//   N bytes      JSON header: kind, stage, architecture, ordered registry
//                with per-slot value counts
//   float32 LE   parameters, block by block in registry order, slots
//                weight/bias/gamma/beta
//   u64 LE       FNV-1a of the parameter bytes
//
// The header is serialized with sorted keys, so save -> load -> save is
// byte-identical.

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "errors.hpp"
#include "model.hpp"

namespace sitadda {

inline constexpr char kCheckpointMagic[8] = {'S', 'I', 'T', 'A', 'D', 'D', 'A', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelStage { Source, Adapted };

inline const char* to_string(ModelStage s) { return s == ModelStage::Source ? "source" : "adapted"; }

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline void fnv_update(std::uint64_t& h, const void* data, std::size_t n)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
}

template <class T>
void put(std::ostream& os, T v)
{
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is)
{
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("checkpoint truncated");
    return v;
}

inline nlohmann::json architecture_json(const GeneratorConfig& c)
{
    return {{"depth", c.depth},
            {"base_channels", c.base_channels},
            {"channel_cap", c.channel_cap},
            {"norm", nn::to_string(c.norm)},
            {"leaky_slope", c.leaky_slope},
            {"norm_input_block", c.norm_input_block},
            {"norm_bottleneck", c.norm_bottleneck}};
}

inline GeneratorConfig architecture_from_json(const nlohmann::json& j)
{
    GeneratorConfig c;
    c.depth = j.at("depth").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.channel_cap = j.at("channel_cap").get<int>();
    c.norm = nn::norm_kind_from_string(j.at("norm").get<std::string>());
    c.leaky_slope = j.at("leaky_slope").get<float>();
    c.norm_input_block = j.at("norm_input_block").get<bool>();
    c.norm_bottleneck = j.at("norm_bottleneck").get<bool>();
    return c;
}

} // namespace detail

/// FNV-1a over every parameter value in registry order.
inline std::uint64_t parameter_checksum(const std::vector<nn::ConvBlock>& blocks)
{
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& b : blocks)
        for (const auto& slot : b.params) detail::fnv_update(h, slot.data(), slot.size() * sizeof(float));
    return h;
}

inline std::uint64_t parameter_checksum(const GeneratorModel& m) { return parameter_checksum(m.blocks()); }

inline std::string checksum_hex(std::uint64_t h)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct Checkpoint {
    GeneratorModel model;
    ModelStage stage = ModelStage::Source;
};

inline void write_checkpoint(std::ostream& os, const GeneratorModel& model, ModelStage stage)
{
    nlohmann::json header;
    header["kind"] = "generator";
    header["stage"] = to_string(stage);
    header["architecture"] = detail::architecture_json(model.config());
    nlohmann::json reg = nlohmann::json::array();
    for (std::size_t i = 0; i < model.block_count(); ++i) {
        nlohmann::json counts = nlohmann::json::array();
        for (const auto& slot : model.blocks()[i].params) counts.push_back(slot.size());
        reg.push_back({{"name", model.block_names()[i]}, {"counts", counts}});
    }
    header["registry"] = reg;
    const std::string text = header.dump();

    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put<std::uint32_t>(os, kCheckpointVersion);
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& b : model.blocks())
        for (const auto& slot : b.params)
            os.write(reinterpret_cast<const char*>(slot.data()), static_cast<std::streamsize>(slot.size() * sizeof(float)));
    detail::put<std::uint64_t>(os, parameter_checksum(model));
}

inline Checkpoint read_checkpoint(std::istream& is)
{
    char magic[sizeof kCheckpointMagic];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw DataError("not a checkpoint (bad magic)");
    const auto version = detail::get<std::uint32_t>(is);
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    const auto len = detail::get<std::uint32_t>(is);
    std::string text(len, '\0');
    if (!is.read(text.data(), len)) throw DataError("checkpoint truncated");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    if (header.value("kind", "") != "generator") throw DataError("checkpoint does not hold a generator");

    Checkpoint ck;
    ck.stage = header.at("stage").get<std::string>() == "adapted" ? ModelStage::Adapted : ModelStage::Source;
    ck.model = GeneratorModel(detail::architecture_from_json(header.at("architecture")));
    const auto& reg = header.at("registry");
    if (reg.size() != ck.model.block_count()) throw DataError("checkpoint registry does not match its architecture");
    for (std::size_t i = 0; i < reg.size(); ++i) {
        if (reg[i].at("name").get<std::string>() != ck.model.block_names()[i])
            throw DataError("checkpoint registry order differs at block " + std::to_string(i));
        auto& params = ck.model.blocks()[i].params;
        const auto& counts = reg[i].at("counts");
        for (std::size_t slot = 0; slot < nn::kParamSlots; ++slot) {
            if (counts.at(slot).get<std::size_t>() != params[slot].size())
                throw DataError("checkpoint parameter count mismatch in block " + ck.model.block_names()[i]);
            if (!is.read(reinterpret_cast<char*>(params[slot].data()),
                         static_cast<std::streamsize>(params[slot].size() * sizeof(float))))
                throw DataError("checkpoint truncated");
        }
    }
    const auto stored = detail::get<std::uint64_t>(is);
    if (stored != parameter_checksum(ck.model)) throw DataError("checkpoint checksum mismatch");
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const GeneratorModel& model, ModelStage stage)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
    write_checkpoint(os, model, stage);
    if (!os) throw DataError("failed writing '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint '" + path.string() + "'");
    return read_checkpoint(is);
}

} // namespace sitadda
