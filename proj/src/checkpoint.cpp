#include "heg/checkpoint.hpp"

#include "heg/errors.hpp"

#include "json.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace heg {

namespace {

constexpr std::array<char, 8> kMagic{'H', 'E', 'G', 'C', 'K', 'P', 'T', '\0'};

void put_u64(std::ostream& out, std::uint64_t v) {
    std::array<char, 8> b;
    for (int k = 0; k < 8; ++k) b[static_cast<std::size_t>(k)] = static_cast<char>((v >> (8 * k)) & 0xff);
    out.write(b.data(), 8);
}

std::uint64_t get_u64(const char* b) {
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= std::uint64_t(static_cast<unsigned char>(b[k])) << (8 * k);
    return v;
}

}  // namespace

const NamedArray& Checkpoint::array(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return a;
    throw InvalidInput("checkpoint has no array named " + name);
}

bool Checkpoint::has_array(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return true;
    return false;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json manifest;
    manifest["version"] = ckpt.version;
    // stored as a string: JSON numbers are not guaranteed to carry 64 bits
    manifest["config_hash"] = std::to_string(ckpt.config_hash);
    manifest["iteration"] = ckpt.iteration;
    std::uint64_t step_bits = std::bit_cast<std::uint64_t>(ckpt.step_size);
    manifest["step_size_bits"] = std::to_string(step_bits);
    manifest["rng_states"] = ckpt.rng_states;
    manifest["arrays"] = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& a : ckpt.arrays) {
        std::int64_t count = 1;
        for (auto s : a.shape) count *= s;
        if (count != static_cast<std::int64_t>(a.data.size()))
            throw InvalidInput("checkpoint array " + a.name + " does not match its shape");
        manifest["arrays"].push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"count", count}});
        offset += a.data.size();
    }
    const std::string text = manifest.dump();

    // write-then-rename keeps the previous checkpoint intact if we die mid-write
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InvalidInput("cannot write checkpoint " + path);
        out.write(kMagic.data(), kMagic.size());
        put_u64(out, text.size());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& a : ckpt.arrays)
            for (double v : a.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
        if (!out) throw InvalidInput("failed while writing checkpoint " + path);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
        throw ConfigError(path + " is not a checkpoint file");
    const std::uint64_t len = get_u64(bytes.data() + 8);
    if (16 + len > bytes.size()) throw ConfigError("truncated checkpoint manifest in " + path);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("corrupt checkpoint manifest in " + path + ": " + e.what());
    }
    Checkpoint ck;
    ck.version = manifest.at("version").get<int>();
    if (ck.version != Checkpoint::format_version)
        throw ConfigError("unsupported checkpoint version " + std::to_string(ck.version));
    ck.config_hash = std::stoull(manifest.at("config_hash").get<std::string>());
    ck.iteration = manifest.at("iteration").get<long>();
    ck.step_size = std::bit_cast<double>(std::uint64_t(std::stoull(manifest.at("step_size_bits").get<std::string>())));
    ck.rng_states = manifest.at("rng_states").get<std::vector<std::string>>();
    const char* payload = bytes.data() + 16 + len;
    const std::size_t available = (bytes.size() - 16 - len) / 8;
    for (const auto& a : manifest.at("arrays")) {
        NamedArray arr;
        arr.name = a.at("name").get<std::string>();
        arr.shape = a.at("shape").get<std::vector<std::int64_t>>();
        const auto offset = a.at("offset").get<std::size_t>();
        const auto count = a.at("count").get<std::size_t>();
        if (offset + count > available) throw ConfigError("truncated checkpoint payload in " + path);
        arr.data.resize(count);
        for (std::size_t k = 0; k < count; ++k)
            arr.data[k] = std::bit_cast<double>(get_u64(payload + 8 * (offset + k)));
        ck.arrays.push_back(std::move(arr));
    }
    return ck;
}

}  // namespace heg
