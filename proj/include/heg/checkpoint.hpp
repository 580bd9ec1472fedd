#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace heg {

/// Named float64 array with an explicit shape (row-major).
struct NamedArray {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<double> data;
};

/// Container layout:
///   8 bytes   magic "HEGCKPT\0"
///   8 bytes   manifest length M (little-endian uint64)
///   M bytes   JSON manifest: version, config_hash, iteration, step_size,
///             rng_states, arrays[{name, shape, offset, count}]
///   rest      array payloads, little-endian IEEE-754 float64, offsets in elements
struct Checkpoint {
    static constexpr int format_version = 1;
    int version = format_version;
    std::uint64_t config_hash = 0;
    long iteration = 0;
    double step_size = 0.0;
    std::vector<std::string> rng_states;
    std::vector<NamedArray> arrays;

    const NamedArray& array(const std::string& name) const;
    bool has_array(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace heg
