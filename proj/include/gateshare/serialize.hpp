#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace gateshare {

/// Lossless encoding of a double array as base64 over the raw little-endian
/// bytes. Checkpoints and model files must round-trip at full precision, so
/// decimal rendering is not an option.
std::string base64_encode_doubles(const std::vector<double>& values);
std::vector<double> base64_decode_doubles(const std::string& text);

/// JSON representation of a named dense array: {"shape": [...], "data": "..."}.
nlohmann::json tensor_record(const std::vector<std::size_t>& shape,
                             const std::vector<double>& data);
void read_tensor_record(const nlohmann::json& rec, std::vector<std::size_t>& shape,
                        std::vector<double>& data);

/// FNV-1a 64-bit over a string; stable across platforms. Used for config
/// hashes in run summaries.
std::uint64_t fnv1a64(const std::string& text);
std::string hash_hex(std::uint64_t value);

}  // namespace gateshare
