#include "gateshare/serialize.hpp"

#include <cstring>

#include "gateshare/error.hpp"

namespace gateshare {

namespace {
constexpr char kAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}
}  // namespace

std::string base64_encode_doubles(const std::vector<double>& values) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
  const std::size_t n = values.size() * sizeof(double);
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (std::size_t i = 0; i < n; i += 3) {
    std::uint32_t chunk = static_cast<std::uint32_t>(bytes[i]) << 16;
    if (i + 1 < n) chunk |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
    if (i + 2 < n) chunk |= static_cast<std::uint32_t>(bytes[i + 2]);
    out += kAlphabet[(chunk >> 18) & 63];
    out += kAlphabet[(chunk >> 12) & 63];
    out += (i + 1 < n) ? kAlphabet[(chunk >> 6) & 63] : '=';
    out += (i + 2 < n) ? kAlphabet[chunk & 63] : '=';
  }
  return out;
}

std::vector<double> base64_decode_doubles(const std::string& text) {
  std::vector<unsigned char> bytes;
  bytes.reserve(text.size() / 4 * 3);
  std::uint32_t chunk = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int v = decode_char(c);
    if (v < 0) throw ConfigError("base64: invalid character in encoded data");
    chunk = (chunk << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      bytes.push_back(static_cast<unsigned char>((chunk >> bits) & 0xFF));
    }
  }
  if (bytes.size() % sizeof(double) != 0)
    throw ConfigError("base64: payload length is not a multiple of 8 bytes");
  std::vector<double> values(bytes.size() / sizeof(double));
  std::memcpy(values.data(), bytes.data(), bytes.size());
  return values;
}

nlohmann::json tensor_record(const std::vector<std::size_t>& shape,
                             const std::vector<double>& data) {
  nlohmann::json rec;
  rec["shape"] = shape;
  rec["data"] = base64_encode_doubles(data);
  return rec;
}

void read_tensor_record(const nlohmann::json& rec, std::vector<std::size_t>& shape,
                        std::vector<double>& data) {
  if (!rec.contains("shape") || !rec.contains("data"))
    throw ConfigError("tensor record: missing 'shape' or 'data' field");
  shape = rec.at("shape").get<std::vector<std::size_t>>();
  data = base64_decode_doubles(rec.at("data").get<std::string>());
  std::size_t numel = 1;
  for (auto s : shape) numel *= s;
  if (numel != data.size())
    throw ConfigError("tensor record: shape does not match payload size");
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[value & 0xF];
    value >>= 4;
  }
  return s;
}

}  // namespace gateshare
