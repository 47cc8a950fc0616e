#include "xmae/container.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>

#include "xmae/errors.hpp"
#include "xmae/numerics.hpp"

namespace xmae {

namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

template <typename U>
bool get_le(std::istream& in, U& v) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) return false;
  v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return true;
}

// Upper bounds that reject garbage lengths before allocating.
constexpr std::uint64_t kMaxHeaderBytes = 64ULL << 20;
constexpr std::uint64_t kMaxPayload = 1ULL << 34;

}  // namespace

void write_u32_le(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void write_u64_le(std::ostream& out, std::uint64_t v) { put_le(out, v); }
void write_f64_le(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
bool read_u32_le(std::istream& in, std::uint32_t& v) { return get_le(in, v); }
bool read_u64_le(std::istream& in, std::uint64_t& v) { return get_le(in, v); }

bool read_f64_le(std::istream& in, double& v) {
  std::uint64_t bits = 0;
  if (!get_le(in, bits)) return false;
  v = std::bit_cast<double>(bits);
  return true;
}

void write_container(std::ostream& out, std::string_view magic, const nlohmann::json& header,
                     std::span<const double> payload) {
  if (magic.size() != 8) throw InvalidArgument("container magic must be 8 bytes");
  const std::string text = header.dump();
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  write_u64_le(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_u64_le(out, payload.size());
  for (double x : payload) write_f64_le(out, x);
}

Container read_container(std::istream& in, std::string_view magic, const std::string& source) {
  char got[8];
  if (!in.read(got, 8) || std::string_view(got, 8) != magic) {
    throw ParseError(source, 0, "bad magic, expected " + std::string(magic));
  }
  std::uint64_t header_len = 0;
  if (!read_u64_le(in, header_len) || header_len > kMaxHeaderBytes) {
    throw ParseError(source, 0, "truncated or oversized header");
  }
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw ParseError(source, 0, "truncated header");
  }
  Container c;
  try {
    c.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, 0, std::string("header is not valid JSON: ") + e.what());
  }
  std::uint64_t count = 0;
  if (!read_u64_le(in, count) || count > kMaxPayload) {
    throw ParseError(source, 0, "truncated or oversized payload count");
  }
  c.payload.resize(count);
  for (auto& x : c.payload) {
    if (!read_f64_le(in, x)) throw ParseError(source, 0, "truncated payload");
  }
  if (!all_finite(c.payload)) throw ParseError(source, 0, "payload contains non-finite values");
  return c;
}

void write_container_file(const std::string& path, std::string_view magic,
                          const nlohmann::json& header, std::span<const double> payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_container(out, magic, header, payload);
  if (!out) throw std::runtime_error("write failed: " + path);
}

Container read_container_file(const std::string& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open file");
  return read_container(in, magic, path);
}

}  // namespace xmae
