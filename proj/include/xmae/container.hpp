#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace xmae {

/// Flat binary file: 8-byte magic, u64 LE header length, JSON header text,
/// u64 LE payload count, then that many little-endian IEEE-754 doubles.
struct Container {
  nlohmann::json header;
  std::vector<double> payload;
};

inline constexpr std::string_view kMlpMagic = "XMAEMLP1";
inline constexpr std::string_view kModelMagic = "XMAEMOD1";

void write_container(std::ostream& out, std::string_view magic, const nlohmann::json& header,
                     std::span<const double> payload);
Container read_container(std::istream& in, std::string_view magic, const std::string& source);

void write_container_file(const std::string& path, std::string_view magic,
                          const nlohmann::json& header, std::span<const double> payload);
Container read_container_file(const std::string& path, std::string_view magic);

// Little-endian primitives, shared with the binary feature format.
void write_u32_le(std::ostream& out, std::uint32_t v);
void write_u64_le(std::ostream& out, std::uint64_t v);
void write_f64_le(std::ostream& out, double v);
bool read_u32_le(std::istream& in, std::uint32_t& v);
bool read_u64_le(std::istream& in, std::uint64_t& v);
bool read_f64_le(std::istream& in, double& v);

}  // namespace xmae
