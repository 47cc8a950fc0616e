#include <doctest.h>

#include <cmath>
#include <sstream>

#include "xmae/container.hpp"
#include "xmae/errors.hpp"

using namespace xmae;

TEST_CASE("container: round trip is bitwise exact") {
  nlohmann::json header{{"format", "test"}, {"dims", {3, 2}}};
  const std::vector<double> payload{0.1, -1e-300, 3.141592653589793, 1e308};
  std::stringstream buf;
  write_container(buf, "XMAETST1", header, payload);
  const Container c = read_container(buf, "XMAETST1", "mem");
  CHECK(c.header == header);
  REQUIRE(c.payload.size() == payload.size());
  for (std::size_t i = 0; i < payload.size(); ++i) CHECK(c.payload[i] == payload[i]);
}

TEST_CASE("container: wrong magic and truncation are parse errors") {
  std::stringstream buf;
  write_container(buf, "XMAETST1", nlohmann::json::object(), std::vector<double>{1.0, 2.0});
  const std::string bytes = buf.str();
  {
    std::stringstream in(bytes);
    CHECK_THROWS_AS(read_container(in, "XMAEOTHR", "mem"), ParseError);
  }
  {
    std::stringstream in(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_container(in, "XMAETST1", "mem"), ParseError);
  }
}

TEST_CASE("container: non-finite payload is rejected on read") {
  std::stringstream buf;
  write_container(buf, "XMAETST1", nlohmann::json::object(), std::vector<double>{1.0, NAN});
  CHECK_THROWS_AS(read_container(buf, "XMAETST1", "mem"), ParseError);
}

TEST_CASE("little-endian helpers") {
  std::stringstream buf;
  write_u32_le(buf, 0x01020304u);
  write_u64_le(buf, 0x0102030405060708ull);
  write_f64_le(buf, -2.5);
  const std::string bytes = buf.str();
  CHECK(static_cast<unsigned char>(bytes[0]) == 0x04);
  CHECK(static_cast<unsigned char>(bytes[4]) == 0x08);
  std::uint32_t a = 0;
  std::uint64_t b = 0;
  double c = 0;
  CHECK(read_u32_le(buf, a));
  CHECK(read_u64_le(buf, b));
  CHECK(read_f64_le(buf, c));
  CHECK(a == 0x01020304u);
  CHECK(b == 0x0102030405060708ull);
  CHECK(c == -2.5);
  CHECK_FALSE(read_u32_le(buf, a));
}
