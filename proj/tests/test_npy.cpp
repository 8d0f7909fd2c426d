#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "entvec/errors.hpp"
#include "entvec/npy.hpp"
#include "entvec/rng.hpp"
#include "test_util.hpp"

using namespace entvec;

TEST_CASE("int64 vector layout") {
  testutil::TempDir dir("npy-int");
  const std::vector<std::int64_t> values = {1, 2, 3};
  const std::size_t shape[] = {3};
  npy::write(dir / "v.npy", values, shape);

  const std::string bytes = testutil::read_bytes(dir / "v.npy");
  REQUIRE(bytes.size() == 128 + 24);

  CHECK(bytes.substr(0, 6) == "\x93NUMPY");
  CHECK(bytes[6] == '\x01');
  CHECK(bytes[7] == '\x00');
  const std::size_t header_len =
      static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
  CHECK(header_len == 118);
  CHECK((10 + header_len) % 64 == 0);
  CHECK(bytes[10 + header_len - 1] == '\n');
  CHECK(bytes.find("'descr': '<i8'") != std::string::npos);
  CHECK(bytes.find("'fortran_order': False") != std::string::npos);
  CHECK(bytes.find("'shape': (3,)") != std::string::npos);

  // Little-endian payload: 01 00.., 02 00.., 03 00..
  const char expected[24] = {1, 0, 0, 0, 0, 0, 0, 0, 2, 0, 0, 0,
                             0, 0, 0, 0, 3, 0, 0, 0, 0, 0, 0, 0};
  CHECK(std::memcmp(bytes.data() + 128, expected, 24) == 0);
}

TEST_CASE("float64 payload bytes") {
  testutil::TempDir dir("npy-float");
  const std::vector<double> values = {0.5};
  const std::size_t shape[] = {1};
  npy::write(dir / "v.npy", values, shape);

  const std::string bytes = testutil::read_bytes(dir / "v.npy");
  const unsigned char expected[8] = {0, 0, 0, 0, 0, 0, 0xE0, 0x3F};
  REQUIRE(bytes.size() >= 8);
  CHECK(std::memcmp(bytes.data() + bytes.size() - 8, expected, 8) == 0);
  CHECK(bytes.find("'descr': '<f8'") != std::string::npos);
}

TEST_CASE("two-dimensional shape header") {
  testutil::TempDir dir("npy-2d");
  const std::vector<std::int64_t> values = {1, 2, 3, 4, 5, 6};
  const std::size_t shape[] = {2, 3};
  npy::write(dir / "m.npy", values, shape);
  const std::string bytes = testutil::read_bytes(dir / "m.npy");
  CHECK(bytes.find("'shape': (2, 3)") != std::string::npos);

  const npy::Array back = npy::read(dir / "m.npy");
  CHECK(back.shape == std::vector<std::size_t>{2, 3});
  CHECK(back.ints == values);
}

TEST_CASE("round trip of random arrays") {
  testutil::TempDir dir("npy-roundtrip");
  Rng rng(5);
  for (int round = 0; round < 100; ++round) {
    std::vector<std::size_t> shape;
    if (uniform_index(rng, 2) == 0) {
      shape = {1 + uniform_index(rng, 40)};
    } else {
      shape = {1 + uniform_index(rng, 12), 1 + uniform_index(rng, 12)};
    }
    std::size_t count = 1;
    for (const std::size_t dim : shape) count *= dim;

    const auto path = dir / ("r" + std::to_string(round) + ".npy");
    if (uniform_index(rng, 2) == 0) {
      std::vector<std::int64_t> values(count);
      for (auto& v : values) v = static_cast<std::int64_t>(rng());
      npy::write(path, values, shape);
      const npy::Array back = npy::read(path);
      REQUIRE(back.dtype == npy::Dtype::int64);
      CHECK(back.shape == shape);
      CHECK(back.ints == values);
    } else {
      std::vector<double> values(count);
      for (auto& v : values) v = uniform_real(rng, -1e6, 1e6);
      npy::write(path, values, shape);
      const npy::Array back = npy::read(path);
      REQUIRE(back.dtype == npy::Dtype::float64);
      CHECK(back.shape == shape);
      CHECK(back.reals == values);
    }
  }
}

TEST_CASE("writer validates shape") {
  testutil::TempDir dir("npy-shape");
  const std::vector<std::int64_t> values = {1, 2, 3};
  const std::size_t empty_dim[] = {0};
  CHECK_THROWS_AS(npy::write(dir / "bad.npy", values, empty_dim), Error);
  const std::size_t mismatched[] = {2, 3};
  CHECK_THROWS_AS(npy::write(dir / "bad.npy", values, mismatched), Error);
}

TEST_CASE("reader rejects malformed files") {
  testutil::TempDir dir("npy-bad");
  const std::vector<std::int64_t> values = {1, 2, 3, 4, 5, 6};
  const std::size_t shape[] = {2, 3};
  npy::write(dir / "good.npy", values, shape);
  std::string bytes = testutil::read_bytes(dir / "good.npy");

  SUBCASE("bad magic") {
    std::string corrupted = bytes;
    corrupted[0] = 'X';
    testutil::write_text(dir / "bad.npy", corrupted);
    CHECK_THROWS_WITH_AS(npy::read(dir / "bad.npy"),
                         doctest::Contains("bad magic"), Error);
  }
  SUBCASE("unsupported version") {
    std::string corrupted = bytes;
    corrupted[6] = '\x02';
    testutil::write_text(dir / "bad.npy", corrupted);
    CHECK_THROWS_WITH_AS(npy::read(dir / "bad.npy"),
                         doctest::Contains("unsupported version"), Error);
  }
  SUBCASE("truncated data") {
    // shape (2,3) declared, but only 40 of the 48 payload bytes present.
    testutil::write_text(dir / "bad.npy", bytes.substr(0, bytes.size() - 8));
    CHECK_THROWS_WITH_AS(npy::read(dir / "bad.npy"),
                         doctest::Contains("truncated data (40 bytes, 48 expected)"), Error);
  }
  SUBCASE("trailing bytes") {
    testutil::write_text(dir / "bad.npy", bytes + "xx");
    CHECK_THROWS_WITH_AS(npy::read(dir / "bad.npy"),
                         doctest::Contains("trailing bytes"), Error);
  }
  SUBCASE("fortran order") {
    std::string corrupted = bytes;
    const std::size_t pos = corrupted.find("False");
    corrupted.replace(pos, 5, "True ");
    testutil::write_text(dir / "bad.npy", corrupted);
    CHECK_THROWS_WITH_AS(npy::read(dir / "bad.npy"),
                         doctest::Contains("fortran_order"), Error);
  }
  SUBCASE("unsupported dtype") {
    std::string corrupted = bytes;
    const std::size_t pos = corrupted.find("<i8");
    corrupted.replace(pos, 3, "<f4");
    testutil::write_text(dir / "bad.npy", corrupted);
    CHECK_THROWS_WITH_AS(npy::read(dir / "bad.npy"),
                         doctest::Contains("unsupported dtype"), Error);
  }
}
