#include <doctest.h>

#include <random>

#include "pairnet/container.hpp"
#include "pairnet/errors.hpp"

using namespace pairnet;

namespace {

Record random_record(std::mt19937_64& rng, int index) {
  std::uniform_int_distribution<int> dim(0, 5);
  std::normal_distribution<double> value(0.0, 10.0);
  Record rec;
  rec.id = "rec_" + std::to_string(index);
  for (int a = 0; a < 3; ++a) {
    NamedArray arr;
    arr.name = "array" + std::to_string(a);
    const int ndim = 1 + a;
    std::size_t count = 1;
    for (int d = 0; d < ndim; ++d) {
      arr.dims.push_back(static_cast<std::uint32_t>(dim(rng)));
      count *= arr.dims.back();
    }
    switch ((index + a) % 3) {
      case 0: {
        std::vector<float> v(count);
        for (auto& x : v) x = static_cast<float>(value(rng));
        arr.data = v;
        break;
      }
      case 1: {
        std::vector<std::int8_t> v(count);
        for (auto& x : v) x = static_cast<std::int8_t>(static_cast<int>(value(rng)) % 100);
        arr.data = v;
        break;
      }
      default: {
        std::vector<double> v(count);
        for (auto& x : v) x = value(rng);
        arr.data = v;
      }
    }
    rec.arrays.push_back(std::move(arr));
  }
  return rec;
}

}  // namespace

TEST_CASE("container round-trips random records bit-exactly") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Record> records;
    for (int i = 0; i < trial % 5; ++i) records.push_back(random_record(rng, i + trial));
    const auto bytes = encode_container(records);
    CHECK(decode_container(bytes) == records);
    CHECK(encode_container(decode_container(bytes)) == bytes);
  }
}

TEST_CASE("container header layout is little-endian PAIR/version/count") {
  Record rec{"a", {NamedArray{"x", {1}, std::vector<float>{1.0f}}}};
  const auto bytes = encode_container(std::span<const Record>(&rec, 1));
  REQUIRE(bytes.size() >= 12);
  CHECK(bytes.substr(0, 4) == "PAIR");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[8] == 1);
  // id length u16, id, array count, name length, name, dtype, ndim, dim, payload
  CHECK(bytes.size() == 12 + 2 + 1 + 1 + 1 + 1 + 1 + 1 + 4 + 4);
  CHECK(bytes.substr(bytes.size() - 4) == std::string("\x00\x00\x80\x3f", 4));
}

TEST_CASE("container rejects bad magic, version and truncation") {
  Record rec{"clip_7", {NamedArray{"video", {2, 3}, std::vector<float>(6, 0.5f)}}};
  auto bytes = encode_container(std::span<const Record>(&rec, 1));

  SUBCASE("magic") {
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_container(bad), FormatError);
  }
  SUBCASE("version") {
    auto bad = bytes;
    bad[4] = 9;
    try {
      decode_container(bad);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 4);
    }
  }
  SUBCASE("truncated payload names record and array") {
    const auto cut = bytes.substr(0, bytes.size() - 5);
    try {
      decode_container(cut);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("clip_7") != std::string::npos);
      CHECK(msg.find("video") != std::string::npos);
      CHECK(e.offset() > 12);
    }
  }
  SUBCASE("trailing bytes") {
    CHECK_THROWS_AS(decode_container(bytes + "x"), FormatError);
  }
  SUBCASE("unknown dtype") {
    auto bad = bytes;
    // header 12 + id len 2 + id 6 + count 1 + name len 1 + name 5 -> dtype byte
    bad[12 + 2 + 6 + 1 + 1 + 5] = 7;
    CHECK_THROWS_AS(decode_container(bad), FormatError);
  }
}

TEST_CASE("text arrays round-trip") {
  const auto a = make_text_array("meta", "seed=1\nx=y\n");
  CHECK(text_from_array(a) == "seed=1\nx=y\n");
}
