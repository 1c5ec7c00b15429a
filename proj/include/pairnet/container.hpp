#pragma once

// Versioned little-endian binary container shared by corpus and checkpoint
// files.
//
//   magic "PAIR" | version u32 | record count u32
//   per record:  id length u16 | UTF-8 id | array count u8
//   per array:   name length u8 | name | dtype u8 | ndim u8 | dims u32[ndim]
//                | row-major payload
//
// dtype codes: 0 = float32, 1 = int8, 2 = float64 (checkpoints only).

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pairnet {

inline constexpr std::uint32_t kContainerVersion = 1;

enum class DType : std::uint8_t { kFloat32 = 0, kInt8 = 1, kFloat64 = 2 };

struct NamedArray {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::variant<std::vector<float>, std::vector<std::int8_t>, std::vector<double>> data;

  DType dtype() const { return static_cast<DType>(data.index()); }
  std::size_t element_count() const;

  bool operator==(const NamedArray&) const = default;
};

struct Record {
  std::string id;
  std::vector<NamedArray> arrays;

  const NamedArray* find(std::string_view name) const;
  /// Throws FormatError if the array is missing or of the wrong dtype.
  const NamedArray& require(std::string_view name, DType dtype) const;

  bool operator==(const Record&) const = default;
};

NamedArray make_text_array(std::string name, std::string_view text);
std::string text_from_array(const NamedArray& array);

std::string encode_container(std::span<const Record> records);
std::vector<Record> decode_container(std::string_view bytes);

void write_container(const std::filesystem::path& path, std::span<const Record> records);
std::vector<Record> read_container(const std::filesystem::path& path);

}  // namespace pairnet
