#include "pairnet/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "pairnet/errors.hpp"

namespace pairnet {
namespace {

constexpr char kMagic[4] = {'P', 'A', 'I', 'R'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::uint64_t offset() const { return pos_; }

  void need(std::size_t n, const std::string& what) {
    if (in_.size() - pos_ < n) throw FormatError("truncated " + what, pos_);
  }
  std::uint8_t u8(const std::string& what) {
    need(1, what);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint16_t u16(const std::string& what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i)
      v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
    return v;
  }
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64(const std::string& what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
    return v;
  }
  std::string_view bytes(std::size_t n, const std::string& what) {
    need(n, what);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

void encode_array(Writer& w, const NamedArray& a, const std::string& record_id) {
  if (a.name.empty() || a.name.size() > 255)
    throw ContractError("array name length must be in [1, 255] in record '" + record_id + "'");
  if (a.dims.size() > 255) throw ContractError("array '" + a.name + "' has too many dims");
  std::size_t expected = 1;
  for (auto d : a.dims) expected *= d;
  if (expected != a.element_count())
    throw ContractError("array '" + a.name + "' payload does not match its dims");

  w.u8(static_cast<std::uint8_t>(a.name.size()));
  w.bytes(a.name);
  w.u8(static_cast<std::uint8_t>(a.dtype()));
  w.u8(static_cast<std::uint8_t>(a.dims.size()));
  for (auto d : a.dims) w.u32(d);
  std::visit(
      [&](const auto& values) {
        using T = typename std::decay_t<decltype(values)>::value_type;
        for (T v : values) {
          if constexpr (std::is_same_v<T, float>) {
            w.u32(std::bit_cast<std::uint32_t>(v));
          } else if constexpr (std::is_same_v<T, double>) {
            w.u64(std::bit_cast<std::uint64_t>(v));
          } else {
            w.u8(static_cast<std::uint8_t>(v));
          }
        }
      },
      a.data);
}

NamedArray decode_array(Reader& r, const std::string& record_id) {
  const std::string where = "in record '" + record_id + "'";
  NamedArray a;
  const auto name_len = r.u8("array name length " + where);
  a.name = std::string(r.bytes(name_len, "array name " + where));
  const std::string ctx = "array '" + a.name + "' " + where;
  const auto dtype_offset = r.offset();
  const auto code = r.u8("dtype of " + ctx);
  const auto ndim = r.u8("ndim of " + ctx);
  std::uint64_t count = 1;
  a.dims.reserve(ndim);
  for (int i = 0; i < ndim; ++i) {
    a.dims.push_back(r.u32("dims of " + ctx));
    count *= a.dims.back();
  }
  switch (code) {
    case 0: {
      r.need(count * 4, "payload of " + ctx);
      std::vector<float> v(count);
      for (auto& x : v) x = std::bit_cast<float>(r.u32(ctx));
      a.data = std::move(v);
      break;
    }
    case 1: {
      auto raw = r.bytes(count, "payload of " + ctx);
      std::vector<std::int8_t> v(count);
      std::memcpy(v.data(), raw.data(), count);
      a.data = std::move(v);
      break;
    }
    case 2: {
      r.need(count * 8, "payload of " + ctx);
      std::vector<double> v(count);
      for (auto& x : v) x = std::bit_cast<double>(r.u64(ctx));
      a.data = std::move(v);
      break;
    }
    default:
      throw FormatError("unknown dtype code " + std::to_string(code) + " for " + ctx,
                        dtype_offset);
  }
  return a;
}

}  // namespace

std::size_t NamedArray::element_count() const {
  return std::visit([](const auto& v) { return v.size(); }, data);
}

const NamedArray* Record::find(std::string_view name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

const NamedArray& Record::require(std::string_view name, DType dtype) const {
  const auto* a = find(name);
  if (a == nullptr)
    throw FormatError("record '" + id + "' has no array '" + std::string(name) + "'", 0);
  if (a->dtype() != dtype)
    throw FormatError("array '" + std::string(name) + "' in record '" + id +
                          "' has unexpected dtype",
                      0);
  return *a;
}

NamedArray make_text_array(std::string name, std::string_view text) {
  std::vector<std::int8_t> bytes(text.size());
  std::memcpy(bytes.data(), text.data(), text.size());
  return NamedArray{std::move(name), {static_cast<std::uint32_t>(text.size())}, std::move(bytes)};
}

std::string text_from_array(const NamedArray& array) {
  const auto& bytes = std::get<std::vector<std::int8_t>>(array.data);
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

std::string encode_container(std::span<const Record> records) {
  Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const auto& rec : records) {
    if (rec.id.size() > 0xFFFF) throw ContractError("record id too long: " + rec.id.substr(0, 32));
    if (rec.arrays.size() > 255) throw ContractError("record '" + rec.id + "' has too many arrays");
    w.u16(static_cast<std::uint16_t>(rec.id.size()));
    w.bytes(rec.id);
    w.u8(static_cast<std::uint8_t>(rec.arrays.size()));
    for (const auto& a : rec.arrays) encode_array(w, a, rec.id);
  }
  return w.take();
}

std::vector<Record> decode_container(std::string_view bytes) {
  Reader r(bytes);
  const auto magic = r.bytes(4, "magic");
  if (magic != std::string_view(kMagic, 4)) throw FormatError("bad magic, expected \"PAIR\"", 0);
  const auto version = r.u32("format version");
  if (version != kContainerVersion)
    throw FormatError("unsupported format version " + std::to_string(version), 4);
  const auto count = r.u32("record count");
  std::vector<Record> records;
  records.reserve(std::min<std::uint32_t>(count, 1u << 16));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string which = "record #" + std::to_string(i);
    Record rec;
    const auto id_len = r.u16("id length of " + which);
    rec.id = std::string(r.bytes(id_len, "id of " + which));
    const auto n_arrays = r.u8("array count of record '" + rec.id + "'");
    for (int k = 0; k < n_arrays; ++k) rec.arrays.push_back(decode_array(r, rec.id));
    records.push_back(std::move(rec));
  }
  if (!r.done()) throw FormatError("trailing bytes after last record", r.offset());
  return records;
}

void write_container(const std::filesystem::path& path, std::span<const Record> records) {
  const auto bytes = encode_container(records);
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  // Write to a sibling temp file and rename so readers never see a partial file.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string(), "cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(path.string(), "write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path.string(), "rename failed: " + ec.message());
}

std::vector<Record> read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_container(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

}  // namespace pairnet
