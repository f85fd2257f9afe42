#include "seqtag/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "seqtag/common.hpp"

namespace seqtag {

namespace {

constexpr char kMagic[8] = {'S', 'Q', 'T', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kByteOrderTag = 0x01020304;

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

void put_bytes(std::vector<std::uint8_t>& out, std::string_view s) {
  out.insert(out.end(), s.begin(), s.end());
}

class Cursor {
 public:
  Cursor(std::span<const std::uint8_t> bytes, std::size_t pos)
      : bytes_(bytes), pos_(pos) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::string str(std::size_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }

  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw CheckpointError("checkpoint truncated");
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
};

}  // namespace

void CheckpointWriter::add_array(const std::string& name, const Array& a) {
  Entry e;
  e.kind = 0;
  e.name = name;
  put_u8(e.payload, static_cast<std::uint8_t>(a.ndim()));
  put_u64(e.payload, a.rows());
  put_u64(e.payload, a.cols());
  for (double v : a.data()) put_f64(e.payload, v);
  entries_.push_back(std::move(e));
}

void CheckpointWriter::add_strings(const std::string& name,
                                   std::span<const std::string> items) {
  Entry e;
  e.kind = 1;
  e.name = name;
  put_u32(e.payload, static_cast<std::uint32_t>(items.size()));
  for (const std::string& s : items) {
    put_u32(e.payload, static_cast<std::uint32_t>(s.size()));
    put_bytes(e.payload, s);
  }
  entries_.push_back(std::move(e));
}

void CheckpointWriter::add_text(const std::string& name, std::string_view text) {
  Entry e;
  e.kind = 2;
  e.name = name;
  put_u64(e.payload, text.size());
  put_bytes(e.payload, text);
  entries_.push_back(std::move(e));
}

std::vector<std::uint8_t> CheckpointWriter::bytes() const {
  std::vector<std::uint8_t> out;
  put_bytes(out, std::string_view(kMagic, 8));
  put_u32(out, kVersion);
  put_u32(out, kByteOrderTag);
  put_u32(out, static_cast<std::uint32_t>(entries_.size()));
  for (const Entry& e : entries_) {
    put_u8(out, e.kind);
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    put_bytes(out, e.name);
    out.insert(out.end(), e.payload.begin(), e.payload.end());
  }
  const std::uint64_t digest =
      fnv1a64(std::span<const std::uint8_t>(out.data() + 8, out.size() - 8));
  put_u64(out, digest);
  return out;
}

void CheckpointWriter::write(const std::string& path) const {
  std::vector<std::uint8_t> data = bytes();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

CheckpointReader::CheckpointReader(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  bytes_.assign(std::istreambuf_iterator<char>(in),
                std::istreambuf_iterator<char>());
  parse();
}

CheckpointReader::CheckpointReader(std::vector<std::uint8_t> bytes)
    : bytes_(std::move(bytes)) {
  parse();
}

void CheckpointReader::parse() {
  if (bytes_.size() < 8 + 4 + 4 + 4 + 8 ||
      std::memcmp(bytes_.data(), kMagic, 8) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  Cursor c(bytes_, 8);
  const std::uint32_t version = c.u32();
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(version));
  }
  if (c.u32() != kByteOrderTag) {
    throw CheckpointError("checkpoint byte-order tag mismatch");
  }
  // Verify the trailing digest before trusting any entry payload.
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) {
    stored |= std::uint64_t(bytes_[bytes_.size() - 8 + i]) << (8 * i);
  }
  const std::uint64_t computed = fnv1a64(
      std::span<const std::uint8_t>(bytes_.data() + 8, bytes_.size() - 16));
  if (stored != computed) {
    throw CheckpointError("checkpoint digest mismatch (corrupt file)");
  }

  const std::uint32_t count = c.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint8_t kind = c.u8();
    const std::uint32_t name_len = c.u32();
    std::string name = c.str(name_len);
    const std::size_t payload_start = c.pos();
    switch (kind) {
      case 0: {
        const std::uint8_t ndim = c.u8();
        const std::uint64_t d0 = c.u64();
        const std::uint64_t d1 = c.u64();
        if (ndim != 1 && ndim != 2) throw CheckpointError("bad array rank");
        c.skip(static_cast<std::size_t>(d0 * d1) * 8);
        break;
      }
      case 1: {
        const std::uint32_t n = c.u32();
        for (std::uint32_t i = 0; i < n; ++i) c.skip(c.u32());
        break;
      }
      case 2: {
        c.skip(static_cast<std::size_t>(c.u64()));
        break;
      }
      default:
        throw CheckpointError("unknown entry kind");
    }
    entries_[name] = Entry{kind, payload_start, c.pos() - payload_start};
  }
  if (c.pos() != bytes_.size() - 8) {
    throw CheckpointError("checkpoint has trailing bytes");
  }
}

bool CheckpointReader::has(const std::string& name) const {
  return entries_.count(name) > 0;
}

std::vector<std::string> CheckpointReader::names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

Array CheckpointReader::array(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end() || it->second.kind != 0) {
    throw CheckpointError("missing array entry '" + name + "'");
  }
  Cursor c(bytes_, it->second.offset);
  const std::uint8_t ndim = c.u8();
  const std::uint64_t d0 = c.u64();
  const std::uint64_t d1 = c.u64();
  Array a = ndim == 1 ? Array::vec(static_cast<std::size_t>(d0))
                      : Array::mat(static_cast<std::size_t>(d0),
                                   static_cast<std::size_t>(d1));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = c.f64();
  return a;
}

std::vector<std::string> CheckpointReader::strings(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end() || it->second.kind != 1) {
    throw CheckpointError("missing string-list entry '" + name + "'");
  }
  Cursor c(bytes_, it->second.offset);
  const std::uint32_t n = c.u32();
  std::vector<std::string> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t len = c.u32();
    out.push_back(c.str(len));
  }
  return out;
}

std::string CheckpointReader::text(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end() || it->second.kind != 2) {
    throw CheckpointError("missing text entry '" + name + "'");
  }
  Cursor c(bytes_, it->second.offset);
  const std::uint64_t len = c.u64();
  return c.str(static_cast<std::size_t>(len));
}

}  // namespace seqtag
