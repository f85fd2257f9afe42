#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "seqtag/array.hpp"

namespace seqtag {

// Versioned binary container for model checkpoints.
//
// Layout (all integers and double bit patterns little-endian):
//   magic "SQTGCKPT" | u32 version | u32 byte-order tag 0x01020304
//   u32 entry count
//   entries: u8 kind | u32 name length | name bytes | payload
//     kind 0 array:   u8 ndim | u64 d0 | u64 d1 | d0*d1 doubles
//     kind 1 strings: u32 count | (u32 len | bytes)*
//     kind 2 text:    u64 len | bytes
//   u64 FNV-1a digest of everything after the magic
//
// Readers reject wrong magic, unknown versions, truncation, and digest
// mismatches; values round-trip bit-exactly.
class CheckpointWriter {
 public:
  void add_array(const std::string& name, const Array& a);
  void add_strings(const std::string& name, std::span<const std::string> items);
  void add_text(const std::string& name, std::string_view text);

  void write(const std::string& path) const;
  std::vector<std::uint8_t> bytes() const;

 private:
  struct Entry {
    std::uint8_t kind;
    std::string name;
    std::vector<std::uint8_t> payload;
  };
  std::vector<Entry> entries_;
};

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::string& path);
  explicit CheckpointReader(std::vector<std::uint8_t> bytes);

  bool has(const std::string& name) const;
  Array array(const std::string& name) const;
  std::vector<std::string> strings(const std::string& name) const;
  std::string text(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  void parse();

  struct Entry {
    std::uint8_t kind;
    std::size_t offset;  // payload start in bytes_
    std::size_t size;
  };
  std::vector<std::uint8_t> bytes_;
  std::map<std::string, Entry> entries_;
};

}  // namespace seqtag
