#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace seqtag {

// Shape mismatches, bad op arguments and other caller bugs.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// Malformed input data. `line` is 1-based, 0 when unknown.
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t line_no = 0)
      : std::runtime_error(line_no ? "line " + std::to_string(line_no) + ": " + msg : msg),
        line(line_no) {}
  std::size_t line = 0;
};

// Tag outside the declared scheme.
struct SchemeError : ParseError {
  using ParseError::ParseError;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint container problems: bad magic, version, truncation, digest.
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient during training.
struct TrainingFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define SEQTAG_CHECK(cond, msg)                                     \
  do {                                                              \
    if (!(cond)) {                                                  \
      std::ostringstream o_;                                        \
      o_ << msg;                                                    \
      throw ::seqtag::ContractViolation(o_.str());                  \
    }                                                               \
  } while (0)

// FNV-1a, used for checkpoint digests and provenance hashes.
inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  std::uint64_t h = seed;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

// UTF-8 decoding for character LM streams. Invalid sequences decode to
// U+FFFD rather than failing; corpus bytes are never normalized.
std::u32string decode_utf8(std::string_view s);
void append_utf8(std::string& out, char32_t c);
std::string encode_utf8(std::u32string_view s);

}  // namespace seqtag
