#pragma once

#include <cstdint>
#include <cstring>
#include <string>

namespace gridnn {

/// Incremental FNV-1a (64-bit). Used for network digests and file digests in
/// run manifests; not cryptographic.
class Fnv64 {
 public:
  std::uint64_t value() const { return h_; }

  Fnv64& bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001B3ULL;
    }
    return *this;
  }

  Fnv64& u64(std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    return bytes(buf, 8);
  }

  Fnv64& i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }

  Fnv64& f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    return u64(bits);
  }

  Fnv64& str(const std::string& s) { return bytes(s.data(), s.size()); }

 private:
  std::uint64_t h_ = 0xCBF29CE484222325ULL;
};

std::string hex_digest(std::uint64_t h);

}  // namespace gridnn
