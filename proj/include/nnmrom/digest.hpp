#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace nnmrom {

// FNV-1a 64-bit content digests for provenance and manifests. Not
// cryptographic; good enough to detect drift between runs.
struct Fnv1a64 {
  std::uint64_t state = 0xcbf29ce484222325ULL;

  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state ^= p[i];
      state *= 0x100000001b3ULL;
    }
  }

  std::uint64_t value() const { return state; }
};

std::uint64_t digest_bytes(const void* data, std::size_t n);
std::string digest_hex(std::uint64_t d);

// Digest of a file's bytes; throws IoError if unreadable.
std::uint64_t digest_file(const std::string& path);

}  // namespace nnmrom
