#include "nnmrom/digest.hpp"

#include <cstdio>
#include <fstream>
#include <vector>

#include "nnmrom/errors.hpp"

namespace nnmrom {

std::uint64_t digest_bytes(const void* data, std::size_t n) {
  Fnv1a64 d;
  d.update(data, n);
  return d.value();
}

std::string digest_hex(std::uint64_t d) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(d));
  return std::string(buf);
}

std::uint64_t digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for digest");
  Fnv1a64 d;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    d.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return d.value();
}

}  // namespace nnmrom
