/*
Copyright 2026 The Declip Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace declip {

/// FNV-1a over raw bytes; used for content fingerprints in file headers.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xCBF29CE484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 0xCBF29CE484222325ull) {
  return fnv1a(s.data(), s.size(), h);
}

/**
 * Little-endian binary writer/reader pair for the on-disk containers
 * (checkpoints, feature-extractor weights). Fixed-width fields only, so a
 * file written on one machine reads back identically on any other.
 */
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path);
  }

  void u32(uint32_t v) { raw(&v, sizeof v); }
  void u64(uint64_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }

  void bytes(const void* p, size_t n) { raw(p, n); }

  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }

  template <typename T>
  void vec(const std::vector<T>& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    u64(v.size());
    raw(v.data(), v.size() * sizeof(T));
  }

  void close() {
    out_.close();
    if (!out_) throw std::runtime_error("write failed on close");
  }

  /// FNV-1a of everything written so far.
  uint64_t hash() const { return hash_; }

 private:
  void raw(const void* p, size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw std::runtime_error("write failed");
    hash_ = fnv1a(p, n, hash_);
  }
  std::ofstream out_;
  uint64_t hash_ = 0xCBF29CE484222325ull;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open for reading: " + path);
  }

  uint32_t u32() {
    uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  float f32() {
    float v;
    raw(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    raw(&v, sizeof v);
    return v;
  }

  void bytes(void* p, size_t n) { raw(p, n); }

  std::string str(size_t max_len = size_t(1) << 20) {
    const uint64_t n = u64();
    if (n > max_len) throw std::runtime_error("corrupt file: string length out of range");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }

  template <typename T>
  std::vector<T> vec(size_t max_len = size_t(1) << 32) {
    static_assert(std::is_trivially_copyable_v<T>);
    const uint64_t n = u64();
    if (n > max_len) throw std::runtime_error("corrupt file: vector length out of range");
    std::vector<T> v(n);
    raw(v.data(), n * sizeof(T));
    return v;
  }

  bool at_eof() {
    in_.peek();
    return in_.eof();
  }

  /// FNV-1a of everything read so far.
  uint64_t hash() const { return hash_; }

  /// Reads the trailing checksum and compares it against the running hash of
  /// the payload read before it.
  void verify_checksum(const char* what) {
    const uint64_t expected = hash_;
    const uint64_t stored = u64();
    if (stored != expected)
      throw std::runtime_error(std::string("corrupt file: checksum mismatch in ") + what);
  }

 private:
  void raw(void* p, size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n) throw std::runtime_error("corrupt file: unexpected end of data");
    hash_ = fnv1a(p, n, hash_);
  }
  std::ifstream in_;
  uint64_t hash_ = 0xCBF29CE484222325ull;
};

// This code assumes a little-endian host, like every platform it targets.
static_assert(std::endian::native == std::endian::little, "little-endian host required");

}  // namespace declip
