#pragma once

#include <concepts>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace drfer {

// Error taxonomy shared across the library. All validation failures throw
// one of these; callers that need exit codes map them in one place (the CLI).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

class IncompleteData : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

template <class E>
  requires std::derived_from<E, Error>
inline void require(bool cond, E err) {
  if (!cond) throw std::move(err);
}

// FNV-1a 64-bit. Used for content hashes of artifacts, checkpoints and
// dataset caches; stability of the digest across runs is the only
// requirement, so a cryptographic hash is not needed.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(const std::string& s) { update(s.data(), s.size()); }
  template <class T>
  void update_pod(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    update(&v, sizeof(T));
  }
  std::uint64_t digest() const { return state_; }
  std::string hex() const {
    static const char* k = "0123456789abcdef";
    std::string out(16, '0');
    std::uint64_t v = state_;
    for (int i = 15; i >= 0; --i) {
      out[i] = k[v & 0xF];
      v >>= 4;
    }
    return out;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a(const void* data, std::size_t n) {
  Fnv1a h;
  h.update(data, n);
  return h.digest();
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  Fnv1a h;
  h.update_pod(a);
  h.update_pod(b);
  return h.digest();
}

inline std::string hex64(std::uint64_t v) {
  static const char* k = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = k[v & 0xF];
    v >>= 4;
  }
  return out;
}

}  // namespace drfer
