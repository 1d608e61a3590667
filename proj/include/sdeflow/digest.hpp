#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace sdeflow {

/// Incremental SHA-256; hex() finalizes.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(const void* data, std::size_t size);
  Sha256& update(std::string_view text) { return update(text.data(), text.size()); }
  Sha256& update(std::span<const double> values) {
    return update(values.data(), values.size_bytes());
  }
  Sha256& update_u64(std::uint64_t value) { return update(&value, sizeof(value)); }
  Sha256& update_f64(double value) { return update(&value, sizeof(value)); }

  std::string hex();

 private:
  struct State;
  std::unique_ptr<State> state_;
};

inline std::string sha256_hex(std::string_view text) { return Sha256{}.update(text).hex(); }

}  // namespace sdeflow
