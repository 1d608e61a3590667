#include "sdeflow/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

namespace sdeflow {

struct Sha256::State {
  EVP_MD_CTX* ctx = nullptr;
  bool finalized = false;
};

Sha256::Sha256() : state_(std::make_unique<State>()) {
  state_->ctx = EVP_MD_CTX_new();
  if (state_->ctx == nullptr || EVP_DigestInit_ex(state_->ctx, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: EVP initialization failed");
  }
}

Sha256::~Sha256() {
  if (state_ && state_->ctx) EVP_MD_CTX_free(state_->ctx);
}

Sha256& Sha256::update(const void* data, std::size_t size) {
  if (state_->finalized) throw std::logic_error("sha256: update after finalization");
  if (size > 0 && EVP_DigestUpdate(state_->ctx, data, size) != 1) {
    throw std::runtime_error("sha256: update failed");
  }
  return *this;
}

std::string Sha256::hex() {
  if (state_->finalized) throw std::logic_error("sha256: already finalized");
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_DigestFinal_ex(state_->ctx, digest.data(), &length) != 1) {
    throw std::runtime_error("sha256: finalization failed");
  }
  state_->finalized = true;
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace sdeflow
