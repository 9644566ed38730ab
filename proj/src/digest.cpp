#include "pico/digest.hpp"

#include <bit>
#include <cstdio>

#include <openssl/evp.h>

#include "pico/errors.hpp"

namespace pico {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest computation failed");
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

void append_tensor_record(std::vector<std::uint8_t>& out, const std::string& name, const Tensor& tensor) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
  for (auto d : tensor.shape()) put_u64(out, d);
  for (double v : tensor.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::string parameter_digest(const ParamList& params) {
  std::vector<std::uint8_t> bytes;
  for (const auto& p : params) append_tensor_record(bytes, p.name, p.tensor);
  return sha256_hex(bytes);
}

}  // namespace pico
