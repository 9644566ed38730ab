#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pico/layers.hpp"

namespace pico {

std::string sha256_hex(std::span<const std::uint8_t> bytes);

// Little-endian record of one tensor: name length, name, rank, dims, values.
void append_tensor_record(std::vector<std::uint8_t>& out, const std::string& name, const Tensor& tensor);

// SHA-256 over the records of `params` in order. Used as the frozen-branch
// fingerprint, both in training and in checkpoints.
std::string parameter_digest(const ParamList& params);

}  // namespace pico
