#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pico/model.hpp"

namespace pico {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout, all integers little-endian:
//   "PICO" | u32 version | u32 count | tensor records (see append_tensor_record)
//   | u32 count | frozen names | u32 len | frozen SHA-256 (hex)
//   | u32 count | vocab symbols | u32 len | RNG state | u32 len | meta JSON
// Strings are stored as u32 length + bytes.
std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const std::string& rng_state,
                                               const nlohmann::ordered_json& run_meta);

struct LoadedCheckpoint {
  Model model;
  std::string frozen_hash;
  std::string rng_state;
  nlohmann::ordered_json run_meta;
};

// Throws CheckpointError on a malformed file or when the frozen tensors do
// not match the stored hash.
LoadedCheckpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Model& model, const std::string& rng_state = {},
                     const nlohmann::ordered_json& run_meta = nlohmann::ordered_json::object());
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pico
