#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hmap/tensor/array.hpp"

namespace hmap {

// File layout (little-endian):
//   "HMAPCKPT" | u32 version | u8 scalar bytes
//   u64 length + config JSON | u64 length + run-state JSON
//   generator params, generator buffers, discriminator params, discriminator buffers:
//     u64 count, then per entry: u32 name length, name, tensor record
//   generator Adam, discriminator Adam:
//     u64 count, then per entry: u32 name length, name, u64 step, tensor m, tensor v
//   u32 CRC-32 of every preceding byte

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
using NamedArrays = std::vector<std::pair<std::string, Array<T>>>;

template <typename T>
struct AdamEntry {
  std::string name;
  std::int64_t step = 0;
  Array<T> m;
  Array<T> v;
};

template <typename T>
struct CheckpointPayload {
  nlohmann::json config;
  nlohmann::json state;
  NamedArrays<T> gen_params, gen_buffers, disc_params, disc_buffers;
  std::vector<AdamEntry<T>> gen_adam, disc_adam;
};

struct CheckpointHeader {
  std::uint32_t version = 0;
  std::uint8_t scalar_bytes = 0;
  nlohmann::json config;
  nlohmann::json state;
};

/// Verifies magic, version and checksum of the whole file and returns its headers.
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

/// Written to a sibling temporary file, then renamed into place.
template <typename T>
void write_checkpoint(const std::filesystem::path& path, const CheckpointPayload<T>& payload);

template <typename T>
CheckpointPayload<T> read_checkpoint(const std::filesystem::path& path);

}  // namespace hmap
