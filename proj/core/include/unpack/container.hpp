#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "unpack/tensor.hpp"

namespace unpack {

/// Index entry of one tensor inside a blob file.
struct TensorEntry {
  std::string name;
  std::vector<std::int64_t> shape;
  std::string dtype = "f32";
  std::uint64_t offset = 0;
  std::uint64_t nbytes = 0;
  std::uint32_t crc32 = 0;
};

/// A manifest/blob pair: a text manifest of `key = value` fields plus one
/// `tensor name=... shape=... dtype=f32 offset=... nbytes=... crc32=...` line per
/// tensor, and a raw little-endian f32 blob with every tensor 64-byte aligned and
/// concatenated in index order.
struct Container {
  std::vector<std::pair<std::string, std::string>> fields;
  std::map<std::string, Tensor> tensors;
  std::vector<TensorEntry> index;

  const std::string* field(const std::string& key) const;
};

inline constexpr std::uint64_t kContainerAlignment = 64;

/// Writes `tensors` in the given order. Throws ModelError on I/O failure.
void write_container(const std::filesystem::path& manifest, const std::filesystem::path& blob,
                     const std::vector<std::pair<std::string, std::string>>& fields,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors);

/// Reads and checksum-verifies every tensor. Errors name the offending tensor.
Container read_container(const std::filesystem::path& manifest, const std::filesystem::path& blob);

/// Parses only the manifest text (no blob access).
Container parse_manifest(const std::string& text, const std::string& origin);

std::uint32_t crc32_of(const float* data, std::size_t count);

}  // namespace unpack
