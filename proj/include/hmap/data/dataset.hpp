#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hmap/data/colormap.hpp"

namespace hmap {

enum class Split { train, val, test };
enum class Flip { none, horizontal, vertical, both };

std::string to_string(Split s);
Split parse_split(const std::string& s);
/// Id suffix tag: "o", "h", "v", "hv".
std::string flip_tag(Flip f);

struct SamplePair {
  Image fundus;
  Image heightmap;
  std::string id;
};

/// Mirror columns (horizontal), rows (vertical), or both.
Image flip(const Image& image, Flip f);

/// {identity, horizontal, vertical, both}, each applied to fundus and
/// heightmap alike; ids become "<id>_<tag>".
std::vector<SamplePair> augment_flips(const SamplePair& sample);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  friend bool operator==(const SplitFractions&, const SplitFractions&) = default;
};

/// Shuffles base ids with `seed`; val and test receive floor(fraction * n),
/// train the remainder.
std::map<std::string, Split> assign_splits(std::vector<std::string> base_ids, const SplitFractions& fractions,
                                           std::uint64_t seed);

struct ManifestEntry {
  std::string id;
  std::string base;
  std::string aug;
  Split split = Split::train;
  std::string fundus;  // relative to the dataset root
  std::string height;
  std::uint32_t fundus_crc = 0;
  std::uint32_t height_crc = 0;
};

struct DatasetManifest {
  Index n = 0;
  Index resolution = 0;
  std::uint64_t seed = 0;
  SplitFractions fractions;
  std::vector<ManifestEntry> entries;

  /// Header record followed by one JSON record per entry.
  std::string serialize() const;
  static DatasetManifest parse(const std::string& text);

  std::vector<const ManifestEntry*> select(Split s) const;
};

/// Re-tags every entry by its base id.
DatasetManifest split(DatasetManifest manifest, const SplitFractions& fractions, std::uint64_t seed);

inline constexpr const char* kManifestName = "manifest";

/// Synthesizes n base pairs, expands each into 4 flips, splits by base id,
/// and writes <root>/fundus/<id>.png, <root>/height/<id>.png, <root>/manifest.
DatasetManifest synth_dataset(Index n, Index resolution, std::uint64_t seed, const std::filesystem::path& root);

DatasetManifest read_manifest(const std::filesystem::path& root);

/// True if every file listed exists with the recorded checksum.
bool verify_dataset(const std::filesystem::path& root, const DatasetManifest& manifest);

std::uint32_t file_crc32(const std::filesystem::path& path);

struct LoadedSample {
  std::string id;
  Image fundus;
  Image heightmap;
};

std::vector<LoadedSample> load_split(const std::filesystem::path& root, const DatasetManifest& manifest, Split s);

}  // namespace hmap
