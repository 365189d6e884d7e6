#include "hmap/data/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <random>
#include <set>
#include <sstream>

#include "hmap/data/image_io.hpp"
#include "hmap/data/synth.hpp"
#include "hmap/seed.hpp"

namespace hmap {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + s + "' (expected train, val or test)");
}

std::string flip_tag(Flip f) {
  switch (f) {
    case Flip::none: return "o";
    case Flip::horizontal: return "h";
    case Flip::vertical: return "v";
    case Flip::both: return "hv";
  }
  return "?";
}

Image flip(const Image& image, Flip f) {
  const Shape& s = image.shape();
  if (s.size() != 3) throw ShapeError("flip expects [C, H, W], got " + to_string(s));
  if (f == Flip::none) return image;
  const Index c = s[0], h = s[1], w = s[2];
  const bool fh = f == Flip::horizontal || f == Flip::both;
  const bool fv = f == Flip::vertical || f == Flip::both;
  Image out(s);
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        const Index sy = fv ? h - 1 - y : y;
        const Index sx = fh ? w - 1 - x : x;
        out[(ch * h + y) * w + x] = image[(ch * h + sy) * w + sx];
      }
  return out;
}

std::vector<SamplePair> augment_flips(const SamplePair& sample) {
  require_same_shape(Shape(sample.fundus.shape().begin() + 1, sample.fundus.shape().end()),
                     Shape(sample.heightmap.shape().begin() + 1, sample.heightmap.shape().end()),
                     "augment_flips fundus vs heightmap");
  std::vector<SamplePair> out;
  for (Flip f : {Flip::none, Flip::horizontal, Flip::vertical, Flip::both}) {
    out.push_back({flip(sample.fundus, f), flip(sample.heightmap, f), sample.id + "_" + flip_tag(f)});
  }
  return out;
}

std::map<std::string, Split> assign_splits(std::vector<std::string> base_ids, const SplitFractions& fr,
                                           std::uint64_t seed) {
  if (fr.train < 0 || fr.val < 0 || fr.test < 0 || std::abs(fr.train + fr.val + fr.test - 1.0) > 1e-9) {
    throw DataError("split fractions must be non-negative and sum to 1");
  }
  std::sort(base_ids.begin(), base_ids.end());
  if (std::adjacent_find(base_ids.begin(), base_ids.end()) != base_ids.end()) {
    throw DataError("duplicate base ids in split");
  }
  const Index n = static_cast<Index>(base_ids.size());
  if (n < 3) throw DataError("need at least 3 base images to split, got " + std::to_string(n));
  Rng rng(derive_seed(seed, {0x5b117ull}));
  std::shuffle(base_ids.begin(), base_ids.end(), rng);
  // Small epsilon keeps e.g. 0.1 * 30 from flooring to 2.
  const auto n_val = static_cast<Index>(std::floor(fr.val * n + 1e-9));
  const auto n_test = static_cast<Index>(std::floor(fr.test * n + 1e-9));
  std::map<std::string, Split> out;
  for (Index i = 0; i < n; ++i) {
    Split s = Split::train;
    if (i < n_val) s = Split::val;
    else if (i < n_val + n_test) s = Split::test;
    out[base_ids[static_cast<std::size_t>(i)]] = s;
  }
  return out;
}

DatasetManifest split(DatasetManifest manifest, const SplitFractions& fractions, std::uint64_t seed) {
  std::set<std::string> bases;
  for (const auto& e : manifest.entries) bases.insert(e.base);
  const auto tags = assign_splits({bases.begin(), bases.end()}, fractions, seed);
  for (auto& e : manifest.entries) e.split = tags.at(e.base);
  manifest.fractions = fractions;
  manifest.seed = seed;
  return manifest;
}

std::string DatasetManifest::serialize() const {
  std::ostringstream os;
  json header = {{"format", "hmap-manifest"},
                 {"version", 1},
                 {"n", n},
                 {"resolution", resolution},
                 {"seed", seed},
                 {"split_fractions", {fractions.train, fractions.val, fractions.test}}};
  os << header.dump() << '\n';
  for (const auto& e : entries) {
    json j = {{"id", e.id},         {"base", e.base},     {"aug", e.aug},
              {"split", to_string(e.split)}, {"fundus", e.fundus}, {"height", e.height},
              {"fundus_crc", e.fundus_crc},  {"height_crc", e.height_crc}};
    os << j.dump() << '\n';
  }
  return os.str();
}

DatasetManifest DatasetManifest::parse(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  DatasetManifest m;
  try {
    if (!std::getline(is, line)) throw DataError("manifest is empty");
    const json header = json::parse(line);
    if (header.at("format") != "hmap-manifest" || header.at("version") != 1) {
      throw DataError("unsupported manifest format");
    }
    m.n = header.at("n").get<Index>();
    m.resolution = header.at("resolution").get<Index>();
    m.seed = header.at("seed").get<std::uint64_t>();
    const auto fr = header.at("split_fractions").get<std::vector<double>>();
    if (fr.size() != 3) throw DataError("manifest split_fractions must have 3 entries");
    m.fractions = {fr[0], fr[1], fr[2]};
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.base = j.at("base").get<std::string>();
      e.aug = j.at("aug").get<std::string>();
      e.split = parse_split(j.at("split").get<std::string>());
      e.fundus = j.at("fundus").get<std::string>();
      e.height = j.at("height").get<std::string>();
      e.fundus_crc = j.at("fundus_crc").get<std::uint32_t>();
      e.height_crc = j.at("height_crc").get<std::uint32_t>();
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

std::vector<const ManifestEntry*> DatasetManifest::select(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == s) out.push_back(&e);
  }
  return out;
}

std::uint32_t file_crc32(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

DatasetManifest synth_dataset(Index n, Index resolution, std::uint64_t seed, const fs::path& root) {
  if (n < 10) throw DataError("synthetic dataset needs n >= 10, got " + std::to_string(n));
  if (resolution != 32 && resolution != 64 && resolution != 128 && resolution != 256) {
    throw DataError("resolution must be one of 32, 64, 128, 256; got " + std::to_string(resolution));
  }
  DatasetManifest m;
  m.n = n;
  m.resolution = resolution;
  m.seed = seed;
  std::error_code ec;
  fs::create_directories(root / "fundus", ec);
  fs::create_directories(root / "height", ec);
  if (ec) throw DataError("cannot create dataset directories under " + root.string() + ": " + ec.message());

  for (Index i = 0; i < n; ++i) {
    Rng rng(synth::sample_seed(seed, static_cast<std::uint64_t>(i)));
    const synth::SampleParams p = synth::draw_params(rng);
    std::ostringstream id;
    id << 's' << std::setw(4) << std::setfill('0') << i;
    SamplePair base{synth::render_fundus(p, resolution), encode_height(synth::render_height(p, resolution)), id.str()};
    std::size_t k = 0;
    const Flip flips[] = {Flip::none, Flip::horizontal, Flip::vertical, Flip::both};
    for (const SamplePair& s : augment_flips(base)) {
      ManifestEntry e;
      e.id = s.id;
      e.base = base.id;
      e.aug = flip_tag(flips[k++]);
      e.fundus = "fundus/" + s.id + ".png";
      e.height = "height/" + s.id + ".png";
      write_png(root / e.fundus, s.fundus);
      write_png(root / e.height, s.heightmap);
      e.fundus_crc = file_crc32(root / e.fundus);
      e.height_crc = file_crc32(root / e.height);
      m.entries.push_back(std::move(e));
    }
  }
  m = split(std::move(m), SplitFractions{}, seed);

  const fs::path manifest_path = root / kManifestName;
  std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + manifest_path.string());
  out << m.serialize();
  if (!out.flush()) throw DataError("write failed: " + manifest_path.string());
  return m;
}

DatasetManifest read_manifest(const fs::path& root) {
  const fs::path path = root / kManifestName;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return DatasetManifest::parse(ss.str());
}

bool verify_dataset(const fs::path& root, const DatasetManifest& manifest) {
  for (const auto& e : manifest.entries) {
    for (const auto& [rel, crc] : {std::pair{e.fundus, e.fundus_crc}, std::pair{e.height, e.height_crc}}) {
      const fs::path p = root / rel;
      if (!fs::exists(p) || file_crc32(p) != crc) return false;
    }
  }
  return true;
}

std::vector<LoadedSample> load_split(const fs::path& root, const DatasetManifest& manifest, Split s) {
  std::vector<LoadedSample> out;
  for (const ManifestEntry* e : manifest.select(s)) {
    LoadedSample ls{e->id, read_png(root / e->fundus), read_png(root / e->height)};
    if (ls.fundus.dim(0) != 3 || ls.heightmap.dim(0) != 3) {
      throw DataError("sample " + e->id + ": expected RGB images");
    }
    out.push_back(std::move(ls));
  }
  return out;
}

}  // namespace hmap
