#include "hmap/train/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "hmap/error.hpp"

namespace hmap {

namespace fs = std::filesystem;
using nlohmann::json;
using Kind = CheckpointError::Kind;

namespace {

constexpr char kMagic[8] = {'H', 'M', 'A', 'P', 'C', 'K', 'P', 'T'};

template <typename U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
U get(std::istream& is) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw CheckpointError(Kind::corrupt, "checkpoint truncated");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, std::size_t limit) {
  const auto n = get<std::uint32_t>(is);
  if (n > limit) throw CheckpointError(Kind::corrupt, "checkpoint string too long");
  std::string s(n, '\0');
  if (!is.read(s.data(), n)) throw CheckpointError(Kind::corrupt, "checkpoint truncated");
  return s;
}

void put_json(std::ostream& os, const json& j) {
  const std::string s = j.dump();
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

json get_json(std::istream& is, std::size_t limit) {
  const auto n = get<std::uint64_t>(is);
  if (n > limit) throw CheckpointError(Kind::corrupt, "checkpoint header too long");
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw CheckpointError(Kind::corrupt, "checkpoint truncated");
  try {
    return json::parse(s);
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::corrupt, std::string("checkpoint header is not valid JSON: ") + e.what());
  }
}

template <typename T>
void put_arrays(std::ostream& os, const NamedArrays<T>& arrays) {
  put<std::uint64_t>(os, arrays.size());
  for (const auto& [name, a] : arrays) {
    put_string(os, name);
    write_array(os, a);
  }
}

template <typename T>
Array<T> get_array(std::istream& is) {
  try {
    return read_array<T>(is);
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(Kind::corrupt, std::string("checkpoint ") + e.what());
  }
}

template <typename T>
NamedArrays<T> get_arrays(std::istream& is, std::size_t limit) {
  const auto n = get<std::uint64_t>(is);
  if (n > limit) throw CheckpointError(Kind::corrupt, "checkpoint entry count out of range");
  NamedArrays<T> out;
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = get_string(is, limit);
    out.emplace_back(std::move(name), get_array<T>(is));
  }
  return out;
}

template <typename T>
void put_adam(std::ostream& os, const std::vector<AdamEntry<T>>& entries) {
  put<std::uint64_t>(os, entries.size());
  for (const auto& e : entries) {
    put_string(os, e.name);
    put<std::uint64_t>(os, static_cast<std::uint64_t>(e.step));
    write_array(os, e.m);
    write_array(os, e.v);
  }
}

template <typename T>
std::vector<AdamEntry<T>> get_adam(std::istream& is, std::size_t limit) {
  const auto n = get<std::uint64_t>(is);
  if (n > limit) throw CheckpointError(Kind::corrupt, "checkpoint entry count out of range");
  std::vector<AdamEntry<T>> out;
  for (std::uint64_t i = 0; i < n; ++i) {
    AdamEntry<T> e;
    e.name = get_string(is, limit);
    e.step = static_cast<std::int64_t>(get<std::uint64_t>(is));
    e.m = get_array<T>(is);
    e.v = get_array<T>(is);
    out.push_back(std::move(e));
  }
  return out;
}

std::uint32_t crc_of(const std::string& bytes, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n)));
}

// Reads the file, checks magic, version and checksum, and positions a stream
// after the scalar-size byte.
struct Opened {
  std::string bytes;
  std::uint32_t version = 0;
  std::uint8_t scalar_bytes = 0;
};

Opened open_checked(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::io, "cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  Opened o{ss.str()};
  constexpr std::size_t kPrefix = sizeof kMagic + sizeof(std::uint32_t) + 1;
  if (o.bytes.size() < sizeof kMagic || std::memcmp(o.bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(Kind::bad_magic, path.string() + " is not a checkpoint file");
  }
  if (o.bytes.size() < kPrefix + 4) throw CheckpointError(Kind::corrupt, path.string() + ": checkpoint truncated");
  std::memcpy(&o.version, o.bytes.data() + sizeof kMagic, sizeof o.version);
  if (o.version != kCheckpointVersion) {
    throw CheckpointError(Kind::version_mismatch, path.string() + ": checkpoint version " + std::to_string(o.version) +
                                                      ", expected " + std::to_string(kCheckpointVersion));
  }
  o.scalar_bytes = static_cast<std::uint8_t>(o.bytes[kPrefix - 1]);
  std::uint32_t stored = 0;
  std::memcpy(&stored, o.bytes.data() + o.bytes.size() - 4, 4);
  if (crc_of(o.bytes, o.bytes.size() - 4) != stored) {
    throw CheckpointError(Kind::corrupt, path.string() + ": checkpoint checksum mismatch");
  }
  return o;
}

}  // namespace

CheckpointHeader read_checkpoint_header(const fs::path& path) {
  const Opened o = open_checked(path);
  std::istringstream is(o.bytes.substr(0, o.bytes.size() - 4));
  is.seekg(sizeof kMagic + sizeof(std::uint32_t) + 1);
  CheckpointHeader h;
  h.version = o.version;
  h.scalar_bytes = o.scalar_bytes;
  h.config = get_json(is, o.bytes.size());
  h.state = get_json(is, o.bytes.size());
  return h;
}

template <typename T>
void write_checkpoint(const fs::path& path, const CheckpointPayload<T>& p) {
  std::ostringstream os;
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint8_t>(os, sizeof(T));
  put_json(os, p.config);
  put_json(os, p.state);
  put_arrays(os, p.gen_params);
  put_arrays(os, p.gen_buffers);
  put_arrays(os, p.disc_params);
  put_arrays(os, p.disc_buffers);
  put_adam(os, p.gen_adam);
  put_adam(os, p.disc_adam);
  std::string bytes = os.str();
  const std::uint32_t crc = crc_of(bytes, bytes.size());
  bytes.append(reinterpret_cast<const char*>(&crc), sizeof crc);

  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(Kind::io, "cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out.flush()) throw CheckpointError(Kind::io, "write failed (disk full?): " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw CheckpointError(Kind::io, "cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

template <typename T>
CheckpointPayload<T> read_checkpoint(const fs::path& path) {
  const Opened o = open_checked(path);
  if (o.scalar_bytes != sizeof(T)) {
    throw CheckpointError(Kind::precision_mismatch, path.string() + ": checkpoint stores " +
                                                        std::to_string(o.scalar_bytes * 8) + "-bit values, expected " +
                                                        std::to_string(sizeof(T) * 8) + "-bit");
  }
  std::istringstream is(o.bytes.substr(0, o.bytes.size() - 4));
  is.seekg(sizeof kMagic + sizeof(std::uint32_t) + 1);
  const std::size_t limit = o.bytes.size();
  CheckpointPayload<T> p;
  p.config = get_json(is, limit);
  p.state = get_json(is, limit);
  p.gen_params = get_arrays<T>(is, limit);
  p.gen_buffers = get_arrays<T>(is, limit);
  p.disc_params = get_arrays<T>(is, limit);
  p.disc_buffers = get_arrays<T>(is, limit);
  p.gen_adam = get_adam<T>(is, limit);
  p.disc_adam = get_adam<T>(is, limit);
  if (is.peek() != std::char_traits<char>::eof()) throw CheckpointError(Kind::corrupt, "trailing bytes in checkpoint");
  return p;
}

template void write_checkpoint(const fs::path&, const CheckpointPayload<float>&);
template void write_checkpoint(const fs::path&, const CheckpointPayload<double>&);
template CheckpointPayload<float> read_checkpoint(const fs::path&);
template CheckpointPayload<double> read_checkpoint(const fs::path&);

}  // namespace hmap
