#include "tgx/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace tgx {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic{'T', 'G', 'X', 'C', 'K', 'P', 'T', '\0'};

template <typename V>
void put(std::ofstream& out, V value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(V));
}

template <typename V>
V get(std::ifstream& in) {
  V value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(V));
  if (!in) throw CheckpointError("checkpoint truncated");
  return value;
}

std::ifstream open_and_check_header(const std::filesystem::path& path, std::uint32_t& dtype) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw CheckpointError("not a checkpoint file: " + path.string());
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  dtype = get<std::uint32_t>(in);
  if (dtype != 4 && dtype != 8) throw CheckpointError("bad checkpoint dtype");
  return in;
}

}  // namespace

template <typename T>
const CheckpointRecord<T>* Checkpoint<T>::find(const std::string& name) const {
  for (const auto& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Checkpoint<T>& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, sizeof(T));
  put<std::uint64_t>(out, checkpoint.metadata_json.size());
  out.write(checkpoint.metadata_json.data(),
            static_cast<std::streamsize>(checkpoint.metadata_json.size()));
  put<std::uint64_t>(out, checkpoint.records.size());
  for (const auto& r : checkpoint.records) {
    if (r.values.size() != numel(r.shape)) {
      throw CheckpointError("record " + r.name + " has inconsistent shape");
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    for (std::size_t d : r.shape) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(r.values.data()),
              static_cast<std::streamsize>(r.values.size() * sizeof(T)));
  }
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::uint32_t dtype = 0;
  std::ifstream in = open_and_check_header(path, dtype);
  if (dtype != sizeof(T)) {
    throw CheckpointError("checkpoint precision (" + std::to_string(dtype * 8) +
                          "-bit) does not match the requested precision");
  }
  Checkpoint<T> ckpt;
  const auto meta_len = get<std::uint64_t>(in);
  ckpt.metadata_json.resize(meta_len);
  in.read(ckpt.metadata_json.data(), static_cast<std::streamsize>(meta_len));
  const auto count = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointRecord<T> r;
    const auto name_len = get<std::uint32_t>(in);
    r.name.resize(name_len);
    in.read(r.name.data(), name_len);
    for (auto& d : r.shape) d = get<std::uint64_t>(in);
    r.values.resize(numel(r.shape));
    in.read(reinterpret_cast<char*>(r.values.data()),
            static_cast<std::streamsize>(r.values.size() * sizeof(T)));
    if (!in) throw CheckpointError("checkpoint truncated in record " + r.name);
    ckpt.records.push_back(std::move(r));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("checkpoint has trailing bytes");
  return ckpt;
}

std::uint32_t checkpoint_dtype_bytes(const std::filesystem::path& path) {
  std::uint32_t dtype = 0;
  open_and_check_header(path, dtype);
  return dtype;
}

template struct Checkpoint<float>;
template struct Checkpoint<double>;
template void save_checkpoint(const std::filesystem::path&, const Checkpoint<float>&);
template void save_checkpoint(const std::filesystem::path&, const Checkpoint<double>&);
template Checkpoint<float> load_checkpoint(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint(const std::filesystem::path&);

}  // namespace tgx
