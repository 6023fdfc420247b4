#include "acl/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "acl/errors.hpp"

namespace acl {

namespace {

constexpr char kMagic[4] = {'A', 'C', 'L', 'T'};

template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is, const std::string& path) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError("truncated checkpoint: " + path);
  return v;
}

}  // namespace

const Tensor& NamedTensors::get(const std::string& name) const {
  for (const auto& [n, t] : items)
    if (n == name) return t;
  throw CheckpointError("checkpoint is missing tensor '" + name + "'");
}

bool NamedTensors::contains(const std::string& name) const {
  for (const auto& [n, t] : items)
    if (n == name) return true;
  return false;
}

void write_checkpoint(const std::string& path,
                      const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open for writing: " + path);
  os.write(kMagic, 4);
  write_pod<uint32_t>(os, kCheckpointVersion);
  for (const auto& [name, t] : tensors) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint32_t>(os, static_cast<uint32_t>(t->shape.size()));
    for (int d : t->shape) write_pod<uint64_t>(os, static_cast<uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t->data.data()),
             static_cast<std::streamsize>(t->data.size() * sizeof(double)));
  }
  if (!os) throw CheckpointError("write failed: " + path);
}

NamedTensors read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("bad magic bytes, not an ACLT checkpoint: " + path);
  const auto version = read_pod<uint32_t>(is, path);
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + ": " + path);

  NamedTensors out;
  while (true) {
    uint32_t name_len;
    is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    if (is.eof()) break;
    if (!is) throw CheckpointError("truncated checkpoint: " + path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw CheckpointError("truncated tensor name: " + path);
    const auto rank = read_pod<uint32_t>(is, path);
    if (rank > 8) throw CheckpointError("implausible tensor rank " + std::to_string(rank) + ": " + path);
    std::vector<int> shape(rank);
    int64_t numel = 1;
    for (auto& d : shape) {
      const auto v = read_pod<uint64_t>(is, path);
      if (v == 0 || v > (1ull << 31)) throw CheckpointError("implausible dimension in: " + path);
      d = static_cast<int>(v);
      numel *= d;
    }
    Tensor t;
    t.shape = std::move(shape);
    t.data.resize(static_cast<size_t>(numel));
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!is) throw CheckpointError("truncated tensor payload '" + name + "': " + path);
    out.items.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace acl
