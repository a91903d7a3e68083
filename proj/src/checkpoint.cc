#include "diffcap/checkpoint.h"

#include <algorithm>

#include "binary_io.h"

namespace diffcap {

namespace {
constexpr char kMagic[4] = {'D', 'C', 'C', 'K'};
}

const Tensor<float>& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw CheckpointError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(), [&](const auto& t) { return t.name == name; });
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  io::Writer w;
  w.raw(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(checkpoint.config);
  w.u32(static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& t : checkpoint.tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.tensor.rank()));
    for (std::size_t d : t.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.floats(t.tensor.values());
  }
  return w.bytes();
}

Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin) {
  try {
    io::Reader r(bytes, origin);
    char magic[4];
    r.raw(magic, 4);
    if (!std::equal(magic, magic + 4, kMagic)) throw CheckpointError(origin + ": not a checkpoint (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
      throw CheckpointError(origin + ": checkpoint version " + std::to_string(version) +
                            " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint c;
    c.config = r.str();
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name = r.str();
      const std::uint32_t rank = r.u32();
      if (rank > 8) throw CheckpointError(origin + ": tensor '" + name + "' has implausible rank");
      Shape shape(rank);
      std::size_t n = 1;
      for (auto& d : shape) {
        d = r.u32();
        n *= d;
      }
      if (n * 4 > bytes.size()) throw CheckpointError(origin + ": tensor '" + name + "' exceeds the file");
      c.tensors.push_back({std::move(name), Tensor<float>::from(shape, r.floats<float>(n))});
    }
    if (!r.at_end()) throw CheckpointError(origin + ": trailing bytes after the last tensor");
    return c;
  } catch (const io::FormatError& e) {
    throw CheckpointError(e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  io::write_file(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::string bytes;
  try {
    bytes = io::read_file(path);
  } catch (const std::runtime_error& e) {
    throw CheckpointError(e.what());
  }
  return parse_checkpoint(bytes, path);
}

void restore_tensors(const Checkpoint& checkpoint, const std::string& prefix,
                     const std::vector<NamedTensor<float>>& targets) {
  for (const auto& target : targets) {
    const Tensor<float>& src = checkpoint.tensor(prefix + target.name);
    if (src.shape() != target.tensor.shape()) {
      throw CheckpointError("tensor '" + prefix + target.name + "' has shape " + shape_str(src.shape()) +
                            " in the checkpoint but " + shape_str(target.tensor.shape()) + " in the model");
    }
    Tensor<float> dst = target.tensor;
    std::copy(src.values().begin(), src.values().end(), dst.data().begin());
  }
}

}  // namespace diffcap
