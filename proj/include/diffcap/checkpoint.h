#ifndef DIFFCAP_CHECKPOINT_H_
#define DIFFCAP_CHECKPOINT_H_

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffcap/nn.h"

namespace diffcap {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// "DCCK", version (u32), config blob (u32 length + UTF-8), tensor count
// (u32), then per tensor: name (u32 length + UTF-8), rank (u32), extents
// (u32 each), float32 values. All little-endian. The file must end exactly
// after the last tensor.
struct Checkpoint {
  std::string config;  // "key = value" lines
  std::vector<NamedTensor<float>> tensors;

  const Tensor<float>& tensor(const std::string& name) const;  // throws CheckpointError
  bool has(const std::string& name) const;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint values into same-named, same-shaped tensors.
void restore_tensors(const Checkpoint& checkpoint, const std::string& prefix,
                     const std::vector<NamedTensor<float>>& targets);

}  // namespace diffcap

#endif  // DIFFCAP_CHECKPOINT_H_
