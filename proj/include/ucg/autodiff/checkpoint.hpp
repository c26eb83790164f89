#ifndef UCG_AUTODIFF_CHECKPOINT_HPP
#define UCG_AUTODIFF_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ucg/autodiff/tensor.hpp"

namespace ucg::ad {

// Layout (all integers little-endian u32):
//   "UCG1" version count { name_len name rank extents... f32 values... }*
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;

  bool operator==(const NamedTensor&) const = default;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_checkpoint(std::span<const NamedTensor> tensors);
std::vector<NamedTensor> decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

}  // namespace ucg::ad

#endif  // UCG_AUTODIFF_CHECKPOINT_HPP
