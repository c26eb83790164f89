#include "ucg/autodiff/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <limits>

namespace ucg::ad {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw CheckpointError(std::string(what) + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(std::span<const NamedTensor> tensors) {
  std::string out = "UCG1";
  put_u32(out, kCheckpointVersion);
  put_u32(out, checked_u32(tensors.size(), "tensor count"));
  for (const auto& nt : tensors) {
    put_u32(out, checked_u32(nt.name.size(), "name length"));
    out += nt.name;
    put_u32(out, checked_u32(nt.tensor.shape.size(), "rank"));
    for (auto e : nt.tensor.shape) put_u32(out, checked_u32(e, "extent"));
    for (float v : nt.tensor.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4) != "UCG1") throw CheckpointError("bad checkpoint magic");
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = in.u32();
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    NamedTensor nt;
    nt.name = std::string(in.take(in.u32()));
    const auto rank = in.u32();
    if (rank == 0) throw CheckpointError("tensor '" + nt.name + "' has rank 0");
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
      e = in.u32();
      if (e == 0) throw CheckpointError("tensor '" + nt.name + "' has an empty extent");
      n *= e;
    }
    if (n > (bytes.size() / 4)) throw CheckpointError("checkpoint truncated");
    std::vector<float> data(n);
    for (auto& v : data) v = std::bit_cast<float>(in.u32());
    nt.tensor = Tensor<float>(std::move(shape), std::move(data));
    tensors.push_back(std::move(nt));
  }
  if (!in.done()) throw CheckpointError("trailing bytes after checkpoint");
  return tensors;
}

void write_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  const std::string bytes = encode_checkpoint(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace ucg::ad
