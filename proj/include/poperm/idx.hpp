#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace poperm {

// IDX container as used by the MNIST distribution: big-endian u32 magic
// (0x00000803 for u8 image stacks, 0x00000801 for u8 label vectors),
// big-endian u32 dimensions, raw payload.
struct IdxTensor {
  std::uint8_t type_code = 0x08;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> bytes;

  std::size_t element_count() const {
    std::size_t total = 1;
    for (std::uint32_t d : dims) total *= d;
    return total;
  }
};

namespace detail {

inline std::uint32_t read_be_u32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void write_be_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>((v >> 24) & 0xFF), static_cast<char>((v >> 16) & 0xFF),
                         static_cast<char>((v >> 8) & 0xFF), static_cast<char>(v & 0xFF)};
  out.write(bytes, 4);
}

}  // namespace detail

inline IdxTensor load_idx_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("idx: cannot open " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (data.size() < 4) throw std::runtime_error("idx: truncated header in " + path.string());

  const std::uint32_t magic = detail::read_be_u32(data.data());
  if ((magic & 0xFFFF0000u) != 0) throw std::runtime_error("idx: bad magic in " + path.string());
  const std::uint8_t type_code = static_cast<std::uint8_t>((magic >> 8) & 0xFF);
  const std::uint8_t ndim = static_cast<std::uint8_t>(magic & 0xFF);
  if (type_code != 0x08)
    throw std::runtime_error("idx: unsupported type byte in " + path.string());
  if (ndim == 0) throw std::runtime_error("idx: bad magic in " + path.string());

  std::size_t offset = 4;
  IdxTensor tensor;
  tensor.type_code = type_code;
  for (std::uint8_t d = 0; d < ndim; ++d) {
    if (offset + 4 > data.size()) throw std::runtime_error("idx: truncated dims in " + path.string());
    tensor.dims.push_back(detail::read_be_u32(data.data() + offset));
    offset += 4;
  }
  const std::size_t expected = tensor.element_count();
  if (data.size() - offset < expected)
    throw std::runtime_error("idx: truncated payload in " + path.string());
  tensor.bytes.assign(data.begin() + static_cast<std::ptrdiff_t>(offset),
                      data.begin() + static_cast<std::ptrdiff_t>(offset + expected));
  return tensor;
}

inline void write_idx_raw(const std::filesystem::path& path, const IdxTensor& tensor) {
  if (tensor.bytes.size() != tensor.element_count())
    throw std::invalid_argument("idx: payload size does not match dims");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("idx: cannot open " + path.string() + " for writing");
  const std::uint32_t magic = (static_cast<std::uint32_t>(tensor.type_code) << 8) |
                              static_cast<std::uint32_t>(tensor.dims.size());
  detail::write_be_u32(out, magic);
  for (std::uint32_t d : tensor.dims) detail::write_be_u32(out, d);
  out.write(reinterpret_cast<const char*>(tensor.bytes.data()),
            static_cast<std::streamsize>(tensor.bytes.size()));
  if (!out) throw std::runtime_error("idx: write failed for " + path.string());
}

// Image stack with pixels rescaled to [0,1] and then normalised to zero mean,
// unit standard deviation over the whole stack.
struct ImageStack {
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;  // count * height * width
  double raw_mean = 0.0;       // of the [0,1]-scaled pixels
  double raw_stdev = 1.0;

  const double* image(std::size_t i) const { return pixels.data() + i * height * width; }
};

inline void normalize_stack(ImageStack& stack) {
  const double n = static_cast<double>(stack.pixels.size());
  double mean = 0.0;
  for (double v : stack.pixels) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : stack.pixels) var += (v - mean) * (v - mean);
  const double stdev = std::sqrt(var / n);
  stack.raw_mean = mean;
  stack.raw_stdev = stdev;
  const double denom = stdev > 0.0 ? stdev : 1.0;
  for (double& v : stack.pixels) v = (v - mean) / denom;
}

inline ImageStack load_idx_images(const std::filesystem::path& path) {
  const IdxTensor raw = load_idx_raw(path);
  const std::uint32_t magic_dims = static_cast<std::uint32_t>(raw.dims.size());
  if (magic_dims != 3) throw std::runtime_error("idx: expected 3-dimensional image stack");
  ImageStack stack;
  stack.count = raw.dims[0];
  stack.height = raw.dims[1];
  stack.width = raw.dims[2];
  stack.pixels.resize(raw.bytes.size());
  for (std::size_t i = 0; i < raw.bytes.size(); ++i)
    stack.pixels[i] = static_cast<double>(raw.bytes[i]) / 255.0;
  normalize_stack(stack);
  return stack;
}

inline std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path) {
  const IdxTensor raw = load_idx_raw(path);
  if (raw.dims.size() != 1) throw std::runtime_error("idx: expected 1-dimensional label vector");
  return raw.bytes;
}

}  // namespace poperm
