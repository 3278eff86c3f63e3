#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "poperm/hungarian.hpp"
#include "poperm/idx.hpp"
#include "poperm/matrix.hpp"
#include "poperm/rng.hpp"

namespace poperm {

struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  double& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
};

// A set of tiles in seeded-shuffled presentation order plus the assignment
// that restores the source image: ground_truth.assignment[k] is the presented
// index of the tile belonging at grid position k (row-major).
struct MosaicInstance {
  DenseMatrix tiles;  // N x tile_pixels
  HardPermutation ground_truth;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::size_t tile_height = 0;
  std::size_t tile_width = 0;

  std::size_t tile_count() const { return grid_rows * grid_cols; }
  DenseMatrix ordered_tiles() const {
    DenseMatrix out(tiles.rows(), tiles.cols());
    for (std::size_t k = 0; k < ground_truth.assignment.size(); ++k) {
      const std::size_t src = ground_truth.assignment[k];
      for (std::size_t c = 0; c < tiles.cols(); ++c) out(k, c) = tiles(src, c);
    }
    return out;
  }
};

// Nearest-neighbour rescale to the closest size >= the source that both grid
// dimensions divide.
inline Image upscale_to_divisible(const Image& src, std::size_t grid_rows, std::size_t grid_cols) {
  auto round_up = [](std::size_t v, std::size_t div) { return ((v + div - 1) / div) * div; };
  const std::size_t new_h = round_up(src.height, grid_rows);
  const std::size_t new_w = round_up(src.width, grid_cols);
  if (new_h == src.height && new_w == src.width) return src;
  Image out;
  out.height = new_h;
  out.width = new_w;
  out.pixels.resize(new_h * new_w);
  for (std::size_t r = 0; r < new_h; ++r) {
    const std::size_t sr = r * src.height / new_h;
    for (std::size_t c = 0; c < new_w; ++c) {
      const std::size_t sc = c * src.width / new_w;
      out.at(r, c) = src.at(sr, sc);
    }
  }
  return out;
}

inline MosaicInstance make_mosaic(const Image& image, std::size_t grid_rows, std::size_t grid_cols,
                                  std::uint64_t seed) {
  if (grid_rows == 0 || grid_cols == 0) throw std::invalid_argument("make_mosaic: empty grid");
  if (image.height < grid_rows || image.width < grid_cols)
    throw std::invalid_argument("make_mosaic: image smaller than the grid");

  const Image scaled = upscale_to_divisible(image, grid_rows, grid_cols);
  const std::size_t n = grid_rows * grid_cols;
  const std::size_t th = scaled.height / grid_rows;
  const std::size_t tw = scaled.width / grid_cols;

  // cut tiles in row-major ground-truth order
  DenseMatrix true_tiles(n, th * tw);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t r0 = (k / grid_cols) * th;
    const std::size_t c0 = (k % grid_cols) * tw;
    for (std::size_t r = 0; r < th; ++r)
      for (std::size_t c = 0; c < tw; ++c) true_tiles(k, r * tw + c) = scaled.at(r0 + r, c0 + c);
  }

  // presentation order must not encode the answer
  Rng rng(seed);
  const std::vector<std::size_t> tile_of_slot = random_permutation(n, rng);

  MosaicInstance instance;
  instance.grid_rows = grid_rows;
  instance.grid_cols = grid_cols;
  instance.tile_height = th;
  instance.tile_width = tw;
  instance.tiles = DenseMatrix(n, th * tw);
  instance.ground_truth.assignment.resize(n);
  for (std::size_t slot = 0; slot < n; ++slot) {
    const std::size_t k = tile_of_slot[slot];
    for (std::size_t c = 0; c < th * tw; ++c) instance.tiles(slot, c) = true_tiles(k, c);
    instance.ground_truth.assignment[k] = slot;
  }
  return instance;
}

// Reassemble an image from tiles laid out at grid positions by `assignment`.
inline Image assemble_image(const MosaicInstance& instance, const HardPermutation& assignment) {
  Image out;
  out.height = instance.grid_rows * instance.tile_height;
  out.width = instance.grid_cols * instance.tile_width;
  out.pixels.resize(out.height * out.width);
  for (std::size_t k = 0; k < assignment.assignment.size(); ++k) {
    const std::size_t src = assignment.assignment[k];
    const std::size_t r0 = (k / instance.grid_cols) * instance.tile_height;
    const std::size_t c0 = (k % instance.grid_cols) * instance.tile_width;
    for (std::size_t r = 0; r < instance.tile_height; ++r)
      for (std::size_t c = 0; c < instance.tile_width; ++c)
        out.at(r0 + r, c0 + c) = instance.tiles(src, r * instance.tile_width + c);
  }
  return out;
}

// --- synthetic images -------------------------------------------------------

// Smooth two-dimensional gradient plus one bright Gaussian blob; every tile of
// a small grid sees a different mix, so tiles stay distinguishable.
inline Image synthetic_image(std::uint64_t seed, std::size_t size = 28) {
  Rng rng(mix_seed(seed, 0xB10B));
  Image img;
  img.height = size;
  img.width = size;
  img.pixels.resize(size * size);

  const double gx = rng.uniform(-1.0, 1.0);
  const double gy = rng.uniform(-1.0, 1.0);
  const double gxy = rng.uniform(-0.5, 0.5);
  const double offset = rng.uniform(0.0, 0.3);
  const double cx = rng.uniform(0.15, 0.85);
  const double cy = rng.uniform(0.15, 0.85);
  const double sigma = rng.uniform(0.08, 0.2);
  const double amp = rng.uniform(0.6, 1.0);

  const double denom = static_cast<double>(size - 1);
  for (std::size_t r = 0; r < size; ++r) {
    const double y = static_cast<double>(r) / denom;
    for (std::size_t c = 0; c < size; ++c) {
      const double x = static_cast<double>(c) / denom;
      double v = offset + 0.5 * (gx * x + gy * y + gxy * x * y + 1.0) * 0.4;
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      v += amp * std::exp(-d2 / (2.0 * sigma * sigma));
      img.at(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

// Variant with two identical all-zero quadrants (top-right and bottom-left of
// a 2x2 split); content only in the other two. Uniform-init PO cannot tell
// the blank tiles apart, which is what the init comparison tests exploit.
inline Image synthetic_blank_quadrant_image(std::uint64_t seed, std::size_t size = 28) {
  Image img = synthetic_image(seed, size);
  const std::size_t half = size / 2;
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) {
      const bool top = r < half;
      const bool left = c < half;
      if (top != left) img.at(r, c) = 0.0;  // blank the two off-diagonal quadrants
    }
  return img;
}

// Stack of seeded synthetic images, normalised like the IDX loading path.
inline ImageStack synthetic_stack(std::size_t count, std::uint64_t seed, bool blank_quadrants,
                                  std::size_t size = 28) {
  ImageStack stack;
  stack.count = count;
  stack.height = size;
  stack.width = size;
  stack.pixels.reserve(count * size * size);
  for (std::size_t i = 0; i < count; ++i) {
    const Image img = blank_quadrants ? synthetic_blank_quadrant_image(mix_seed(seed, i), size)
                                      : synthetic_image(mix_seed(seed, i), size);
    stack.pixels.insert(stack.pixels.end(), img.pixels.begin(), img.pixels.end());
  }
  normalize_stack(stack);
  return stack;
}

inline Image stack_image(const ImageStack& stack, std::size_t index) {
  Image img;
  img.height = stack.height;
  img.width = stack.width;
  img.pixels.assign(stack.image(index), stack.image(index) + stack.height * stack.width);
  return img;
}

// --- tile encoder ------------------------------------------------------------

// Single linear layer + ReLU on flattened tile pixels; stands in for a small
// convolutional feature extractor.
struct TileEncoderParams {
  DenseMatrix w;          // embed_dim x tile_pixels
  std::vector<double> b;  // embed_dim

  void validate() const {
    if (b.size() != w.rows()) throw std::invalid_argument("TileEncoderParams: bias size mismatch");
  }
};

struct TileEncoderCache {
  DenseMatrix tiles;  // N x tile_pixels
  DenseMatrix pre;    // N x embed_dim
};

inline DenseMatrix encode_tiles(const TileEncoderParams& params, const DenseMatrix& tiles,
                                TileEncoderCache* cache = nullptr) {
  params.validate();
  if (tiles.cols() != params.w.cols())
    throw std::invalid_argument("encode_tiles: tile pixel count mismatch");
  const std::size_t n = tiles.rows();
  const std::size_t embed = params.w.rows();

  DenseMatrix pre = matmul_abt(tiles, params.w);  // N x embed
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t e = 0; e < embed; ++e) pre(i, e) += params.b[e];

  DenseMatrix out(n, embed);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = pre.data()[i] > 0.0 ? pre.data()[i] : 0.0;
  if (cache) {
    cache->tiles = tiles;
    cache->pre = std::move(pre);
  }
  return out;
}

struct TileEncoderGrads {
  DenseMatrix w;
  std::vector<double> b;
};

inline TileEncoderGrads encode_tiles_vjp(const TileEncoderParams& params,
                                         const TileEncoderCache& cache,
                                         const DenseMatrix& d_features) {
  if (d_features.rows() != cache.pre.rows() || d_features.cols() != cache.pre.cols())
    throw std::invalid_argument("encode_tiles_vjp: upstream shape mismatch");
  DenseMatrix d_pre = d_features;
  for (std::size_t i = 0; i < d_pre.size(); ++i)
    if (cache.pre.data()[i] <= 0.0) d_pre.data()[i] = 0.0;

  TileEncoderGrads grads;
  grads.w = matmul_atb(d_pre, cache.tiles);  // embed x tile_pixels
  grads.b.assign(params.b.size(), 0.0);
  for (std::size_t i = 0; i < d_pre.rows(); ++i)
    for (std::size_t e = 0; e < d_pre.cols(); ++e) grads.b[e] += d_pre(i, e);
  return grads;
}

}  // namespace poperm
