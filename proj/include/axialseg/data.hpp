#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "axialseg/tensor.hpp"

namespace axialseg::data {

/// One grayscale image with its binary mask, both [1,1,I,I].
struct Sample {
  Tensor<float> image;
  Tensor<float> mask;
  std::string id;
};

/// Parameters of the synthetic ultrasound-like corpus: a dark textured
/// background with multiplicative speckle and a few bright filled ellipses.
struct SynthSpec {
  std::size_t n_samples = 32;
  std::size_t img_size = 64;
  std::uint64_t seed = 0;
  std::pair<int, int> blob_count_range{1, 3};
  std::pair<double, double> blob_axes_range{0.1, 0.3};  // semi-axes as a fraction of img_size
  double speckle_sigma = 0.15;
  std::size_t background_texture_scale = 8;  // pixels per cell of the low-frequency texture grid

  void validate() const;
};

struct Ellipse {
  double cy, cx;  // centre in pixel units (pixel (r, c) has centre (r + 0.5, c + 0.5))
  double ay, ax;  // semi-axes before rotation
  double angle;   // radians
  bool contains(double y, double x) const;
};

/// Sample `index` of the corpus; depends only on (spec, index).
Sample generate_one(const SynthSpec& spec, std::size_t index);
/// Generates all samples; `threads` > 1 splits the work, output is identical.
std::vector<Sample> generate(const SynthSpec& spec, std::size_t threads = 1);
/// Ellipses used for sample `index` (exposed for oracle tests).
std::vector<Ellipse> sample_ellipses(const SynthSpec& spec, std::size_t index);
/// Rasterises: pixel centre inside any ellipse -> 1.
Tensor<float> rasterize(const std::vector<Ellipse>& ellipses, std::size_t size);

// PGM ("P5", maxval 255) I/O. Values are quantised with round(v * 255), clamped.

class PgmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_pgm(const Tensor<float>& img);
Tensor<float> decode_pgm(const std::vector<std::uint8_t>& bytes);
void save_pgm(const Tensor<float>& img, const std::filesystem::path& path);
Tensor<float> load_pgm(const std::filesystem::path& path);
/// The value load(save(x)) yields: round(clamp(x) * 255) / 255.
Tensor<float> quantize(const Tensor<float>& img);

/// Bilinear resample of a [N,C,H,W] image to target x target (half-pixel centres).
Tensor<float> resize(const Tensor<float>& img, std::size_t target);
/// Nearest-neighbour resample of a mask, re-binarised at 0.5.
Tensor<float> resize_mask(const Tensor<float>& mask, std::size_t target);

/// Seeded Fisher-Yates shuffle then prefix split. Both sides must be non-empty.
std::pair<std::vector<Sample>, std::vector<Sample>> split(const std::vector<Sample>& samples,
                                                          double train_fraction, std::uint64_t seed);

/// Fisher-Yates permutation of 0..n-1 driven by SplitMix64(seed).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

/// <root>/images/<id>.pgm, <root>/masks/<id>.pgm and manifest.txt (one id per line).
void write_corpus(const std::vector<Sample>& samples, const std::filesystem::path& root);
std::vector<Sample> read_corpus(const std::filesystem::path& root);

}  // namespace axialseg::data
