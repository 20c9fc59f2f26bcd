#include "axialseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include "axialseg/ops.hpp"
#include "axialseg/rng.hpp"

namespace axialseg::data {

void SynthSpec::validate() const {
  if (img_size < 2) throw std::invalid_argument("SynthSpec: img_size must be >= 2");
  if (blob_count_range.first < 0 || blob_count_range.first > blob_count_range.second) {
    throw std::invalid_argument("SynthSpec: blob_count_range must satisfy 0 <= lo <= hi");
  }
  if (!(blob_axes_range.first > 0) || blob_axes_range.first > blob_axes_range.second ||
      blob_axes_range.second > 0.5) {
    throw std::invalid_argument("SynthSpec: blob_axes_range must satisfy 0 < lo <= hi <= 0.5");
  }
  if (speckle_sigma < 0) throw std::invalid_argument("SynthSpec: speckle_sigma must be >= 0");
  if (background_texture_scale == 0) throw std::invalid_argument("SynthSpec: background_texture_scale must be >= 1");
}

bool Ellipse::contains(double y, double x) const {
  const double dy = y - cy, dx = x - cx;
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = dy * c + dx * s;
  const double w = -dy * s + dx * c;
  return (u / ay) * (u / ay) + (w / ax) * (w / ax) <= 1.0;
}

namespace {

std::vector<Ellipse> draw_ellipses(SplitMix64& rng, const SynthSpec& spec) {
  const double size = static_cast<double>(spec.img_size);
  const auto count = rng.uniform_int(spec.blob_count_range.first, spec.blob_count_range.second);
  std::vector<Ellipse> out;
  for (std::int64_t b = 0; b < count; ++b) {
    Ellipse e{};
    e.ay = rng.uniform(spec.blob_axes_range.first, spec.blob_axes_range.second) * size;
    e.ax = rng.uniform(spec.blob_axes_range.first, spec.blob_axes_range.second) * size;
    e.angle = rng.uniform(0.0, std::numbers::pi);
    const double margin = std::max(e.ay, e.ax);
    e.cy = rng.uniform(margin, size - margin);
    e.cx = rng.uniform(margin, size - margin);
    out.push_back(e);
  }
  return out;
}

std::string sample_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05zu", index);
  return buf;
}

}  // namespace

std::vector<Ellipse> sample_ellipses(const SynthSpec& spec, std::size_t index) {
  SplitMix64 rng(derive_seed(spec.seed, index));
  return draw_ellipses(rng, spec);
}

Tensor<float> rasterize(const std::vector<Ellipse>& ellipses, std::size_t size) {
  Tensor<float> mask(Shape{1, 1, size, size});
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) {
      const double y = static_cast<double>(r) + 0.5, x = static_cast<double>(c) + 0.5;
      for (const auto& e : ellipses) {
        if (e.contains(y, x)) {
          mask[r * size + c] = 1.0f;
          break;
        }
      }
    }
  return mask;
}

Sample generate_one(const SynthSpec& spec, std::size_t index) {
  spec.validate();
  SplitMix64 rng(derive_seed(spec.seed, index));
  const std::vector<Ellipse> blobs = draw_ellipses(rng, spec);
  const std::size_t I = spec.img_size;
  Sample s;
  s.id = sample_id(index);
  s.mask = rasterize(blobs, I);

  // Low-frequency texture: random lattice values, bilinearly interpolated.
  const std::size_t cells = I / spec.background_texture_scale + 2;
  Tensor<float> lattice(Shape{1, 1, cells, cells});
  for (auto& v : lattice.vec()) v = static_cast<float>(rng.uniform());
  const Tensor<float> texture = ops::kernel::bilinear_resize(lattice, I + 2 * spec.background_texture_scale,
                                                             I + 2 * spec.background_texture_scale);
  const std::size_t tw = texture.dim(3), off = spec.background_texture_scale;

  s.image = Tensor<float>(Shape{1, 1, I, I});
  for (std::size_t r = 0; r < I; ++r)
    for (std::size_t c = 0; c < I; ++c) {
      const double t = texture[(r + off) * tw + c + off];
      const bool inside = s.mask[r * I + c] > 0.5f;
      double v = inside ? 0.72 + 0.12 * t : 0.10 + 0.14 * t;
      v *= std::max(0.0, 1.0 + spec.speckle_sigma * rng.normal());
      s.image[r * I + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  return s;
}

std::vector<Sample> generate(const SynthSpec& spec, std::size_t threads) {
  spec.validate();
  std::vector<Sample> out(spec.n_samples);
  threads = std::max<std::size_t>(1, std::min(threads, spec.n_samples));
  if (threads <= 1) {
    for (std::size_t i = 0; i < spec.n_samples; ++i) out[i] = generate_one(spec, i);
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < spec.n_samples; i += threads) out[i] = generate_one(spec, i);
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

// ---------------------------------------------------------------------------

namespace {
std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

void require_single_channel(const Tensor<float>& img, const char* what) {
  if (img.rank() != 4 || img.dim(0) != 1 || img.dim(1) != 1) {
    throw ShapeError(std::string(what) + ": expected [1,1,H,W], got " + shape_str(img.shape()));
  }
}
}  // namespace

Tensor<float> quantize(const Tensor<float>& img) {
  Tensor<float> out(img.shape());
  for (std::size_t i = 0; i < img.numel(); ++i) out[i] = static_cast<float>(to_byte(img[i])) / 255.0f;
  return out;
}

std::vector<std::uint8_t> encode_pgm(const Tensor<float>& img) {
  require_single_channel(img, "encode_pgm");
  const std::string header = "P5\n" + std::to_string(img.dim(3)) + " " + std::to_string(img.dim(2)) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + img.numel());
  for (float v : img.vec()) bytes.push_back(to_byte(v));
  return bytes;
}

Tensor<float> decode_pgm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* field) {
    skip_space();
    std::size_t start = pos;
    long long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000) throw PgmError(std::string("pgm: ") + field + " too large");
      ++pos;
    }
    if (pos == start) throw PgmError(std::string("pgm: malformed header, missing ") + field);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw PgmError("pgm: missing P5 magic");
  pos = 2;
  const long long w = read_int("width");
  const long long h = read_int("height");
  const long long maxval = read_int("maxval");
  if (w <= 0 || h <= 0) throw PgmError("pgm: non-positive dimensions");
  if (maxval != 255) throw PgmError("pgm: maxval " + std::to_string(maxval) + " unsupported (need 255)");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw PgmError("pgm: malformed header terminator");
  ++pos;
  const auto n = static_cast<std::size_t>(w * h);
  if (bytes.size() - pos != n) {
    throw PgmError("pgm: expected " + std::to_string(n) + " pixel bytes, found " + std::to_string(bytes.size() - pos));
  }
  Tensor<float> img(Shape{1, 1, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  for (std::size_t i = 0; i < n; ++i) img[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
  return img;
}

void save_pgm(const Tensor<float>& img, const std::filesystem::path& path) {
  const auto bytes = encode_pgm(img);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

Tensor<float> load_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_pgm(bytes);
}

// ---------------------------------------------------------------------------

Tensor<float> resize(const Tensor<float>& img, std::size_t target) {
  if (target == 0) throw std::invalid_argument("resize: target must be positive");
  if (img.rank() != 4) throw ShapeError("resize: expected rank-4 input, got " + shape_str(img.shape()));
  if (img.dim(2) == target && img.dim(3) == target) return img;
  return ops::kernel::bilinear_resize(img, target, target);
}

Tensor<float> resize_mask(const Tensor<float>& mask, std::size_t target) {
  if (target == 0) throw std::invalid_argument("resize_mask: target must be positive");
  if (mask.rank() != 4) throw ShapeError("resize_mask: expected rank-4 input, got " + shape_str(mask.shape()));
  const std::size_t P = mask.dim(0) * mask.dim(1), H = mask.dim(2), W = mask.dim(3);
  auto nearest = [](std::size_t o, std::size_t in, std::size_t out) {
    const auto src = static_cast<std::size_t>(std::floor((static_cast<double>(o) + 0.5) * in / out));
    return std::min(src, in - 1);
  };
  Tensor<float> out(Shape{mask.dim(0), mask.dim(1), target, target});
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t r = 0; r < target; ++r)
      for (std::size_t c = 0; c < target; ++c) {
        const float v = mask[(p * H + nearest(r, H, target)) * W + nearest(c, W, target)];
        out[(p * target + r) * target + c] = v >= 0.5f ? 1.0f : 0.0f;
      }
  return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  SplitMix64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split(const std::vector<Sample>& samples,
                                                          double train_fraction, std::uint64_t seed) {
  if (samples.size() < 2) throw std::invalid_argument("split: need at least 2 samples");
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(samples.size())));
  if (n_train == 0 || n_train >= samples.size()) {
    throw std::invalid_argument("split: fraction " + std::to_string(train_fraction) + " of " +
                                std::to_string(samples.size()) + " samples leaves one side empty");
  }
  const auto order = shuffled_indices(samples.size(), seed);
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? out.first : out.second).push_back(samples[order[i]]);
  }
  return out;
}

void write_corpus(const std::vector<Sample>& samples, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  if (!ec) fs::create_directories(root / "masks", ec);
  if (ec) throw std::runtime_error("cannot create corpus directories under '" + root.string() + "': " + ec.message());
  std::ostringstream manifest;
  for (const auto& s : samples) {
    save_pgm(s.image, root / "images" / (s.id + ".pgm"));
    save_pgm(s.mask, root / "masks" / (s.id + ".pgm"));
    manifest << s.id << '\n';
  }
  std::ofstream os(root / "manifest.txt", std::ios::binary);
  if (!os) throw std::runtime_error("cannot write manifest under '" + root.string() + "'");
  os << manifest.str();
}

std::vector<Sample> read_corpus(const std::filesystem::path& root) {
  std::ifstream is(root / "manifest.txt");
  if (!is) throw std::runtime_error("missing corpus manifest '" + (root / "manifest.txt").string() + "'");
  std::vector<Sample> out;
  std::string id;
  while (std::getline(is, id)) {
    if (id.empty()) continue;
    Sample s;
    s.id = id;
    s.image = load_pgm(root / "images" / (id + ".pgm"));
    s.mask = load_pgm(root / "masks" / (id + ".pgm"));
    for (auto& v : s.mask.vec()) v = v >= 0.5f ? 1.0f : 0.0f;
    if (s.image.shape() != s.mask.shape()) {
      throw ShapeError("corpus sample '" + id + "': image " + shape_str(s.image.shape()) + " vs mask " +
                       shape_str(s.mask.shape()));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace axialseg::data
