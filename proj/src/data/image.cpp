#include "imagine/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "imagine/tensor.hpp"

namespace imagine {

double Image::sum() const {
  double s = 0.0;
  for (double p : pixels) s += p;
  return s;
}

// ------------------------------------------------------------------ IDX

namespace {

class ByteCursor {
 public:
  ByteCursor(std::span<const std::uint8_t> bytes, const char* file) : bytes_(bytes), file_(file) {}

  std::uint32_t u32be() {
    need(4, "32-bit header field");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string(file_) + " truncated reading " + what + " at byte offset " +
                        std::to_string(bytes_.size()) + " (needed " + std::to_string(pos_ + n) + ")");
    }
  }

  std::span<const std::uint8_t> bytes_;
  const char* file_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

DigitSource parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  ByteCursor img(images, "IDX image file");
  ByteCursor lab(labels, "IDX label file");

  const std::uint32_t img_magic = img.u32be();
  if (img_magic != 0x00000803) throw FormatError("IDX image file has wrong magic number " + std::to_string(img_magic));
  const std::uint32_t lab_magic = lab.u32be();
  if (lab_magic != 0x00000801) throw FormatError("IDX label file has wrong magic number " + std::to_string(lab_magic));

  const std::uint32_t n = img.u32be();
  const std::uint32_t rows = img.u32be();
  const std::uint32_t cols = img.u32be();
  const std::uint32_t n_labels = lab.u32be();
  if (n != n_labels) {
    throw FormatError("IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(n_labels) + " labels");
  }

  DigitSource out;
  out.max_intensity = 255.0;
  out.images.reserve(n);
  out.labels.reserve(n);
  const auto label_bytes = lab.take(n, "labels");
  for (std::uint32_t i = 0; i < n; ++i) {
    if (label_bytes[i] > 9) {
      throw FormatError("IDX label " + std::to_string(label_bytes[i]) + " at index " + std::to_string(i) +
                        " is not a digit");
    }
    out.labels.push_back(label_bytes[i]);
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto px = img.take(static_cast<std::size_t>(rows) * cols, "pixels");
    Image im(rows, cols);
    std::copy(px.begin(), px.end(), im.pixels.begin());
    out.images.push_back(std::move(im));
  }
  return out;
}

DigitSource load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto images = slurp(images_path);
  const auto labels = slurp(labels_path);
  return parse_idx(images, labels);
}

// ------------------------------------------------------------------ glyphs

namespace {

struct Rect {
  double x0, y0, x1, y1;
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

struct Stroke {
  double ax, ay, bx, by, half_width;
  bool contains(double x, double y) const {
    const double dx = bx - ax, dy = by - ay;
    const double t = std::clamp(((x - ax) * dx + (y - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
    const double ex = x - (ax + t * dx), ey = y - (ay + t * dy);
    return ex * ex + ey * ey <= half_width * half_width;
  }
};

// Seven-segment layout in unit box coordinates (x right, y down).
constexpr double kT = 0.16;
constexpr double kX0 = 0.16, kX1 = 0.84, kY0 = 0.02, kYm = 0.5, kY1 = 0.98;
constexpr Rect kSegA{kX0, kY0, kX1, kY0 + kT};
constexpr Rect kSegB{kX1 - kT, kY0, kX1, kYm + kT / 2};
constexpr Rect kSegC{kX1 - kT, kYm - kT / 2, kX1, kY1};
constexpr Rect kSegD{kX0, kY1 - kT, kX1, kY1};
constexpr Rect kSegE{kX0, kYm - kT / 2, kX0 + kT, kY1};
constexpr Rect kSegF{kX0, kY0, kX0 + kT, kYm + kT / 2};
constexpr Rect kSegG{kX0, kYm - kT / 2, kX1, kYm + kT / 2};
constexpr Rect kOneBar{0.5 - kT / 2, kY0, 0.5 + kT / 2, kY1};
constexpr Stroke kSevenDiag{kX1 - kT / 2, kY0 + kT, 0.42, kY1, kT / 2};

bool glyph_ink(int digit, double x, double y) {
  auto any = [&](std::initializer_list<Rect> rs) {
    return std::any_of(rs.begin(), rs.end(), [&](const Rect& r) { return r.contains(x, y); });
  };
  switch (digit) {
    case 0: return any({kSegA, kSegB, kSegC, kSegD, kSegE, kSegF});
    case 1: return kOneBar.contains(x, y);
    case 2: return any({kSegA, kSegB, kSegG, kSegE, kSegD});
    case 3: return any({kSegA, kSegB, kSegG, kSegC, kSegD});
    case 4: return any({kSegF, kSegG, kSegB, kSegC});
    case 5: return any({kSegA, kSegF, kSegG, kSegC, kSegD});
    case 6: return any({kSegA, kSegF, kSegG, kSegE, kSegD, kSegC});
    case 7: return kSegA.contains(x, y) || kSevenDiag.contains(x, y);
    case 8: return any({kSegA, kSegB, kSegC, kSegD, kSegE, kSegF, kSegG});
    case 9: return any({kSegA, kSegB, kSegF, kSegG, kSegC, kSegD});
    default: return false;
  }
}

}  // namespace

std::array<Image, 10> procedural_glyphs(std::size_t size) {
  if (size < 8) throw std::invalid_argument("procedural_glyphs: size must be >= 8");
  std::array<Image, 10> out;
  const double inv = 1.0 / static_cast<double>(size);
  for (int d = 0; d < 10; ++d) {
    Image im(size, size);
    for (std::size_t r = 0; r < size; ++r) {
      for (std::size_t c = 0; c < size; ++c) {
        im.at(r, c) = glyph_ink(d, (static_cast<double>(c) + 0.5) * inv, (static_cast<double>(r) + 0.5) * inv) ? 1.0 : 0.0;
      }
    }
    out[static_cast<std::size_t>(d)] = std::move(im);
  }
  return out;
}

DigitSource procedural_source(std::size_t glyph_size) {
  auto glyphs = procedural_glyphs(glyph_size);
  DigitSource src;
  for (int d = 0; d < 10; ++d) {
    src.images.push_back(std::move(glyphs[static_cast<std::size_t>(d)]));
    src.labels.push_back(d);
  }
  return src;
}

// ------------------------------------------------------------------ transforms

namespace {

struct Placement {
  double factor;  // canvas pixels per source pixel
  double cos_t, sin_t;
  double src_cx, src_cy;
};

Placement placement(const Image& glyph, const TransformParams& t, std::size_t canvas_size) {
  if (glyph.height == 0 || glyph.width == 0) throw std::invalid_argument("empty glyph");
  if (!(t.scale > 0.0) || !std::isfinite(t.scale)) throw TransformError("scale must be positive");
  const double side = static_cast<double>(std::max(glyph.height, glyph.width));
  const double theta = t.rotation_deg * std::numbers::pi / 180.0;
  return {t.scale * static_cast<double>(canvas_size) * kGlyphBoxFraction / side, std::cos(theta), std::sin(theta),
          0.5 * static_cast<double>(glyph.width), 0.5 * static_cast<double>(glyph.height)};
}

double bilinear(const Image& img, double x, double y) {
  // (x, y) in pixel-centre coordinates: pixel (r, c) sits at (c, r).
  const double fx = std::floor(x), fy = std::floor(y);
  const long c0 = static_cast<long>(fx), r0 = static_cast<long>(fy);
  const double ax = x - fx, ay = y - fy;
  auto px = [&](long r, long c) {
    if (r < 0 || c < 0 || r >= static_cast<long>(img.height) || c >= static_cast<long>(img.width)) return 0.0;
    return img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  };
  return (1 - ay) * ((1 - ax) * px(r0, c0) + ax * px(r0, c0 + 1)) + ay * ((1 - ax) * px(r0 + 1, c0) + ax * px(r0 + 1, c0 + 1));
}

constexpr int kSupersample = 4;

}  // namespace

namespace {

// Supersampled intensity of canvas pixel (r, c); r and c may lie off the canvas.
double sample_pixel(const Image& glyph, const Placement& p, const TransformParams& t, long r, long c) {
  const double inv_f = 1.0 / p.factor;
  const double sub = 1.0 / kSupersample;
  double acc = 0.0;
  for (int i = 0; i < kSupersample; ++i) {
    for (int j = 0; j < kSupersample; ++j) {
      const double dx = (static_cast<double>(c) + (j + 0.5) * sub - t.center_x) * inv_f;
      const double dy = (static_cast<double>(r) + (i + 0.5) * sub - t.center_y) * inv_f;
      // Inverse rotation back into glyph space.
      const double qx = p.cos_t * dx + p.sin_t * dy + p.src_cx;
      const double qy = -p.sin_t * dx + p.cos_t * dy + p.src_cy;
      acc += bilinear(glyph, qx - 0.5, qy - 0.5);
    }
  }
  return std::clamp(acc * sub * sub, 0.0, 1.0);
}

}  // namespace

BoundingBox ink_bounds(const Image& glyph, const TransformParams& t, std::size_t canvas_size) {
  const Placement p = placement(glyph, t, canvas_size);
  // Every pixel that can receive ink lies inside the image of the glyph's
  // (one-pixel padded) footprint.
  double lo_x = INFINITY, lo_y = INFINITY, hi_x = -INFINITY, hi_y = -INFINITY;
  for (int corner = 0; corner < 4; ++corner) {
    const double qx = (corner & 1 ? static_cast<double>(glyph.width) + 1.0 : -1.0) - p.src_cx;
    const double qy = (corner >> 1 ? static_cast<double>(glyph.height) + 1.0 : -1.0) - p.src_cy;
    const double x = t.center_x + p.factor * (p.cos_t * qx - p.sin_t * qy);
    const double y = t.center_y + p.factor * (p.sin_t * qx + p.cos_t * qy);
    lo_x = std::min(lo_x, x), hi_x = std::max(hi_x, x);
    lo_y = std::min(lo_y, y), hi_y = std::max(hi_y, y);
  }
  BoundingBox box{INFINITY, INFINITY, -INFINITY, -INFINITY};
  bool any = false;
  for (long r = static_cast<long>(std::floor(lo_y)) - 1; r <= static_cast<long>(std::ceil(hi_y)); ++r) {
    for (long c = static_cast<long>(std::floor(lo_x)) - 1; c <= static_cast<long>(std::ceil(hi_x)); ++c) {
      if (sample_pixel(glyph, p, t, r, c) <= kInkThreshold) continue;
      any = true;
      box.x0 = std::min(box.x0, static_cast<double>(c));
      box.x1 = std::max(box.x1, static_cast<double>(c + 1));
      box.y0 = std::min(box.y0, static_cast<double>(r));
      box.y1 = std::max(box.y1, static_cast<double>(r + 1));
    }
  }
  if (!any) return {t.center_x, t.center_y, t.center_x, t.center_y};
  return box;
}

namespace {

bool fits(const BoundingBox& b, std::size_t canvas) {
  const double s = static_cast<double>(canvas);
  return b.x0 >= 0.0 && b.y0 >= 0.0 && b.x1 <= s && b.y1 <= s;
}

}  // namespace

TransformParams attrs_to_transform(std::span<const int> attrs, const Image& glyph, Rng& rng,
                                   std::size_t image_size) {
  if (attrs.size() != 4) throw std::invalid_argument("attrs_to_transform: expected class, scale, orientation, location");
  if (attrs[1] < 0 || attrs[1] > 1 || attrs[2] < 0 || attrs[2] > 2 || attrs[3] < 0 || attrs[3] > 3) {
    throw std::invalid_argument("attrs_to_transform: attribute value out of range");
  }
  const double s = static_cast<double>(image_size);
  std::normal_distribution<double> n01(0.0, 1.0);
  int rejections = 0;
  auto reject = [&] {
    if (++rejections > 1000) throw TransformError("attrs_to_transform: more than 1000 rejections");
  };

  TransformParams t;
  const double scale_mean = attrs[1] == 0 ? 0.9 : 0.6;
  for (;;) {
    t.scale = scale_mean + 0.1 * n01(rng);
    if (t.scale >= kMinScale && t.scale <= kMaxScale) break;
    reject();
  }

  switch (attrs[2]) {
    case 0: t.rotation_deg = 45.0 + 10.0 * n01(rng); break;
    case 1: t.rotation_deg = 0.0; break;
    default: t.rotation_deg = -45.0 + 10.0 * n01(rng); break;
  }

  const bool right = attrs[3] == 1 || attrs[3] == 3;
  const bool bottom = attrs[3] >= 2;
  const double off = s / 16.0;
  const double mx = right ? 0.75 * s + off : 0.25 * s - off;
  const double my = bottom ? 0.75 * s + off : 0.25 * s - off;
  for (;;) {
    t.center_x = mx + off * n01(rng);
    t.center_y = my + off * n01(rng);
    if (fits(ink_bounds(glyph, t, image_size), image_size)) break;
    reject();
  }
  return t;
}

Image render(const Image& glyph, const TransformParams& t, std::size_t canvas_size) {
  const Placement p = placement(glyph, t, canvas_size);
  if (!fits(ink_bounds(glyph, t, canvas_size), canvas_size)) {
    throw TransformError("render: transformed glyph extends outside the canvas");
  }
  Image out(canvas_size, canvas_size);
  for (std::size_t r = 0; r < canvas_size; ++r) {
    for (std::size_t c = 0; c < canvas_size; ++c) {
      out.at(r, c) = sample_pixel(glyph, p, t, static_cast<long>(r), static_cast<long>(c));
    }
  }
  return out;
}

std::vector<std::uint8_t> binarize(const Image& img, Rng& rng) {
  std::vector<std::uint8_t> out(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double p = img.pixels[i];
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binarize: pixel " + std::to_string(i) + " outside [0, 1]");
    out[i] = uniform01(rng) < p ? 1 : 0;
  }
  return out;
}

BoundingBox pixel_bounds(const Image& img, double threshold) {
  BoundingBox box{INFINITY, INFINITY, -INFINITY, -INFINITY};
  bool any = false;
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      if (img.at(r, c) <= threshold) continue;
      any = true;
      box.x0 = std::min(box.x0, static_cast<double>(c));
      box.y0 = std::min(box.y0, static_cast<double>(r));
      box.x1 = std::max(box.x1, static_cast<double>(c + 1));
      box.y1 = std::max(box.y1, static_cast<double>(r + 1));
    }
  }
  return any ? box : BoundingBox{};
}

}  // namespace imagine
