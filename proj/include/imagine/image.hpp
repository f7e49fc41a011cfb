#pragma once

// Grayscale images, digit glyph sources, and the affine rendering pipeline
// that places a glyph on a blank canvas.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "imagine/random.hpp"

namespace imagine {

class TransformError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major grayscale image with intensities in [0, 1] (or [0, 255] for raw
/// IDX data).
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

  double& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  double sum() const;
};

struct BoundingBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // x = column, y = row; pixel-edge coordinates
  double area() const { return (x1 - x0) * (y1 - y0); }
};

struct DigitSource {
  std::vector<Image> images;
  std::vector<int> labels;  // 0..9
  double max_intensity = 1.0;  // 255 for raw IDX data
};

/// Parses a pair of big-endian IDX files (0x00000803 images, 0x00000801
/// labels). Pixels are returned in [0, 255].
DigitSource load_idx(const std::string& images_path, const std::string& labels_path);
DigitSource parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);

/// Ten deterministic seven-segment style binary glyphs of size x size.
std::array<Image, 10> procedural_glyphs(std::size_t size);

/// The 10 procedural glyphs as a labelled source, intensities in [0, 1].
DigitSource procedural_source(std::size_t glyph_size = 28);

/// Geometry of one rendered digit. Positive rotation is clockwise on screen.
struct TransformParams {
  double scale = 1.0;
  double rotation_deg = 0.0;
  double center_x = 0.0;  // column, canvas pixels
  double center_y = 0.0;  // row, canvas pixels
};

/// Side of the rendered glyph box relative to the canvas at scale 1.
inline constexpr double kGlyphBoxFraction = 0.5;
inline constexpr double kInkThreshold = 0.1;
inline constexpr double kMinScale = 0.4;
inline constexpr double kMaxScale = 1.0;

/// Tight box (pixel-edge coordinates) around the rendered pixels above
/// kInkThreshold, as if the canvas were unbounded.
BoundingBox ink_bounds(const Image& glyph, const TransformParams& t, std::size_t canvas_size);

/// Samples scale, rotation and center for a full MNIST-A attribute vector
/// (class, scale, orientation, location). Scale is resampled until it is in
/// [0.4, 1]; the center alone is resampled until the glyph fits the canvas.
TransformParams attrs_to_transform(std::span<const int> attrs, const Image& glyph, Rng& rng,
                                   std::size_t image_size);

/// Rotates, scales and translates the glyph onto a black canvas with
/// supersampled bilinear interpolation. Output intensities are in [0, 1].
Image render(const Image& glyph, const TransformParams& t, std::size_t canvas_size);

/// Per-pixel Bernoulli draw with p = intensity.
std::vector<std::uint8_t> binarize(const Image& img, Rng& rng);

/// Tight box around pixels above the threshold (pixel-edge coordinates);
/// all zeros for an empty image.
BoundingBox pixel_bounds(const Image& img, double threshold = kInkThreshold);

}  // namespace imagine
