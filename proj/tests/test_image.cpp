#include <gtest/gtest.h>

#include <cmath>

#include "imagine/dataset.hpp"
#include "imagine/image.hpp"

using namespace imagine;

namespace {

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

std::vector<std::uint8_t> idx_images(std::uint32_t n, std::uint32_t r, std::uint32_t c) {
  std::vector<std::uint8_t> b;
  put_be32(b, 0x803);
  put_be32(b, n);
  put_be32(b, r);
  put_be32(b, c);
  for (std::uint32_t i = 0; i < n * r * c; ++i) b.push_back(static_cast<std::uint8_t>(i * 37 % 256));
  return b;
}

std::vector<std::uint8_t> idx_labels(std::vector<std::uint8_t> labels) {
  std::vector<std::uint8_t> b;
  put_be32(b, 0x801);
  put_be32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

const DigitSource& source() {
  static const DigitSource s = procedural_source(28);
  return s;
}

}  // namespace

TEST(Idx, ParsesHandBuiltFiles) {
  const auto src = parse_idx(idx_images(3, 2, 4), idx_labels({0, 9, 4}));
  ASSERT_EQ(src.images.size(), 3u);
  EXPECT_EQ(src.images[1].height, 2u);
  EXPECT_EQ(src.images[1].width, 4u);
  EXPECT_EQ(src.images[1].at(0, 1), static_cast<double>((8 + 1) * 37 % 256));
  EXPECT_EQ(src.labels, (std::vector<int>{0, 9, 4}));
  EXPECT_EQ(src.max_intensity, 255.0);
}

TEST(Idx, RejectsMalformedInput) {
  EXPECT_THROW(parse_idx(idx_images(3, 2, 4), idx_labels({0, 10, 4})), FormatError);
  EXPECT_THROW(parse_idx(idx_images(3, 2, 4), idx_labels({0, 1})), FormatError);
  auto bad_magic = idx_images(1, 2, 2);
  bad_magic[3] = 0x01;
  EXPECT_THROW(parse_idx(bad_magic, idx_labels({1})), FormatError);
  auto truncated = idx_images(2, 3, 3);
  truncated.resize(truncated.size() - 4);
  try {
    parse_idx(truncated, idx_labels({1, 2}));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
}

TEST(Glyphs, DistinctDeterministicBinary) {
  const auto a = procedural_glyphs(16), b = procedural_glyphs(16);
  for (int d = 0; d < 10; ++d) {
    EXPECT_EQ(a[d].pixels, b[d].pixels);
    EXPECT_EQ(a[d].height, 16u);
    for (double p : a[d].pixels) EXPECT_TRUE(p == 0.0 || p == 1.0);
    for (int e = 0; e < d; ++e) EXPECT_NE(a[d].pixels, a[e].pixels) << d << " vs " << e;
  }
  EXPECT_THROW(procedural_glyphs(7), std::invalid_argument);
}

TEST(Glyphs, StructuralShapes) {
  const auto g = procedural_glyphs(16);
  // "1": ink confined to a few central columns.
  std::size_t ink_columns = 0;
  for (std::size_t c = 0; c < 16; ++c) {
    bool any = false;
    for (std::size_t r = 0; r < 16; ++r) any = any || g[1].at(r, c) > 0;
    ink_columns += any;
  }
  EXPECT_LE(ink_columns, 4u);
  // "8": two enclosed holes along the centre column, "0" one.
  auto holes = [&](const Image& im) {
    int runs = 0;
    bool seen_ink = false, in_gap = false;
    for (std::size_t r = 0; r < 16; ++r) {
      const bool ink = im.at(r, 8) > 0;
      if (ink && in_gap) ++runs;
      in_gap = !ink && seen_ink;
      seen_ink = seen_ink || ink;
    }
    return runs;
  };
  EXPECT_EQ(holes(g[8]), 2);
  EXPECT_EQ(holes(g[0]), 1);
  EXPECT_EQ(holes(g[1]), 0);
}

TEST(Transform, ScaleRangeAndMeanOverManyDraws) {
  Rng rng(21);
  const Image& glyph = source().images[8];
  double sum = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const std::vector<int> attrs{8, 0, 1, static_cast<int>(i % 4)};
    const auto t = attrs_to_transform(attrs, glyph, rng, 16);
    ASSERT_GE(t.scale, kMinScale);
    ASSERT_LE(t.scale, kMaxScale);
    sum += t.scale;
  }
  // Truncated at 1.0 (a 1-sigma cut): the mean moves down by
  // sigma * phi(1) / Phi(1) minus a negligible lower-tail term.
  const double shift = 0.1 * 0.24197 / 0.84134;
  EXPECT_NEAR(sum / n, 0.9 - shift, 3 * 0.1 / std::sqrt(n));
}

TEST(Transform, OrientationAndLocation) {
  Rng rng(22);
  const Image& glyph = source().images[1];
  double rot_sum = 0, cx = 0, cy = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const auto up = attrs_to_transform(std::vector<int>{1, 1, 1, 0}, glyph, rng, 64);
    EXPECT_EQ(up.rotation_deg, 0.0);
    const auto cw = attrs_to_transform(std::vector<int>{1, 1, 0, 3}, glyph, rng, 64);
    rot_sum += cw.rotation_deg;
    cx += up.center_x;
    cy += up.center_y;
  }
  EXPECT_NEAR(rot_sum / n, 45.0, 3 * 10 / std::sqrt(n));
  // A narrow "1" almost never touches the left edge: column mean ~ 12.
  EXPECT_NEAR(cx / n, 12.0, 3 * 4 / std::sqrt(n));

  // Its height does clip the top, so the row mean is the mean of
  // N(12, 4^2) conditioned on the glyph fitting. Reference: independent
  // draws of scale and center, kept when the ink box is on the canvas.
  Rng ref_rng(99);
  std::normal_distribution<double> n01;
  double ref = 0;
  int kept = 0;
  while (kept < 20000) {
    TransformParams t;
    do t.scale = 0.6 + 0.1 * n01(ref_rng);
    while (t.scale < kMinScale || t.scale > kMaxScale);
    t.center_x = 12 + 4 * n01(ref_rng);
    t.center_y = 12 + 4 * n01(ref_rng);
    const BoundingBox b = ink_bounds(glyph, t, 64);
    if (b.x0 < 0 || b.y0 < 0 || b.x1 > 64 || b.y1 > 64) continue;
    ref += t.center_y;
    ++kept;
  }
  ref /= kept;
  EXPECT_GT(ref, 12.5);
  EXPECT_NEAR(cy / n, ref, 3 * 4 / std::sqrt(n));
}

TEST(Transform, EveryDrawKeepsInkInsideCanvas) {
  Rng rng(23);
  for (int i = 0; i < 2000; ++i) {
    const std::vector<int> attrs{static_cast<int>(i % 10), static_cast<int>(i % 2), static_cast<int>(i % 3),
                                 static_cast<int>(i % 4)};
    const Image& glyph = source().images[attrs[0]];
    const auto t = attrs_to_transform(attrs, glyph, rng, 16);
    const BoundingBox b = ink_bounds(glyph, t, 16);
    ASSERT_GE(b.x0, 0);
    ASSERT_GE(b.y0, 0);
    ASSERT_LE(b.x1, 16);
    ASSERT_LE(b.y1, 16);
    // The tight box is exactly the box of the rendered pixels.
    const BoundingBox p = pixel_bounds(render(glyph, t, 16));
    ASSERT_EQ(p.x0, b.x0);
    ASSERT_EQ(p.y1, b.y1);
  }
}

TEST(Transform, RejectsBadAttributes) {
  Rng rng(24);
  EXPECT_THROW(attrs_to_transform(std::vector<int>{1, 2, 0, 0}, source().images[1], rng, 16), std::invalid_argument);
  EXPECT_THROW(attrs_to_transform(std::vector<int>{1, 0, 0}, source().images[1], rng, 16), std::invalid_argument);
}

TEST(Render, CentredUprightPreservesMass) {
  const Image& glyph = source().images[0];
  // Box fraction 0.5 at scale 2 maps 28 source pixels onto 28 canvas pixels.
  const TransformParams t{2.0, 0.0, 14.0, 14.0};
  const Image out = render(glyph, t, 28);
  EXPECT_NEAR(out.sum(), glyph.sum(), 0.05 * glyph.sum());
  for (double p : out.pixels) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(Render, RotationIsClockwiseOnScreen) {
  // A horizontal bar in the top half of the glyph rotated +90 degrees ends up
  // in the right half of the canvas.
  Image bar(8, 8);
  for (std::size_t c = 1; c < 7; ++c) bar.at(1, c) = 1.0;
  const Image out = render(bar, TransformParams{1.0, 90.0, 16.0, 16.0}, 32);
  const BoundingBox b = pixel_bounds(out);
  EXPECT_GT(b.x0, 16.0);
  EXPECT_LT(b.y0, 16.0);
  EXPECT_GT(b.y1, 16.0);
}

TEST(Render, OutsideCanvasThrows) {
  EXPECT_THROW(render(source().images[8], TransformParams{1.0, 0.0, 1.0, 1.0}, 16), TransformError);
}

TEST(Binarize, BernoulliRates) {
  Rng rng(26);
  Image img(100, 100, 0.3);
  const auto bits = binarize(img, rng);
  double ones = 0;
  for (auto b : bits) ones += b;
  EXPECT_NEAR(ones / 10000.0, 0.3, 4 * std::sqrt(0.21 / 10000.0));
  Image bad(1, 1, 1.5);
  EXPECT_THROW(binarize(bad, rng), std::invalid_argument);
}

TEST(Render, FullTurnMatchesUpright) {
  const Image& glyph = source().images[4];
  const Image a = render(glyph, TransformParams{0.8, 0.0, 16.0, 16.0}, 32);
  const Image b = render(glyph, TransformParams{0.8, 360.0, 16.0, 16.0}, 32);
  double diff = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) diff += std::abs(a.pixels[i] - b.pixels[i]);
  EXPECT_LT(diff / static_cast<double>(a.pixels.size()), 0.05);
}

TEST(Render, HalfScaleQuartersTheBox) {
  const Image& glyph = source().images[8];
  const BoundingBox full = pixel_bounds(render(glyph, TransformParams{1.0, 0.0, 32.0, 32.0}, 64));
  const BoundingBox half = pixel_bounds(render(glyph, TransformParams{0.5, 0.0, 32.0, 32.0}, 64));
  EXPECT_NEAR(half.area() / full.area(), 0.25, 0.25 * 0.2);
}

TEST(Binarize, DegenerateImages) {
  Rng rng(27);
  for (auto b : binarize(Image(5, 5, 0.0), rng)) EXPECT_EQ(b, 0);
  for (auto b : binarize(Image(5, 5, 1.0), rng)) EXPECT_EQ(b, 1);
}
