#include <gtest/gtest.h>

#include <sstream>

#include "imagine/checkpoint.hpp"
#include "imagine/random.hpp"

using namespace imagine;

namespace {

Checkpoint sample_checkpoint() {
  Rng rng(1);
  ParamStore p;
  p.add("enc/W0", standard_normal(rng, 3, 4));
  p.add("enc/b0", standard_normal(rng, 1, 4));
  return to_checkpoint(p, "{\"format\": \"x\"}");
}

std::string bytes_of(const Checkpoint& c) {
  std::ostringstream os;
  write_checkpoint(os, c);
  return os.str();
}

}  // namespace

TEST(Checkpoint, RoundTripKeepsNamesShapesAndFloatValues) {
  const Checkpoint c = sample_checkpoint();
  std::istringstream is(bytes_of(c));
  const Checkpoint r = read_checkpoint(is);
  EXPECT_EQ(r.manifest, c.manifest);
  ASSERT_EQ(r.tensors.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(r.tensors[i].name, c.tensors[i].name);
    ASSERT_TRUE(r.tensors[i].value.same_shape(c.tensors[i].value));
    for (std::size_t j = 0; j < c.tensors[i].value.size(); ++j) {
      EXPECT_EQ(r.tensors[i].value[j], static_cast<double>(static_cast<float>(c.tensors[i].value[j])));
    }
  }
}

TEST(Checkpoint, HeaderLayout) {
  const std::string b = bytes_of(sample_checkpoint());
  EXPECT_EQ(b.substr(0, 4), "JVC1");
  // Two parameters plus the manifest tensor, little-endian u32.
  EXPECT_EQ(static_cast<unsigned char>(b[4]), 3);
  EXPECT_EQ(b[5], 0);
}

TEST(Checkpoint, WritingIsDeterministic) { EXPECT_EQ(bytes_of(sample_checkpoint()), bytes_of(sample_checkpoint())); }

TEST(Checkpoint, RejectsBadMagicAndTruncation) {
  std::string b = bytes_of(sample_checkpoint());
  std::string bad = b;
  bad[0] = 'X';
  std::istringstream is1(bad);
  EXPECT_THROW(read_checkpoint(is1), FormatError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{9}, b.size() / 2, b.size() - 1}) {
    std::istringstream is(b.substr(0, cut));
    EXPECT_THROW(read_checkpoint(is), FormatError) << "cut at " << cut;
  }
}

TEST(Checkpoint, RestoreRequiresMatchingShapes) {
  Rng rng(2);
  ParamStore p;
  p.add("enc/W0", standard_normal(rng, 3, 4));
  p.add("enc/b0", standard_normal(rng, 1, 4));
  const Checkpoint c = to_checkpoint(p);
  ParamStore q;
  q.add("enc/W0", Tensor::matrix(3, 4));
  q.add("enc/b0", Tensor::matrix(1, 4));
  restore_params(q, c);
  // In memory nothing is rounded; only the file format is single precision.
  EXPECT_EQ(q.value("enc/W0")[5], p.value("enc/W0")[5]);

  ParamStore wrong;
  wrong.add("enc/W0", Tensor::matrix(4, 3));
  wrong.add("enc/b0", Tensor::matrix(1, 4));
  EXPECT_THROW(restore_params(wrong, c), FormatError);
  ParamStore missing;
  missing.add("dec/W0", Tensor::matrix(1, 1));
  EXPECT_THROW(restore_params(missing, c), FormatError);
}
