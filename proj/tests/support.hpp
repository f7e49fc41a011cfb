#pragma once

// Small fixtures shared by the unit tests.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "imagine/dataset.hpp"
#include "imagine/jvae.hpp"
#include "imagine/objectives.hpp"

namespace imagine::fixture {

inline ModelConfig tiny_config(std::size_t latent = 2, std::vector<std::size_t> cards = {2, 3}) {
  ModelConfig c;
  c.latent_dim = latent;
  c.image_height = 3;
  c.image_width = 3;
  c.schema = AttributeSchema::generic(cards);
  c.image_decoder_hidden = {4};
  c.image_encoder_hidden = {4};
  c.joint_encoder_hidden = {4};
  c.attr_decoder_hidden = {3};
  c.expert_embedding = 3;
  c.expert_hidden = {3};
  return c;
}

inline JvaeModel tiny_model(std::uint64_t seed = 1, std::size_t latent = 2) {
  Rng rng(seed);
  return JvaeModel(tiny_config(latent), rng);
}

/// Random binary images with random full labels.
inline Dataset tiny_dataset(const ModelConfig& c, std::size_t n, std::uint64_t seed) {
  Dataset d;
  d.schema = c.schema;
  d.height = c.image_height;
  d.width = c.image_width;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    LabeledExample e;
    for (std::size_t p = 0; p < c.pixels(); ++p) e.pixels.push_back(static_cast<std::uint8_t>(rng() % 2));
    for (std::size_t k = 0; k < c.schema.size(); ++k) e.attrs.push_back(static_cast<int>(rng() % c.schema[k].cardinality()));
    d.examples.push_back(std::move(e));
  }
  return d;
}

inline Batch tiny_batch(const ModelConfig& c, std::size_t n, std::uint64_t seed) {
  const Dataset d = tiny_dataset(c, n, seed);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return make_batch(d, idx);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("imagine_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace imagine::fixture
