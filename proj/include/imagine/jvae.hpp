#pragma once

// Joint image/attribute VAE: decoders p(x|z), p(y_k|z); inference networks
// q(z|x,y), q(z|x) and per-attribute experts q(z|y_k) combined with the
// prior by a product of experts.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "imagine/gaussian.hpp"
#include "imagine/graph.hpp"
#include "imagine/nn.hpp"
#include "imagine/random.hpp"
#include "imagine/schema.hpp"

namespace imagine {

struct ModelConfig {
  std::size_t latent_dim = 10;
  std::size_t image_height = 16;
  std::size_t image_width = 16;
  AttributeSchema schema = AttributeSchema::mnist_a();

  std::vector<std::size_t> image_decoder_hidden{128};
  std::vector<std::size_t> image_encoder_hidden{128};
  std::vector<std::size_t> joint_encoder_hidden{128};
  std::vector<std::size_t> attr_decoder_hidden{64};
  std::size_t expert_embedding = 32;
  std::vector<std::size_t> expert_hidden{64};

  /// l2 penalty on the attribute decoders.
  double attr_weight_decay = 1e-4;
  /// false: q(z|y) is a single MLP over the concatenated one-hots and only
  /// accepts fully specified attribute vectors.
  bool product_of_experts = true;
  std::uint64_t seed = 0;

  std::size_t pixels() const { return image_height * image_width; }
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

enum class ImagineMode { mean_image, sampled_image };

class JvaeModel {
 public:
  /// init_model: builds every network and initializes its weights from rng.
  JvaeModel(ModelConfig config, Rng& rng);

  const ModelConfig& config() const { return config_; }
  const AttributeSchema& schema() const { return config_.schema; }
  std::size_t latent_dim() const { return config_.latent_dim; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Parameter-name prefixes, for selecting decoder gradients in tests.
  static constexpr const char* kImageDecoder = "dec_x";
  static constexpr const char* kAttrDecoderPrefix = "dec_y";
  bool is_decoder_param(const std::string& name) const;

  // ---- graph builders; x is [B x H*W] with values in {0,1}

  GaussianVars encode_joint(Graph& g, Var x, const LabelBatch& y) const;
  GaussianVars encode_image(Graph& g, Var x) const;
  /// PoE of the observed experts and the prior; with the product of experts
  /// disabled, the unrestricted q(z|y) network (full vectors only).
  GaussianVars encode_attrs(Graph& g, const LabelBatch& y) const;

  Var image_logits(Graph& g, Var z, bool frozen = false) const;
  std::vector<Var> attr_logits(Graph& g, Var z, bool frozen = false) const;
  /// Per-row log p(x|z), [B x 1].
  Var image_loglik(Graph& g, Var z, Var x, bool frozen = false) const;
  /// Per-row sum over observed attributes of log p(y_k|z), [B x 1].
  Var attrs_loglik(Graph& g, Var z, const LabelBatch& y, bool frozen = false) const;

  // ---- value-level inference

  std::vector<DiagGaussian> encode_joint(const Tensor& x, const LabelBatch& y) const;
  std::vector<DiagGaussian> encode_image(const Tensor& x) const;
  DiagGaussian encode_attrs(const PartialAttributeVector& y) const;
  std::vector<DiagGaussian> encode_attrs(std::span<const PartialAttributeVector> ys) const;
  /// The expert q(z|y_k = v) on its own.
  DiagGaussian expert(std::size_t attribute, int value) const;

  /// Sigmoid pixel means, [n x H*W].
  Tensor decode_image(const Tensor& z) const;
  /// Per-attribute softmax distributions, each [n x cardinality].
  std::vector<Tensor> decode_attrs(const Tensor& z) const;
  /// Per-row log p(x|z), [n x 1].
  Tensor log_lik_image(const Tensor& z, const Tensor& x) const;
  double log_lik_attrs(std::span<const double> z, const PartialAttributeVector& y) const;

  /// n images for the concept y_O: z ~ q(z|y_O), then the Bernoulli means
  /// or a Bernoulli draw per pixel. [n x H*W].
  Tensor imagine(const PartialAttributeVector& y, std::size_t n, Rng& rng,
                 ImagineMode mode = ImagineMode::sampled_image) const;

  void save(const std::filesystem::path& path) const;
  static JvaeModel load(const std::filesystem::path& path);

 private:
  GaussianVars split_gaussian(Graph& g, Var h) const;
  Var one_hot(Graph& g, const LabelBatch& y, std::size_t attribute) const;
  Var all_one_hots(Graph& g, const LabelBatch& y) const;

  ModelConfig config_;
  ParamStore params_;
  Mlp image_decoder_;
  std::vector<Mlp> attr_decoders_;
  Mlp image_encoder_;
  Mlp joint_encoder_;
  std::vector<Mlp> experts_;
  Mlp attrs_encoder_;  // only without the product of experts
};

inline constexpr const char* kModelFormat = "imagine-jvae";
inline constexpr int kModelFormatVersion = 1;

double sigmoid(double v);

}  // namespace imagine
