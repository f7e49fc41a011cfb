#include "imagine/jvae.hpp"

#include <algorithm>
#include <cmath>

#include "imagine/checkpoint.hpp"

namespace imagine {

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

// ------------------------------------------------------------------ config

namespace {

std::vector<std::size_t> layer_sizes(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

void require_positive(const std::vector<std::size_t>& sizes, const char* what) {
  for (std::size_t s : sizes) {
    if (s == 0) throw InvalidArchitecture(std::string(what) + ": hidden sizes must be positive");
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (latent_dim == 0) throw InvalidArchitecture("latent_dim must be positive");
  if (image_height == 0 || image_width == 0) throw InvalidArchitecture("image size must be positive");
  if (schema.size() == 0) throw InvalidArchitecture("schema has no attributes");
  if (schema.size() > 31) throw InvalidArchitecture("at most 31 attributes are supported");
  if (expert_embedding == 0) throw InvalidArchitecture("expert_embedding must be positive");
  require_positive(image_decoder_hidden, "image_decoder_hidden");
  require_positive(image_encoder_hidden, "image_encoder_hidden");
  require_positive(joint_encoder_hidden, "joint_encoder_hidden");
  require_positive(attr_decoder_hidden, "attr_decoder_hidden");
  require_positive(expert_hidden, "expert_hidden");
  if (!(attr_weight_decay >= 0.0)) throw InvalidArchitecture("attr_weight_decay must be >= 0");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"latent_dim", latent_dim},
          {"image_height", image_height},
          {"image_width", image_width},
          {"schema", schema_to_json(schema)},
          {"image_decoder_hidden", image_decoder_hidden},
          {"image_encoder_hidden", image_encoder_hidden},
          {"joint_encoder_hidden", joint_encoder_hidden},
          {"attr_decoder_hidden", attr_decoder_hidden},
          {"expert_embedding", expert_embedding},
          {"expert_hidden", expert_hidden},
          {"attr_weight_decay", attr_weight_decay},
          {"product_of_experts", product_of_experts},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.image_height = j.at("image_height").get<std::size_t>();
  c.image_width = j.at("image_width").get<std::size_t>();
  c.schema = schema_from_json(j.at("schema"));
  c.image_decoder_hidden = j.at("image_decoder_hidden").get<std::vector<std::size_t>>();
  c.image_encoder_hidden = j.at("image_encoder_hidden").get<std::vector<std::size_t>>();
  c.joint_encoder_hidden = j.at("joint_encoder_hidden").get<std::vector<std::size_t>>();
  c.attr_decoder_hidden = j.at("attr_decoder_hidden").get<std::vector<std::size_t>>();
  c.expert_embedding = j.at("expert_embedding").get<std::size_t>();
  c.expert_hidden = j.at("expert_hidden").get<std::vector<std::size_t>>();
  c.attr_weight_decay = j.at("attr_weight_decay").get<double>();
  c.product_of_experts = j.at("product_of_experts").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

// ------------------------------------------------------------------ model

JvaeModel::JvaeModel(ModelConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  const std::size_t d = config_.latent_dim;
  const std::size_t px = config_.pixels();
  const auto& schema = config_.schema;

  image_decoder_ = build_mlp(params_, kImageDecoder, layer_sizes(d, config_.image_decoder_hidden, px), Activation::elu, rng);
  for (std::size_t k = 0; k < schema.size(); ++k) {
    attr_decoders_.push_back(build_mlp(params_, kAttrDecoderPrefix + std::to_string(k),
                                       layer_sizes(d, config_.attr_decoder_hidden, schema[k].cardinality()),
                                       Activation::elu, rng, config_.attr_weight_decay));
  }
  image_encoder_ = build_mlp(params_, "enc_x", layer_sizes(px, config_.image_encoder_hidden, 2 * d), Activation::elu, rng);
  joint_encoder_ = build_mlp(params_, "enc_xy", layer_sizes(px + schema.total_cardinality(), config_.joint_encoder_hidden, 2 * d),
                             Activation::elu, rng);

  std::vector<std::size_t> expert_hidden{config_.expert_embedding};
  expert_hidden.insert(expert_hidden.end(), config_.expert_hidden.begin(), config_.expert_hidden.end());
  if (config_.product_of_experts) {
    for (std::size_t k = 0; k < schema.size(); ++k) {
      experts_.push_back(build_mlp(params_, "expert" + std::to_string(k),
                                   layer_sizes(schema[k].cardinality(), expert_hidden, 2 * d), Activation::elu, rng));
    }
  } else {
    attrs_encoder_ = build_mlp(params_, "enc_y", layer_sizes(schema.total_cardinality(), expert_hidden, 2 * d),
                               Activation::elu, rng);
  }
}

bool JvaeModel::is_decoder_param(const std::string& name) const {
  return name.starts_with(std::string(kImageDecoder) + "/") || name.starts_with(kAttrDecoderPrefix);
}

GaussianVars JvaeModel::split_gaussian(Graph& g, Var h) const {
  const std::size_t d = config_.latent_dim;
  return {g.slice_cols(h, 0, d), g.clamp(g.slice_cols(h, d, 2 * d), kLogVarMin, kLogVarMax)};
}

Var JvaeModel::one_hot(Graph& g, const LabelBatch& y, std::size_t attribute) const {
  const std::size_t card = config_.schema[attribute].cardinality();
  Tensor t = Tensor::matrix(y.rows, card);
  for (std::size_t r = 0; r < y.rows; ++r) {
    const int v = y.at(r, attribute);
    if (v == PartialAttributeVector::kMissing) continue;
    if (v < 0 || static_cast<std::size_t>(v) >= card) throw QueryError("attribute value out of range");
    t.at(r, static_cast<std::size_t>(v)) = 1.0;
  }
  return g.input(std::move(t));
}

Var JvaeModel::all_one_hots(Graph& g, const LabelBatch& y) const {
  std::vector<Var> parts;
  for (std::size_t k = 0; k < config_.schema.size(); ++k) parts.push_back(one_hot(g, y, k));
  return g.concat_cols(parts);
}

GaussianVars JvaeModel::encode_joint(Graph& g, Var x, const LabelBatch& y) const {
  if (y.attrs != config_.schema.size()) throw DimensionError("encode_joint: label batch has wrong attribute count");
  if (!y.fully_observed()) throw QueryError("the joint encoder requires fully specified attribute vectors");
  const Var parts[] = {x, all_one_hots(g, y)};
  return split_gaussian(g, mlp_forward(g, joint_encoder_, g.concat_cols(parts)));
}

GaussianVars JvaeModel::encode_image(Graph& g, Var x) const {
  return split_gaussian(g, mlp_forward(g, image_encoder_, x));
}

GaussianVars JvaeModel::encode_attrs(Graph& g, const LabelBatch& y) const {
  if (y.attrs != config_.schema.size()) throw DimensionError("encode_attrs: label batch has wrong attribute count");
  if (!config_.product_of_experts) {
    if (!y.fully_observed()) throw QueryError("abstract queries need the product-of-experts q(z|y)");
    return split_gaussian(g, mlp_forward(g, attrs_encoder_, all_one_hots(g, y)));
  }
  const std::size_t d = config_.latent_dim;
  std::vector<GaussianVars> experts;
  std::vector<Var> masks;
  for (std::size_t k = 0; k < config_.schema.size(); ++k) {
    experts.push_back(split_gaussian(g, mlp_forward(g, experts_[k], one_hot(g, y, k))));
    Tensor m = Tensor::matrix(y.rows, d);
    for (std::size_t r = 0; r < y.rows; ++r) {
      if (y.at(r, k) != PartialAttributeVector::kMissing) std::fill(m.row(r).begin(), m.row(r).end(), 1.0);
    }
    masks.push_back(g.input(std::move(m)));
  }
  return poe_product(g, experts, masks);
}

Var JvaeModel::image_logits(Graph& g, Var z, bool frozen) const {
  return mlp_forward(g, image_decoder_, z, frozen);
}

std::vector<Var> JvaeModel::attr_logits(Graph& g, Var z, bool frozen) const {
  std::vector<Var> out;
  for (const auto& dec : attr_decoders_) out.push_back(mlp_forward(g, dec, z, frozen));
  return out;
}

Var JvaeModel::image_loglik(Graph& g, Var z, Var x, bool frozen) const {
  return g.bernoulli_loglik(image_logits(g, z, frozen), x);
}

Var JvaeModel::attrs_loglik(Graph& g, Var z, const LabelBatch& y, bool frozen) const {
  if (y.attrs != config_.schema.size()) throw DimensionError("attrs_loglik: label batch has wrong attribute count");
  const auto logits = attr_logits(g, z, frozen);
  Var total;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const auto labels = y.column(k);
    Var term = g.categorical_loglik(logits[k], labels);
    total = total.valid() ? g.add(total, term) : term;
  }
  return total;
}

// ------------------------------------------------------------------ value level

namespace {

std::vector<DiagGaussian> to_gaussians(const Graph& g, GaussianVars q) {
  const Tensor& m = g.value(q.mean);
  const Tensor& lv = g.value(q.log_var);
  std::vector<DiagGaussian> out;
  out.reserve(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out.push_back({{m.row(r).begin(), m.row(r).end()}, {lv.row(r).begin(), lv.row(r).end()}});
  }
  return out;
}

}  // namespace

std::vector<DiagGaussian> JvaeModel::encode_joint(const Tensor& x, const LabelBatch& y) const {
  Graph g(&params_);
  return to_gaussians(g, encode_joint(g, g.input(x), y));
}

std::vector<DiagGaussian> JvaeModel::encode_image(const Tensor& x) const {
  Graph g(&params_);
  return to_gaussians(g, encode_image(g, g.input(x)));
}

DiagGaussian JvaeModel::expert(std::size_t attribute, int value) const {
  if (!config_.product_of_experts) throw std::logic_error("model has no per-attribute experts");
  if (attribute >= config_.schema.size()) throw std::out_of_range("expert: attribute index out of range");
  LabelBatch y{1, config_.schema.size(), std::vector<int>(config_.schema.size(), PartialAttributeVector::kMissing)};
  y.values[attribute] = value;
  Graph g(&params_);
  return to_gaussians(g, split_gaussian(g, mlp_forward(g, experts_[attribute], one_hot(g, y, attribute))))[0];
}

std::vector<DiagGaussian> JvaeModel::encode_attrs(std::span<const PartialAttributeVector> ys) const {
  for (const auto& y : ys) y.validate(config_.schema);
  if (!config_.product_of_experts) {
    if (ys.empty()) return {};
    Graph g(&params_);
    return to_gaussians(g, encode_attrs(g, LabelBatch::from(ys)));
  }
  // Every expert output is a lookup on (attribute, value); tabulate once.
  std::vector<std::vector<DiagGaussian>> table(config_.schema.size());
  for (std::size_t k = 0; k < config_.schema.size(); ++k) {
    for (std::size_t v = 0; v < config_.schema[k].cardinality(); ++v) table[k].push_back(expert(k, static_cast<int>(v)));
  }
  std::vector<DiagGaussian> out;
  out.reserve(ys.size());
  std::vector<DiagGaussian> observed;
  for (const auto& y : ys) {
    observed.clear();
    for (std::size_t k = 0; k < y.size(); ++k) {
      if (y.observed(k)) observed.push_back(table[k][static_cast<std::size_t>(*y.value(k))]);
    }
    out.push_back(poe_product(observed, config_.latent_dim, true));
  }
  return out;
}

DiagGaussian JvaeModel::encode_attrs(const PartialAttributeVector& y) const {
  return encode_attrs(std::span<const PartialAttributeVector>(&y, 1))[0];
}

Tensor JvaeModel::decode_image(const Tensor& z) const {
  Graph g(&params_);
  Tensor p = g.value(image_logits(g, g.input(z), true));
  for (double& v : p.values()) v = sigmoid(v);
  return p;
}

std::vector<Tensor> JvaeModel::decode_attrs(const Tensor& z) const {
  Graph g(&params_);
  std::vector<Tensor> out;
  for (Var l : attr_logits(g, g.input(z), true)) {
    Tensor p = g.value(l);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      auto row = p.row(r);
      const double mx = *std::max_element(row.begin(), row.end());
      double s = 0.0;
      for (double& v : row) s += (v = std::exp(v - mx));
      for (double& v : row) v /= s;
    }
    out.push_back(std::move(p));
  }
  return out;
}

Tensor JvaeModel::log_lik_image(const Tensor& z, const Tensor& x) const {
  Graph g(&params_);
  return g.value(image_loglik(g, g.input(z), g.input(x), true));
}

double JvaeModel::log_lik_attrs(std::span<const double> z, const PartialAttributeVector& y) const {
  y.validate(config_.schema);
  if (z.size() != config_.latent_dim) throw DimensionError("log_lik_attrs: z has wrong dimension");
  Graph g(&params_);
  Tensor zt({1, z.size()}, std::vector<double>(z.begin(), z.end()));
  return g.value(attrs_loglik(g, g.input(std::move(zt)), LabelBatch::from(std::span(&y, 1)), true))[0];
}

Tensor JvaeModel::imagine(const PartialAttributeVector& y, std::size_t n, Rng& rng, ImagineMode mode) const {
  if (n == 0) throw std::invalid_argument("imagine: n must be positive");
  const DiagGaussian q = encode_attrs(y);
  Tensor z = Tensor::matrix(n, config_.latent_dim);
  for (std::size_t s = 0; s < n; ++s) {
    const auto draw = q.sample(rng);
    std::copy(draw.begin(), draw.end(), z.row(s).begin());
  }
  Tensor p = decode_image(z);
  if (mode == ImagineMode::sampled_image) {
    for (double& v : p.values()) v = uniform01(rng) < v ? 1.0 : 0.0;
  }
  return p;
}

void JvaeModel::save(const std::filesystem::path& path) const {
  const nlohmann::json manifest = {{"format", kModelFormat}, {"version", kModelFormatVersion}, {"config", config_.to_json()}};
  save_checkpoint(path, to_checkpoint(params_, manifest.dump()));
}

JvaeModel JvaeModel::load(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(ckpt.manifest);
  } catch (const nlohmann::json::exception&) {
    throw FormatError(path.string() + ": checkpoint has no readable model manifest");
  }
  if (manifest.value("format", "") != kModelFormat) {
    throw FormatError(path.string() + ": not a joint VAE checkpoint (format '" + manifest.value("format", "") + "')");
  }
  const int version = manifest.value("version", -1);
  if (version != kModelFormatVersion) {
    throw FormatError(path.string() + ": model checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kModelFormatVersion) + ")");
  }
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_json(manifest.at("config"));
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(path.string() + ": bad model config: " + ex.what());
  }
  Rng rng(cfg.seed);
  JvaeModel m(std::move(cfg), rng);
  restore_params(m.params_, ckpt);
  return m;
}

}  // namespace imagine
