#include "imagine/cli.hpp"

#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "imagine/eval.hpp"
#include "imagine/gradcheck.hpp"
#include "imagine/naming.hpp"
#include "imagine/objectives.hpp"

namespace imagine::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return json::parse(is);
}

fs::path require_dir(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  fs::create_directories(out);
  return out;
}

// The fully resolved command line (defaults included), in the same format
// --config accepts.
void record_config(const CLI::App& app, const fs::path& path) {
  std::string command;
  for (const auto* sub : app.get_subcommands()) command = sub->get_name() + ".";
  std::istringstream all(app.config_to_str(true, false));
  std::string line, kept;
  while (std::getline(all, line)) {
    if (line.rfind(command, 0) == 0) kept += line + "\n";
  }
  write_text(path, kept);
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

fs::path beside(const fs::path& file, const std::string& suffix) {
  return file.parent_path() / (file.stem().string() + suffix);
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

void print_split_stats(const Dataset& d) {
  std::cout << "examples " << d.size() << ", concepts " << d.concepts().size() << ", split " << to_string(d.split_kind)
            << "\n";
  if (d.split_kind == SplitKind::none) return;
  for (Split s : {Split::train, Split::val, Split::test}) {
    std::cout << "  " << std::left << std::setw(6) << to_string(s) << std::right << std::setw(7) << d.count(s)
              << " images " << std::setw(4) << d.concepts(s).size() << " concepts\n";
  }
}

// ------------------------------------------------------------------ gen-data

struct GenDataArgs {
  std::string source = "procedural";
  std::string idx_images, idx_labels;
  std::string dataset = "mnist-a";
  std::size_t image_size = 16;
  std::size_t per_concept = 20;
  std::string split = "comp";
  std::uint64_t seed = 0;
  std::string out;
};

void gen_data(const GenDataArgs& a, const CLI::App& app) {
  DigitSource src;
  if (a.source == "procedural") {
    src = procedural_source();
  } else if (a.source == "idx") {
    if (a.idx_images.empty() || a.idx_labels.empty()) throw UsageError("--source idx needs --idx-images and --idx-labels");
    src = load_idx(a.idx_images, a.idx_labels);
  } else {
    throw UsageError("unknown --source '" + a.source + "' (expected procedural or idx)");
  }
  const SplitKind kind = split_kind_from_string(a.split);
  const fs::path dir = require_dir(a.out);

  Dataset d;
  if (a.dataset == "mnist-a") {
    d = generate_mnista(src, MnistAConfig{a.image_size, a.per_concept, a.seed});
  } else if (a.dataset == "mnist-2bit") {
    d = make_mnist2bit(src, a.image_size, a.per_concept, a.seed);
  } else {
    throw UsageError("unknown --dataset '" + a.dataset + "' (expected mnist-a or mnist-2bit)");
  }
  Rng split_rng = stream(a.seed, 1);
  if (kind == SplitKind::iid) make_iid_split(d, split_rng);
  if (kind == SplitKind::comp) make_comp_split(d, split_rng);

  write_dataset(d, dir / "dataset.mna");
  record_config(app, dir / "gen-data.toml");
  print_split_stats(d);
  std::cout << "wrote " << (dir / "dataset.mna").string() << "\n";
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string data, out;
  ObjectiveConfig objective;
  std::string objective_name = "telbo";
  bool no_freeze = false;
  std::size_t latent_dim = 10;
  bool no_poe = false;
  TrainConfig train;
};

int train_cmd(TrainArgs a, const CLI::App& app) {
  const fs::path dir = require_dir(a.out);
  a.objective.kind = objective_from_string(a.objective_name);
  a.objective.freeze_likelihood = !a.no_freeze;
  a.objective.validate();
  const Dataset d = read_dataset(a.data);

  ModelConfig mc;
  mc.latent_dim = a.latent_dim;
  mc.image_height = d.height;
  mc.image_width = d.width;
  mc.schema = d.schema;
  mc.product_of_experts = !a.no_poe;
  mc.seed = a.train.seed;
  Rng init(mc.seed);
  JvaeModel m(mc, init);

  record_config(app, dir / "train.toml");
  write_json(dir / "config.json",
             {{"model", mc.to_json()}, {"objective", a.objective.to_json()}, {"train", {{"steps", a.train.steps},
                                                                                      {"batch", a.train.batch},
                                                                                      {"learning_rate", a.train.learning_rate},
                                                                                      {"seed", a.train.seed},
                                                                                      {"log_every", a.train.log_every}}}});
  std::ofstream log(dir / "train_log.jsonl");
  auto sink = [&](const TrainRecord& r) {
    log << r.to_json().dump() << "\n" << std::flush;
    std::cout << "step " << r.step << "  objective " << r.total << "  (" << std::fixed << std::setprecision(1)
              << r.seconds << " s)\n"
              << std::defaultfloat << std::setprecision(6);
  };
  try {
    const TrainLog result = train(m, d, a.objective, a.train, sink);
    m.save(dir / "model.jvc");
    std::cout << "trained " << result.steps_completed << " steps in " << result.wall_seconds << " s; wrote "
              << (dir / "model.jvc").string() << "\n";
    return kExitOk;
  } catch (const TrainingDiverged& e) {
    // Keep the last good parameters for inspection.
    m.save(dir / "model_last_good.jvc");
    std::cerr << "error: " << e.what() << "\n"
              << "  objective " << to_string(a.objective.kind) << ", learning rate " << a.train.learning_rate
              << ", batch " << a.train.batch << "\n"
              << "  last good parameters (after " << e.step() << " steps) saved to "
              << (dir / "model_last_good.jvc").string() << "\n";
    return kExitNumeric;
  }
}

// ------------------------------------------------------------------ eval

struct EvalArgs {
  std::string model, classifier, data, out;
  std::string scenario = "iid-concrete";
  std::size_t level = 2;
  std::size_t variants = 2;
  std::string query_split = "test";
  EvalConfig eval;
  std::size_t grid = 0;
  bool with_queries = false;
};

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw UsageError("unknown split '" + s + "' (expected train, val or test)");
}

void require_compatible(const JvaeModel& m, const ObservationClassifier& c) {
  if (!(m.schema() == c.schema())) throw UsageError("model and classifier schemas differ");
  if (m.config().image_height != c.height() || m.config().image_width != c.width()) {
    throw UsageError("model and classifier image sizes differ");
  }
}

void eval_cmd(EvalArgs a, const CLI::App& app) {
  const JvaeModel m = JvaeModel::load(a.model);
  const ObservationClassifier c = ObservationClassifier::load(a.classifier);
  require_compatible(m, c);
  const Dataset d = read_dataset(a.data);
  if (!(d.schema == m.schema())) throw UsageError("dataset and model schemas differ");

  const Scenario scenario = scenario_from_string(a.scenario);
  std::vector<PartialAttributeVector> queries;
  std::string tag = a.scenario;
  switch (scenario) {
    case Scenario::iid_concrete: queries = concrete_queries(d, split_from_string(a.query_split)); break;
    case Scenario::comp:
      if (d.split_kind != SplitKind::comp) throw UsageError("--scenario comp needs a dataset with a comp split");
      queries = concrete_queries(d, Split::test);
      break;
    case Scenario::abstract: {
      Rng rng = stream(a.eval.seed, 7);
      queries = make_abstract_queries(d.schema, a.level, a.variants, rng);
      tag = "abstract-" + std::to_string(a.level);
      break;
    }
  }
  if (queries.empty()) throw UsageError("no queries for scenario " + a.scenario);
  a.eval.with_coverage = scenario == Scenario::abstract;
  const EvalReport report = evaluate(m, c, queries, d.marginals(Split::train), tag, a.eval);
  const json j = report.to_json(a.with_queries);
  std::cout << j.dump(2) << "\n";
  if (a.out.empty()) return;

  const fs::path dir = require_dir(a.out);
  write_json(dir / ("report_" + tag + ".json"), j);
  record_config(app, dir / ("eval_" + tag + ".toml"));
  if (a.grid == 0) return;
  // One row of sampled images per query, misclassified ones framed in red.
  const std::size_t n_queries = std::min(a.grid, queries.size()), per = a.eval.samples_per_query;
  Tensor all = Tensor::matrix(n_queries * per, m.config().pixels());
  std::vector<bool> wrong;
  for (std::size_t q = 0; q < n_queries; ++q) {
    Rng rng = stream(a.eval.seed, q);
    const Tensor imgs = m.imagine(queries[q], per, rng);
    const auto preds = c.classify(imgs);
    for (std::size_t s = 0; s < per; ++s) {
      std::copy(imgs.row(s).begin(), imgs.row(s).end(), all.row(q * per + s).begin());
      wrong.push_back(!queries[q].matches(preds[s]));
    }
  }
  write_ppm_marked(dir / ("grid_" + tag + ".ppm"), all, m.config().image_height, m.config().image_width, per, wrong);
}

// ------------------------------------------------------------------ sample / interpolate

struct SampleArgs {
  std::string model, query, out = "sample.pgm";
  std::size_t n = 10;
  std::size_t columns = 10;
  std::uint64_t seed = 0;
};

void sample_cmd(const SampleArgs& a, const CLI::App& app) {
  const JvaeModel m = JvaeModel::load(a.model);
  const PartialAttributeVector q = parse_query(m.schema(), a.query);
  if (a.n == 0) throw UsageError("--n must be positive");
  // Same stream for both files, so the two grids share their latent draws.
  Rng r_mean = stream(a.seed, 0), r_sampled = stream(a.seed, 0);
  const Tensor means = m.imagine(q, a.n, r_mean, ImagineMode::mean_image);
  const Tensor sampled = m.imagine(q, a.n, r_sampled, ImagineMode::sampled_image);
  const fs::path out = a.out;
  ensure_parent(out);
  const std::size_t h = m.config().image_height, w = m.config().image_width;
  write_pgm(out, tile(means, h, w, a.columns));
  write_pgm(beside(out, "_sampled.pgm"), tile(sampled, h, w, a.columns));
  record_config(app, beside(out, ".toml"));
  std::cout << "query " << format_query(m.schema(), q) << ": wrote " << out.string() << " and "
            << beside(out, "_sampled.pgm").string() << "\n";
}

struct InterpolateArgs {
  std::string model, from, to, out = "interpolation.pgm";
  std::size_t steps = 8;
  std::uint64_t seed = 0;
};

void interpolate_cmd(const InterpolateArgs& a, const CLI::App& app) {
  const JvaeModel m = JvaeModel::load(a.model);
  const auto y1 = parse_query(m.schema(), a.from), y2 = parse_query(m.schema(), a.to);
  if (a.steps < 2) throw UsageError("--steps must be at least 2");
  Rng rng = stream(a.seed, 0);
  const auto z1 = m.encode_attrs(y1).sample(rng);
  const auto z2 = m.encode_attrs(y2).sample(rng);
  Tensor z = Tensor::matrix(a.steps, m.latent_dim());
  for (std::size_t i = 0; i < a.steps; ++i) {
    const auto zi = slerp(z1, z2, static_cast<double>(i) / static_cast<double>(a.steps - 1));
    std::copy(zi.begin(), zi.end(), z.row(i).begin());
  }
  ensure_parent(a.out);
  write_pgm(a.out, tile(m.decode_image(z), m.config().image_height, m.config().image_width, a.steps));
  record_config(app, beside(a.out, ".toml"));
  std::cout << "wrote " << a.steps << "-frame strip to " << a.out << "\n";
}

// ------------------------------------------------------------------ name

struct NameArgs {
  std::string model, data, out;
  std::string method = "both";
  std::string pool = "all";
  std::size_t mc_samples = kDefaultNamingSamples;
  NamingBankConfig bank;
  std::uint64_t seed = 0;
};

std::vector<Split> pool_from_string(const std::string& s) {
  if (s == "all") return {Split::train, Split::val, Split::test};
  return {split_from_string(s)};
}

void name_cmd(const NameArgs& a, const CLI::App& app) {
  const JvaeModel m = JvaeModel::load(a.model);
  const Dataset d = read_dataset(a.data);
  std::vector<NamingMethod> methods;
  if (a.method == "both") {
    methods = {NamingMethod::latent, NamingMethod::nb};
  } else {
    methods = {naming_method_from_string(a.method)};
  }
  Rng bank_rng = stream(a.seed, 11);
  const NamingBank bank = build_naming_bank(d, pool_from_string(a.pool), a.bank, bank_rng);
  json j;
  j["bank"] = {{"candidates", bank.candidates.size()},
               {"distinct_candidates", bank.distinct_candidates()},
               {"skipped", bank.skipped_concepts}};
  j["baselines"] = baselines(d, bank).to_json();
  for (NamingMethod method : methods) {
    NamingConfig cfg{method, a.mc_samples, a.seed};
    j[to_string(method)] = naming_accuracy(m, d, bank, cfg).to_json();
  }
  std::cout << j.dump(2) << "\n";
  if (a.out.empty()) return;
  const fs::path dir = require_dir(a.out);
  write_json(dir / "naming.json", j);
  record_config(app, dir / "name.toml");
}

// ------------------------------------------------------------------ classifier-train

struct ClassifierArgs {
  std::string data, out;
  ClassifierConfig cfg;
};

void classifier_train_cmd(const ClassifierArgs& a, const CLI::App& app) {
  const fs::path dir = require_dir(a.out);
  a.cfg.validate();
  const Dataset d = read_dataset(a.data);
  const ObservationClassifier c = train_classifier(d, a.cfg);
  c.save(dir / "classifier.jvc");
  json acc;
  for (std::size_t k = 0; k < d.schema.size(); ++k) acc[d.schema[k].name] = c.accuracy[k];
  write_json(dir / "classifier.json", {{"config", a.cfg.to_json()}, {"accuracy", acc}});
  record_config(app, dir / "classifier-train.toml");
  std::cout << "held-out accuracy " << acc.dump() << "\nwrote " << (dir / "classifier.jvc").string() << "\n";
}

// ------------------------------------------------------------------ gradcheck

struct GradcheckArgs {
  std::uint64_t seed = 0;
  double epsilon = 1e-5;
  double tolerance = 1e-4;
};

int gradcheck_cmd(const GradcheckArgs& a) {
  bool ok = true;
  for (const auto& [kind, r] : check_objective_gradients(a.seed, a.epsilon)) {
    const bool pass = r.max_relative_error < a.tolerance;
    ok = ok && pass;
    std::cout << std::left << std::setw(7) << to_string(kind) << (pass ? " PASS" : " FAIL") << "  max relative error "
              << r.max_relative_error << " over " << r.coordinates << " coordinates";
    if (!pass) std::cout << " (worst " << r.worst_param << "[" << r.worst_element << "])";
    std::cout << "\n";
  }
  return ok ? kExitOk : kExitNumeric;
}

// ------------------------------------------------------------------ latent-map

struct LatentMapArgs {
  std::string model, data, out = "latent_map.ppm";
  LatentMapConfig cfg;
  std::size_t embed = 500;
};

void latent_map_cmd(const LatentMapArgs& a, const CLI::App& app) {
  const JvaeModel m = JvaeModel::load(a.model);
  if (m.latent_dim() != 2) {
    throw UsageError("latent-map needs a 2-D latent space; this model has " + std::to_string(m.latent_dim()));
  }
  std::optional<Dataset> d;
  if (!a.data.empty()) {
    Dataset full = read_dataset(a.data);
    Dataset subset = full;
    subset.examples.clear();
    const auto train = full.indices(Split::train);
    for (std::size_t i = 0; i < train.size() && subset.examples.size() < a.embed; ++i) {
      subset.examples.push_back(full.examples[train[i]]);
    }
    d = std::move(subset);
  }
  write_latent_map(a.out, m, a.cfg, d ? &*d : nullptr);
  record_config(app, beside(a.out, ".toml"));
  std::cout << "wrote " << a.out << "\n";
}

// ------------------------------------------------------------------ sweep

struct SweepArgs {
  std::string data, classifier, out;
  std::string objective = "telbo";
  std::vector<double> lambda_y{1, 50, 100};
  std::vector<double> gamma{1, 50, 100};
  std::vector<double> alpha{0.01, 0.1, 1.0};
  std::vector<double> mu{0.3, 0.5, 0.7};
  std::size_t steps = 20000;
  std::uint64_t seed = 0;
  bool dry_run = false;
};

int sweep_cmd(const SweepArgs& a, const CLI::App& app) {
  const fs::path dir = require_dir(a.out);
  const ObjectiveKind kind = objective_from_string(a.objective);
  if (a.data.empty() || a.classifier.empty()) throw UsageError("sweep needs --data and --classifier");
  // Grid: lambda_y crossed with the objective's own knob.
  std::vector<std::vector<std::pair<std::string, double>>> grid;
  const std::vector<double>& second = kind == ObjectiveKind::telbo   ? a.gamma
                                      : kind == ObjectiveKind::jmvae ? a.alpha
                                                                     : a.mu;
  const std::string second_flag = kind == ObjectiveKind::telbo ? "--gamma" : kind == ObjectiveKind::jmvae ? "--alpha" : "--mu";
  for (double ly : a.lambda_y) {
    for (double s : second) grid.push_back({{"--lambda-y", ly}, {second_flag, s}});
  }
  record_config(app, dir / "sweep.toml");
  const std::string self = fs::read_symlink("/proc/self/exe").string();

  json runs = json::array();
  double best = -1.0;
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const fs::path run_dir = dir / ("run_" + std::to_string(i));
    std::ostringstream train;
    train << shell_quote(self) << " train --data " << shell_quote(a.data) << " --out " << shell_quote(run_dir.string())
          << " --objective " << a.objective << " --steps " << a.steps << " --seed " << a.seed;
    json params;
    for (const auto& [flag, v] : grid[i]) {
      train << " " << flag << " " << v;
      params[flag.substr(2)] = v;
    }
    train << " > " << shell_quote((run_dir.string() + ".log")) << " 2>&1";
    std::ostringstream eval;
    eval << shell_quote(self) << " eval --model " << shell_quote((run_dir / "model.jvc").string()) << " --classifier "
         << shell_quote(a.classifier) << " --data " << shell_quote(a.data)
         << " --scenario iid-concrete --query-split val --seed " << a.seed << " --out " << shell_quote(run_dir.string())
         << " >> " << shell_quote((run_dir.string() + ".log")) << " 2>&1";
    json run{{"run", i}, {"params", params}};
    if (a.dry_run) {
      std::cout << train.str() << "\n" << eval.str() << "\n";
      runs.push_back(run);
      continue;
    }
    fs::create_directories(run_dir);
    const int train_rc = std::system(train.str().c_str());
    if (train_rc != 0) {
      run["status"] = "train failed (" + std::to_string(train_rc) + ")";
    } else if (std::system(eval.str().c_str()) != 0) {
      run["status"] = "eval failed";
    } else {
      const json report = read_json(run_dir / "report_iid-concrete.json");
      const double js = report.at("js_overall").at("mean").get<double>();
      run["status"] = "ok";
      run["js_overall"] = js;
      run["correctness"] = report.at("correctness").at("mean");
      if (js > best) best = js, best_i = i;
    }
    std::cout << run.dump() << "\n" << std::flush;
    runs.push_back(run);
  }
  json summary{{"objective", a.objective}, {"selection", "max validation JS-overall"}, {"runs", runs}};
  if (best >= 0.0) summary["best"] = runs[best_i];
  write_json(dir / "sweep.json", summary);
  if (!a.dry_run && best < 0.0) {
    std::cerr << "error: no sweep run finished\n";
    return kExitNumeric;
  }
  return kExitOk;
}

}  // namespace

// ------------------------------------------------------------------ toy gradient check

std::vector<ObjectiveGradCheck> check_objective_gradients(std::uint64_t seed, double epsilon) {
  // Toy graph: 3x3 images, two attributes, latent 2, narrow layers.
  ModelConfig mc;
  mc.latent_dim = 2;
  mc.image_height = mc.image_width = 3;
  const std::array<std::size_t, 2> cards{2, 3};
  mc.schema = AttributeSchema::generic(cards);
  mc.image_decoder_hidden = mc.image_encoder_hidden = mc.joint_encoder_hidden = {4};
  mc.attr_decoder_hidden = mc.expert_hidden = {3};
  mc.expert_embedding = 3;
  mc.seed = seed;
  Rng init(seed);
  const JvaeModel m(mc, init);

  Rng rng = stream(seed, 1);
  Batch full{Tensor::matrix(3, 9), {}};
  std::vector<std::vector<int>> labels;
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t j = 0; j < 9; ++j) full.x.at(r, j) = static_cast<double>(rng() % 2);
    labels.push_back({static_cast<int>(rng() % 2), static_cast<int>(rng() % 3)});
  }
  full.y = LabelBatch::from_full(labels);
  // BiVCCA also sees a missing attribute; the joint encoder needs full labels.
  Batch partial = full;
  partial.y.values[1] = PartialAttributeVector::kMissing;

  std::vector<ObjectiveGradCheck> out;
  for (auto kind : {ObjectiveKind::telbo, ObjectiveKind::jmvae, ObjectiveKind::bivcca}) {
    ObjectiveConfig cfg;
    cfg.kind = kind;
    cfg.lambda_y = 3.0;
    cfg.gamma = 2.0;
    cfg.mc_samples = 2;
    const Batch& b = kind == ObjectiveKind::bivcca ? partial : full;
    const Noise noise(mix64(seed) ^ 0x9a);
    out.push_back({kind, grad_check(
                             m.params(), [&](Graph& g) { return g.scale(objective(g, m, b, cfg, noise).total, -1.0); },
                             epsilon)});
  }
  return out;
}

// ------------------------------------------------------------------ latent map

std::vector<std::uint8_t> latent_map(const JvaeModel& m, const LatentMapConfig& cfg, const Dataset* embed) {
  if (m.latent_dim() != 2) throw std::invalid_argument("latent_map: the latent space must be 2-D");
  if (cfg.resolution < 2 || !(cfg.extent > 0.0)) throw std::invalid_argument("latent_map: bad extent or resolution");
  static constexpr std::array<std::array<std::uint8_t, 3>, 8> kPalette{{{230, 97, 1},
                                                                         {94, 60, 153},
                                                                         {253, 184, 99},
                                                                         {178, 171, 210},
                                                                         {27, 158, 119},
                                                                         {217, 95, 2},
                                                                         {117, 112, 179},
                                                                         {231, 41, 138}}};
  const std::size_t n = cfg.resolution;
  const auto coord = [&](std::size_t i) {
    return -cfg.extent + 2.0 * cfg.extent * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
  };
  std::vector<std::uint8_t> rgb(3 * n * n);
  const AttributeSchema& schema = m.schema();
  for (std::size_t r = 0; r < n; ++r) {
    Tensor z = Tensor::matrix(n, 2);
    for (std::size_t c = 0; c < n; ++c) {
      z.at(c, 0) = coord(c);
      z.at(c, 1) = -coord(r);  // z2 grows upwards
    }
    const auto probs = m.decode_attrs(z);
    for (std::size_t c = 0; c < n; ++c) {
      std::vector<int> best(schema.size());
      for (std::size_t k = 0; k < schema.size(); ++k) {
        const auto row = probs[k].row(c);
        best[k] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      }
      const auto& color = kPalette[schema.concept_index(best) % kPalette.size()];
      std::copy(color.begin(), color.end(), rgb.begin() + static_cast<std::ptrdiff_t>(3 * (r * n + c)));
    }
  }
  if (embed != nullptr && embed->size() > 0) {
    const auto posts = m.encode_image(pixel_batch(*embed, iota_indices(embed->size())));
    for (const auto& q : posts) {
      const double fx = (q.mean[0] + cfg.extent) / (2.0 * cfg.extent) * static_cast<double>(n);
      const double fy = (cfg.extent - q.mean[1]) / (2.0 * cfg.extent) * static_cast<double>(n);
      if (!(fx >= 0.0 && fy >= 0.0 && fx < static_cast<double>(n) && fy < static_cast<double>(n))) continue;
      const auto cx = static_cast<std::size_t>(fx), cy = static_cast<std::size_t>(fy);
      for (std::size_t y = cy > 0 ? cy - 1 : 0; y <= std::min(cy + 1, n - 1); ++y) {
        for (std::size_t x = cx > 0 ? cx - 1 : 0; x <= std::min(cx + 1, n - 1); ++x) {
          for (std::size_t ch = 0; ch < 3; ++ch) rgb[3 * (y * n + x) + ch] /= 4;
        }
      }
    }
  }
  return rgb;
}

void write_latent_map(const fs::path& path, const JvaeModel& m, const LatentMapConfig& cfg, const Dataset* embed) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_ppm(path, cfg.resolution, cfg.resolution, latent_map(m, cfg, embed));
}

// ------------------------------------------------------------------ entry point

int run(int argc, char** argv) {
  CLI::App app{"Joint image/attribute VAEs: data generation, training, evaluation and naming", "imagine"};
  app.require_subcommand(1, 1);
  app.fallthrough();  // --config may follow the command name
  app.set_config("--config", "", "TOML/INI file of option values; command-line flags take precedence");
  std::function<int()> action;

  auto seed_option = [](CLI::App* sub, std::uint64_t& seed) {
    sub->add_option("--seed", seed, "Random seed (falls back to IMAGINE_SEED)")->envname("IMAGINE_SEED")->capture_default_str();
  };

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate MNIST-A or MNIST-2bit and write dataset.mna");
  gen_cmd->add_option("--source", gen.source, "procedural or idx")->capture_default_str();
  gen_cmd->add_option("--idx-images", gen.idx_images, "IDX image file (with --source idx)");
  gen_cmd->add_option("--idx-labels", gen.idx_labels, "IDX label file (with --source idx)");
  gen_cmd->add_option("--dataset", gen.dataset, "mnist-a or mnist-2bit")->capture_default_str();
  gen_cmd->add_option("--image-size", gen.image_size, "Canvas side in pixels")->capture_default_str();
  gen_cmd->add_option("--per-concept", gen.per_concept, "Renders per source image (per concept for procedural)")
      ->capture_default_str();
  gen_cmd->add_option("--split", gen.split, "none, iid or comp")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  seed_option(gen_cmd, gen.seed);
  gen_cmd->callback([&] { action = [&] { return gen_data(gen, app), kExitOk; }; });

  TrainArgs tr;
  auto* train_sub = app.add_subcommand("train", "Train a joint VAE and write model.jvc");
  train_sub->add_option("--data", tr.data, "dataset.mna")->required();
  train_sub->add_option("--out", tr.out, "Output directory")->required();
  train_sub->add_option("--objective", tr.objective_name, "telbo, jmvae or bivcca")->capture_default_str();
  train_sub->add_option("--lambda-x", tr.objective.lambda_x)->capture_default_str();
  train_sub->add_option("--lambda-y", tr.objective.lambda_y)->capture_default_str();
  train_sub->add_option("--gamma", tr.objective.gamma, "TELBO attribute-only likelihood scale")->capture_default_str();
  train_sub->add_option("--alpha", tr.objective.alpha, "JMVAE KL weight")->capture_default_str();
  train_sub->add_option("--mu", tr.objective.mu, "BiVCCA mixing weight")->capture_default_str();
  train_sub->add_option("--beta", tr.objective.beta)->capture_default_str();
  train_sub->add_option("--mc-samples", tr.objective.mc_samples)->capture_default_str();
  train_sub->add_flag("--no-freeze", tr.no_freeze, "TELBO: let the unimodal terms train the decoders");
  train_sub->add_option("--latent-dim", tr.latent_dim)->capture_default_str();
  train_sub->add_flag("--no-poe", tr.no_poe, "Use one q(z|y) network instead of a product of experts");
  train_sub->add_option("--steps", tr.train.steps)->capture_default_str();
  train_sub->add_option("--batch", tr.train.batch)->capture_default_str();
  train_sub->add_option("--lr", tr.train.learning_rate)->capture_default_str();
  train_sub->add_option("--log-every", tr.train.log_every)->capture_default_str();
  seed_option(train_sub, tr.train.seed);
  train_sub->callback([&] { action = [&] { return train_cmd(tr, app); }; });

  EvalArgs ev;
  auto* eval_sub = app.add_subcommand("eval", "Correctness, coverage and JS-overall of imagined images");
  eval_sub->add_option("--model", ev.model)->required();
  eval_sub->add_option("--classifier", ev.classifier)->required();
  eval_sub->add_option("--data", ev.data)->required();
  eval_sub->add_option("--scenario", ev.scenario, "iid-concrete, abstract or comp")->capture_default_str();
  eval_sub->add_option("--level", ev.level, "Abstract: number of dropped attributes")->capture_default_str();
  eval_sub->add_option("--variants", ev.variants, "Abstract: queries per concept")->capture_default_str();
  eval_sub->add_option("--query-split", ev.query_split, "iid-concrete: split whose concepts are queried")
      ->capture_default_str();
  eval_sub->add_option("--samples", ev.eval.samples_per_query)->capture_default_str();
  eval_sub->add_option("--splits", ev.eval.splits, "Query groups for the standard deviation")->capture_default_str();
  eval_sub->add_option("--grid", ev.grid, "Write a sample grid for the first N queries")->capture_default_str();
  eval_sub->add_flag("--with-queries", ev.with_queries, "Include per-query results in the report");
  eval_sub->add_option("--out", ev.out, "Output directory for the report");
  seed_option(eval_sub, ev.eval.seed);
  eval_sub->callback([&] { action = [&] { return eval_cmd(ev, app), kExitOk; }; });

  SampleArgs sa;
  auto* sample_sub = app.add_subcommand("sample", "Imagine images for a query");
  sample_sub->add_option("--model", sa.model)->required();
  sample_sub->add_option("--query", sa.query, "e.g. class=7,scale=big or '*'")->required();
  sample_sub->add_option("--n", sa.n)->capture_default_str();
  sample_sub->add_option("--columns", sa.columns)->capture_default_str();
  sample_sub->add_option("--out", sa.out, "PGM file; sampled images go to <stem>_sampled.pgm")->capture_default_str();
  seed_option(sample_sub, sa.seed);
  sample_sub->callback([&] { action = [&] { return sample_cmd(sa, app), kExitOk; }; });

  InterpolateArgs ia;
  auto* interp_sub = app.add_subcommand("interpolate", "Spherical interpolation between two queries");
  interp_sub->add_option("--model", ia.model)->required();
  interp_sub->add_option("--from", ia.from)->required();
  interp_sub->add_option("--to", ia.to)->required();
  interp_sub->add_option("--steps", ia.steps)->capture_default_str();
  interp_sub->add_option("--out", ia.out)->capture_default_str();
  seed_option(interp_sub, ia.seed);
  interp_sub->callback([&] { action = [&] { return interpolate_cmd(ia, app), kExitOk; }; });

  NameArgs na;
  auto* name_sub = app.add_subcommand("name", "Concept naming accuracy on a query bank");
  name_sub->add_option("--model", na.model)->required();
  name_sub->add_option("--data", na.data)->required();
  name_sub->add_option("--method", na.method, "latent, nb or both")->capture_default_str();
  name_sub->add_option("--mc-samples", na.mc_samples, "Concept-NB latent samples")->capture_default_str();
  name_sub->add_option("--pool", na.pool, "Image pool: all, train, val or test")->capture_default_str();
  name_sub->add_option("--patterns", na.bank.patterns_per_concept)->capture_default_str();
  name_sub->add_option("--images", na.bank.images_per_query)->capture_default_str();
  name_sub->add_option("--query-sets", na.bank.query_splits)->capture_default_str();
  name_sub->add_option("--queries", na.bank.queries_per_split)->capture_default_str();
  name_sub->add_option("--out", na.out, "Output directory for naming.json");
  seed_option(name_sub, na.seed);
  name_sub->callback([&] { action = [&] { return name_cmd(na, app), kExitOk; }; });

  ClassifierArgs ca;
  auto* cls_sub = app.add_subcommand("classifier-train", "Train the observation classifier");
  cls_sub->add_option("--data", ca.data)->required();
  cls_sub->add_option("--out", ca.out)->required();
  cls_sub->add_option("--steps", ca.cfg.steps)->capture_default_str();
  cls_sub->add_option("--batch", ca.cfg.batch)->capture_default_str();
  cls_sub->add_option("--lr", ca.cfg.learning_rate)->capture_default_str();
  cls_sub->add_option("--dropout", ca.cfg.dropout)->capture_default_str();
  seed_option(cls_sub, ca.cfg.seed);
  cls_sub->callback([&] { action = [&] { return classifier_train_cmd(ca, app), kExitOk; }; });

  GradcheckArgs ga;
  auto* gc_sub = app.add_subcommand("gradcheck", "Finite-difference check of all three objectives");
  gc_sub->add_option("--epsilon", ga.epsilon)->capture_default_str();
  gc_sub->add_option("--tolerance", ga.tolerance)->capture_default_str();
  seed_option(gc_sub, ga.seed);
  gc_sub->callback([&] { action = [&] { return gradcheck_cmd(ga); }; });

  LatentMapArgs la;
  auto* map_sub = app.add_subcommand("latent-map", "Color a 2-D latent space by the decoded concept");
  map_sub->add_option("--model", la.model)->required();
  map_sub->add_option("--data", la.data, "Dataset whose train images are embedded as dots");
  map_sub->add_option("--embed", la.embed, "At most this many embedded images")->capture_default_str();
  map_sub->add_option("--extent", la.cfg.extent)->capture_default_str();
  map_sub->add_option("--resolution", la.cfg.resolution)->capture_default_str();
  map_sub->add_option("--out", la.out)->capture_default_str();
  map_sub->callback([&] { action = [&] { return latent_map_cmd(la, app), kExitOk; }; });

  SweepArgs sw;
  auto* sweep_sub = app.add_subcommand("sweep", "Hyperparameter grid; runs train and eval as subprocesses");
  sweep_sub->add_option("--data", sw.data)->required();
  sweep_sub->add_option("--classifier", sw.classifier)->required();
  sweep_sub->add_option("--objective", sw.objective)->capture_default_str();
  sweep_sub->add_option("--lambda-y", sw.lambda_y)->delimiter(',')->capture_default_str();
  sweep_sub->add_option("--gamma", sw.gamma)->delimiter(',')->capture_default_str();
  sweep_sub->add_option("--alpha", sw.alpha)->delimiter(',')->capture_default_str();
  sweep_sub->add_option("--mu", sw.mu)->delimiter(',')->capture_default_str();
  sweep_sub->add_option("--steps", sw.steps)->capture_default_str();
  sweep_sub->add_flag("--dry-run", sw.dry_run, "Print the commands without running them");
  sweep_sub->add_option("--out", sw.out)->required();
  seed_option(sweep_sub, sw.seed);
  sweep_sub->callback([&] { action = [&] { return sweep_cmd(sw, app); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }
  try {
    return action();
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace imagine::cli
