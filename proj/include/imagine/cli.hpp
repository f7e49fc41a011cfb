#pragma once

// The `imagine` command line: gen-data, train, eval, sample, interpolate,
// name, classifier-train, gradcheck, latent-map and sweep.

#include <cstddef>
#include <filesystem>
#include <optional>

#include "imagine/dataset.hpp"
#include "imagine/gradcheck.hpp"
#include "imagine/jvae.hpp"
#include "imagine/objectives.hpp"

namespace imagine::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

/// Parses and runs one command. Returns the process exit code; errors are
/// reported on stderr.
int run(int argc, char** argv);

struct ObjectiveGradCheck {
  ObjectiveKind kind;
  GradCheckReport report;
};

/// Finite-difference check of TELBO, JMVAE and BiVCCA on a toy model
/// (3x3 images, attributes of cardinality 2 and 3, latent dimension 2).
std::vector<ObjectiveGradCheck> check_objective_gradients(std::uint64_t seed, double epsilon = 1e-5);

struct LatentMapConfig {
  double extent = 3.0;  // the map spans [-extent, extent]^2
  std::size_t resolution = 256;
};

/// RGB map of a 2-D latent space, each pixel colored by the most probable
/// attribute combination under the attribute decoders (one color per
/// concept). Posterior means of `embed` images are drawn as dark dots.
/// Throws std::invalid_argument unless the latent space is 2-D.
std::vector<std::uint8_t> latent_map(const JvaeModel& m, const LatentMapConfig& cfg, const Dataset* embed = nullptr);
void write_latent_map(const std::filesystem::path& path, const JvaeModel& m, const LatentMapConfig& cfg,
                      const Dataset* embed = nullptr);

}  // namespace imagine::cli
