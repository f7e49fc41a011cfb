// One Adam step per objective at desk scale: batch 64, 16x16 images, d = 10.

#include <benchmark/benchmark.h>

#include "imagine/dataset.hpp"
#include "imagine/objectives.hpp"

namespace {

using namespace imagine;

const Dataset& mini() {
  static const Dataset d = [] {
    Dataset out = generate_mnista(procedural_source(), MnistAConfig{16, 2, 1});
    Rng rng(1);
    make_iid_split(out, rng);
    return out;
  }();
  return d;
}

void BM_TrainStep(benchmark::State& state) {
  ObjectiveConfig obj;
  obj.kind = static_cast<ObjectiveKind>(state.range(0));
  ModelConfig mc;
  mc.schema = mini().schema;
  Rng init(mc.seed);
  JvaeModel m(mc, init);
  TrainConfig tc;
  tc.steps = 1;
  tc.log_every = 1;
  for (auto _ : state) {
    ++tc.seed;
    benchmark::DoNotOptimize(train(m, mini(), obj, tc));
  }
  state.SetLabel(to_string(obj.kind));
}

}  // namespace

BENCHMARK(BM_TrainStep)->Arg(static_cast<int>(ObjectiveKind::telbo))->Arg(static_cast<int>(ObjectiveKind::jmvae))
    ->Arg(static_cast<int>(ObjectiveKind::bivcca))->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
