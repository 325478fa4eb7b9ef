#include <benchmark/benchmark.h>

#include "unpack/attribution.hpp"
#include "unpack/decomposition.hpp"
#include "unpack/forward.hpp"
#include "unpack/knockout.hpp"
#include "unpack/score_panel.hpp"
#include "unpack/toy_model.hpp"
#include "unpack/trace_config.hpp"

using namespace unpack;

namespace {

// Mid-sized random model: big enough that the inner loops dominate.
const Model& bench_model() {
  static const Model m = [] {
    ModelConfig cfg = toy_config(4, BlockLayout::sequential, false, 512);
    cfg.n_heads = 4;
    cfg.d_model = 64;
    cfg.d_head = 16;
    cfg.d_mlp = 256;
    cfg.n_ctx = 128;
    return make_toy_model(cfg, {.seed = 11});
  }();
  return m;
}

void BM_Forward(benchmark::State& state) {
  const Model& m = bench_model();
  const auto tokens = random_tokens(static_cast<int>(state.range(0)), 512, 1);
  for (auto _ : state) benchmark::DoNotOptimize(forward(m, tokens));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Decompose(benchmark::State& state) {
  const Model& m = bench_model();
  const auto tokens = random_tokens(static_cast<int>(state.range(0)), 512, 2);
  const ForwardCapture cap = forward(m, tokens);
  for (auto _ : state) {
    Decomposer dec(m, cap);
    benchmark::DoNotOptimize(dec.centered(cap.n_pos() - 1).data());
  }
}
BENCHMARK(BM_Decompose)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

const char* const kConfigs[] = {"k_only_weighted", "k_only_l2", "k_only_aligned",
                                "kqv_weighted", "kqv_l2", "kqv_aligned"};

void BM_Aggregate(benchmark::State& state) {
  const Model& m = bench_model();
  const auto tokens = random_tokens(24, 512, 3);
  const ForwardCapture cap = forward(m, tokens);
  TraceConfig cfg = TraceConfig::named(kConfigs[state.range(0)]);
  cfg.target = Target::single_token(7);
  state.SetLabel(kConfigs[state.range(0)]);
  for (auto _ : state) {
    Attributor attr(m, cap, cfg);
    benchmark::DoNotOptimize(attr.aggregate_token_credit(cap.n_pos() - 1));
  }
}
BENCHMARK(BM_Aggregate)->DenseRange(0, 5)->Unit(benchmark::kMillisecond);

void BM_Trace(benchmark::State& state) {
  const Model& m = bench_model();
  const auto tokens = random_tokens(24, 512, 4);
  const ForwardCapture cap = forward(m, tokens);
  TraceConfig cfg = TraceConfig::named(kConfigs[state.range(0)]);
  cfg.target = Target::single_token(7);
  state.SetLabel(kConfigs[state.range(0)]);
  for (auto _ : state) {
    Attributor attr(m, cap, cfg);
    benchmark::DoNotOptimize(attr.trace(cap.n_pos() - 1));
  }
}
BENCHMARK(BM_Trace)->Arg(0)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_ScorePanel(benchmark::State& state) {
  const Model& m = bench_model();
  std::vector<std::vector<int>> prompts;
  for (int i = 0; i < state.range(0); ++i) prompts.push_back(random_tokens(32, 512, 100 + i));
  for (auto _ : state) benchmark::DoNotOptimize(stream_score_panel(m, prompts));
}
BENCHMARK(BM_ScorePanel)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_AblateForward(benchmark::State& state) {
  const Model& m = bench_model();
  const auto tokens = random_tokens(64, 512, 5);
  const AblationSpec spec{ComponentId::head(1, 2), state.range(0) ? Channel::cut_mlp : Channel::cut_attention};
  for (auto _ : state) benchmark::DoNotOptimize(ablate_forward(m, tokens, spec));
}
BENCHMARK(BM_AblateForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
