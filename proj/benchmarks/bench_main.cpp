#include <benchmark/benchmark.h>

#include <random>

#include "devsurv/outcomes.hpp"
#include "devsurv/pipeline.hpp"
#include "devsurv/synth.hpp"
#include "devsurv/weaksup.hpp"

using namespace devsurv;

namespace {

const pipeline::Resources& resources() {
  static const auto res = pipeline::Resources::load(pipeline::ResourcePaths::under(DEVSURV_DATA_DIR));
  return res;
}

const synth::SynthCorpus& corpus() {
  static const auto c = [] {
    synth::SynthConfig cfg;
    cfg.seed = 1;
    cfg.n_patients = 100;
    return synth::gen_corpus(cfg, resources());
  }();
  return c;
}

void BM_AnnotateNotes(benchmark::State& state) {
  const auto& notes = corpus().notes;
  for (auto _ : state) benchmark::DoNotOptimize(pipeline::annotate_notes(notes, resources()));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(notes.size()));
}
BENCHMARK(BM_AnnotateNotes)->Unit(benchmark::kMillisecond);

void BM_ApplyLfs(benchmark::State& state) {
  const auto cands = pipeline::candidates_for(pipeline::annotate_notes(corpus().notes, resources()),
                                              extraction::RelationType::kPainAnatomy);
  const auto lfs = pipeline::default_lfs(extraction::RelationType::kPainAnatomy, DEVSURV_DATA_DIR);
  for (auto _ : state) benchmark::DoNotOptimize(weaksup::apply_lfs(cands, lfs));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cands.size()));
}
BENCHMARK(BM_ApplyLfs)->Unit(benchmark::kMillisecond);

void BM_FitLabelModel(benchmark::State& state) {
  const std::vector<synth::LFSpec> specs{{"a", 0.9, 0.5}, {"b", 0.8, 0.5}, {"c", 0.75, 0.5}, {"d", 0.7, 0.5}, {"e", 0.6, 0.5}};
  const auto s = synth::gen_label_matrix(static_cast<std::size_t>(state.range(0)), specs, 0.5, 3);
  for (auto _ : state) benchmark::DoNotOptimize(weaksup::fit_label_model(s.matrix));
}
BENCHMARK(BM_FitLabelModel)->Arg(1000)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_CoxFit(benchmark::State& state) {
  const auto n = state.range(0);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0, 1);
  std::exponential_distribution<double> ex(1.0);
  Eigen::MatrixXd x(n, 3);
  std::vector<double> time;
  std::vector<bool> event;
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) << g(rng), g(rng), g(rng);
    const double t = ex(rng) / std::exp(0.5 * x(i, 0) - 0.3 * x(i, 1));
    const double c = 3 * ex(rng);
    time.push_back(std::min(t, c));
    event.push_back(t <= c);
  }
  for (auto _ : state) benchmark::DoNotOptimize(outcomes::cox_fit(x, time, event, {"a", "b", "c"}));
}
BENCHMARK(BM_CoxFit)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
