#include <benchmark/benchmark.h>

#include "dvqa/attack.hpp"
#include "dvqa/experiment.hpp"
#include "dvqa/metrics.hpp"
#include "dvqa/model_graph.hpp"
#include "dvqa/rng.hpp"

using namespace dvqa;

namespace {

Tensorf random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensorf t(std::move(shape));
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

ModelConfig bench_victim() {
  ExperimentConfig cfg;
  return make_model_config(cfg);
}

}  // namespace

static void MatMul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  ad::Tape<float> tape;
  ad::NodeId a = tape.constant(random_tensor({n, n}, 1));
  ad::NodeId b = tape.constant(random_tensor({n, n}, 2));
  ad::NodeId c = tape.matmul(a, b);
  for (auto _ : state) {
    auto fwd = ad::forward(tape, {});
    benchmark::DoNotOptimize(fwd.value(c).data.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(MatMul)->Arg(64)->Arg(128)->Arg(256);

static void BilinearResize(benchmark::State& state) {
  ad::Tape<float> tape;
  ad::NodeId x = tape.constant(random_tensor({384, 256, 3}, 3, 0.0, 255.0));
  ad::NodeId y = tape.bilinear_resize(x, 192, 128);
  for (auto _ : state) {
    auto fwd = ad::forward(tape, {});
    benchmark::DoNotOptimize(fwd.value(y).data.data());
  }
}
BENCHMARK(BilinearResize);

static void PreprocessHeadered(benchmark::State& state) {
  const RasterDocument doc = make_dataset(1, 5)[0];
  const PreprocessSpec spec = PreprocessSpec::headered(128, 208, 16);
  for (auto _ : state) {
    const PreprocessResult r = reference_headered(doc.image, "what is the total?", spec);
    benchmark::DoNotOptimize(r.tensor.data.data());
  }
}
BENCHMARK(PreprocessHeadered);

static void TrainingStep(benchmark::State& state) {
  const ModelConfig cfg = bench_victim();
  const ModelParams params = init_params(cfg, 7);
  const RasterDocument doc = make_dataset(1, 9)[0];
  const Tensorf pre = reference_headered(doc.image, doc.qa[0].question, cfg.preprocess).tensor;
  const std::vector<int> target = Vocabulary::standard().tokenize_target(doc.qa[0].answer);

  for (auto _ : state) {
    ad::Tape<float> tape;
    ad::Bindings<float> bind;
    ParamBinder<float> p(tape, bind, params);
    ad::NodeId pre_node = tape.constant(pre, "pre");
    ad::NodeId loss = build_qa_loss(tape, p, pre_node, nullptr, target, LossKind::Nll, cfg);
    auto fwd = ad::forward(tape, bind);
    std::vector<ad::NodeId> wrt;
    for (const auto& [name, id] : p.bound()) wrt.push_back(id);
    auto grads = ad::gradient(tape, fwd, loss, wrt);
    benchmark::DoNotOptimize(grads.data());
  }
}
BENCHMARK(TrainingStep)->Unit(benchmark::kMillisecond);

static void PgdIteration(benchmark::State& state) {
  const ModelConfig cfg = bench_victim();
  const ModelParams params = init_params(cfg, 11);
  const RasterDocument doc = make_dataset(1, 13)[0];
  AttackScenario s = build_scenario(ScenarioKind::TargetedSingle, doc, 1, default_target_pool());
  s.steps = 1;
  FeasibleSet fs;
  fs.epsilon = 8.0;
  for (auto _ : state) {
    const AttackResult r = pgd_attack(params, doc, s, fs, 17);
    benchmark::DoNotOptimize(r.delta.data.data());
  }
}
BENCHMARK(PgdIteration)->Unit(benchmark::kMillisecond);

static void Levenshtein(benchmark::State& state) {
  Rng rng(21);
  std::vector<std::pair<std::string, std::string>> pairs;
  const std::string alphabet = "abcdefgh0123 ";
  for (int i = 0; i < 256; ++i) {
    std::string a, b;
    for (int k = 0; k < 24; ++k) a.push_back(alphabet[rng.uniform_int(alphabet.size())]);
    for (int k = 0; k < 24; ++k) b.push_back(alphabet[rng.uniform_int(alphabet.size())]);
    pairs.emplace_back(std::move(a), std::move(b));
  }
  for (auto _ : state) {
    int acc = 0;
    for (const auto& [a, b] : pairs) acc += levenshtein(a, b);
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(pairs.size()));
}
BENCHMARK(Levenshtein);

BENCHMARK_MAIN();
