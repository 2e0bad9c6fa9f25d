#include <benchmark/benchmark.h>

#include <algorithm>

#include "hcbm/attack.hpp"
#include "hcbm/datagen.hpp"
#include "hcbm/models.hpp"
#include "hcbm/ops.hpp"
#include "hcbm/rng.hpp"
#include "hcbm/runtime.hpp"
#include "hcbm/training.hpp"

namespace {

using hcbm::ad::Tape;
using hcbm::ad::Tensor;

Tensor random_tensor(hcbm::ad::Shape shape, std::uint64_t seed) {
  hcbm::Rng rng(seed);
  Tensor t(std::move(shape));
  for (float& v : t.values()) v = static_cast<float>(rng.uniform(-0.25, 0.25));
  return t;
}

// args: batch, channels in, channels out, image side
void BM_Conv2dForward(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto o = static_cast<std::size_t>(state.range(2));
  const auto s = static_cast<std::size_t>(state.range(3));
  const auto x = random_tensor({b, c, s, s}, 1);
  const auto w = random_tensor({o, c, 3, 3}, 2);
  const auto bias = random_tensor({o}, 3);
  for (auto _ : state) {
    Tape tape;
    auto y = hcbm::ad::conv2d(tape.input(x), tape.input(w), tape.input(bias));
    benchmark::DoNotOptimize(y.value().values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b));
}
BENCHMARK(BM_Conv2dForward)->Args({64, 3, 16, 64})->Args({64, 16, 32, 32})->Args({64, 32, 64, 16});

void BM_Conv2dBackward(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto o = static_cast<std::size_t>(state.range(2));
  const auto s = static_cast<std::size_t>(state.range(3));
  const auto x = random_tensor({b, c, s, s}, 1);
  hcbm::ad::Parameter w("w", random_tensor({o, c, 3, 3}, 2));
  hcbm::ad::Parameter bias("b", random_tensor({o}, 3));
  for (auto _ : state) {
    Tape tape;
    auto y = hcbm::ad::conv2d(tape.input(x, true), tape.parameter(w), tape.parameter(bias));
    tape.backward(hcbm::ad::sum(y));
    benchmark::DoNotOptimize(w.grad.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b));
}
BENCHMARK(BM_Conv2dBackward)->Args({64, 3, 16, 64})->Args({64, 16, 32, 32})->Args({64, 32, 64, 16});

void BM_RenderImage(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto classes = hcbm::datagen::enumerate_classes(4);
  const auto protos = hcbm::datagen::assign_prototypes(10, 9, 1);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    const auto c = seed % classes.size();
    auto img = hcbm::datagen::render_image(classes[c], protos[c], seed++, size);
    benchmark::DoNotOptimize(img.pixels.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_RenderImage)->Arg(32)->Arg(64);

void BM_TrainStep(benchmark::State& state) {
  hcbm::models::ModelConfig mc;
  mc.variant = static_cast<hcbm::models::Variant>(state.range(0));
  hcbm::models::ConceptModel model(mc, 1);
  hcbm::training::Adam adam(model.parameters());
  const auto x = random_tensor({64, 3, 64, 64}, 4);
  std::vector<int> labels(64);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
  const Tensor targets({64, 9}, 0.0f);
  std::mt19937_64 rng(5);
  for (auto _ : state) {
    model.zero_grad();
    Tape tape;
    const auto out = model.forward(tape, tape.input(x), hcbm::ad::Mode::train, rng);
    const auto loss = hcbm::training::joint_loss(out.class_logits, out.concept_logits, labels, targets, 10.0);
    tape.backward(loss);
    adam.step(0.001);
  }
  state.SetItemsProcessed(state.iterations() * 64);
  state.SetLabel(std::string(hcbm::models::to_string(mc.variant)));
}
BENCHMARK(BM_TrainStep)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);

void BM_ConceptAttackStep(benchmark::State& state) {
  hcbm::models::ModelConfig mc;
  mc.variant = hcbm::models::Variant::vanilla_cbm;
  hcbm::models::ConceptModel model(mc, 1);
  const auto target = hcbm::attack::model_target(model);
  const auto x = random_tensor({1, 3, 64, 64}, 6);
  hcbm::attack::AttackConfig cfg;
  cfg.max_steps = static_cast<int>(state.range(0));
  cfg.gamma = 1e9;  // every concept is sensitive: the most expensive step
  cfg.beta = 0.0;
  // Attack the predicted class so the run does not stop at t = 0.
  const auto logits = target->probe(x, 0).class_logits.values();
  const int y = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  for (auto _ : state) {
    auto o = hcbm::attack::concept_attack(*target, x, y, cfg);
    benchmark::DoNotOptimize(o.iterations);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ConceptAttackStep)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  hcbm::tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
