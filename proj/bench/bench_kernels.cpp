// OpenMP kernels against the serial reference on the generator's layer shapes
// (full-size model, 32 base filters, one 64x84 phrase).

#include <benchmark/benchmark.h>

#include <array>

#include "mst/nn/kernels.hpp"
#include "mst/util/rng.hpp"

namespace {

using namespace mst;
using nn::Tensor;

struct ConvCase {
  const char* name;
  std::size_t c_in, c_out, h, w, k, stride;
};

constexpr std::array<ConvCase, 4> kCases{{
    {"stem_k7", 1, 32, 64, 84, 7, 1},
    {"down_k3s2", 32, 64, 64, 84, 3, 2},
    {"residual_k3", 128, 128, 16, 21, 3, 1},
    {"score_k3", 128, 1, 8, 10, 3, 1},
}};

Tensor random_tensor(nn::Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<float>(rng.uniform() * 2 - 1);
  return t;
}

struct ConvFixture {
  explicit ConvFixture(const ConvCase& c)
      : g{c.stride, c.k / 2},
        x(random_tensor({1, c.c_in, c.h, c.w}, 1)),
        w(random_tensor({c.c_out, c.c_in, c.k, c.k}, 2)),
        b(random_tensor({c.c_out}, 3)),
        dy(random_tensor({1, c.c_out, nn::conv_output_size(c.h, c.k, g), nn::conv_output_size(c.w, c.k, g)}, 4)) {}
  nn::ConvGeometry g;
  Tensor x, w, b, dy;
};

template <bool Reference>
void conv_forward(benchmark::State& state) {
  const auto& c = kCases[state.range(0)];
  ConvFixture f(c);
  state.SetLabel(c.name);
  for (auto _ : state) {
    auto y = Reference ? nn::reference::conv2d_forward(f.x, f.w, &f.b, f.g) : nn::kernels::conv2d_forward(f.x, f.w, &f.b, f.g);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Reference>
void conv_backward_data(benchmark::State& state) {
  const auto& c = kCases[state.range(0)];
  ConvFixture f(c);
  state.SetLabel(c.name);
  for (auto _ : state) {
    auto dx = Reference ? nn::reference::conv2d_backward_data(f.dy, f.w, c.h, c.w, f.g)
                        : nn::kernels::conv2d_backward_data(f.dy, f.w, c.h, c.w, f.g);
    benchmark::DoNotOptimize(dx.data());
  }
}

template <bool Reference>
void conv_backward_weights(benchmark::State& state) {
  const auto& c = kCases[state.range(0)];
  ConvFixture f(c);
  state.SetLabel(c.name);
  for (auto _ : state) {
    auto gr = Reference ? nn::reference::conv2d_backward_weights(f.x, f.dy, c.k, f.g)
                        : nn::kernels::conv2d_backward_weights(f.x, f.dy, c.k, f.g);
    benchmark::DoNotOptimize(gr.weight.data());
  }
}

template <bool Reference>
void instance_norm(benchmark::State& state) {
  const auto x = random_tensor({1, 64, 32, 42}, 5);
  const auto dy = random_tensor({1, 64, 32, 42}, 6);
  const auto scale = random_tensor({64}, 7), shift = random_tensor({64}, 8);
  for (auto _ : state) {
    nn::InstanceNormCache<float> cache;
    if constexpr (Reference) {
      auto y = nn::reference::instance_norm_forward(x, scale, shift, 1e-5, &cache);
      auto gr = nn::reference::instance_norm_backward(dy, cache, scale);
      benchmark::DoNotOptimize(gr.input.data());
    } else {
      auto y = nn::kernels::instance_norm_forward(x, scale, shift, 1e-5, &cache);
      auto gr = nn::kernels::instance_norm_backward(dy, cache, scale);
      benchmark::DoNotOptimize(gr.input.data());
    }
  }
}

void all_cases(benchmark::internal::Benchmark* b) {
  for (std::size_t i = 0; i < kCases.size(); ++i) b->Arg(static_cast<long>(i));
  b->Unit(benchmark::kMicrosecond);
}

BENCHMARK(conv_forward<true>)->Name("reference/conv_forward")->Apply(all_cases);
BENCHMARK(conv_forward<false>)->Name("openmp/conv_forward")->Apply(all_cases);
BENCHMARK(conv_backward_data<true>)->Name("reference/conv_backward_data")->Apply(all_cases);
BENCHMARK(conv_backward_data<false>)->Name("openmp/conv_backward_data")->Apply(all_cases);
BENCHMARK(conv_backward_weights<true>)->Name("reference/conv_backward_weights")->Apply(all_cases);
BENCHMARK(conv_backward_weights<false>)->Name("openmp/conv_backward_weights")->Apply(all_cases);
BENCHMARK(instance_norm<true>)->Name("reference/instance_norm")->Unit(benchmark::kMicrosecond);
BENCHMARK(instance_norm<false>)->Name("openmp/instance_norm")->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
