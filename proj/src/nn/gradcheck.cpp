#include "mst/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "mst/nn/layers.hpp"
#include "mst/nn/losses.hpp"
#include "mst/util/rng.hpp"

namespace mst::nn {

GradCheckReport grad_check(const Objective& f, std::span<const double> point, std::span<const double> analytic,
                           double step, double tolerance) {
  GradCheckReport report;
  report.tolerance = tolerance;
  if (analytic.size() != point.size()) {
    report.passed = false;
    report.max_rel_error = INFINITY;
    return report;
  }
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> numeric(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f(x);
    x[i] = saved - step;
    const double down = f(x);
    x[i] = saved;
    numeric[i] = (up - down) / (2.0 * step);
  }
  double scale = 0.0;
  for (double n : numeric) scale = std::max(scale, std::abs(n));
  const double floor = scale > 0.0 ? 1e-2 * scale : 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    const double err = std::abs(analytic[i] - numeric[i]) / denom;
    if (!(err <= report.max_rel_error)) {  // also catches NaN
      report.max_rel_error = err;
      report.worst_index = i;
    }
  }
  report.checked = x.size();
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

namespace {

std::vector<double> to_doubles(std::span<const float> v) { return {v.begin(), v.end()}; }

void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
  for (auto& v : t.values()) v = static_cast<float>(lo + (hi - lo) * rng.uniform());
}

// Values bounded away from 0 by `gap`, so piecewise-linear ops are smooth
// within one finite-difference step.
void fill_away_from_zero(Tensor& t, Rng& rng, double gap, double hi) {
  for (auto& v : t.values()) {
    const double mag = gap + (hi - gap) * rng.uniform();
    v = static_cast<float>(rng.uniform() < 0.5 ? -mag : mag);
  }
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + static_cast<std::size_t>(rng.below(hi - lo + 1)); }

std::string shape_case(const Shape& x, const std::string& extra) {
  return "x" + shape_string(x) + (extra.empty() ? "" : " " + extra);
}

struct CaseResult {
  double worst = 0.0;
  bool passed = true;
};

void merge(CaseResult& into, const GradCheckReport& r) {
  into.worst = std::max(into.worst, r.max_rel_error);
  into.passed = into.passed && r.passed;
}

// Objective sum(r * layer(x)). The analytic gradients come from the float
// layer's backward; the differences from the double shadow's forward.
CaseResult check_layer(BasicLayer<float>& layer, BasicLayer<double>& shadow, const Tensor& x, Rng& rng,
                       double tolerance) {
  copy_parameters(layer, shadow);
  zero_grads(layer);
  SavedTensors<float> saved;
  const Tensor y = layer.forward(x, &saved);
  Tensor r(y.shape());
  fill_uniform(r, rng, -1.0, 1.0);
  const Tensor dx = layer.backward(r, saved, ParamGrads::Accumulate);
  const TensorD rd = r.cast<double>();

  auto contract = [&](const TensorD& out) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += rd[i] * out[i];
    return s;
  };

  CaseResult result;
  const Shape xshape = x.shape();
  const auto x0 = to_doubles(x.values());
  merge(result, grad_check(
                    [&](std::span<const double> p) {
                      TensorD xd(xshape, std::vector<double>(p.begin(), p.end()));
                      return contract(shadow.forward(xd, nullptr));
                    },
                    x0, to_doubles(dx.values()), kGradCheckStep, tolerance));

  const TensorD xd = x.cast<double>();
  auto params = layer.parameters();
  auto shadow_params = shadow.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter<double>& target = *shadow_params[k];
    const TensorD original = target.value;
    merge(result, grad_check(
                      [&](std::span<const double> p) {
                        target.value = TensorD(original.shape(), std::vector<double>(p.begin(), p.end()));
                        return contract(shadow.forward(xd, nullptr));
                      },
                      to_doubles(params[k]->value.values()), to_doubles(params[k]->grad.values()), kGradCheckStep,
                      tolerance));
    target.value = original;
  }
  return result;
}

void randomize_parameters(BasicLayer<float>& layer, Rng& rng) {
  for (auto* p : layer.parameters()) fill_uniform(p->value, rng, -1.0, 1.0);
}

struct Tally {
  explicit Tally(std::string layer) { summary.layer = std::move(layer); }
  LayerCheckSummary summary;
  void add(const CaseResult& r, const std::string& description) {
    summary.cases += 1;
    if (!r.passed) summary.failed_cases += 1;
    if (summary.worst_case.empty() || r.worst > summary.max_rel_error) {
      summary.max_rel_error = r.worst;
      summary.worst_case = description;
    }
  }
};

LayerCheckSummary conv_cases(Rng& rng, std::size_t cases, double tol, bool transpose) {
  Tally tally(transpose ? "conv2d_transpose" : "conv2d");
  while (tally.summary.cases < cases) {
    const std::size_t n = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
    const std::size_t k = pick(rng, 1, 4), stride = pick(rng, 1, 2), pad = pick(rng, 0, k - 1);
    const std::size_t h = pick(rng, 2, 6), w = pick(rng, 2, 6);
    const ConvGeometry g{stride, pad};
    if (transpose) {
      if ((h - 1) * stride + k <= 2 * pad || (w - 1) * stride + k <= 2 * pad) continue;
    } else if (h + 2 * pad < k || w + 2 * pad < k) {
      continue;
    }
    Rng init(rng.next());
    std::unique_ptr<BasicLayer<float>> layer;
    std::unique_ptr<BasicLayer<double>> shadow;
    if (transpose) {
      layer = std::make_unique<ConvTranspose2d<float>>("t", cin, cout, k, g, init);
      shadow = std::make_unique<ConvTranspose2d<double>>("t", cin, cout, k, g, init);
    } else {
      layer = std::make_unique<Conv2d<float>>("c", cin, cout, k, g, init);
      shadow = std::make_unique<Conv2d<double>>("c", cin, cout, k, g, init);
    }
    randomize_parameters(*layer, rng);
    Tensor x({n, cin, h, w});
    fill_uniform(x, rng, -1.0, 1.0);
    const std::string desc = shape_case(x.shape(), "cout " + std::to_string(cout) + " k" + std::to_string(k) + " s" +
                                                       std::to_string(stride) + " p" + std::to_string(pad));
    tally.add(check_layer(*layer, *shadow, x, rng, tol), desc);
  }
  return tally.summary;
}

LayerCheckSummary instance_norm_cases(Rng& rng, std::size_t cases, double tol) {
  Tally tally("instance_norm");
  while (tally.summary.cases < cases) {
    const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 3), h = pick(rng, 2, 5), w = pick(rng, 2, 5);
    InstanceNorm2d<float> layer("n", c);
    InstanceNorm2d<double> shadow("n", c);
    for (auto& v : layer.scale().value.values()) v = static_cast<float>(0.5 + rng.uniform());
    fill_uniform(layer.shift().value, rng, -0.5, 0.5);
    // Central-difference truncation error grows as 1/variance of the plane,
    // so each plane is rescaled to a standard deviation in [1, 3]: the step
    // stays small relative to the spread, as a kink margin does for relu.
    Tensor x({n, c, h, w});
    fill_uniform(x, rng, -1.0, 1.0);
    const std::size_t hw = h * w;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
      float* v = x.data() + plane * hw;
      double mean = 0.0, var = 0.0;
      for (std::size_t i = 0; i < hw; ++i) mean += v[i];
      mean /= static_cast<double>(hw);
      for (std::size_t i = 0; i < hw; ++i) var += (v[i] - mean) * (v[i] - mean);
      const double sd = std::max(std::sqrt(var / static_cast<double>(hw)), 1e-6);
      const double target = 1.0 + 2.0 * rng.uniform(), offset = 2.0 * rng.uniform() - 1.0;
      for (std::size_t i = 0; i < hw; ++i) v[i] = static_cast<float>(offset + (v[i] - mean) * target / sd);
    }
    tally.add(check_layer(layer, shadow, x, rng, tol), shape_case(x.shape(), ""));
  }
  return tally.summary;
}

LayerCheckSummary activation_cases(Rng& rng, std::size_t cases, double tol, Activation kind, const char* name) {
  Tally tally(name);
  while (tally.summary.cases < cases) {
    const Shape shape{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)};
    ActivationLayer<float> layer(kind);
    ActivationLayer<double> shadow(kind);
    Tensor x(shape);
    if (kind == Activation::ReLU || kind == Activation::LeakyReLU) {
      fill_away_from_zero(x, rng, 0.05, 2.0);
    } else {
      fill_uniform(x, rng, -3.0, 3.0);
    }
    tally.add(check_layer(layer, shadow, x, rng, tol), shape_case(shape, ""));
  }
  return tally.summary;
}

LayerCheckSummary mse_cases(Rng& rng, std::size_t cases, double tol) {
  Tally tally("mse_to_constant");
  while (tally.summary.cases < cases) {
    const Shape shape{pick(rng, 1, 2), 1, pick(rng, 1, 6), pick(rng, 1, 6)};
    const double c = rng.uniform() < 0.5 ? 0.0 : 1.0;
    Tensor t(shape);
    fill_uniform(t, rng, -1.0, 2.0);
    const auto loss = mse_to_constant(t, c);
    const auto report = grad_check(
        [&](std::span<const double> p) {
          return mse_to_constant(TensorD(shape, std::vector<double>(p.begin(), p.end())), c).value;
        },
        to_doubles(t.values()), to_doubles(loss.grad.values()), kGradCheckStep, tol);
    CaseResult r;
    merge(r, report);
    tally.add(r, shape_case(shape, "c=" + std::to_string(static_cast<int>(c))));
  }
  return tally.summary;
}

LayerCheckSummary l1_cases(Rng& rng, std::size_t cases, double tol) {
  Tally tally("l1_diff");
  while (tally.summary.cases < cases) {
    const Shape shape{pick(rng, 1, 2), 1, pick(rng, 1, 6), pick(rng, 1, 6)};
    Tensor b(shape);
    fill_uniform(b, rng, 0.0, 1.0);
    Tensor delta(shape);
    fill_away_from_zero(delta, rng, 0.05, 1.0);
    Tensor a = b;
    a += delta;
    const auto loss = l1_diff(a, b);
    const TensorD bd = b.cast<double>();
    const auto report = grad_check(
        [&](std::span<const double> p) {
          return l1_diff(TensorD(shape, std::vector<double>(p.begin(), p.end())), bd).value;
        },
        to_doubles(a.values()), to_doubles(loss.grad.values()), kGradCheckStep, tol);
    CaseResult r;
    merge(r, report);
    tally.add(r, shape_case(shape, ""));
  }
  return tally.summary;
}

}  // namespace

std::vector<LayerCheckSummary> run_gradcheck_suite(std::uint64_t seed, std::size_t cases, double tolerance) {
  std::vector<LayerCheckSummary> out;
  std::uint64_t stream = 0;
  auto next_rng = [&] { return Rng(mix_seed(seed, stream++)); };
  {
    Rng rng = next_rng();
    out.push_back(conv_cases(rng, cases, tolerance, false));
  }
  {
    Rng rng = next_rng();
    out.push_back(conv_cases(rng, cases, tolerance, true));
  }
  {
    Rng rng = next_rng();
    out.push_back(instance_norm_cases(rng, cases, tolerance));
  }
  const std::pair<Activation, const char*> activations[] = {{Activation::ReLU, "relu"},
                                                            {Activation::LeakyReLU, "leaky_relu"},
                                                            {Activation::Sigmoid, "sigmoid"},
                                                            {Activation::Tanh, "tanh"}};
  for (const auto& [kind, name] : activations) {
    Rng rng = next_rng();
    out.push_back(activation_cases(rng, cases, tolerance, kind, name));
  }
  {
    Rng rng = next_rng();
    out.push_back(mse_cases(rng, cases, tolerance));
  }
  {
    Rng rng = next_rng();
    out.push_back(l1_cases(rng, cases, tolerance));
  }
  return out;
}

}  // namespace mst::nn
