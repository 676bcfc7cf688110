#include "mst/nn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mst::nn {

std::size_t conv_output_size(std::size_t in, std::size_t kernel, ConvGeometry g) {
  if (g.stride == 0 || kernel == 0 || kernel > in + 2 * g.pad) {
    throw NnError(NnErrc::ShapeMismatch, "kernel " + std::to_string(kernel) + " does not fit input " +
                                             std::to_string(in) + " with padding " + std::to_string(g.pad));
  }
  return (in + 2 * g.pad - kernel) / g.stride + 1;
}

std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel, ConvGeometry g) {
  if (g.stride == 0 || kernel == 0 || in == 0 || (in - 1) * g.stride + kernel <= 2 * g.pad) {
    throw NnError(NnErrc::ShapeMismatch, "transposed conv output would be empty");
  }
  return (in - 1) * g.stride + kernel - 2 * g.pad;
}

namespace {

constexpr std::size_t kLanes = 8;

double reduce_lanes(const double (&l)[kLanes]) {
  return ((l[0] + l[1]) + (l[2] + l[3])) + ((l[4] + l[5]) + (l[6] + l[7]));
}

// Sum of term(0..n-1) in a fixed eight-lane order (element i feeds lane i % 8).
template <typename F>
double lane_sum(std::size_t n, F&& term) {
  double lanes[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) lanes[j] += term(i + j);
  }
  for (std::size_t j = 0; i < n; ++i, ++j) lanes[j] += term(i);
  return reduce_lanes(lanes);
}

template <typename T>
void check_conv_operands(const BasicTensor<T>& x, const BasicTensor<T>& w, const char* what) {
  require_rank4(x, what);
  require_rank4(w, what);
  if (w.dim(2) != w.dim(3)) throw NnError(NnErrc::ShapeMismatch, std::string(what) + ": kernel must be square");
}


// Each [H, W] plane of a rank-4 tensor copied to double with `lo` zero rows
// and columns before and `hi` after.
struct PaddedPlanes {
  std::vector<double> data;
  std::size_t height = 0;
  std::size_t width = 0;
  [[nodiscard]] const double* plane(std::size_t p) const { return data.data() + p * height * width; }
};

template <typename T>
PaddedPlanes pad_planes(const BasicTensor<T>& x, std::size_t lo, std::size_t hi) {
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  PaddedPlanes out;
  out.height = h + lo + hi;
  out.width = w + lo + hi;
  out.data.assign(planes * out.height * out.width, 0.0);
  const T* src = x.data();
#pragma omp parallel for schedule(static)
  for (long p = 0; p < static_cast<long>(planes); ++p) {
    const auto pp = static_cast<std::size_t>(p);
    for (std::size_t r = 0; r < h; ++r) {
      double* dst = out.data.data() + (pp * out.height + r + lo) * out.width + lo;
      const T* row = src + (pp * h + r) * w;
      for (std::size_t c = 0; c < w; ++c) dst[c] = static_cast<double>(row[c]);
    }
  }
  return out;
}

template <typename T>
std::vector<double> to_double(const BasicTensor<T>& t) {
  return std::vector<double>(t.values().begin(), t.values().end());
}

struct Source {
  const double* data;  // element feeding output (0, 0), tap (0, 0)
  std::size_t width;   // row pitch
  std::size_t stride;
};

// acc[r][c] += sum over (u, v) of wk[u][v] * src[r*stride + u][c*stride + v].
// The taps of one output are summed in registers, row by row, before being
// added to acc, so the order is fixed per element.
using Correlate = void (*)(Source, const double*, std::size_t, std::size_t, double*, std::size_t, std::size_t);

template <std::size_t KH, std::size_t KW, std::size_t S>
void correlate_fixed(Source src, const double* wk, std::size_t, std::size_t, double* acc, std::size_t oh,
                     std::size_t ow) {
  double taps[KH * KW];
  std::copy_n(wk, KH * KW, taps);
  const std::size_t pitch = src.width;
  for (std::size_t r = 0; r < oh; ++r) {
    const double* __restrict base = src.data + r * S * pitch;
    double* __restrict arow = acc + r * ow;
    for (std::size_t c = 0; c < ow; ++c) {
      double sum = 0.0;
      for (std::size_t u = 0; u < KH; ++u) {
        for (std::size_t v = 0; v < KW; ++v) sum += taps[u * KW + v] * base[u * pitch + c * S + v];
      }
      arow[c] += sum;
    }
  }
}

void correlate_any(Source src, const double* wk, std::size_t kh, std::size_t kw, double* acc, std::size_t oh,
                   std::size_t ow) {
  for (std::size_t r = 0; r < oh; ++r) {
    const double* base = src.data + r * src.stride * src.width;
    double* arow = acc + r * ow;
    for (std::size_t c = 0; c < ow; ++c) {
      double sum = 0.0;
      for (std::size_t u = 0; u < kh; ++u) {
        const double* row = base + u * src.width + c * src.stride;
        for (std::size_t v = 0; v < kw; ++v) sum += wk[u * kw + v] * row[v];
      }
      arow[c] += sum;
    }
  }
}

Correlate pick_correlate(std::size_t kh, std::size_t kw, std::size_t stride) {
#define MST_FIXED(a, b, s) \
  if (kh == (a) && kw == (b) && stride == (s)) return &correlate_fixed<a, b, s>;
  MST_FIXED(1, 1, 1)
  MST_FIXED(1, 2, 1)
  MST_FIXED(2, 1, 1)
  MST_FIXED(2, 2, 1)
  MST_FIXED(3, 3, 1)
  MST_FIXED(3, 3, 2)
  MST_FIXED(4, 4, 1)
  MST_FIXED(4, 4, 2)
  MST_FIXED(7, 7, 1)
#undef MST_FIXED
  return &correlate_any;
}

}  // namespace

namespace kernels {

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>* bias,
                              ConvGeometry g) {
  check_conv_operands(x, w, "conv2d");
  const std::size_t n_batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t c_out = w.dim(0), k = w.dim(2);
  if (w.dim(1) != c_in) {
    throw NnError(NnErrc::ShapeMismatch, "conv2d: input has " + std::to_string(c_in) + " channels, kernel expects " +
                                             std::to_string(w.dim(1)));
  }
  if (bias != nullptr && bias->size() != c_out) throw NnError(NnErrc::ShapeMismatch, "conv2d: bias size");
  const std::size_t oh = conv_output_size(h, k, g), ow = conv_output_size(wd, k, g);
  BasicTensor<T> y({n_batch, c_out, oh, ow});
  const PaddedPlanes xp = pad_planes(x, g.pad, g.pad);
  const std::vector<double> wk = to_double(w);
  const Correlate correlate = pick_correlate(k, k, g.stride);
  T* yd = y.data();
  const auto planes = static_cast<long>(n_batch * c_out);

#pragma omp parallel
  {
    std::vector<double> acc(oh * ow);
#pragma omp for schedule(static)
    for (long plane = 0; plane < planes; ++plane) {
      const std::size_t n = static_cast<std::size_t>(plane) / c_out;
      const std::size_t co = static_cast<std::size_t>(plane) % c_out;
      std::fill(acc.begin(), acc.end(), bias != nullptr ? static_cast<double>((*bias)[co]) : 0.0);
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        correlate({xp.plane(n * c_in + ci), xp.width, g.stride}, wk.data() + (co * c_in + ci) * k * k, k, k,
                  acc.data(), oh, ow);
      }
      T* yplane = yd + (n * c_out + co) * oh * ow;
      for (std::size_t i = 0; i < oh * ow; ++i) yplane[i] = static_cast<T>(acc[i]);
    }
  }
  return y;
}

namespace {

// Output phase (pa, pb) of a strided backward-data pass: dx rows pa, pa + s,
// ... and columns pb, pb + s, ... receive exactly the kernel taps
// kh = kh0 + s*t (and likewise kw), which turns the phase into a stride-1
// correlation of the padded gradient with a small flipped sub-kernel.
struct PhaseTaps {
  std::size_t first = 0;   // kh0
  std::size_t count = 0;   // taps in this phase
  std::size_t offset = 0;  // padded source index of output 0, tap 0 (after the flip)
  std::size_t outputs = 0; // number of dx rows (or columns) in the phase
};

PhaseTaps phase_taps(std::size_t phase, std::size_t in, std::size_t k, ConvGeometry g, std::size_t src_pad) {
  PhaseTaps t;
  t.first = (phase + g.pad) % g.stride;
  t.count = t.first < k ? (k - 1 - t.first) / g.stride + 1 : 0;
  t.outputs = phase < in ? (in - 1 - phase) / g.stride + 1 : 0;
  // Source row for output i', tap t is i' + q - t with q = (phase + pad - kh0) / s;
  // after flipping u = count - 1 - t it is i' + (q - count + 1) + u.
  const std::size_t q = (phase + g.pad - t.first) / g.stride;
  t.offset = src_pad + q + 1 - t.count;
  return t;
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_backward_data(const BasicTensor<T>& dy, const BasicTensor<T>& w, std::size_t in_h,
                                    std::size_t in_w, ConvGeometry g) {
  check_conv_operands(dy, w, "conv2d_backward_data");
  const std::size_t n_batch = dy.dim(0), c_out = dy.dim(1), oh = dy.dim(2), ow = dy.dim(3);
  const std::size_t c_in = w.dim(1), k = w.dim(2);
  if (w.dim(0) != c_out) throw NnError(NnErrc::ShapeMismatch, "conv2d_backward_data: channel mismatch");
  if (conv_output_size(in_h, k, g) != oh || conv_output_size(in_w, k, g) != ow) {
    throw NnError(NnErrc::ShapeMismatch, "conv2d_backward_data: gradient " + shape_string(dy.shape()) +
                                             " does not match input size " + std::to_string(in_h) + "x" +
                                             std::to_string(in_w));
  }
  BasicTensor<T> dx({n_batch, c_in, in_h, in_w});
  const std::size_t s = g.stride;
  // Padding k on every side covers every source index a phase can reach.
  const PaddedPlanes gp = pad_planes(dy, k, k + s);

  // Flipped sub-kernels, laid out [phase][c_out][c_in][count_h][count_w].
  struct Phase {
    std::size_t pa, pb;
    PhaseTaps rows, cols;
    std::vector<double> weights;
    Correlate correlate;
  };
  std::vector<Phase> phases;
  for (std::size_t pa = 0; pa < s; ++pa) {
    for (std::size_t pb = 0; pb < s; ++pb) {
      Phase ph{pa, pb, phase_taps(pa, in_h, k, g, k), phase_taps(pb, in_w, k, g, k), {}, nullptr};
      const std::size_t th = ph.rows.count, tw = ph.cols.count;
      ph.weights.resize(c_out * c_in * th * tw);
      for (std::size_t co = 0; co < c_out; ++co) {
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          double* sub = ph.weights.data() + (co * c_in + ci) * th * tw;
          for (std::size_t u = 0; u < th; ++u) {
            for (std::size_t v = 0; v < tw; ++v) {
              const std::size_t kh = ph.rows.first + s * (th - 1 - u), kw = ph.cols.first + s * (tw - 1 - v);
              sub[u * tw + v] = static_cast<double>(w[((co * c_in + ci) * k + kh) * k + kw]);
            }
          }
        }
      }
      ph.correlate = pick_correlate(th, tw, 1);
      phases.push_back(std::move(ph));
    }
  }

  T* dxd = dx.data();
  const auto planes = static_cast<long>(n_batch * c_in);
#pragma omp parallel
  {
    std::vector<double> acc;
#pragma omp for schedule(static)
    for (long plane = 0; plane < planes; ++plane) {
      const std::size_t n = static_cast<std::size_t>(plane) / c_in;
      const std::size_t ci = static_cast<std::size_t>(plane) % c_in;
      T* xplane = dxd + (n * c_in + ci) * in_h * in_w;
      for (const Phase& ph : phases) {
        const std::size_t rh = ph.rows.outputs, rw = ph.cols.outputs;
        if (rh == 0 || rw == 0) continue;
        acc.assign(rh * rw, 0.0);
        const std::size_t th = ph.rows.count, tw = ph.cols.count;
        if (th != 0 && tw != 0) {
          for (std::size_t co = 0; co < c_out; ++co) {
            const double* src = gp.plane(n * c_out + co) + ph.rows.offset * gp.width + ph.cols.offset;
            ph.correlate({src, gp.width, 1}, ph.weights.data() + (co * c_in + ci) * th * tw, th, tw, acc.data(), rh,
                         rw);
          }
        }
        for (std::size_t i = 0; i < rh; ++i) {
          T* xrow = xplane + (i * s + ph.pa) * in_w + ph.pb;
          for (std::size_t j = 0; j < rw; ++j) xrow[j * s] = static_cast<T>(acc[i * rw + j]);
        }
      }
    }
  }
  return dx;
}

template <typename T>
ConvWeightGrads<T> conv2d_backward_weights(const BasicTensor<T>& x, const BasicTensor<T>& dy, std::size_t k,
                                           ConvGeometry g) {
  require_rank4(x, "conv2d_backward_weights");
  require_rank4(dy, "conv2d_backward_weights");
  const std::size_t n_batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t c_out = dy.dim(1), oh = dy.dim(2), ow = dy.dim(3);
  if (dy.dim(0) != n_batch || conv_output_size(h, k, g) != oh || conv_output_size(wd, k, g) != ow) {
    throw NnError(NnErrc::ShapeMismatch, "conv2d_backward_weights: input " + shape_string(x.shape()) +
                                             " and gradient " + shape_string(dy.shape()) + " disagree");
  }
  ConvWeightGrads<T> out{BasicTensor<T>({c_out, c_in, k, k}), BasicTensor<T>({c_out})};
  const PaddedPlanes xp = pad_planes(x, g.pad, g.pad);
  const std::vector<double> gd = to_double(dy);
  const std::size_t s = g.stride;
  // One task per weight; eight independent partial sums (column c feeds lane
  // c % 8) break the add dependency chain. The order is fixed, so results are
  // exact across thread counts.
  const auto taps = static_cast<long>(c_out * c_in * k * k);
#pragma omp parallel for schedule(static)
  for (long tap = 0; tap < taps; ++tap) {
    const auto t = static_cast<std::size_t>(tap);
    const std::size_t kw = t % k, kh = (t / k) % k, ci = (t / (k * k)) % c_in, co = t / (k * k * c_in);
    double l[kLanes] = {};
    for (std::size_t n = 0; n < n_batch; ++n) {
      const double* xplane = xp.plane(n * c_in + ci) + kh * xp.width + kw;
      const double* gplane = gd.data() + (n * c_out + co) * oh * ow;
      for (std::size_t r = 0; r < oh; ++r) {
        const double* grow = gplane + r * ow;
        const double* xs = xplane + r * s * xp.width;
        std::size_t c = 0;
        if (s == 1) {
          for (; c + kLanes <= ow; c += kLanes) {
            for (std::size_t j = 0; j < kLanes; ++j) l[j] += grow[c + j] * xs[c + j];
          }
        } else {
          for (; c + kLanes <= ow; c += kLanes) {
            for (std::size_t j = 0; j < kLanes; ++j) l[j] += grow[c + j] * xs[(c + j) * s];
          }
        }
        for (std::size_t j = 0; c < ow; ++c, ++j) l[j] += grow[c] * xs[c * s];
      }
    }
    out.weight[t] = static_cast<T>(reduce_lanes(l));
  }

#pragma omp parallel for schedule(static)
  for (long co = 0; co < static_cast<long>(c_out); ++co) {
    double acc = 0.0;
    for (std::size_t n = 0; n < n_batch; ++n) {
      const double* gplane = gd.data() + (n * c_out + static_cast<std::size_t>(co)) * oh * ow;
      acc += lane_sum(oh * ow, [&](std::size_t i) { return gplane[i]; });
    }
    out.bias[static_cast<std::size_t>(co)] = static_cast<T>(acc);
  }
  return out;
}

template <typename T>
BasicTensor<T> instance_norm_forward(const BasicTensor<T>& x, const BasicTensor<T>& scale,
                                     const BasicTensor<T>& shift, double eps, InstanceNormCache<T>* cache) {
  require_rank4(x, "instance_norm");
  const std::size_t n_batch = x.dim(0), channels = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (hw < 2) throw NnError(NnErrc::DegenerateSpatial, "instance_norm needs H*W >= 2, got " + std::to_string(hw));
  if (scale.size() != channels || shift.size() != channels) {
    throw NnError(NnErrc::ShapeMismatch, "instance_norm: affine parameters must have " + std::to_string(channels) +
                                             " entries");
  }
  BasicTensor<T> y(x.shape());
  BasicTensor<T> normalized;
  std::vector<double> inv_std(n_batch * channels);
  if (cache != nullptr) normalized = BasicTensor<T>(x.shape());
  const auto planes = static_cast<long>(n_batch * channels);

#pragma omp parallel for schedule(static)
  for (long plane = 0; plane < planes; ++plane) {
    const auto p = static_cast<std::size_t>(plane);
    const std::size_t c = p % channels;
    const T* xp = x.data() + p * hw;
    const double mean = lane_sum(hw, [&](std::size_t i) { return static_cast<double>(xp[i]); }) /
                        static_cast<double>(hw);
    const double var = lane_sum(hw, [&](std::size_t i) {
                         const double d = static_cast<double>(xp[i]) - mean;
                         return d * d;
                       }) /
                       static_cast<double>(hw);
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[p] = istd;
    const double a = static_cast<double>(scale[c]);
    const double b = static_cast<double>(shift[c]);
    T* yp = y.data() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      const double xhat = (static_cast<double>(xp[i]) - mean) * istd;
      yp[i] = static_cast<T>(a * xhat + b);
      if (cache != nullptr) normalized.data()[p * hw + i] = static_cast<T>(xhat);
    }
  }
  if (cache != nullptr) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename T>
InstanceNormGrads<T> instance_norm_backward(const BasicTensor<T>& dy, const InstanceNormCache<T>& cache,
                                            const BasicTensor<T>& scale) {
  dy.require_same_shape(cache.normalized, "instance_norm_backward");
  const std::size_t n_batch = dy.dim(0), channels = dy.dim(1), hw = dy.dim(2) * dy.dim(3);
  InstanceNormGrads<T> out{BasicTensor<T>(dy.shape()), BasicTensor<T>({channels}), BasicTensor<T>({channels})};
  const auto planes = static_cast<long>(n_batch * channels);
  const double inv_count = 1.0 / static_cast<double>(hw);

#pragma omp parallel for schedule(static)
  for (long plane = 0; plane < planes; ++plane) {
    const auto p = static_cast<std::size_t>(plane);
    const std::size_t c = p % channels;
    const T* g = dy.data() + p * hw;
    const T* xh = cache.normalized.data() + p * hw;
    const double sum_g = lane_sum(hw, [&](std::size_t i) { return static_cast<double>(g[i]); });
    const double sum_gx =
        lane_sum(hw, [&](std::size_t i) { return static_cast<double>(g[i]) * static_cast<double>(xh[i]); });
    const double a = static_cast<double>(scale[c]) * cache.inv_std[p];
    T* dx = out.input.data() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      dx[i] = static_cast<T>(a * (static_cast<double>(g[i]) - inv_count * sum_g -
                                  static_cast<double>(xh[i]) * inv_count * sum_gx));
    }
  }

#pragma omp parallel for schedule(static)
  for (long c = 0; c < static_cast<long>(channels); ++c) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t n = 0; n < n_batch; ++n) {
      const std::size_t p = n * channels + static_cast<std::size_t>(c);
      const T* g = dy.data() + p * hw;
      const T* xh = cache.normalized.data() + p * hw;
      sum_g += lane_sum(hw, [&](std::size_t i) { return static_cast<double>(g[i]); });
      sum_gx += lane_sum(hw, [&](std::size_t i) { return static_cast<double>(g[i]) * static_cast<double>(xh[i]); });
    }
    out.shift[static_cast<std::size_t>(c)] = static_cast<T>(sum_g);
    out.scale[static_cast<std::size_t>(c)] = static_cast<T>(sum_gx);
  }
  return out;
}

#define MST_INSTANTIATE(T)                                                                                         \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>*,     \
                                         ConvGeometry);                                                            \
  template BasicTensor<T> conv2d_backward_data(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t,         \
                                               std::size_t, ConvGeometry);                                         \
  template ConvWeightGrads<T> conv2d_backward_weights(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t,  \
                                                      ConvGeometry);                                               \
  template BasicTensor<T> instance_norm_forward(const BasicTensor<T>&, const BasicTensor<T>&,                     \
                                                const BasicTensor<T>&, double, InstanceNormCache<T>*);             \
  template InstanceNormGrads<T> instance_norm_backward(const BasicTensor<T>&, const InstanceNormCache<T>&,        \
                                                       const BasicTensor<T>&);

MST_INSTANTIATE(float)
MST_INSTANTIATE(double)
#undef MST_INSTANTIATE

}  // namespace kernels

template <typename T>
BasicTensor<T> conv2d_transpose_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>* bias,
                                        ConvGeometry g) {
  check_conv_operands(x, w, "conv2d_transpose");
  if (w.dim(0) != x.dim(1)) {
    throw NnError(NnErrc::ShapeMismatch, "conv2d_transpose: input has " + std::to_string(x.dim(1)) +
                                             " channels, kernel expects " + std::to_string(w.dim(0)));
  }
  const std::size_t k = w.dim(2);
  const std::size_t oh = conv_transpose_output_size(x.dim(2), k, g);
  const std::size_t ow = conv_transpose_output_size(x.dim(3), k, g);
  BasicTensor<T> y = kernels::conv2d_backward_data(x, w, oh, ow, g);
  if (bias != nullptr) {
    const std::size_t c_out = w.dim(1);
    if (bias->size() != c_out) throw NnError(NnErrc::ShapeMismatch, "conv2d_transpose: bias size");
    const std::size_t plane = oh * ow;
    for (std::size_t n = 0; n < y.dim(0); ++n) {
      for (std::size_t c = 0; c < c_out; ++c) {
        T* p = y.data() + (n * c_out + c) * plane;
        const T b = (*bias)[c];
        for (std::size_t i = 0; i < plane; ++i) p[i] += b;
      }
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> conv2d_transpose_backward_data(const BasicTensor<T>& dy, const BasicTensor<T>& w, ConvGeometry g) {
  return kernels::conv2d_forward(dy, w, static_cast<const BasicTensor<T>*>(nullptr), g);
}

template <typename T>
ConvWeightGrads<T> conv2d_transpose_backward_weights(const BasicTensor<T>& x, const BasicTensor<T>& dy, std::size_t k,
                                                     ConvGeometry g) {
  ConvWeightGrads<T> swapped = kernels::conv2d_backward_weights(dy, x, k, g);
  const std::size_t c_out = dy.dim(1), plane = dy.dim(2) * dy.dim(3);
  BasicTensor<T> bias({c_out});
  for (std::size_t c = 0; c < c_out; ++c) {
    double acc = 0.0;
    for (std::size_t n = 0; n < dy.dim(0); ++n) {
      const T* p = dy.data() + (n * c_out + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(p[i]);
    }
    bias[c] = static_cast<T>(acc);
  }
  return {std::move(swapped.weight), std::move(bias)};
}

template BasicTensor<float> conv2d_transpose_forward(const BasicTensor<float>&, const BasicTensor<float>&,
                                                     const BasicTensor<float>*, ConvGeometry);
template BasicTensor<double> conv2d_transpose_forward(const BasicTensor<double>&, const BasicTensor<double>&,
                                                      const BasicTensor<double>*, ConvGeometry);
template BasicTensor<float> conv2d_transpose_backward_data(const BasicTensor<float>&, const BasicTensor<float>&,
                                                           ConvGeometry);
template BasicTensor<double> conv2d_transpose_backward_data(const BasicTensor<double>&, const BasicTensor<double>&,
                                                            ConvGeometry);
template ConvWeightGrads<float> conv2d_transpose_backward_weights(const BasicTensor<float>&,
                                                                  const BasicTensor<float>&, std::size_t,
                                                                  ConvGeometry);
template ConvWeightGrads<double> conv2d_transpose_backward_weights(const BasicTensor<double>&,
                                                                   const BasicTensor<double>&, std::size_t,
                                                                   ConvGeometry);

}  // namespace mst::nn
