// Serial transcriptions of the kernel definitions. Every output element is
// computed straight from its defining sum; no loop reordering or scatter.

#include <cmath>

#include "mst/nn/kernels.hpp"

namespace mst::nn::reference {

namespace {

// Input coordinate that output o reads through kernel tap k, or -1 if it is padding.
long tap(std::size_t o, std::size_t k, ConvGeometry g, std::size_t in) {
  const long i = static_cast<long>(o * g.stride + k) - static_cast<long>(g.pad);
  return (i >= 0 && i < static_cast<long>(in)) ? i : -1;
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>* bias,
                              ConvGeometry g) {
  require_rank4(x, "reference::conv2d");
  require_rank4(w, "reference::conv2d");
  if (w.dim(1) != x.dim(1)) throw NnError(NnErrc::ShapeMismatch, "reference::conv2d: channel mismatch");
  const std::size_t k = w.dim(2);
  const std::size_t oh = conv_output_size(x.dim(2), k, g), ow = conv_output_size(x.dim(3), k, g);
  BasicTensor<T> y({x.dim(0), w.dim(0), oh, ow});
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    for (std::size_t co = 0; co < w.dim(0); ++co) {
      for (std::size_t r = 0; r < oh; ++r) {
        for (std::size_t c = 0; c < ow; ++c) {
          double sum = bias != nullptr ? static_cast<double>((*bias)[co]) : 0.0;
          for (std::size_t ci = 0; ci < x.dim(1); ++ci) {
            for (std::size_t kh = 0; kh < k; ++kh) {
              for (std::size_t kw = 0; kw < k; ++kw) {
                const long ih = tap(r, kh, g, x.dim(2));
                const long iw = tap(c, kw, g, x.dim(3));
                if (ih < 0 || iw < 0) continue;
                sum += static_cast<double>(w.at(co, ci, kh, kw)) *
                       static_cast<double>(x.at(n, ci, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw)));
              }
            }
          }
          y.at(n, co, r, c) = static_cast<T>(sum);
        }
      }
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> conv2d_backward_data(const BasicTensor<T>& dy, const BasicTensor<T>& w, std::size_t in_h,
                                    std::size_t in_w, ConvGeometry g) {
  require_rank4(dy, "reference::conv2d_backward_data");
  require_rank4(w, "reference::conv2d_backward_data");
  const std::size_t k = w.dim(2);
  if (w.dim(0) != dy.dim(1) || conv_output_size(in_h, k, g) != dy.dim(2) || conv_output_size(in_w, k, g) != dy.dim(3)) {
    throw NnError(NnErrc::ShapeMismatch, "reference::conv2d_backward_data: shapes disagree");
  }
  BasicTensor<T> dx({dy.dim(0), w.dim(1), in_h, in_w});
  // dx[n][ci][i][j] = sum over (co, kh, kw) with (i + pad - kh) = r * stride, (j + pad - kw) = c * stride.
  for (std::size_t n = 0; n < dy.dim(0); ++n) {
    for (std::size_t ci = 0; ci < w.dim(1); ++ci) {
      for (std::size_t i = 0; i < in_h; ++i) {
        for (std::size_t j = 0; j < in_w; ++j) {
          double sum = 0.0;
          for (std::size_t co = 0; co < w.dim(0); ++co) {
            for (std::size_t kh = 0; kh < k; ++kh) {
              const long rs = static_cast<long>(i + g.pad) - static_cast<long>(kh);
              if (rs < 0 || rs % static_cast<long>(g.stride) != 0) continue;
              const auto r = static_cast<std::size_t>(rs) / g.stride;
              if (r >= dy.dim(2)) continue;
              for (std::size_t kw = 0; kw < k; ++kw) {
                const long cs = static_cast<long>(j + g.pad) - static_cast<long>(kw);
                if (cs < 0 || cs % static_cast<long>(g.stride) != 0) continue;
                const auto c = static_cast<std::size_t>(cs) / g.stride;
                if (c >= dy.dim(3)) continue;
                sum += static_cast<double>(w.at(co, ci, kh, kw)) * static_cast<double>(dy.at(n, co, r, c));
              }
            }
          }
          dx.at(n, ci, i, j) = static_cast<T>(sum);
        }
      }
    }
  }
  return dx;
}

template <typename T>
ConvWeightGrads<T> conv2d_backward_weights(const BasicTensor<T>& x, const BasicTensor<T>& dy, std::size_t k,
                                           ConvGeometry g) {
  require_rank4(x, "reference::conv2d_backward_weights");
  require_rank4(dy, "reference::conv2d_backward_weights");
  if (conv_output_size(x.dim(2), k, g) != dy.dim(2) || conv_output_size(x.dim(3), k, g) != dy.dim(3)) {
    throw NnError(NnErrc::ShapeMismatch, "reference::conv2d_backward_weights: shapes disagree");
  }
  ConvWeightGrads<T> out{BasicTensor<T>({dy.dim(1), x.dim(1), k, k}), BasicTensor<T>({dy.dim(1)})};
  for (std::size_t co = 0; co < dy.dim(1); ++co) {
    for (std::size_t ci = 0; ci < x.dim(1); ++ci) {
      for (std::size_t kh = 0; kh < k; ++kh) {
        for (std::size_t kw = 0; kw < k; ++kw) {
          double sum = 0.0;
          for (std::size_t n = 0; n < x.dim(0); ++n) {
            for (std::size_t r = 0; r < dy.dim(2); ++r) {
              for (std::size_t c = 0; c < dy.dim(3); ++c) {
                const long ih = tap(r, kh, g, x.dim(2));
                const long iw = tap(c, kw, g, x.dim(3));
                if (ih < 0 || iw < 0) continue;
                sum += static_cast<double>(dy.at(n, co, r, c)) *
                       static_cast<double>(x.at(n, ci, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw)));
              }
            }
          }
          out.weight.at(co, ci, kh, kw) = static_cast<T>(sum);
        }
      }
    }
    double bsum = 0.0;
    for (std::size_t n = 0; n < dy.dim(0); ++n) {
      for (std::size_t r = 0; r < dy.dim(2); ++r) {
        for (std::size_t c = 0; c < dy.dim(3); ++c) bsum += static_cast<double>(dy.at(n, co, r, c));
      }
    }
    out.bias[co] = static_cast<T>(bsum);
  }
  return out;
}

template <typename T>
BasicTensor<T> instance_norm_forward(const BasicTensor<T>& x, const BasicTensor<T>& scale,
                                     const BasicTensor<T>& shift, double eps, InstanceNormCache<T>* cache) {
  require_rank4(x, "reference::instance_norm");
  const std::size_t hw = x.dim(2) * x.dim(3);
  if (hw < 2) throw NnError(NnErrc::DegenerateSpatial, "reference::instance_norm needs H*W >= 2");
  BasicTensor<T> y(x.shape());
  BasicTensor<T> normalized(x.shape());
  std::vector<double> inv_std;
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    for (std::size_t c = 0; c < x.dim(1); ++c) {
      double mean = 0.0;
      for (std::size_t i = 0; i < x.dim(2); ++i) {
        for (std::size_t j = 0; j < x.dim(3); ++j) mean += static_cast<double>(x.at(n, c, i, j));
      }
      mean /= static_cast<double>(hw);
      double var = 0.0;
      for (std::size_t i = 0; i < x.dim(2); ++i) {
        for (std::size_t j = 0; j < x.dim(3); ++j) {
          const double d = static_cast<double>(x.at(n, c, i, j)) - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(hw);
      const double istd = 1.0 / std::sqrt(var + eps);
      inv_std.push_back(istd);
      for (std::size_t i = 0; i < x.dim(2); ++i) {
        for (std::size_t j = 0; j < x.dim(3); ++j) {
          const double xhat = (static_cast<double>(x.at(n, c, i, j)) - mean) * istd;
          normalized.at(n, c, i, j) = static_cast<T>(xhat);
          y.at(n, c, i, j) = static_cast<T>(static_cast<double>(scale[c]) * xhat + static_cast<double>(shift[c]));
        }
      }
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
  // Full Jacobian contraction: dx_i = sum_j dy_j * scale * d xhat_j / d x_i with
  // d xhat_j / d x_i = inv_std * (delta_ij - 1/N - xhat_i xhat_j / N).
  const std::size_t channels = dy.dim(1), hw = dy.dim(2) * dy.dim(3);
  const auto count = static_cast<double>(hw);
  InstanceNormGrads<T> out{BasicTensor<T>(dy.shape()), BasicTensor<T>({channels}), BasicTensor<T>({channels})};
  std::vector<double> dscale(channels, 0.0), dshift(channels, 0.0);
  for (std::size_t n = 0; n < dy.dim(0); ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (n * channels + c) * hw;
      const double istd = cache.inv_std[n * channels + c];
      for (std::size_t i = 0; i < hw; ++i) {
        const double xi = static_cast<double>(cache.normalized[base + i]);
        double sum = 0.0;
        for (std::size_t j = 0; j < hw; ++j) {
          const double xj = static_cast<double>(cache.normalized[base + j]);
          const double jac = istd * ((i == j ? 1.0 : 0.0) - 1.0 / count - xi * xj / count);
          sum += static_cast<double>(dy[base + j]) * static_cast<double>(scale[c]) * jac;
        }
        out.input[base + i] = static_cast<T>(sum);
        dscale[c] += static_cast<double>(dy[base + i]) * xi;
        dshift[c] += static_cast<double>(dy[base + i]);
      }
    }
  }
  for (std::size_t c = 0; c < channels; ++c) {
    out.scale[c] = static_cast<T>(dscale[c]);
    out.shift[c] = static_cast<T>(dshift[c]);
  }
  return out;
}

template BasicTensor<float> conv2d_forward(const BasicTensor<float>&, const BasicTensor<float>&,
                                           const BasicTensor<float>*, ConvGeometry);
template BasicTensor<double> conv2d_forward(const BasicTensor<double>&, const BasicTensor<double>&,
                                            const BasicTensor<double>*, ConvGeometry);
template BasicTensor<float> conv2d_backward_data(const BasicTensor<float>&, const BasicTensor<float>&, std::size_t,
                                                 std::size_t, ConvGeometry);
template BasicTensor<double> conv2d_backward_data(const BasicTensor<double>&, const BasicTensor<double>&, std::size_t,
                                                  std::size_t, ConvGeometry);
template ConvWeightGrads<float> conv2d_backward_weights(const BasicTensor<float>&, const BasicTensor<float>&,
                                                        std::size_t, ConvGeometry);
template ConvWeightGrads<double> conv2d_backward_weights(const BasicTensor<double>&, const BasicTensor<double>&,
                                                         std::size_t, ConvGeometry);
template BasicTensor<float> instance_norm_forward(const BasicTensor<float>&, const BasicTensor<float>&,
                                                  const BasicTensor<float>&, double, InstanceNormCache<float>*);
template BasicTensor<double> instance_norm_forward(const BasicTensor<double>&, const BasicTensor<double>&,
                                                   const BasicTensor<double>&, double, InstanceNormCache<double>*);
template InstanceNormGrads<float> instance_norm_backward(const BasicTensor<float>&, const InstanceNormCache<float>&,
                                                         const BasicTensor<float>&);
template InstanceNormGrads<double> instance_norm_backward(const BasicTensor<double>&,
                                                          const InstanceNormCache<double>&,
                                                          const BasicTensor<double>&);

}  // namespace mst::nn::reference
