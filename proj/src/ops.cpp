#include "tgx/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "tgx/random.hpp"

namespace tgx {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

void require(bool cond, const std::string& message) {
  if (!cond) throw ShapeError(message);
}

struct ConvGeometry {
  std::size_t n, c_in, h, w, c_out, k, stride, pad, out_h, out_w;

  std::size_t patch() const { return c_in * k * k; }
  std::size_t pixels() const { return out_h * out_w; }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                           const Conv2dOptions& opt) {
  const Shape& in = input.shape();
  const Shape& wt = weight.shape();
  require(wt[1] == in[1], "conv2d: input has " + std::to_string(in[1]) +
                              " channels but weight expects " + std::to_string(wt[1]));
  require(wt[2] == wt[3], "conv2d: kernel must be square");
  require(wt[2] == 1 || wt[2] == 3, "conv2d: kernel size must be 1 or 3");
  require(opt.stride >= 1, "conv2d: stride must be >= 1");
  if (bias.defined()) {
    require(bias.numel() == wt[0], "conv2d: bias length does not match output channels");
  }
  const std::size_t k = wt[2];
  const std::size_t padded_h = in[2] + 2 * opt.padding;
  const std::size_t padded_w = in[3] + 2 * opt.padding;
  require(padded_h >= k && padded_w >= k, "conv2d: non-positive output dims for input " +
                                              to_string(in));
  return ConvGeometry{in[0],
                      in[1],
                      in[2],
                      in[3],
                      wt[0],
                      k,
                      opt.stride,
                      opt.padding,
                      (padded_h - k) / opt.stride + 1,
                      (padded_w - k) / opt.stride + 1};
}

// Input coordinate for output position `o` and kernel tap `t`; -1 if in padding.
inline std::ptrdiff_t source_index(std::size_t o, std::size_t t, const ConvGeometry& g,
                                   std::size_t extent) {
  const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(o * g.stride + t) -
                           static_cast<std::ptrdiff_t>(g.pad);
  return (i < 0 || i >= static_cast<std::ptrdiff_t>(extent)) ? -1 : i;
}

template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
  const std::size_t pixels = g.pixels();
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    const T* plane = image + ci * g.h * g.w;
    for (std::size_t kh = 0; kh < g.k; ++kh) {
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        T* row = col + ((ci * g.k + kh) * g.k + kw) * pixels;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = source_index(oh, kh, g, g.h);
          T* dst = row + oh * g.out_w;
          if (ih < 0) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw = source_index(ow, kw, g, g.w);
            dst[ow] = iw < 0 ? T(0) : plane[ih * g.w + iw];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* image) {
  const std::size_t pixels = g.pixels();
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    T* plane = image + ci * g.h * g.w;
    for (std::size_t kh = 0; kh < g.k; ++kh) {
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        const T* row = col + ((ci * g.k + kh) * g.k + kw) * pixels;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = source_index(oh, kh, g, g.h);
          if (ih < 0) continue;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw = source_index(ow, kw, g, g.w);
            if (iw >= 0) plane[ih * g.w + iw] += row[oh * g.out_w + ow];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) { return g.k == 1 && g.stride == 1 && g.pad == 0; }

template <typename T>
std::vector<T> conv_forward_direct(const T* in, const T* wt, const T* b, const ConvGeometry& g) {
  std::vector<T> out(g.n * g.c_out * g.pixels(), T(0));
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t co = 0; co < g.c_out; ++co) {
      T* dst = out.data() + (n * g.c_out + co) * g.pixels();
      for (std::size_t oh = 0; oh < g.out_h; ++oh) {
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          T acc = b ? b[co] : T(0);
          for (std::size_t ci = 0; ci < g.c_in; ++ci) {
            const T* plane = in + (n * g.c_in + ci) * g.h * g.w;
            const T* kern = wt + (co * g.c_in + ci) * g.k * g.k;
            for (std::size_t kh = 0; kh < g.k; ++kh) {
              const std::ptrdiff_t ih = source_index(oh, kh, g, g.h);
              if (ih < 0) continue;
              for (std::size_t kw = 0; kw < g.k; ++kw) {
                const std::ptrdiff_t iw = source_index(ow, kw, g, g.w);
                if (iw >= 0) acc += plane[ih * g.w + iw] * kern[kh * g.k + kw];
              }
            }
          }
          dst[oh * g.out_w + ow] = acc;
        }
      }
    }
  }
  return out;
}

template <typename T>
void conv_backward_direct(const T* in, const T* wt, const T* gout, const ConvGeometry& g,
                          T* gin, T* gw, T* gb) {
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t co = 0; co < g.c_out; ++co) {
      const T* go = gout + (n * g.c_out + co) * g.pixels();
      for (std::size_t oh = 0; oh < g.out_h; ++oh) {
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          const T d = go[oh * g.out_w + ow];
          if (gb) gb[co] += d;
          for (std::size_t ci = 0; ci < g.c_in; ++ci) {
            const std::size_t plane_off = (n * g.c_in + ci) * g.h * g.w;
            const std::size_t kern_off = (co * g.c_in + ci) * g.k * g.k;
            for (std::size_t kh = 0; kh < g.k; ++kh) {
              const std::ptrdiff_t ih = source_index(oh, kh, g, g.h);
              if (ih < 0) continue;
              for (std::size_t kw = 0; kw < g.k; ++kw) {
                const std::ptrdiff_t iw = source_index(ow, kw, g, g.w);
                if (iw < 0) continue;
                const std::size_t src = plane_off + ih * g.w + iw;
                if (gin) gin[src] += d * wt[kern_off + kh * g.k + kw];
                if (gw) gw[kern_off + kh * g.k + kw] += d * in[src];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
std::vector<T> conv_forward_im2col(const T* in, const T* wt, const T* b, const ConvGeometry& g) {
  const std::size_t pixels = g.pixels();
  std::vector<T> out(g.n * g.c_out * pixels);
  std::vector<T> col(is_pointwise(g) ? 0 : g.patch() * pixels);
  ConstMatrixMap<T> weight(wt, g.c_out, g.patch());
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* image = in + n * g.c_in * g.h * g.w;
    const T* cols = image;
    if (!is_pointwise(g)) {
      im2col(image, g, col.data());
      cols = col.data();
    }
    MatrixMap<T> dst(out.data() + n * g.c_out * pixels, g.c_out, pixels);
    dst.noalias() = weight * ConstMatrixMap<T>(cols, g.patch(), pixels);
    if (b) {
      for (std::size_t co = 0; co < g.c_out; ++co) dst.row(co).array() += b[co];
    }
  }
  return out;
}

template <typename T>
void conv_backward_im2col(const T* in, const T* wt, const T* gout, const ConvGeometry& g, T* gin,
                          T* gw, T* gb) {
  const std::size_t pixels = g.pixels();
  const bool pointwise = is_pointwise(g);
  std::vector<T> col(pointwise ? 0 : g.patch() * pixels);
  std::vector<T> gcol(pointwise || !gin ? 0 : g.patch() * pixels);
  ConstMatrixMap<T> weight(wt, g.c_out, g.patch());
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* image = in + n * g.c_in * g.h * g.w;
    ConstMatrixMap<T> go(gout + n * g.c_out * pixels, g.c_out, pixels);
    if (gb) {
      for (std::size_t co = 0; co < g.c_out; ++co) gb[co] += go.row(co).sum();
    }
    if (gw) {
      const T* cols = image;
      if (!pointwise) {
        im2col(image, g, col.data());
        cols = col.data();
      }
      MatrixMap<T>(gw, g.c_out, g.patch()).noalias() +=
          go * ConstMatrixMap<T>(cols, g.patch(), pixels).transpose();
    }
    if (gin) {
      T* gimage = gin + n * g.c_in * g.h * g.w;
      if (pointwise) {
        MatrixMap<T>(gimage, g.c_in, pixels).noalias() += weight.transpose() * go;
      } else {
        MatrixMap<T>(gcol.data(), g.patch(), pixels).noalias() = weight.transpose() * go;
        col2im_add(gcol.data(), g, gimage);
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv2dOptions& options) {
  const ConvGeometry g = conv_geometry(input, weight, bias, options);
  const T* b = bias.defined() ? bias.data().data() : nullptr;
  std::vector<T> out = options.algo == ConvAlgo::Direct
                           ? conv_forward_direct(input.data().data(), weight.data().data(), b, g)
                           : conv_forward_im2col(input.data().data(), weight.data().data(), b, g);
  std::vector<Tensor<T>> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  const ConvAlgo algo = options.algo;
  return make_result<T>(
      "conv2d", Shape{g.n, g.c_out, g.out_h, g.out_w}, std::move(out), inputs,
      [input, weight, bias, g, algo](const std::vector<T>& gout) {
        std::vector<T> gin(input.requires_grad() ? input.numel() : 0, T(0));
        std::vector<T> gw(weight.requires_grad() ? weight.numel() : 0, T(0));
        std::vector<T> gb(bias.defined() && bias.requires_grad() ? bias.numel() : 0, T(0));
        T* pin = gin.empty() ? nullptr : gin.data();
        T* pw = gw.empty() ? nullptr : gw.data();
        T* pb = gb.empty() ? nullptr : gb.data();
        if (algo == ConvAlgo::Direct) {
          conv_backward_direct(input.data().data(), weight.data().data(), gout.data(), g, pin, pw,
                               pb);
        } else {
          conv_backward_im2col(input.data().data(), weight.data().data(), gout.data(), g, pin, pw,
                               pb);
        }
        if (pin) accumulate_grad<T>(input, gin);
        if (pw) accumulate_grad<T>(weight, gw);
        if (pb) accumulate_grad<T>(bias, gb);
      });
}

template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                       Tensor<T>& running_mean, Tensor<T>& running_var,
                       const BatchNormOptions& options) {
  const Shape s = input.shape();
  const std::size_t channels = s[1];
  require(gamma.numel() == channels && beta.numel() == channels &&
              running_mean.numel() == channels && running_var.numel() == channels,
          "batch_norm2d: parameter length does not match " + std::to_string(channels) +
              " channels");
  const std::size_t plane = s[2] * s[3];
  const std::size_t count = s[0] * plane;
  require(count > 0, "batch_norm2d: empty input");
  const T* x = input.data().data();

  std::vector<T> mean_c(channels), invstd(channels);
  if (options.mode == Mode::Train) {
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (std::size_t c = 0; c < channels; ++c) {
      double acc = 0.0;
      for (std::size_t n = 0; n < s[0]; ++n) {
        const T* p = x + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      }
      const double mu = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t n = 0; n < s[0]; ++n) {
        const T* p = x + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(count);
      mean_c[c] = static_cast<T>(mu);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(var + options.epsilon));
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      rm[c] = static_cast<T>((1.0 - options.momentum) * rm[c] + options.momentum * mu);
      rv[c] = static_cast<T>((1.0 - options.momentum) * rv[c] + options.momentum * unbiased);
    }
  } else {
    const auto rm = running_mean.data();
    const auto rv = running_var.data();
    for (std::size_t c = 0; c < channels; ++c) {
      mean_c[c] = rm[c];
      invstd[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[c]) + options.epsilon));
    }
  }

  const auto gm = gamma.data();
  const auto bt = beta.data();
  std::vector<T> xhat(input.numel());
  std::vector<T> out(input.numel());
  for (std::size_t n = 0; n < s[0]; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = (x[off + i] - mean_c[c]) * invstd[c];
        xhat[off + i] = xh;
        out[off + i] = gm[c] * xh + bt[c];
      }
    }
  }

  const bool train = options.mode == Mode::Train;
  return make_result<T>(
      "batch_norm2d", s, std::move(out), {input, gamma, beta},
      [input, gamma, beta, xhat = std::move(xhat), invstd, train, s, plane,
       count](const std::vector<T>& gout) {
        const std::size_t channels = s[1];
        std::vector<T> sum_dy(channels, T(0)), sum_dy_xhat(channels, T(0));
        for (std::size_t n = 0; n < s[0]; ++n) {
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t off = (n * channels + c) * plane;
            T a = 0, b = 0;
            for (std::size_t i = 0; i < plane; ++i) {
              a += gout[off + i];
              b += gout[off + i] * xhat[off + i];
            }
            sum_dy[c] += a;
            sum_dy_xhat[c] += b;
          }
        }
        accumulate_grad<T>(beta, sum_dy);
        accumulate_grad<T>(gamma, sum_dy_xhat);
        if (!input.requires_grad()) return;
        const auto gm = gamma.data();
        std::vector<T> gin(input.numel());
        const T m = static_cast<T>(count);
        for (std::size_t n = 0; n < s[0]; ++n) {
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t off = (n * channels + c) * plane;
            const T k = gm[c] * invstd[c];
            for (std::size_t i = 0; i < plane; ++i) {
              gin[off + i] = train ? k / m *
                                         (m * gout[off + i] - sum_dy[c] -
                                          xhat[off + i] * sum_dy_xhat[c])
                                   : k * gout[off + i];
            }
          }
        }
        accumulate_grad<T>(input, gin);
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return make_result<T>("relu", input.shape(), std::move(out), {input},
                        [input](const std::vector<T>& gout) {
                          const auto x = input.data();
                          std::vector<T> gin(x.size());
                          for (std::size_t i = 0; i < x.size(); ++i) {
                            gin[i] = x[i] > T(0) ? gout[i] : T(0);
                          }
                          accumulate_grad<T>(input, gin);
                        });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    // Split by sign so exp never overflows.
    out[i] = x[i] >= T(0) ? T(1) / (T(1) + std::exp(-x[i]))
                          : std::exp(x[i]) / (T(1) + std::exp(x[i]));
  }
  std::vector<T> y = out;
  return make_result<T>("sigmoid", input.shape(), std::move(out), {input},
                        [input, y = std::move(y)](const std::vector<T>& gout) {
                          std::vector<T> gin(y.size());
                          for (std::size_t i = 0; i < y.size(); ++i) {
                            gin[i] = gout[i] * y[i] * (T(1) - y[i]);
                          }
                          accumulate_grad<T>(input, gin);
                        });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& input, double rate, Mode mode, const DropoutKey& key) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (mode == Mode::Eval || rate == 0.0) return input;
  const auto x = input.data();
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.size());
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool keep = counter_uniform(key.seed, 0xd20u, key.layer, key.step, i) >= rate;
    mask[i] = keep ? keep_scale : T(0);
    out[i] = x[i] * mask[i];
  }
  return make_result<T>("dropout", input.shape(), std::move(out), {input},
                        [input, mask = std::move(mask)](const std::vector<T>& gout) {
                          std::vector<T> gin(mask.size());
                          for (std::size_t i = 0; i < mask.size(); ++i) gin[i] = gout[i] * mask[i];
                          accumulate_grad<T>(input, gin);
                        });
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, std::size_t kernel, std::size_t stride) {
  const Shape s = input.shape();
  if (kernel == 0 || stride == 0) throw std::invalid_argument("max_pool2d: zero kernel or stride");
  require(kernel <= s[2] && kernel <= s[3],
          "max_pool2d: window " + std::to_string(kernel) + " larger than input " + to_string(s));
  const std::size_t oh_n = (s[2] - kernel) / stride + 1;
  const std::size_t ow_n = (s[3] - kernel) / stride + 1;
  const auto x = input.data();
  std::vector<T> out(s[0] * s[1] * oh_n * ow_n);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < s[0] * s[1]; ++p) {
    const std::size_t in_off = p * s[2] * s[3];
    for (std::size_t oh = 0; oh < oh_n; ++oh) {
      for (std::size_t ow = 0; ow < ow_n; ++ow) {
        std::size_t best = in_off + oh * stride * s[3] + ow * stride;
        for (std::size_t kh = 0; kh < kernel; ++kh) {
          for (std::size_t kw = 0; kw < kernel; ++kw) {
            const std::size_t idx = in_off + (oh * stride + kh) * s[3] + ow * stride + kw;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (p * oh_n + oh) * ow_n + ow;
        out[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  return make_result<T>("max_pool2d", Shape{s[0], s[1], oh_n, ow_n}, std::move(out), {input},
                        [input, argmax = std::move(argmax)](const std::vector<T>& gout) {
                          std::vector<T> gin(input.numel(), T(0));
                          for (std::size_t o = 0; o < argmax.size(); ++o) gin[argmax[o]] += gout[o];
                          accumulate_grad<T>(input, gin);
                        });
}

template <typename T>
Tensor<T> avg_pool_spatial(const Tensor<T>& input) {
  const Shape s = input.shape();
  const std::size_t plane = s[2] * s[3];
  require(plane >= 1, "avg_pool_spatial: empty spatial dims");
  const auto x = input.data();
  std::vector<T> out(s[0] * s[1]);
  for (std::size_t p = 0; p < out.size(); ++p) {
    T acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += x[p * plane + i];
    out[p] = acc / static_cast<T>(plane);
  }
  return make_result<T>("avg_pool_spatial", Shape{s[0], s[1], 1, 1}, std::move(out), {input},
                        [input, plane](const std::vector<T>& gout) {
                          std::vector<T> gin(input.numel());
                          const T inv = T(1) / static_cast<T>(plane);
                          for (std::size_t i = 0; i < gin.size(); ++i) {
                            gin[i] = gout[i / plane] * inv;
                          }
                          accumulate_grad<T>(input, gin);
                        });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  const Shape si = input.shape();
  const Shape sw = weight.shape();
  const std::size_t rows = si[0];
  const std::size_t dim = si[1] * si[2] * si[3];
  const std::size_t classes = sw[0];
  require(sw[1] * sw[2] * sw[3] == dim, "linear: input dim " + std::to_string(dim) +
                                            " does not match weight " + to_string(sw));
  if (bias.defined()) require(bias.numel() == classes, "linear: bias length mismatch");
  std::vector<T> out(rows * classes);
  ConstMatrixMap<T> x(input.data().data(), rows, dim);
  ConstMatrixMap<T> w(weight.data().data(), classes, dim);
  MatrixMap<T> y(out.data(), rows, classes);
  y.noalias() = x * w.transpose();
  if (bias.defined()) {
    const auto b = bias.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < classes; ++k) y(r, k) += b[k];
  }
  std::vector<Tensor<T>> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(
      "linear", matrix_shape(rows, classes), std::move(out), inputs,
      [input, weight, bias, rows, dim, classes](const std::vector<T>& gout) {
        ConstMatrixMap<T> gy(gout.data(), rows, classes);
        if (input.requires_grad()) {
          std::vector<T> gin(rows * dim);
          MatrixMap<T>(gin.data(), rows, dim).noalias() =
              gy * ConstMatrixMap<T>(weight.data().data(), classes, dim);
          accumulate_grad<T>(input, gin);
        }
        if (weight.requires_grad()) {
          std::vector<T> gw(classes * dim);
          MatrixMap<T>(gw.data(), classes, dim).noalias() =
              gy.transpose() * ConstMatrixMap<T>(input.data().data(), rows, dim);
          accumulate_grad<T>(weight, gw);
        }
        if (bias.defined() && bias.requires_grad()) {
          std::vector<T> gb(classes, T(0));
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t k = 0; k < classes; ++k) gb[k] += gy(r, k);
          accumulate_grad<T>(bias, gb);
        }
      });
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Shape first = parts[0].shape();
  std::size_t channels = 0;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    require(s[0] == first[0] && s[2] == first[2] && s[3] == first[3],
            "concat_channels: shape mismatch " + to_string(first) + " vs " + to_string(s));
    channels += s[1];
  }
  const std::size_t plane = first[2] * first[3];
  const Shape out_shape{first[0], channels, first[2], first[3]};
  std::vector<T> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t c_off = 0;
  for (const auto& p : parts) {
    offsets.push_back(c_off);
    const std::size_t pc = p.shape()[1];
    const auto src = p.data();
    for (std::size_t n = 0; n < first[0]; ++n) {
      std::copy_n(src.data() + n * pc * plane, pc * plane,
                  out.data() + (n * channels + c_off) * plane);
    }
    c_off += pc;
  }
  std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
  return make_result<T>(
      "concat_channels", out_shape, std::move(out), inputs,
      [inputs, offsets, out_shape, plane](const std::vector<T>& gout) {
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (!inputs[k].requires_grad()) continue;
          const std::size_t pc = inputs[k].shape()[1];
          std::vector<T> gin(inputs[k].numel());
          for (std::size_t n = 0; n < out_shape[0]; ++n) {
            std::copy_n(gout.data() + (n * out_shape[1] + offsets[k]) * plane, pc * plane,
                        gin.data() + n * pc * plane);
          }
          accumulate_grad<T>(inputs[k], gin);
        }
      });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(),
          "add: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  const auto x = a.data();
  const auto y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_result<T>("add", a.shape(), std::move(out), {a, b},
                        [a, b](const std::vector<T>& gout) {
                          accumulate_grad<T>(a, gout);
                          accumulate_grad<T>(b, gout);
                        });
}

template <typename T>
Tensor<T> sum_list(std::span<const Tensor<T>> parts, const Shape& shape) {
  std::vector<T> out(numel(shape), T(0));
  for (const auto& p : parts) {
    require(p.shape() == shape,
            "sum_list: shape mismatch " + to_string(p.shape()) + " vs " + to_string(shape));
    const auto x = p.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[i];
  }
  std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
  return make_result<T>("sum_list", shape, std::move(out), inputs,
                        [inputs](const std::vector<T>& gout) {
                          for (const auto& in : inputs) accumulate_grad<T>(in, gout);
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& input, T factor) {
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  return make_result<T>("scale", input.shape(), std::move(out), {input},
                        [input, factor](const std::vector<T>& gout) {
                          std::vector<T> gin(gout.size());
                          for (std::size_t i = 0; i < gout.size(); ++i) gin[i] = gout[i] * factor;
                          accumulate_grad<T>(input, gin);
                        });
}

template <typename T>
Tensor<T> scale_rows(const Tensor<T>& input, std::span<const T> factors) {
  const Shape s = input.shape();
  require(factors.size() == s[0], "scale_rows: factor count does not match rows");
  const std::size_t row = s[1] * s[2] * s[3];
  const auto x = input.data();
  std::vector<T> f(factors.begin(), factors.end());
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * f[i / row];
  return make_result<T>("scale_rows", s, std::move(out), {input},
                        [input, f, row](const std::vector<T>& gout) {
                          std::vector<T> gin(gout.size());
                          for (std::size_t i = 0; i < gout.size(); ++i) gin[i] = gout[i] * f[i / row];
                          accumulate_grad<T>(input, gin);
                        });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& input, std::span<const std::size_t> index) {
  const Shape s = input.shape();
  const std::size_t row = s[1] * s[2] * s[3];
  const auto x = input.data();
  std::vector<T> out(index.size() * row);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= s[0]) throw std::out_of_range("gather_rows: index out of range");
    std::copy_n(x.data() + index[i] * row, row, out.data() + i * row);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result<T>("gather_rows", Shape{index.size(), s[1], s[2], s[3]}, std::move(out),
                        {input}, [input, idx, row](const std::vector<T>& gout) {
                          std::vector<T> gin(input.numel(), T(0));
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            T* dst = gin.data() + idx[i] * row;
                            const T* src = gout.data() + i * row;
                            for (std::size_t k = 0; k < row; ++k) dst[k] += src[k];
                          }
                          accumulate_grad<T>(input, gin);
                        });
}

template <typename T>
Tensor<T> scatter_add_rows(const Tensor<T>& input, std::span<const std::size_t> index,
                           std::size_t rows) {
  const Shape s = input.shape();
  require(index.size() == s[0], "scatter_add_rows: index length does not match input rows");
  const std::size_t row = s[1] * s[2] * s[3];
  const auto x = input.data();
  std::vector<T> out(rows * row, T(0));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) throw std::out_of_range("scatter_add_rows: index out of range");
    T* dst = out.data() + index[i] * row;
    const T* src = x.data() + i * row;
    for (std::size_t k = 0; k < row; ++k) dst[k] += src[k];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result<T>("scatter_add_rows", Shape{rows, s[1], s[2], s[3]}, std::move(out), {input},
                        [input, idx, row](const std::vector<T>& gout) {
                          std::vector<T> gin(input.numel());
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            std::copy_n(gout.data() + idx[i] * row, row, gin.data() + i * row);
                          }
                          accumulate_grad<T>(input, gin);
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& input, const Shape& shape) {
  require(numel(shape) == input.numel(),
          "reshape: " + to_string(input.shape()) + " -> " + to_string(shape));
  const auto x = input.data();
  return make_result<T>("reshape", shape, std::vector<T>(x.begin(), x.end()), {input},
                        [input](const std::vector<T>& gout) { accumulate_grad<T>(input, gout); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& input) {
  T acc = 0;
  for (const T v : input.data()) acc += v;
  return make_result<T>("sum", scalar_shape(), {acc}, {input},
                        [input](const std::vector<T>& gout) {
                          accumulate_grad<T>(input, std::vector<T>(input.numel(), gout[0]));
                        });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& input) {
  require(input.numel() > 0, "mean: empty input");
  return scale(sum(input), T(1) / static_cast<T>(input.numel()));
}

#define TGX_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,               \
                            const Conv2dOptions&);                                              \
  template Tensor<T> batch_norm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                  Tensor<T>&, Tensor<T>&, const BatchNormOptions&);             \
  template Tensor<T> relu(const Tensor<T>&);                                                    \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                 \
  template Tensor<T> dropout(const Tensor<T>&, double, Mode, const DropoutKey&);                \
  template Tensor<T> max_pool2d(const Tensor<T>&, std::size_t, std::size_t);                    \
  template Tensor<T> avg_pool_spatial(const Tensor<T>&);                                        \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> concat_channels(std::span<const Tensor<T>>);                               \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> sum_list(std::span<const Tensor<T>>, const Shape&);                        \
  template Tensor<T> scale(const Tensor<T>&, T);                                                \
  template Tensor<T> scale_rows(const Tensor<T>&, std::span<const T>);                          \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);               \
  template Tensor<T> scatter_add_rows(const Tensor<T>&, std::span<const std::size_t>,           \
                                      std::size_t);                                             \
  template Tensor<T> reshape(const Tensor<T>&, const Shape&);                                   \
  template Tensor<T> sum(const Tensor<T>&);                                                     \
  template Tensor<T> mean(const Tensor<T>&);

TGX_INSTANTIATE_OPS(float)
TGX_INSTANTIATE_OPS(double)

#undef TGX_INSTANTIATE_OPS

}  // namespace tgx
