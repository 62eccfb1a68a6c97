#include "diagnostica/kernels.hpp"

#include <algorithm>
#include <bit>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace diagnostica::kernels {

namespace {

// One output channel of the forward convolution.
inline void forward_row(const ConvShape& s, const double* in, const double* w, double b, double* out) {
  const std::ptrdiff_t L = static_cast<std::ptrdiff_t>(s.length);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(s.pad_left());
  const std::ptrdiff_t K = static_cast<std::ptrdiff_t>(s.kernel);
  for (std::ptrdiff_t t = 0; t < L; ++t) out[t] = b;
  for (std::size_t i = 0; i < s.in_channels; ++i) {
    const double* x = in + i * s.length;
    const double* wk = w + i * s.kernel;
    for (std::ptrdiff_t k = 0; k < K; ++k) {
      const double wv = wk[k];
      const std::ptrdiff_t shift = k - pad;
      const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(L, L - shift);
      for (std::ptrdiff_t t = t0; t < t1; ++t) out[t] += wv * x[t + shift];
    }
  }
}

// One input channel of the input gradient.
inline void backward_input_row(const ConvShape& s, std::size_t i, const double* grad_out, const double* w,
                               double* grad_in) {
  const std::ptrdiff_t L = static_cast<std::ptrdiff_t>(s.length);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(s.pad_left());
  const std::ptrdiff_t K = static_cast<std::ptrdiff_t>(s.kernel);
  double* gi = grad_in + i * s.length;
  std::fill(gi, gi + L, 0.0);
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    const double* go = grad_out + o * s.length;
    const double* wk = w + (o * s.in_channels + i) * s.kernel;
    for (std::ptrdiff_t k = 0; k < K; ++k) {
      const double wv = wk[k];
      const std::ptrdiff_t shift = k - pad;  // in index = out index + shift
      const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, shift);
      const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(L, L + shift);
      for (std::ptrdiff_t t = t0; t < t1; ++t) gi[t] += wv * go[t - shift];
    }
  }
}

// One output channel of the weight/bias gradient.
inline void backward_weights_row(const ConvShape& s, std::size_t o, const double* in, const double* grad_out,
                                 double* grad_w, double* grad_b) {
  const std::ptrdiff_t L = static_cast<std::ptrdiff_t>(s.length);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(s.pad_left());
  const std::ptrdiff_t K = static_cast<std::ptrdiff_t>(s.kernel);
  const double* go = grad_out + o * s.length;
  double bsum = 0.0;
  for (std::ptrdiff_t t = 0; t < L; ++t) bsum += go[t];
  grad_b[o] += bsum;
  for (std::size_t i = 0; i < s.in_channels; ++i) {
    const double* x = in + i * s.length;
    double* gw = grad_w + (o * s.in_channels + i) * s.kernel;
    for (std::ptrdiff_t k = 0; k < K; ++k) {
      const std::ptrdiff_t shift = k - pad;
      const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(L, L - shift);
      double acc = 0.0;
      for (std::ptrdiff_t t = t0; t < t1; ++t) acc += go[t] * x[t + shift];
      gw[k] += acc;
    }
  }
}

}  // namespace

namespace serial {

void conv1d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  for (std::size_t o = 0; o < s.out_channels; ++o)
    forward_row(s, in.data(), weight.data() + o * s.in_channels * s.kernel, bias[o], out.data() + o * s.length);
}

void conv1d_backward_input(const ConvShape& s, std::span<const double> grad_out, std::span<const double> weight,
                           std::span<double> grad_in) {
  for (std::size_t i = 0; i < s.in_channels; ++i) backward_input_row(s, i, grad_out.data(), weight.data(), grad_in.data());
}

void conv1d_backward_weights(const ConvShape& s, std::span<const double> in, std::span<const double> grad_out,
                             std::span<double> grad_weight, std::span<double> grad_bias) {
  for (std::size_t o = 0; o < s.out_channels; ++o)
    backward_weights_row(s, o, in.data(), grad_out.data(), grad_weight.data(), grad_bias.data());
}

std::size_t intersect_count(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += static_cast<std::size_t>(std::popcount(a[i] & b[i]));
  return n;
}

}  // namespace serial

namespace parallel {

void conv1d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(s.out_channels);
#pragma omp parallel for schedule(static) if (n * static_cast<std::ptrdiff_t>(s.length) > 4096)
  for (std::ptrdiff_t o = 0; o < n; ++o) {
    const auto uo = static_cast<std::size_t>(o);
    forward_row(s, in.data(), weight.data() + uo * s.in_channels * s.kernel, bias[uo], out.data() + uo * s.length);
  }
}

void conv1d_backward_input(const ConvShape& s, std::span<const double> grad_out, std::span<const double> weight,
                           std::span<double> grad_in) {
  const auto n = static_cast<std::ptrdiff_t>(s.in_channels);
#pragma omp parallel for schedule(static) if (n * static_cast<std::ptrdiff_t>(s.length) > 4096)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    backward_input_row(s, static_cast<std::size_t>(i), grad_out.data(), weight.data(), grad_in.data());
}

void conv1d_backward_weights(const ConvShape& s, std::span<const double> in, std::span<const double> grad_out,
                             std::span<double> grad_weight, std::span<double> grad_bias) {
  const auto n = static_cast<std::ptrdiff_t>(s.out_channels);
#pragma omp parallel for schedule(static) if (n * static_cast<std::ptrdiff_t>(s.length) > 4096)
  for (std::ptrdiff_t o = 0; o < n; ++o)
    backward_weights_row(s, static_cast<std::size_t>(o), in.data(), grad_out.data(), grad_weight.data(),
                         grad_bias.data());
}

std::size_t intersect_count(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  const auto n = static_cast<std::ptrdiff_t>(a.size());
  std::size_t total = 0;
#pragma omp parallel for reduction(+ : total) schedule(static) if (n > 1 << 14)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    total += static_cast<std::size_t>(std::popcount(a[static_cast<std::size_t>(i)] & b[static_cast<std::size_t>(i)]));
  return total;
}

}  // namespace parallel

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace diagnostica::kernels
