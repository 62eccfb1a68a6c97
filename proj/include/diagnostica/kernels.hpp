#pragma once

// Data-parallel inner loops. `serial` is the reference implementation kept for
// testing; `parallel` distributes independent output rows over OpenMP threads
// and performs the per-element arithmetic in the same order, so both produce
// bit-identical results for any thread count.
//
// Layouts are row-major: a signal is [channels][length], a convolution weight
// is [out_channels][in_channels][kernel]. Padding is "same": `pad_left`
// zeros before the signal and `kernel - 1 - pad_left` after it.

#include <cstddef>
#include <cstdint>
#include <span>

namespace diagnostica::kernels {

struct ConvShape {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t length = 0;
  std::size_t kernel = 0;

  std::size_t pad_left() const noexcept { return (kernel - 1) / 2; }
};

namespace serial {

/// out[o][t] = b[o] + sum_{i,k} w[o][i][k] * in[i][t + k - pad_left]
void conv1d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);

/// grad_in[i][t] = sum_{o,k} w[o][i][k] * grad_out[o][t - k + pad_left]  (overwrites)
void conv1d_backward_input(const ConvShape& s, std::span<const double> grad_out, std::span<const double> weight,
                           std::span<double> grad_in);

/// grad_w[o][i][k] += sum_t grad_out[o][t] * in[i][t + k - pad_left];  grad_b[o] += sum_t grad_out[o][t]
void conv1d_backward_weights(const ConvShape& s, std::span<const double> in, std::span<const double> grad_out,
                             std::span<double> grad_weight, std::span<double> grad_bias);

/// popcount(a & b)
std::size_t intersect_count(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);

}  // namespace serial

namespace parallel {

void conv1d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
void conv1d_backward_input(const ConvShape& s, std::span<const double> grad_out, std::span<const double> weight,
                           std::span<double> grad_in);
void conv1d_backward_weights(const ConvShape& s, std::span<const double> in, std::span<const double> grad_out,
                             std::span<double> grad_weight, std::span<double> grad_bias);
std::size_t intersect_count(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);

}  // namespace parallel

/// Number of OpenMP threads available (1 when built without OpenMP).
int max_threads() noexcept;

}  // namespace diagnostica::kernels
