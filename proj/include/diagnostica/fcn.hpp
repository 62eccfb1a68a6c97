#pragma once

// Small 1D fully-convolutional binary classifier with hand-written gradients.
//
//   input [1][n] -> 3 x (conv same-padding -> batch norm -> ReLU)
//                -> global average pooling -> dense (2 logits) -> softmax
//
// Class 0 is "anomalous", class 1 is "regular". Everything is 64-bit.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace diagnostica::fcn {

inline constexpr int kAnomalous = 0;
inline constexpr int kRegular = 1;
inline constexpr double kBatchNormEpsilon = 1e-5;

struct NormalizedSeries {
  std::vector<double> values;
  double mu = 0.0;
  double sigma = 1.0;
};

/// (x - mean) / population stddev. Throws ShapeError for n < 8,
/// DegenerateSeriesError for a constant series.
NormalizedSeries z_normalize(std::span<const double> v);

struct Architecture {
  std::array<std::size_t, 3> filters{128, 256, 128};
  std::array<std::size_t, 3> kernels{8, 5, 3};
  /// Fixed input length; 0 accepts any length >= 8.
  std::size_t length = 0;

  static Architecture standard() { return {}; }
  static Architecture tiny() { return {{16, 32, 16}, {8, 5, 3}, 0}; }
};

struct ConvBlock {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::vector<double> weight;  // [out][in][kernel]
  std::vector<double> bias;
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
};

class FcnModel {
 public:
  Architecture architecture;
  std::uint64_t seed = 0;
  std::array<ConvBlock, 3> blocks;
  std::vector<double> dense_weight;  // [2][filters[2]]
  std::vector<double> dense_bias;    // [2]

  /// He-initialised convolutions, identity batch norm, small dense layer.
  static FcnModel initialize(const Architecture& arch, std::uint64_t seed);

  std::size_t parameter_count() const;
  /// Trainable tensors in a fixed order: per block weight, bias, gamma, beta;
  /// then dense weight, dense bias.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
};

struct Prediction {
  std::array<double, 2> probabilities{0.5, 0.5};
  int y = kAnomalous;
  double uncertainty = 0.5;
};

/// Intermediate values of one inference pass.
struct Trace {
  std::size_t length = 0;
  std::array<std::vector<double>, 4> x;     // x[0] input, x[b+1] block b output
  std::array<std::vector<double>, 3> z;     // raw convolution outputs
  std::array<std::vector<double>, 3> zhat;  // batch-normalised z
  std::vector<double> pooled;
  std::array<double, 2> logits{};
  Prediction prediction;

  /// Feature maps used for saliency: raw output of the last convolution,
  /// [filters[2]][length].
  const std::vector<double>& last_conv() const { return z[2]; }
};

/// Inference mode (running batch-norm statistics). Throws ShapeError when the
/// model has a fixed length that differs from v.size().
Trace forward(const FcnModel& m, std::span<const double> v);
Prediction predict(const FcnModel& m, std::span<const double> v);

/// Gradients with the same layout as FcnModel::parameters().
using Gradients = std::vector<std::vector<double>>;
Gradients zero_gradients(const FcnModel& m);

/// d logit_c / d(parameters) accumulated into `grads` (may be null) and
/// d logit_c / d(last_conv) returned, both in inference mode.
std::vector<double> backward_logit(const FcnModel& m, const Trace& t, int target_class, Gradients* grads);

/// Logit c recomputed from a (possibly perturbed) last-convolution output.
double logit_from_last_conv(const FcnModel& m, std::span<const double> last_conv, std::size_t length, int target_class);

// ---- training

struct LabeledSeries {
  std::vector<double> values;  // already normalised
  int label = kRegular;
};

struct TrainConfig {
  Architecture architecture = Architecture::tiny();
  std::size_t epochs = 40;
  std::size_t batch_size = 16;
  double learning_rate = 0.01;
  double momentum = 0.9;
  /// Anneal the learning rate along a half cosine towards 0 over the epochs.
  bool cosine_decay = true;
  double bn_momentum = 0.1;
  std::uint64_t seed = 42;
};

struct TrainResult {
  FcnModel model;
  double training_accuracy = 0.0;
  std::vector<double> epoch_loss;
};

/// Mini-batch gradient descent on the mean cross-entropy, batch statistics in
/// batch norm. Deterministic for a fixed seed regardless of thread count.
/// Throws ConfigError unless each class has at least two examples.
TrainResult train(const TrainConfig& config, std::span<const LabeledSeries> data);

/// Mean cross-entropy of a batch in training mode (batch statistics), and its
/// parameter gradient when `grads` is non-null. Running statistics untouched.
double batch_loss(const FcnModel& m, std::span<const LabeledSeries> batch, Gradients* grads);

double accuracy(const FcnModel& m, std::span<const LabeledSeries> data);

// ---- gradient verification

struct GradientCheckOptions {
  double epsilon = 1e-5;
  std::size_t parameter_samples = 200;
  std::size_t feature_samples = 64;
  std::uint64_t seed = 7;
  std::optional<int> target_class;  // default: predicted class
};

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates skipped because a ReLU changed state inside +-epsilon.
  std::size_t skipped = 0;
};

/// |a - n| / max(|a|, |n|), or |a - n| when both are below 1e-6.
double relative_error(double analytic, double numeric);

/// Analytic d logit_c / d theta and d logit_c / d A (last convolution output)
/// against central finite differences on a random subsample. Throws
/// ConfigError unless 0 < epsilon <= 1e-2.
GradientCheckResult gradient_check(const FcnModel& m, std::span<const double> v, const GradientCheckOptions& options = {});

/// Same for the training-mode batch loss.
GradientCheckResult gradient_check_training(const FcnModel& m, std::span<const LabeledSeries> batch,
                                            const GradientCheckOptions& options = {});

// ---- persistence

nlohmann::json to_json(const FcnModel& m);
FcnModel model_from_json(const nlohmann::json& j);
void save_model(const FcnModel& m, const std::string& path);
FcnModel load_model(const std::string& path);

// ---- synthetic data

struct SyntheticConfig {
  std::size_t count = 200;
  std::size_t length = 128;
  std::size_t spike_width = 8;
  double anomalous_share = 0.5;
  double spike_amplitude = 3.0;
  /// Spikes point up or down with equal probability.
  bool random_sign = false;
  /// Baseline sine amplitude is drawn per series from this range.
  double amplitude_min = 0.2;
  double amplitude_max = 1.5;
  /// Depth of a slow sinusoidal amplitude envelope, in [0, 1).
  double envelope_depth = 0.8;
  /// Per-series noise stddev is drawn from [0.5, 1.5] * noise.
  double noise = 0.1;
  std::uint64_t seed = 1;
};

struct SyntheticSeries {
  std::vector<double> values;  // raw, not normalised
  int label = kRegular;
  std::optional<std::size_t> spike_start;  // anomalous series only
};

/// Noisy sine waves under a slow amplitude envelope; anomalous ones carry a
/// rectangular spike of the given width at a random position. The envelope
/// keeps quiet stretches common in both classes, so that the only reliable
/// cue after z-normalisation is the spike itself.
std::vector<SyntheticSeries> make_flat_vs_spike(const SyntheticConfig& config);

/// z-normalises every series.
std::vector<LabeledSeries> to_labeled(std::span<const SyntheticSeries> series);

}  // namespace diagnostica::fcn
