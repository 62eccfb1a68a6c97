#include "diagnostica/fcn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "diagnostica/errors.hpp"
#include "diagnostica/kernels.hpp"

namespace diagnostica::fcn {

namespace kp = kernels::parallel;

namespace {

constexpr std::size_t kGroupsPerBlock = 4;
constexpr std::size_t kDenseWeight = 12;
constexpr std::size_t kDenseBias = 13;

kernels::ConvShape shape_of(const ConvBlock& b, std::size_t length) {
  return {b.in_channels, b.out_channels, length, b.kernel};
}

void check_length(const FcnModel& m, std::size_t n) {
  if (n == 0) throw ShapeError("empty input series");
  if (m.architecture.length != 0 && n != m.architecture.length)
    throw ShapeError("model expects series of length " + std::to_string(m.architecture.length) + ", got " +
                     std::to_string(n));
}

std::array<double, 2> softmax(const std::array<double, 2>& logits) {
  const double mx = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - mx);
  const double e1 = std::exp(logits[1] - mx);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

Prediction make_prediction(const std::array<double, 2>& logits) {
  Prediction p;
  p.probabilities = softmax(logits);
  p.y = p.probabilities[1] > p.probabilities[0] ? kRegular : kAnomalous;
  p.uncertainty = 1.0 - std::max(p.probabilities[0], p.probabilities[1]);
  return p;
}

// Pool, dense layer, logits from the last block output.
void head(const FcnModel& m, const std::vector<double>& x3, std::size_t L, std::vector<double>& pooled,
          std::array<double, 2>& logits) {
  const std::size_t F = m.architecture.filters[2];
  pooled.assign(F, 0.0);
  for (std::size_t k = 0; k < F; ++k) {
    double s = 0.0;
    for (std::size_t t = 0; t < L; ++t) s += x3[k * L + t];
    pooled[k] = s / static_cast<double>(L);
  }
  for (int c = 0; c < 2; ++c) {
    double s = m.dense_bias[static_cast<std::size_t>(c)];
    for (std::size_t k = 0; k < F; ++k) s += m.dense_weight[static_cast<std::size_t>(c) * F + k] * pooled[k];
    logits[static_cast<std::size_t>(c)] = s;
  }
}

// Batch norm with fixed statistics followed by ReLU.
void normalize_block(const ConvBlock& b, std::size_t L, const std::vector<double>& z, const double* mean,
                     const double* var, std::vector<double>& zhat, std::vector<double>& x) {
  zhat.resize(z.size());
  x.resize(z.size());
  for (std::size_t c = 0; c < b.out_channels; ++c) {
    const double inv = 1.0 / std::sqrt(var[c] + kBatchNormEpsilon);
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t i = c * L + t;
      zhat[i] = (z[i] - mean[c]) * inv;
      const double y = b.gamma[c] * zhat[i] + b.beta[c];
      x[i] = y > 0.0 ? y : 0.0;
    }
  }
}

std::vector<bool> relu_signature(const Trace& t) {
  std::vector<bool> sig;
  for (int b = 1; b <= 3; ++b)
    for (double v : t.x[static_cast<std::size_t>(b)]) sig.push_back(v > 0.0);
  return sig;
}

struct BatchState {
  std::size_t B = 0, L = 0;
  // [block][sample] -> tensor
  std::array<std::vector<std::vector<double>>, 4> x;
  std::array<std::vector<std::vector<double>>, 3> z, zhat;
  std::array<std::vector<double>, 3> mean, var;
  std::vector<std::vector<double>> pooled;
  std::vector<std::array<double, 2>> logits;
};

double batch_pass(const FcnModel& m, std::span<const LabeledSeries> batch, Gradients* grads, BatchState& st) {
  const std::size_t B = batch.size();
  if (B == 0) throw ConfigError("empty batch");
  const std::size_t L = batch[0].values.size();
  for (const auto& s : batch) {
    check_length(m, s.values.size());
    if (s.values.size() != L) throw ShapeError("batch series differ in length");
    if (s.label != kAnomalous && s.label != kRegular) throw ConfigError("labels must be 0 or 1");
  }
  st.B = B;
  st.L = L;
  st.x[0].resize(B);
  for (std::size_t s = 0; s < B; ++s) st.x[0][s] = batch[s].values;

  const double M = static_cast<double>(B * L);
  for (std::size_t b = 0; b < 3; ++b) {
    const ConvBlock& blk = m.blocks[b];
    const auto shape = shape_of(blk, L);
    auto& z = st.z[b];
    z.assign(B, std::vector<double>(blk.out_channels * L));
    for (std::size_t s = 0; s < B; ++s) kp::conv1d_forward(shape, st.x[b][s], blk.weight, blk.bias, z[s]);
    auto& mean = st.mean[b];
    auto& var = st.var[b];
    mean.assign(blk.out_channels, 0.0);
    var.assign(blk.out_channels, 0.0);
    for (std::size_t c = 0; c < blk.out_channels; ++c) {
      double acc = 0.0;
      for (std::size_t s = 0; s < B; ++s)
        for (std::size_t t = 0; t < L; ++t) acc += z[s][c * L + t];
      mean[c] = acc / M;
      double sq = 0.0;
      for (std::size_t s = 0; s < B; ++s)
        for (std::size_t t = 0; t < L; ++t) {
          const double d = z[s][c * L + t] - mean[c];
          sq += d * d;
        }
      var[c] = sq / M;
    }
    st.zhat[b].resize(B);
    st.x[b + 1].resize(B);
    for (std::size_t s = 0; s < B; ++s) normalize_block(blk, L, z[s], mean.data(), var.data(), st.zhat[b][s], st.x[b + 1][s]);
  }

  st.pooled.resize(B);
  st.logits.resize(B);
  double loss = 0.0;
  std::vector<std::array<double, 2>> dlogit(B);
  for (std::size_t s = 0; s < B; ++s) {
    head(m, st.x[3][s], L, st.pooled[s], st.logits[s]);
    const auto& lg = st.logits[s];
    const double mx = std::max(lg[0], lg[1]);
    const double lse = mx + std::log(std::exp(lg[0] - mx) + std::exp(lg[1] - mx));
    const auto label = static_cast<std::size_t>(batch[s].label);
    loss -= lg[label] - lse;
    const auto p = softmax(lg);
    for (std::size_t c = 0; c < 2; ++c)
      dlogit[s][c] = (p[c] - (c == label ? 1.0 : 0.0)) / static_cast<double>(B);
  }
  loss /= static_cast<double>(B);
  if (!grads) return loss;

  Gradients& g = *grads;
  const std::size_t F = m.architecture.filters[2];
  std::vector<std::vector<double>> dx(B);
  for (std::size_t s = 0; s < B; ++s) {
    dx[s].assign(F * L, 0.0);
    for (std::size_t c = 0; c < 2; ++c) {
      g[kDenseBias][c] += dlogit[s][c];
      for (std::size_t k = 0; k < F; ++k) g[kDenseWeight][c * F + k] += dlogit[s][c] * st.pooled[s][k];
    }
    for (std::size_t k = 0; k < F; ++k) {
      const double d = (m.dense_weight[k] * dlogit[s][0] + m.dense_weight[F + k] * dlogit[s][1]) / static_cast<double>(L);
      std::fill(dx[s].begin() + static_cast<std::ptrdiff_t>(k * L), dx[s].begin() + static_cast<std::ptrdiff_t>((k + 1) * L), d);
    }
  }

  for (std::size_t bi = 3; bi-- > 0;) {
    const ConvBlock& blk = m.blocks[bi];
    const auto shape = shape_of(blk, L);
    const std::size_t C = blk.out_channels;
    auto& dW = g[bi * kGroupsPerBlock + 0];
    auto& db = g[bi * kGroupsPerBlock + 1];
    auto& dgamma = g[bi * kGroupsPerBlock + 2];
    auto& dbeta = g[bi * kGroupsPerBlock + 3];
    // dx becomes dzhat in place after the ReLU mask and scale.
    std::vector<double> S1(C, 0.0), S2(C, 0.0);
    for (std::size_t s = 0; s < B; ++s) {
      const auto& xo = st.x[bi + 1][s];
      const auto& zh = st.zhat[bi][s];
      for (std::size_t c = 0; c < C; ++c) {
        double sg = 0.0, sb = 0.0, s1 = 0.0, s2 = 0.0;
        for (std::size_t t = 0; t < L; ++t) {
          const std::size_t i = c * L + t;
          const double dy = xo[i] > 0.0 ? dx[s][i] : 0.0;
          sg += dy * zh[i];
          sb += dy;
          const double dzh = dy * blk.gamma[c];
          dx[s][i] = dzh;
          s1 += dzh;
          s2 += dzh * zh[i];
        }
        dgamma[c] += sg;
        dbeta[c] += sb;
        S1[c] += s1;
        S2[c] += s2;
      }
    }
    std::vector<std::vector<double>> next(bi > 0 ? B : 0);
    for (std::size_t s = 0; s < B; ++s) {
      const auto& zh = st.zhat[bi][s];
      for (std::size_t c = 0; c < C; ++c) {
        const double inv = 1.0 / std::sqrt(st.var[bi][c] + kBatchNormEpsilon);
        for (std::size_t t = 0; t < L; ++t) {
          const std::size_t i = c * L + t;
          dx[s][i] = inv * (dx[s][i] - S1[c] / M - zh[i] * S2[c] / M);
        }
      }
      kp::conv1d_backward_weights(shape, st.x[bi][s], dx[s], dW, db);
      if (bi > 0) {
        next[s].resize(blk.in_channels * L);
        kp::conv1d_backward_input(shape, dx[s], blk.weight, next[s]);
      }
    }
    dx = std::move(next);
  }
  return loss;
}

template <class Rng>
std::vector<std::size_t> sample_indices(std::size_t total, std::size_t wanted, Rng& rng) {
  std::vector<std::size_t> all(total);
  std::iota(all.begin(), all.end(), 0);
  if (wanted >= total) return all;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(wanted);
  std::sort(all.begin(), all.end());
  return all;
}

void check_epsilon(double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw ConfigError("gradient check epsilon must lie in (0, 1e-2]");
}

std::vector<std::pair<std::size_t, std::size_t>> flat_coordinates(const FcnModel& m) {
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  auto params = m.parameters();
  for (std::size_t g = 0; g < params.size(); ++g)
    for (std::size_t i = 0; i < params[g].size(); ++i) coords.emplace_back(g, i);
  return coords;
}

}  // namespace

// ---------------------------------------------------------------- normalisation

NormalizedSeries z_normalize(std::span<const double> v) {
  if (v.size() < 8) throw ShapeError("series needs at least 8 samples, got " + std::to_string(v.size()));
  for (double x : v)
    if (!std::isfinite(x)) throw ValidationError("series contains a non-finite value");
  const double n = static_cast<double>(v.size());
  double mu = 0.0;
  for (double x : v) mu += x;
  mu /= n;
  double var = 0.0;
  for (double x : v) var += (x - mu) * (x - mu);
  const double sigma = std::sqrt(var / n);
  if (!(sigma > 0.0)) throw DegenerateSeriesError("constant series cannot be z-normalised");
  NormalizedSeries out{std::vector<double>(v.size()), mu, sigma};
  for (std::size_t i = 0; i < v.size(); ++i) out.values[i] = (v[i] - mu) / sigma;
  return out;
}

// ---------------------------------------------------------------- model

FcnModel FcnModel::initialize(const Architecture& arch, std::uint64_t seed) {
  for (std::size_t b = 0; b < 3; ++b)
    if (arch.filters[b] == 0 || arch.kernels[b] == 0) throw ConfigError("filters and kernel sizes must be positive");
  FcnModel m;
  m.architecture = arch;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  std::size_t in = 1;
  for (std::size_t b = 0; b < 3; ++b) {
    ConvBlock& blk = m.blocks[b];
    blk.in_channels = in;
    blk.out_channels = arch.filters[b];
    blk.kernel = arch.kernels[b];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in * blk.kernel)));
    blk.weight.resize(blk.out_channels * in * blk.kernel);
    for (auto& w : blk.weight) w = dist(rng);
    blk.bias.assign(blk.out_channels, 0.0);
    blk.gamma.assign(blk.out_channels, 1.0);
    blk.beta.assign(blk.out_channels, 0.0);
    blk.running_mean.assign(blk.out_channels, 0.0);
    blk.running_var.assign(blk.out_channels, 1.0);
    in = blk.out_channels;
  }
  std::normal_distribution<double> dist(0.0, std::sqrt(1.0 / static_cast<double>(in)));
  m.dense_weight.resize(2 * in);
  for (auto& w : m.dense_weight) w = dist(rng);
  m.dense_bias.assign(2, 0.0);
  return m;
}

std::size_t FcnModel::parameter_count() const {
  std::size_t n = 0;
  for (auto p : parameters()) n += p.size();
  return n;
}

std::vector<std::span<double>> FcnModel::parameters() {
  std::vector<std::span<double>> out;
  for (auto& b : blocks) {
    out.emplace_back(b.weight);
    out.emplace_back(b.bias);
    out.emplace_back(b.gamma);
    out.emplace_back(b.beta);
  }
  out.emplace_back(dense_weight);
  out.emplace_back(dense_bias);
  return out;
}

std::vector<std::span<const double>> FcnModel::parameters() const {
  std::vector<std::span<const double>> out;
  for (auto p : const_cast<FcnModel*>(this)->parameters()) out.emplace_back(p);
  return out;
}

Gradients zero_gradients(const FcnModel& m) {
  Gradients g;
  for (auto p : m.parameters()) g.emplace_back(p.size(), 0.0);
  return g;
}

// ---------------------------------------------------------------- inference

Trace forward(const FcnModel& m, std::span<const double> v) {
  check_length(m, v.size());
  const std::size_t L = v.size();
  Trace t;
  t.length = L;
  t.x[0].assign(v.begin(), v.end());
  for (std::size_t b = 0; b < 3; ++b) {
    const ConvBlock& blk = m.blocks[b];
    t.z[b].resize(blk.out_channels * L);
    kp::conv1d_forward(shape_of(blk, L), t.x[b], blk.weight, blk.bias, t.z[b]);
    normalize_block(blk, L, t.z[b], blk.running_mean.data(), blk.running_var.data(), t.zhat[b], t.x[b + 1]);
  }
  head(m, t.x[3], L, t.pooled, t.logits);
  t.prediction = make_prediction(t.logits);
  return t;
}

Prediction predict(const FcnModel& m, std::span<const double> v) { return forward(m, v).prediction; }

std::vector<double> backward_logit(const FcnModel& m, const Trace& t, int target_class, Gradients* grads) {
  if (target_class != kAnomalous && target_class != kRegular) throw ConfigError("target class must be 0 or 1");
  const auto c = static_cast<std::size_t>(target_class);
  const std::size_t L = t.length;
  const std::size_t F = m.architecture.filters[2];
  if (grads) {
    Gradients& g = *grads;
    g[kDenseBias][c] += 1.0;
    for (std::size_t k = 0; k < F; ++k) g[kDenseWeight][c * F + k] += t.pooled[k];
  }
  std::vector<double> dx(F * L);
  for (std::size_t k = 0; k < F; ++k)
    for (std::size_t i = 0; i < L; ++i) dx[k * L + i] = m.dense_weight[c * F + k] / static_cast<double>(L);

  std::vector<double> d_last;
  for (std::size_t bi = 3; bi-- > 0;) {
    const ConvBlock& blk = m.blocks[bi];
    const std::size_t C = blk.out_channels;
    std::vector<double> dz(C * L);
    for (std::size_t ch = 0; ch < C; ++ch) {
      const double scale = blk.gamma[ch] / std::sqrt(blk.running_var[ch] + kBatchNormEpsilon);
      double sg = 0.0, sb = 0.0;
      for (std::size_t i = 0; i < L; ++i) {
        const std::size_t j = ch * L + i;
        const double dy = t.x[bi + 1][j] > 0.0 ? dx[j] : 0.0;
        sg += dy * t.zhat[bi][j];
        sb += dy;
        dz[j] = dy * scale;
      }
      if (grads) {
        (*grads)[bi * kGroupsPerBlock + 2][ch] += sg;
        (*grads)[bi * kGroupsPerBlock + 3][ch] += sb;
      }
    }
    if (bi == 2) d_last = dz;
    if (!grads) break;
    const auto shape = shape_of(blk, L);
    kp::conv1d_backward_weights(shape, t.x[bi], dz, (*grads)[bi * kGroupsPerBlock], (*grads)[bi * kGroupsPerBlock + 1]);
    if (bi > 0) {
      dx.assign(blk.in_channels * L, 0.0);
      kp::conv1d_backward_input(shape, dz, blk.weight, dx);
    }
  }
  return d_last;
}

double logit_from_last_conv(const FcnModel& m, std::span<const double> last_conv, std::size_t length, int target_class) {
  const ConvBlock& blk = m.blocks[2];
  std::vector<double> z(last_conv.begin(), last_conv.end()), zhat, x;
  if (z.size() != blk.out_channels * length) throw ShapeError("feature map size does not match the model");
  normalize_block(blk, length, z, blk.running_mean.data(), blk.running_var.data(), zhat, x);
  std::vector<double> pooled;
  std::array<double, 2> logits{};
  head(m, x, length, pooled, logits);
  return logits[static_cast<std::size_t>(target_class)];
}

// ---------------------------------------------------------------- training

double batch_loss(const FcnModel& m, std::span<const LabeledSeries> batch, Gradients* grads) {
  BatchState st;
  return batch_pass(m, batch, grads, st);
}

double accuracy(const FcnModel& m, std::span<const LabeledSeries> data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : data) hits += predict(m, s.values).y == s.label;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

TrainResult train(const TrainConfig& config, std::span<const LabeledSeries> data) {
  std::array<std::size_t, 2> per_class{0, 0};
  for (const auto& s : data) {
    if (s.label != kAnomalous && s.label != kRegular) throw ConfigError("labels must be 0 (anomalous) or 1 (regular)");
    ++per_class[static_cast<std::size_t>(s.label)];
  }
  if (per_class[0] < 2 || per_class[1] < 2) throw ConfigError("training needs at least two examples of each class");
  if (config.epochs == 0 || config.batch_size == 0) throw ConfigError("epochs and batch_size must be positive");
  if (!(config.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(config.momentum >= 0.0 && config.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  const std::size_t L = data[0].values.size();
  for (const auto& s : data)
    if (s.values.size() != L) throw ShapeError("training series differ in length");
  if (L < 8) throw ShapeError("series needs at least 8 samples");

  Architecture arch = config.architecture;
  arch.length = L;
  TrainResult result{FcnModel::initialize(arch, config.seed), 0.0, {}};
  FcnModel& m = result.model;
  Gradients velocity = zero_gradients(m);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  BatchState st;
  std::vector<LabeledSeries> batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = config.cosine_decay ? config.learning_rate * 0.5 *
                                                (1.0 + std::cos(M_PI * static_cast<double>(epoch) /
                                                                static_cast<double>(config.epochs)))
                                          : config.learning_rate;
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      Gradients g = zero_gradients(m);
      loss_sum += batch_pass(m, batch, &g, st);
      ++batches;
      auto params = m.parameters();
      for (std::size_t p = 0; p < params.size(); ++p)
        for (std::size_t i = 0; i < params[p].size(); ++i) {
          velocity[p][i] = config.momentum * velocity[p][i] - lr * g[p][i];
          params[p][i] += velocity[p][i];
        }
      const double M = static_cast<double>(batch.size() * L);
      const double unbias = M > 1.0 ? M / (M - 1.0) : 1.0;
      for (std::size_t b = 0; b < 3; ++b) {
        auto& blk = m.blocks[b];
        for (std::size_t c = 0; c < blk.out_channels; ++c) {
          blk.running_mean[c] = (1.0 - config.bn_momentum) * blk.running_mean[c] + config.bn_momentum * st.mean[b][c];
          blk.running_var[c] = (1.0 - config.bn_momentum) * blk.running_var[c] + config.bn_momentum * st.var[b][c] * unbias;
        }
      }
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }
  result.training_accuracy = accuracy(m, data);
  return result;
}

// ---------------------------------------------------------------- gradient check

double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  const double diff = std::abs(analytic - numeric);
  return scale < 1e-6 ? diff : diff / scale;
}

GradientCheckResult gradient_check(const FcnModel& m, std::span<const double> v, const GradientCheckOptions& options) {
  check_epsilon(options.epsilon);
  const double eps = options.epsilon;
  const Trace base = forward(m, v);
  const int c = options.target_class.value_or(base.prediction.y);
  Gradients grads = zero_gradients(m);
  const std::vector<double> d_last = backward_logit(m, base, c, &grads);
  const auto signature = relu_signature(base);

  GradientCheckResult result;
  std::mt19937_64 rng(options.seed);
  FcnModel work = m;
  auto params = work.parameters();
  const auto coords = flat_coordinates(m);
  for (std::size_t idx : sample_indices(coords.size(), options.parameter_samples, rng)) {
    const auto [g, i] = coords[idx];
    const double orig = params[g][i];
    params[g][i] = orig + eps;
    const Trace plus = forward(work, v);
    params[g][i] = orig - eps;
    const Trace minus = forward(work, v);
    params[g][i] = orig;
    if (relu_signature(plus) != signature || relu_signature(minus) != signature) {
      ++result.skipped;
      continue;
    }
    const auto ci = static_cast<std::size_t>(c);
    const double numeric = (plus.logits[ci] - minus.logits[ci]) / (2.0 * eps);
    result.max_relative_error = std::max(result.max_relative_error, relative_error(grads[g][i], numeric));
    ++result.checked;
  }

  const ConvBlock& last = m.blocks[2];
  const std::size_t L = base.length;
  std::vector<double> a = base.last_conv();
  for (std::size_t idx : sample_indices(a.size(), options.feature_samples, rng)) {
    const std::size_t ch = idx / L;
    const double inv = 1.0 / std::sqrt(last.running_var[ch] + kBatchNormEpsilon);
    auto active = [&](double zv) { return last.gamma[ch] * (zv - last.running_mean[ch]) * inv + last.beta[ch] > 0.0; };
    const double orig = a[idx];
    if (active(orig + eps) != active(orig) || active(orig - eps) != active(orig)) {
      ++result.skipped;
      continue;
    }
    a[idx] = orig + eps;
    const double lp = logit_from_last_conv(m, a, L, c);
    a[idx] = orig - eps;
    const double lm = logit_from_last_conv(m, a, L, c);
    a[idx] = orig;
    result.max_relative_error = std::max(result.max_relative_error, relative_error(d_last[idx], (lp - lm) / (2.0 * eps)));
    ++result.checked;
  }
  return result;
}

GradientCheckResult gradient_check_training(const FcnModel& m, std::span<const LabeledSeries> batch,
                                            const GradientCheckOptions& options) {
  check_epsilon(options.epsilon);
  const double eps = options.epsilon;
  auto signature = [&](const FcnModel& model, double* loss) {
    BatchState st;
    *loss = batch_pass(model, batch, nullptr, st);
    std::vector<bool> sig;
    for (std::size_t b = 1; b <= 3; ++b)
      for (const auto& x : st.x[b])
        for (double v : x) sig.push_back(v > 0.0);
    return sig;
  };
  Gradients grads = zero_gradients(m);
  BatchState st;
  batch_pass(m, batch, &grads, st);
  double base_loss = 0.0;
  const auto base_sig = signature(m, &base_loss);

  GradientCheckResult result;
  std::mt19937_64 rng(options.seed);
  FcnModel work = m;
  auto params = work.parameters();
  const auto coords = flat_coordinates(m);
  for (std::size_t idx : sample_indices(coords.size(), options.parameter_samples, rng)) {
    const auto [g, i] = coords[idx];
    const double orig = params[g][i];
    double lp = 0.0, lm = 0.0;
    params[g][i] = orig + eps;
    const auto sp = signature(work, &lp);
    params[g][i] = orig - eps;
    const auto sm = signature(work, &lm);
    params[g][i] = orig;
    if (sp != base_sig || sm != base_sig) {
      ++result.skipped;
      continue;
    }
    result.max_relative_error = std::max(result.max_relative_error, relative_error(grads[g][i], (lp - lm) / (2.0 * eps)));
    ++result.checked;
  }
  return result;
}

// ---------------------------------------------------------------- persistence

nlohmann::json to_json(const FcnModel& m) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : m.blocks)
    blocks.push_back({{"in_channels", b.in_channels},
                      {"out_channels", b.out_channels},
                      {"kernel", b.kernel},
                      {"weight", b.weight},
                      {"bias", b.bias},
                      {"gamma", b.gamma},
                      {"beta", b.beta},
                      {"running_mean", b.running_mean},
                      {"running_var", b.running_var}});
  return {{"format", "diagnostica-fcn"},
          {"version", 1},
          {"architecture",
           {{"filters", m.architecture.filters}, {"kernels", m.architecture.kernels}, {"length", m.architecture.length}}},
          {"seed", m.seed},
          {"parameter_count", m.parameter_count()},
          {"blocks", blocks},
          {"dense", {{"weight", m.dense_weight}, {"bias", m.dense_bias}}}};
}

FcnModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "diagnostica-fcn") throw ConfigError("not a model file");
    if (j.at("version").get<int>() != 1) throw ConfigError("unsupported model version");
    Architecture arch;
    arch.filters = j.at("architecture").at("filters").get<std::array<std::size_t, 3>>();
    arch.kernels = j.at("architecture").at("kernels").get<std::array<std::size_t, 3>>();
    arch.length = j.at("architecture").at("length").get<std::size_t>();
    FcnModel m = FcnModel::initialize(arch, j.at("seed").get<std::uint64_t>());
    const auto& blocks = j.at("blocks");
    if (blocks.size() != 3) throw ShapeError("model needs three blocks");
    auto fill = [](std::vector<double>& dst, const nlohmann::json& src, const char* name) {
      auto v = src.at(name).get<std::vector<double>>();
      if (v.size() != dst.size()) throw ShapeError(std::string("tensor '") + name + "' has the wrong size");
      dst = std::move(v);
    };
    for (std::size_t b = 0; b < 3; ++b) {
      auto& blk = m.blocks[b];
      for (const char* name : {"weight", "bias", "gamma", "beta", "running_mean", "running_var"}) {
        std::vector<double>* dst = nullptr;
        const std::string n = name;
        if (n == "weight") dst = &blk.weight;
        else if (n == "bias") dst = &blk.bias;
        else if (n == "gamma") dst = &blk.gamma;
        else if (n == "beta") dst = &blk.beta;
        else if (n == "running_mean") dst = &blk.running_mean;
        else dst = &blk.running_var;
        fill(*dst, blocks[b], name);
      }
    }
    fill(m.dense_weight, j.at("dense"), "weight");
    fill(m.dense_bias, j.at("dense"), "bias");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const FcnModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InfrastructureError("cannot write model '" + path + "'");
  out << to_json(m).dump() << '\n';
}

FcnModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InfrastructureError("cannot read model '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("model '" + path + "' is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

// ---------------------------------------------------------------- synthetic data

std::vector<SyntheticSeries> make_flat_vs_spike(const SyntheticConfig& config) {
  if (config.length < 8 || config.spike_width == 0 || config.spike_width * 2 >= config.length)
    throw ConfigError("synthetic series too short for the spike width");
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> period(16.0, 48.0), phase(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> amp(config.amplitude_min, config.amplitude_max);
  std::uniform_real_distribution<double> noise_scale(0.5, 1.5);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::bernoulli_distribution sign_coin(0.5);
  std::uniform_real_distribution<double> envelope_period(static_cast<double>(config.length) / 2.0,
                                                         2.0 * static_cast<double>(config.length));
  const std::size_t margin = config.spike_width / 2;
  std::uniform_int_distribution<std::size_t> start(margin, config.length - config.spike_width - margin);
  const auto anomalous = static_cast<std::size_t>(std::llround(config.anomalous_share * static_cast<double>(config.count)));

  std::vector<SyntheticSeries> out(config.count);
  for (std::size_t i = 0; i < config.count; ++i) {
    auto& s = out[i];
    const double p = period(rng), ph = phase(rng), a = amp(rng), sd = config.noise * noise_scale(rng);
    const double env_period = envelope_period(rng), env_phase = phase(rng);
    s.values.resize(config.length);
    for (std::size_t t = 0; t < config.length; ++t) {
      const double tt = static_cast<double>(t);
      const double env = 1.0 + config.envelope_depth * std::sin(2.0 * M_PI * tt / env_period + env_phase);
      s.values[t] = a * env * std::sin(2.0 * M_PI * tt / p + ph) + sd * noise(rng);
    }
    s.label = i < anomalous ? kAnomalous : kRegular;
    if (s.label == kAnomalous) {
      const std::size_t s0 = start(rng);
      s.spike_start = s0;
      const double sign = config.random_sign && sign_coin(rng) ? -1.0 : 1.0;
      for (std::size_t t = s0; t < s0 + config.spike_width; ++t) s.values[t] += sign * config.spike_amplitude;
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<LabeledSeries> to_labeled(std::span<const SyntheticSeries> series) {
  std::vector<LabeledSeries> out;
  out.reserve(series.size());
  for (const auto& s : series) out.push_back({z_normalize(s.values).values, s.label});
  return out;
}

}  // namespace diagnostica::fcn
