#pragma once

// Class activation maps over the last convolution of an FcnModel.
//
//   grad-cam:  L(t) = ReLU( sum_k mean_t'(dy_c/dA_k(t')) * A_k(t) )
//   hires-cam: L(t) = ReLU( sum_k dy_c/dA_k(t) * A_k(t) )
//
// L is linearly resampled to the input length when needed and min-max scaled
// to [0, 1]; a flat L yields all zeros.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diagnostica/fcn.hpp"
#include "json.hpp"

namespace diagnostica::cam {

enum class Method { grad_cam, hires_cam };

std::string_view to_string(Method m) noexcept;
/// Accepts grad-cam|hires-cam (underscores allowed).
Method parse_method(std::string_view text);

struct Heatmap {
  std::vector<double> values;
  Method method = Method::grad_cam;
  int target_class = fcn::kAnomalous;
};

/// Relevance from explicit feature maps and gradients, both [K][T] row-major.
std::vector<double> relevance(Method method, std::span<const double> maps, std::span<const double> grads, std::size_t K,
                              std::size_t T);

/// ReLU, resample to n, min-max scale.
std::vector<double> normalize(std::span<const double> relevance, std::size_t n);

/// Linear interpolation of v onto n evenly spaced points.
std::vector<double> resample(std::span<const double> v, std::size_t n);

/// Default class is the model's best guess.
Heatmap compute(Method method, const fcn::FcnModel& m, std::span<const double> v,
                std::optional<int> target_class = std::nullopt);
inline Heatmap grad_cam(const fcn::FcnModel& m, std::span<const double> v, std::optional<int> c = std::nullopt) {
  return compute(Method::grad_cam, m, v, c);
}
inline Heatmap hires_cam(const fcn::FcnModel& m, std::span<const double> v, std::optional<int> c = std::nullopt) {
  return compute(Method::hires_cam, m, v, c);
}

std::size_t argmax(std::span<const double> v);

nlohmann::json to_json(const Heatmap& h);

struct Report {
  std::string svg;
  std::string csv;
};

/// One track per heatmap with the series drawn over per-sample shading.
/// Throws ShapeError when a heatmap length differs from the series.
Report render_heatmap_report(std::span<const double> series, std::span<const Heatmap> heatmaps);

}  // namespace diagnostica::cam
