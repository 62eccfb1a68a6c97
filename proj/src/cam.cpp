#include "diagnostica/cam.hpp"

#include <algorithm>
#include <sstream>

#include "diagnostica/errors.hpp"
#include "diagnostica/tabular.hpp"

namespace diagnostica::cam {

std::string_view to_string(Method m) noexcept { return m == Method::grad_cam ? "grad-cam" : "hires-cam"; }

Method parse_method(std::string_view text) {
  if (text == "grad-cam" || text == "grad_cam" || text == "gradcam") return Method::grad_cam;
  if (text == "hires-cam" || text == "hires_cam" || text == "hirescam") return Method::hires_cam;
  throw ValidationError("unknown CAM method '" + std::string(text) + "'");
}

std::vector<double> relevance(Method method, std::span<const double> maps, std::span<const double> grads, std::size_t K,
                              std::size_t T) {
  if (maps.size() != K * T || grads.size() != K * T) throw ShapeError("feature maps and gradients must be K x T");
  std::vector<double> L(T, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const double* a = maps.data() + k * T;
    const double* g = grads.data() + k * T;
    if (method == Method::grad_cam) {
      double alpha = 0.0;
      for (std::size_t t = 0; t < T; ++t) alpha += g[t];
      alpha /= static_cast<double>(T);
      for (std::size_t t = 0; t < T; ++t) L[t] += alpha * a[t];
    } else {
      for (std::size_t t = 0; t < T; ++t) L[t] += g[t] * a[t];
    }
  }
  return L;
}

std::vector<double> resample(std::span<const double> v, std::size_t n) {
  if (v.size() == n) return {v.begin(), v.end()};
  if (v.empty()) return std::vector<double>(n, 0.0);
  std::vector<double> out(n);
  if (v.size() == 1 || n == 1) {
    std::fill(out.begin(), out.end(), v[0]);
    return out;
  }
  const double step = static_cast<double>(v.size() - 1) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) * step;
    const auto lo = std::min(static_cast<std::size_t>(x), v.size() - 2);
    const double frac = x - static_cast<double>(lo);
    out[i] = v[lo] * (1.0 - frac) + v[lo + 1] * frac;
  }
  return out;
}

std::vector<double> normalize(std::span<const double> relevance, std::size_t n) {
  std::vector<double> r(relevance.begin(), relevance.end());
  for (auto& x : r) x = std::max(0.0, x);
  r = resample(r, n);
  if (r.empty()) return r;
  const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
  const double mn = *lo, mx = *hi;
  if (!(mx > mn)) return std::vector<double>(n, 0.0);
  for (auto& x : r) x = std::clamp((x - mn) / (mx - mn), 0.0, 1.0);
  return r;
}

Heatmap compute(Method method, const fcn::FcnModel& m, std::span<const double> v, std::optional<int> target_class) {
  const fcn::Trace trace = fcn::forward(m, v);
  const int c = target_class.value_or(trace.prediction.y);
  const std::vector<double> grads = fcn::backward_logit(m, trace, c, nullptr);
  const std::size_t K = m.architecture.filters[2];
  const std::size_t T = trace.length;
  Heatmap h;
  h.method = method;
  h.target_class = c;
  h.values = normalize(relevance(method, trace.last_conv(), grads, K, T), v.size());
  return h;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

nlohmann::json to_json(const Heatmap& h) {
  return {{"method", to_string(h.method)}, {"target_class", h.target_class}, {"values", h.values}};
}

Report render_heatmap_report(std::span<const double> series, std::span<const Heatmap> heatmaps) {
  const std::size_t n = series.size();
  for (const auto& h : heatmaps)
    if (h.values.size() != n)
      throw ShapeError("heatmap '" + std::string(to_string(h.method)) + "' has length " + std::to_string(h.values.size()) +
                       ", series has " + std::to_string(n));

  Report r;
  {
    std::ostringstream csv;
    csv << "index,value";
    for (const auto& h : heatmaps) csv << ',' << to_string(h.method);
    csv << '\n';
    for (std::size_t i = 0; i < n; ++i) {
      csv << i << ',' << tabular::format_number(series[i]);
      for (const auto& h : heatmaps) csv << ',' << tabular::format_number(h.values[i]);
      csv << '\n';
    }
    r.csv = csv.str();
  }

  constexpr double width = 800.0, track = 120.0, gap = 24.0, left = 10.0;
  const std::size_t tracks = std::max<std::size_t>(1, heatmaps.size());
  const double height = static_cast<double>(tracks) * (track + gap) + gap;
  double lo = 0.0, hi = 1.0;
  if (n > 0) {
    const auto [a, b] = std::minmax_element(series.begin(), series.end());
    lo = *a;
    hi = *b > *a ? *b : *a + 1.0;
  }
  const double dx = n > 1 ? (width - 2 * left) / static_cast<double>(n - 1) : 0.0;
  auto num = [](double v) { return tabular::format_number(std::round(v * 100.0) / 100.0); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\">\n";
  for (std::size_t k = 0; k < tracks; ++k) {
    const double top = gap + static_cast<double>(k) * (track + gap);
    const Heatmap* h = k < heatmaps.size() ? &heatmaps[k] : nullptr;
    svg << "<g class=\"track\" data-method=\"" << (h ? to_string(h->method) : std::string_view("series")) << "\">\n";
    svg << "<text x=\"" << num(left) << "\" y=\"" << num(top - 6) << "\" font-size=\"12\">"
        << (h ? to_string(h->method) : std::string_view("series")) << "</text>\n";
    if (h) {
      const double cell = n > 1 ? dx : width - 2 * left;
      for (std::size_t i = 0; i < n; ++i)
        svg << "<rect x=\"" << num(left + static_cast<double>(i) * dx - cell / 2) << "\" y=\"" << num(top) << "\" width=\""
            << num(cell) << "\" height=\"" << num(track) << "\" fill=\"#d62728\" fill-opacity=\""
            << num(h->values[i]) << "\"/>\n";
    }
    if (n > 0) {
      svg << "<polyline fill=\"none\" stroke=\"#1f3b73\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < n; ++i) {
        const double y = top + track - (series[i] - lo) / (hi - lo) * track;
        svg << (i ? " " : "") << num(left + static_cast<double>(i) * dx) << ',' << num(y);
      }
      svg << "\"/>\n";
    }
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  r.svg = svg.str();
  return r;
}

}  // namespace diagnostica::cam
