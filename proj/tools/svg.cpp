#include "svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>

namespace choicealign::svg {
namespace {

constexpr std::array<const char*, 6> kPalette = {"#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377"};

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string diverging(double t) {
  t = std::clamp(t, -1.0, 1.0);
  const auto mix = [](double a, double b, double w) { return static_cast<int>(std::lround(a + (b - a) * w)); };
  if (t >= 0.0) return fmt::format("rgb({},{},{})", mix(255, 202, t), mix(255, 0, t), mix(255, 32, t));
  return fmt::format("rgb({},{},{})", mix(255, 5, -t), mix(255, 113, -t), mix(255, 176, -t));
}

std::string header(int width, int height, const std::string& title) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{3}</text>\n",
      width, height, width / 2, escape(title));
}

}  // namespace

std::string heatmap(const std::string& title, const std::vector<std::string>& rows,
                    const std::vector<std::string>& cols, const std::vector<std::vector<std::optional<double>>>& values,
                    double center) {
  constexpr int cell_w = 64, cell_h = 28, left = 170, top = 110;
  double span = 0.0;
  for (const auto& r : values) {
    for (const auto& v : r) {
      if (v) span = std::max(span, std::abs(*v - center));
    }
  }
  if (span == 0.0) span = 1.0;
  const int width = left + cell_w * static_cast<int>(cols.size()) + 20;
  const int height = top + cell_h * static_cast<int>(rows.size()) + 20;
  std::string out = header(width, height, title);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const int x = left + cell_w * static_cast<int>(c) + cell_w / 2;
    out += fmt::format("<text x=\"{0}\" y=\"{1}\" transform=\"rotate(-45 {0} {1})\">{2}</text>\n", x, top - 6,
                       escape(cols[c]));
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int y = top + cell_h * static_cast<int>(r);
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", left - 6, y + cell_h / 2 + 4,
                       escape(rows[r]));
    for (std::size_t c = 0; c < cols.size() && c < values[r].size(); ++c) {
      const int x = left + cell_w * static_cast<int>(c);
      const auto& v = values[r][c];
      out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"#999\"/>\n", x, y,
                         cell_w, cell_h, v ? diverging((*v - center) / span) : "#dddddd");
      out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", x + cell_w / 2,
                         y + cell_h / 2 + 4, v ? fmt::format("{:.3f}", *v) : "n/a");
    }
  }
  return out + "</svg>\n";
}

std::string grouped_bars(const std::string& title, const std::vector<std::string>& groups,
                         const std::vector<std::string>& series, const std::vector<std::vector<double>>& values) {
  constexpr int bar_w = 18, gap = 24, left = 70, top = 50, plot_h = 260;
  double lo = 0.0, hi = 0.0;
  for (const auto& g : values) {
    for (const double v : g) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (hi == lo) hi = lo + 1.0;
  const int group_w = bar_w * static_cast<int>(series.size()) + gap;
  const int width = left + group_w * static_cast<int>(groups.size()) + 160;
  const int height = top + plot_h + 90;
  const auto ypos = [&](double v) { return top + plot_h - static_cast<int>(std::lround((v - lo) / (hi - lo) * plot_h)); };
  std::string out = header(width, height, title);
  const int axis_x_end = left + group_w * static_cast<int>(groups.size());
  out += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", left, top,
                     top + plot_h);
  out += fmt::format("<line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"black\"/>\n", left, axis_x_end,
                     ypos(0.0));
  for (const double tick : {lo, (lo + hi) / 2.0, hi}) {
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.3g}</text>\n", left - 4, ypos(tick) + 4,
                       tick);
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const int gx = left + gap / 2 + group_w * static_cast<int>(g);
    for (std::size_t s = 0; s < series.size() && s < values[g].size(); ++s) {
      const double v = values[g][s];
      if (!std::isfinite(v)) continue;
      const int y0 = ypos(0.0), y1 = ypos(v);
      out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"><title>{}: {}</title></rect>\n",
                         gx + bar_w * static_cast<int>(s), std::min(y0, y1), bar_w - 2, std::abs(y1 - y0),
                         kPalette[s % kPalette.size()], escape(series[s]), v);
    }
    const int lx = gx + bar_w * static_cast<int>(series.size()) / 2;
    const int ly = top + plot_h + 14;
    out += fmt::format("<text x=\"{0}\" y=\"{1}\" transform=\"rotate(30 {0} {1})\">{2}</text>\n", lx, ly,
                       escape(groups[g]));
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const int y = top + 14 * static_cast<int>(s);
    out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n", axis_x_end + 16, y,
                       kPalette[s % kPalette.size()]);
    out += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", axis_x_end + 30, y + 9, escape(series[s]));
  }
  return out + "</svg>\n";
}

}  // namespace choicealign::svg
