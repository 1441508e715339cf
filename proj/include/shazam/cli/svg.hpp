#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

namespace shazam::cli::svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb"};
  return palette[i % 7];
}

inline std::string header(int w, int h, const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" + std::to_string(h) +
         "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" + std::to_string(w / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
         "</text>\n";
}

/// Horizontal bars, one per label.
inline std::string bar_chart(const std::string& title, const std::vector<std::pair<std::string, double>>& bars,
                             const std::string& axis_label) {
  const int w = 640, row = 24, left = 140, top = 34;
  const int h = top + row * static_cast<int>(bars.size()) + 40;
  double vmax = 0.0;
  for (const auto& b : bars) vmax = std::max(vmax, b.second);
  if (vmax <= 0.0) vmax = 1.0;
  const double scale = (w - left - 60) / vmax;
  std::string s = header(w, h, title);
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double y = top + row * static_cast<double>(i);
    s += "<text x=\"" + std::to_string(left - 6) + "\" y=\"" + num(y + 15) + "\" text-anchor=\"end\">" +
         escape(bars[i].first) + "</text>\n";
    s += "<rect x=\"" + std::to_string(left) + "\" y=\"" + num(y + 4) + "\" width=\"" + num(bars[i].second * scale) +
         "\" height=\"" + std::to_string(row - 8) + "\" fill=\"" + color(i) + "\"/>\n";
    s += "<text x=\"" + num(left + bars[i].second * scale + 4) + "\" y=\"" + num(y + 15) + "\">" + num(bars[i].second) +
         "</text>\n";
  }
  s += "<text x=\"" + std::to_string(left + (w - left) / 2) + "\" y=\"" + std::to_string(h - 10) +
       "\" text-anchor=\"middle\">" + escape(axis_label) + "</text>\n</svg>\n";
  return s;
}

struct StepSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y) after each step; y starts at 1
};

/// Right-continuous step curves on [0, x_max] x [0, 1].
inline std::string step_chart(const std::string& title, const std::vector<StepSeries>& series, const std::string& x_label,
                              const std::string& y_label, const std::string& note = "") {
  const int w = 560, h = 380, left = 60, right = 20, top = 34, bottom = 50;
  double xmax = 0.0;
  for (const auto& s : series)
    for (const auto& p : s.points) xmax = std::max(xmax, p.first);
  if (xmax <= 0.0) xmax = 1.0;
  const double pw = w - left - right, ph = h - top - bottom;
  auto X = [&](double x) { return left + pw * x / xmax; };
  auto Y = [&](double y) { return top + ph * (1.0 - y); };
  std::string s = header(w, h, title);
  s += "<line x1=\"" + num(X(0)) + "\" y1=\"" + num(Y(0)) + "\" x2=\"" + num(X(xmax)) + "\" y2=\"" + num(Y(0)) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(X(0)) + "\" y1=\"" + num(Y(0)) + "\" x2=\"" + num(X(0)) + "\" y2=\"" + num(Y(1)) +
       "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = k / 4.0;
    s += "<text x=\"" + num(X(0) - 6) + "\" y=\"" + num(Y(y) + 4) + "\" text-anchor=\"end\">" + num(y) + "</text>\n";
    const double x = xmax * k / 4.0;
    s += "<text x=\"" + num(X(x)) + "\" y=\"" + num(Y(0) + 16) + "\" text-anchor=\"middle\">" + num(x) + "</text>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::string d = "M " + num(X(0)) + " " + num(Y(1));
    double prev = 1.0;
    for (const auto& [x, y] : series[i].points) {
      d += " L " + num(X(x)) + " " + num(Y(prev)) + " L " + num(X(x)) + " " + num(Y(y));
      prev = y;
    }
    d += " L " + num(X(xmax)) + " " + num(Y(prev));
    s += "<path d=\"" + d + "\" fill=\"none\" stroke=\"" + color(i) + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + num(X(xmax) - 100) + "\" y=\"" + std::to_string(top + 14 + 16 * static_cast<int>(i)) +
         "\" fill=\"" + color(i) + "\">" + escape(series[i].name) + "</text>\n";
  }
  if (!note.empty())
    s += "<text x=\"" + num(X(0) + 8) + "\" y=\"" + num(Y(0) - 8) + "\">" + escape(note) + "</text>\n";
  s += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + std::to_string(h - 10) + "\" text-anchor=\"middle\">" +
       escape(x_label) + "</text>\n";
  s += "<text x=\"14\" y=\"" + num(top + ph / 2) + "\" transform=\"rotate(-90 14 " + num(top + ph / 2) +
       ")\" text-anchor=\"middle\">" + escape(y_label) + "</text>\n</svg>\n";
  return s;
}

}  // namespace shazam::cli::svg
