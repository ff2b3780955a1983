#include "flowtune/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace flowtune {

namespace {

constexpr double kWidth = 860.0, kHeight = 420.0;
constexpr double kLeft = 70.0, kRight = 20.0, kTop = 30.0, kBottom = 50.0;

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2"};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (mi, value)
};

std::string render_chart(const std::string& title, const std::string& y_label,
                         const std::vector<Series>& series) {
  double x_max = 1.0, y_max = 1e-9;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      x_max = std::max(x_max, x);
      y_max = std::max(y_max, y);
    }
  y_max *= 1.05;

  auto px = [&](double x) { return kLeft + x / x_max * (kWidth - kLeft - kRight); };
  auto py = [&](double y) { return kHeight - kBottom - y / y_max * (kHeight - kTop - kBottom); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";

  // axes
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\""
      << kWidth - kRight << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    double xv = x_max * i / 5.0, yv = y_max * i / 5.0;
    svg << "<text x=\"" << fmt(px(xv)) << "\" y=\"" << kHeight - kBottom + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt(std::round(xv)) << "</text>\n";
    svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << fmt(py(yv) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(yv)
        << "</text>\n";
  }
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
      << "monitoring interval</text>\n";
  svg << "<text x=\"16\" y=\"" << kHeight / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
      << "transform=\"rotate(-90 16 " << kHeight / 2 << ")\">" << y_label << "</text>\n";

  int color = 0;
  double legend_y = kTop + 6;
  for (const auto& s : series) {
    const char* c = kPalette[color % 7];
    svg << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : s.points) svg << fmt(px(x)) << ',' << fmt(py(y)) << ' ';
    svg << "\"/>\n";
    svg << "<text x=\"" << kWidth - kRight - 6 << "\" y=\"" << fmt(legend_y)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << c
        << "\">" << s.label << "</text>\n";
    legend_y += 14;
    ++color;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

std::vector<std::string> emit_plots(const std::vector<TraceRow>& trace,
                                    const std::string& out_dir,
                                    const std::vector<ChartKind>& kinds) {
  std::vector<std::string> written;
  if (trace.empty()) {
    std::cerr << "flowtune: warning: empty trace, no plots emitted\n";
    return written;
  }
  std::filesystem::create_directories(out_dir);

  std::map<int, Series> thr, str;
  Series loss{"link loss", {}};
  std::map<int, std::pair<double, int>> loss_by_mi;
  for (const auto& r : trace) {
    auto& ts = thr[r.transfer_id];
    ts.label = "transfer " + std::to_string(r.transfer_id);
    ts.points.emplace_back(r.mi, r.throughput_mbps);
    auto& ss = str[r.transfer_id];
    ss.label = ts.label;
    ss.points.emplace_back(r.mi, r.streams);
    loss_by_mi[r.mi].first += r.loss_rate;
    loss_by_mi[r.mi].second++;
  }
  for (const auto& [mi, acc] : loss_by_mi)
    loss.points.emplace_back(mi, acc.first / acc.second);

  auto collect = [](const std::map<int, Series>& m) {
    std::vector<Series> v;
    for (const auto& [id, s] : m) {
      (void)id;
      v.push_back(s);
    }
    return v;
  };

  for (ChartKind kind : kinds) {
    std::string path, body;
    switch (kind) {
      case ChartKind::Throughput:
        path = out_dir + "/throughput.svg";
        body = render_chart("Throughput per transfer", "Mbps", collect(thr));
        break;
      case ChartKind::Streams:
        path = out_dir + "/streams.svg";
        body = render_chart("Parallel streams per transfer", "streams", collect(str));
        break;
      case ChartKind::Loss:
        path = out_dir + "/loss.svg";
        body = render_chart("Link loss rate", "loss rate", {loss});
        break;
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write plot: " + path);
    f << body;
    written.push_back(path);
  }
  return written;
}

}  // namespace flowtune
