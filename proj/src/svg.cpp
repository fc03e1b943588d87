#include <wdist/svg.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace wdist {

namespace {

constexpr double kPanelW = 420, kPanelH = 320, kLeft = 62, kRight = 16, kTop = 34, kBottom = 48;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
const char* const kMarkers[] = {"circle", "square", "triangle", "diamond", "circle", "square"};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string tick_label(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

void marker(std::ostringstream& os, const char* shape, double x, double y, const char* color) {
  const std::string fill = std::string("fill=\"") + color + "\"";
  if (std::string(shape) == "circle") {
    os << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"3.5\" " << fill << "/>\n";
  } else if (std::string(shape) == "square") {
    os << "<rect x=\"" << num(x - 3.5) << "\" y=\"" << num(y - 3.5) << "\" width=\"7\" height=\"7\" " << fill
       << "/>\n";
  } else if (std::string(shape) == "triangle") {
    os << "<polygon points=\"" << num(x) << ',' << num(y - 4.5) << ' ' << num(x - 4) << ',' << num(y + 3) << ' '
       << num(x + 4) << ',' << num(y + 3) << "\" " << fill << "/>\n";
  } else {
    os << "<polygon points=\"" << num(x) << ',' << num(y - 4.5) << ' ' << num(x - 4.5) << ',' << num(y) << ' '
       << num(x) << ',' << num(y + 4.5) << ' ' << num(x + 4.5) << ',' << num(y) << "\" " << fill << "/>\n";
  }
}

void draw_panel(std::ostringstream& os, const Panel& p, double ox) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : p.series)
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y) || (p.log_x && x <= 0)) continue;
      xmin = std::min(xmin, x), xmax = std::max(xmax, x);
      ymin = std::min(ymin, y), ymax = std::max(ymax, y);
    }
  if (!std::isfinite(xmin)) xmin = 1, xmax = 10, ymin = 0, ymax = 1;
  ymin = std::min(ymin, 0.0);
  if (ymax <= ymin) ymax = ymin + 1;
  ymax += 0.05 * (ymax - ymin);
  auto fx = [&](double x) { return p.log_x ? std::log10(x) : x; };
  double lo = fx(xmin), hi = fx(xmax);
  if (hi <= lo) lo -= 0.5, hi += 0.5;
  const double pw = kPanelW - kLeft - kRight, ph = kPanelH - kTop - kBottom;
  auto px = [&](double x) { return ox + kLeft + (fx(x) - lo) / (hi - lo) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  os << "<text x=\"" << num(ox + kLeft + pw / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << escape(p.title) << "</text>\n";
  os << "<rect x=\"" << num(ox + kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(pw) << "\" height=\""
     << num(ph) << "\" fill=\"none\" stroke=\"#333\"/>\n";

  // x ticks at the data abscissae (block counts), y ticks at 5 even steps
  std::vector<double> xs;
  for (const auto& s : p.series)
    for (const auto& pt : s.points)
      if (std::isfinite(pt.first) && (!p.log_x || pt.first > 0)) xs.push_back(pt.first);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (double x : xs) {
    os << "<line x1=\"" << num(px(x)) << "\" y1=\"" << num(kTop + ph) << "\" x2=\"" << num(px(x)) << "\" y2=\""
       << num(kTop + ph + 5) << "\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << num(px(x)) << "\" y=\"" << num(kTop + ph + 18) << "\" text-anchor=\"middle\" font-size=\"11\">"
       << tick_label(x) << "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double y = ymin + (ymax - ymin) * i / 5.0;
    os << "<line x1=\"" << num(ox + kLeft - 5) << "\" y1=\"" << num(py(y)) << "\" x2=\"" << num(ox + kLeft)
       << "\" y2=\"" << num(py(y)) << "\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << num(ox + kLeft - 8) << "\" y=\"" << num(py(y) + 4) << "\" text-anchor=\"end\" font-size=\"11\">"
       << tick_label(y) << "</text>\n";
  }
  os << "<text x=\"" << num(ox + kLeft + pw / 2) << "\" y=\"" << num(kPanelH - 10)
     << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(p.x_label) << "</text>\n";
  os << "<text transform=\"translate(" << num(ox + 16) << ',' << num(kTop + ph / 2)
     << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">" << escape(p.y_label) << "</text>\n";

  for (std::size_t i = 0; i < p.series.size(); ++i) {
    auto pts = p.series[i].points;
    std::sort(pts.begin(), pts.end());
    const char* color = kColors[i % 6];
    std::ostringstream line;
    for (const auto& [x, y] : pts)
      if (std::isfinite(x) && std::isfinite(y) && (!p.log_x || x > 0)) line << num(px(x)) << ',' << num(py(y)) << ' ';
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"" << line.str()
       << "\"/>\n";
    for (const auto& [x, y] : pts)
      if (std::isfinite(x) && std::isfinite(y) && (!p.log_x || x > 0)) marker(os, kMarkers[i % 6], px(x), py(y), color);
  }
}

}  // namespace

std::string svg_panels(const std::vector<Panel>& panels) {
  std::vector<std::string> names;
  for (const auto& p : panels)
    for (const auto& s : p.series)
      if (std::find(names.begin(), names.end(), s.name) == names.end()) names.push_back(s.name);
  const double width = kPanelW * double(std::max<std::size_t>(panels.size(), 1));
  const double height = kPanelH + 28;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
     << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\" font-family=\"sans-serif\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) draw_panel(os, panels[i], kPanelW * double(i));
  double lx = kLeft;
  for (std::size_t i = 0; i < names.size(); ++i) {
    // legend style follows the series position in the first panel that has it
    std::size_t idx = i;
    for (auto p = panels.rbegin(); p != panels.rend(); ++p)
      for (std::size_t j = 0; j < p->series.size(); ++j)
        if (p->series[j].name == names[i]) idx = j;
    marker(os, kMarkers[idx % 6], lx, kPanelH + 12, kColors[idx % 6]);
    os << "<text x=\"" << num(lx + 8) << "\" y=\"" << num(kPanelH + 16) << "\" font-size=\"12\">" << escape(names[i])
       << "</text>\n";
    lx += 24 + 8.0 * double(names[i].size());
  }
  os << "</svg>\n";
  return os.str();
}

std::string sweep_figure(const std::vector<ExperimentReport>& sweep, double scale) {
  std::map<std::string, Series> bias, rmse;
  std::vector<std::string> order;
  for (const auto& r : sweep)
    for (const auto& m : r.estimators) {
      const std::string name = to_string(m.kind);
      if (!bias.count(name)) order.push_back(name);
      bias[name].name = rmse[name].name = name;
      bias[name].points.emplace_back(double(r.config.blocks()), scale * m.bias);
      rmse[name].points.emplace_back(double(r.config.blocks()), scale * m.rmse);
    }
  const std::string unit = scale == 1.0 ? "" : " (x" + tick_label(scale) + ")";
  Panel a{"Absolute bias", "K (number of blocks)", "|bias|" + unit, true, {}};
  Panel b{"Root mean squared error", "K (number of blocks)", "RMSE" + unit, true, {}};
  for (const auto& n : order) {
    a.series.push_back(bias[n]);
    b.series.push_back(rmse[n]);
  }
  return svg_panels({a, b});
}

}  // namespace wdist
