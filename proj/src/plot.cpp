#include "chain/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "chain/errors.hpp"

namespace chain {

namespace {

constexpr int kWidth = 640, kHeight = 480;
constexpr int kMarginL = 60, kMarginR = 20, kMarginT = 30, kMarginB = 50;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

double px(double x01) { return kMarginL + x01 * (kWidth - kMarginL - kMarginR); }
double py(double y01) { return kHeight - kMarginB - y01 * (kHeight - kMarginT - kMarginB); }

void svg_header(std::ostream& out) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

void axes(std::ostream& out, const std::string& xlabel, const std::string& ylabel) {
  out << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\""
      << py(0) << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(0) << "\" y2=\""
      << py(1) << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    out << "<text x=\"" << px(v) << "\" y=\"" << py(0) + 18
        << "\" font-size=\"11\" text-anchor=\"middle\">" << v << "</text>\n";
    out << "<text x=\"" << px(0) - 8 << "\" y=\"" << py(v) + 4
        << "\" font-size=\"11\" text-anchor=\"end\">" << v << "</text>\n";
  }
  out << "<text x=\"" << px(0.5) << "\" y=\"" << kHeight - 10
      << "\" font-size=\"13\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  out << "<text x=\"16\" y=\"" << py(0.5)
      << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << py(0.5)
      << ")\">" << ylabel << "</text>\n";
}

}  // namespace

void write_pr_svg(const std::string& path, const std::vector<NamedCurve>& curves) {
  if (curves.empty()) throw ArgumentError("write_pr_svg: no curves");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open svg: " + path);
  svg_header(out);
  axes(out, "recall", "precision");
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = kPalette[c % 8];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : curves[c].points) out << px(p.recall) << "," << py(p.precision) << " ";
    out << "\"/>\n";
    out << "<text x=\"" << px(0.62) << "\" y=\"" << kMarginT + 16 * (c + 1)
        << "\" font-size=\"12\" fill=\"" << color << "\">" << curves[c].name << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw IoError("svg write failed: " + path);
}

void write_map_bars_svg(const std::string& path, const std::vector<NamedValue>& values) {
  if (values.empty()) throw ArgumentError("write_map_bars_svg: no values");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open svg: " + path);
  svg_header(out);
  axes(out, "run", "mAP");
  const double slot = 1.0 / values.size();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const char* color = kPalette[i % 8];
    const double x0 = px(i * slot + slot * 0.2);
    const double x1 = px(i * slot + slot * 0.8);
    const double y0 = py(0);
    const double y1 = py(std::clamp(values[i].value, 0.0, 1.0));
    out << "<rect x=\"" << x0 << "\" y=\"" << y1 << "\" width=\"" << (x1 - x0) << "\" height=\""
        << (y0 - y1) << "\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << y0 + 32
        << "\" font-size=\"11\" text-anchor=\"middle\">" << values[i].name << "@" << values[i].k
        << "</text>\n";
    out << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << y1 - 6
        << "\" font-size=\"11\" text-anchor=\"middle\">" << values[i].value << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw IoError("svg write failed: " + path);
}

std::vector<PRPoint> read_pr_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pr csv: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "radius,precision,recall")
    throw FormatError("pr csv: bad header in " + path);
  std::vector<PRPoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    PRPoint p;
    char comma;
    if (!(ss >> p.radius >> comma >> p.precision >> comma >> p.recall))
      throw FormatError("pr csv: bad row in " + path + ": " + line);
    out.push_back(p);
  }
  if (out.empty()) throw FormatError("pr csv: no data rows in " + path);
  return out;
}

std::vector<std::pair<int, double>> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics csv: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "metric,K,value")
    throw FormatError("metrics csv: bad header in " + path);
  std::vector<std::pair<int, double>> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string metric;
    if (!std::getline(ss, metric, ',')) throw FormatError("metrics csv: bad row in " + path);
    int k;
    double v;
    char comma;
    if (!(ss >> k >> comma >> v)) throw FormatError("metrics csv: bad row in " + path + ": " + line);
    out.emplace_back(k, v);
  }
  if (out.empty()) throw FormatError("metrics csv: no data rows in " + path);
  return out;
}

}  // namespace chain
