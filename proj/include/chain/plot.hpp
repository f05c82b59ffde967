#pragma once

#include <string>
#include <vector>

#include "chain/eval.hpp"

namespace chain {

struct NamedCurve {
  std::string name;
  std::vector<PRPoint> points;
};

struct NamedValue {
  std::string name;
  int k = 0;
  double value = 0.0;
};

// Self-contained SVG renderings; no plotting dependency needed at desk scale.
void write_pr_svg(const std::string& path, const std::vector<NamedCurve>& curves);
void write_map_bars_svg(const std::string& path, const std::vector<NamedValue>& values);

// CSV readers matching write_pr_csv / write_metrics_csv.
std::vector<PRPoint> read_pr_csv(const std::string& path);
std::vector<std::pair<int, double>> read_metrics_csv(const std::string& path);

}  // namespace chain
