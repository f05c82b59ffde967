#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "chain/ap.hpp"
#include "chain/model.hpp"
#include "chain/rng.hpp"

namespace chain::testing {

// --- finite-difference gradient checking -------------------------------------
// loss_fn builds a fresh graph from the current ModelState each call and
// returns the scalar loss value. The reported error is
// |num - ana| / max(|num|, |ana|, floor): relative for gradients above the
// floor, absolute below it (central differences in double are accurate to
// ~1e-9, far under both regimes).
struct GradCheckResult {
  double max_err = 0.0;
  std::string worst_param;
};

inline GradCheckResult finite_difference_check(
    ModelState<double>& model,
    const std::function<Var<double>(Tape<double>&, BoundModel<double>&)>& loss_graph,
    double eps = 1e-5, double floor = 1e-2) {
  Tape<double> tape;
  BoundModel<double> bm = bind_model(tape, model);
  Var<double> loss = loss_graph(tape, bm);
  tape.backward(loss);
  std::vector<Mat<double>> analytic;
  for (const Var<double>& p : bm.by_index) {
    if (p.grad().size() == 0)
      analytic.push_back(Mat<double>::Zero(p.rows(), p.cols()));
    else
      analytic.push_back(p.grad());
  }

  auto eval = [&]() {
    Tape<double> t2;
    BoundModel<double> b2 = bind_model(t2, model, false);
    return loss_graph(t2, b2).scalar();
  };

  GradCheckResult res;
  std::size_t pi = 0;
  model.for_each_param([&](const std::string& name, Mat<double>& p) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        const double orig = p(i, j);
        p(i, j) = orig + eps;
        const double up = eval();
        p(i, j) = orig - eps;
        const double down = eval();
        p(i, j) = orig;
        const double num = (up - down) / (2.0 * eps);
        const double ana = analytic[pi](i, j);
        const double err = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), floor});
        if (err > res.max_err) {
          res.max_err = err;
          res.worst_param = name;
        }
      }
    }
    ++pi;
  });
  return res;
}

// --- independent InfoNCE oracle ----------------------------------------------
// Explicit loops, plain double math; no shared code with the implementation.
inline double infonce_bruteforce(const std::vector<std::vector<double>>& view1,
                                 const std::vector<std::vector<double>>& view2, double tau) {
  const std::size_t b = view1.size();
  auto cos = [](const std::vector<double>& a, const std::vector<double>& c) {
    double dot = 0, na = 0, nc = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      dot += a[k] * c[k];
      na += a[k] * a[k];
      nc += c[k] * c[k];
    }
    return dot / (std::sqrt(na) * std::sqrt(nc));
  };
  // anchors: (view index n, video index i)
  double total = 0.0;
  for (int n = 0; n < 2; ++n) {
    for (std::size_t i = 0; i < b; ++i) {
      const auto& anchor = n == 0 ? view1[i] : view2[i];
      const auto& positive = n == 0 ? view2[i] : view1[i];
      const double pos = std::exp(cos(anchor, positive) / tau);
      double denom = pos;
      for (std::size_t j = 0; j < b; ++j) {
        if (j == i) continue;
        denom += std::exp(cos(anchor, view1[j]) / tau);
        denom += std::exp(cos(anchor, view2[j]) / tau);
      }
      total += -std::log(pos / denom);
    }
  }
  return total / (2.0 * b);
}

// --- clustering oracles --------------------------------------------------------

// Exhaustive search over exemplar subsets maximizing the net-similarity
// objective; feasible up to n ~ 15.
inline double best_exemplar_objective(const Eigen::MatrixXd& s) {
  const int n = static_cast<int>(s.rows());
  double best = -std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    double obj = 0.0;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        obj += s(i, i);
      } else {
        double bi = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < n; ++k)
          if (mask & (1u << k)) bi = std::max(bi, s(i, k));
        obj += bi;
      }
    }
    best = std::max(best, obj);
  }
  return best;
}

// Well-separated clustering instance: groups sit on a circle (equal pairwise
// gaps), each group is a central point plus satellites at distinct small
// offsets so the best exemplar is unambiguous; 2-point groups are symmetric,
// so either exemplar gives the same objective. n <= 7.
inline Eigen::MatrixXd separated_instance(Rng& rng, int* out_groups = nullptr) {
  const int groups = 2 + static_cast<int>(rng.uniform_int(2));  // 2 or 3
  std::vector<int> sizes(groups, 1);
  int n = groups;
  while (n < 7 && rng.bernoulli(0.6)) {
    const int g = static_cast<int>(rng.uniform_int(groups));
    if (sizes[g] < 3) {
      ++sizes[g];
      ++n;
    }
  }
  Eigen::MatrixXd pts(n, 2);
  const double radius = 25.0;
  int row = 0;
  for (int g = 0; g < groups; ++g) {
    const double angle = 2.0 * 3.14159265358979 * g / groups;
    const double cx = radius * std::cos(angle), cy = radius * std::sin(angle);
    for (int s = 0; s < sizes[g]; ++s) {
      // satellite offsets 0.3 and 0.45 in distinct directions; center first
      const double off = s == 0 ? 0.0 : (s == 1 ? 0.3 : 0.45);
      const double dir = s * 1.7 + rng.uniform() * 0.2;
      pts(row, 0) = cx + off * std::cos(dir);
      pts(row, 1) = cy + off * std::sin(dir);
      ++row;
    }
  }
  if (out_groups) *out_groups = groups;
  return pts;
}

// Adjusted Rand index between two labelings.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size();
  std::map<int, std::map<int, long long>> table;
  std::map<int, long long> ra, rb;
  for (std::size_t i = 0; i < n; ++i) {
    table[a[i]][b[i]]++;
    ra[a[i]]++;
    rb[b[i]]++;
  }
  auto comb2 = [](long long x) { return x * (x - 1) / 2.0; };
  double sum_ij = 0, sum_a = 0, sum_b = 0;
  for (const auto& [ka, row] : table)
    for (const auto& [kb, cnt] : row) sum_ij += comb2(cnt);
  for (const auto& [k, cnt] : ra) sum_a += comb2(cnt);
  for (const auto& [k, cnt] : rb) sum_b += comb2(cnt);
  const double total = comb2(static_cast<long long>(n));
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both labelings trivial
  return (sum_ij - expected) / (max_index - expected);
}

// --- fixtures -----------------------------------------------------------------

inline Mat<double> random_mat(int rows, int cols, Rng& rng, double scale = 1.0) {
  Mat<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = scale * rng.normal();
  return m;
}

inline Mat<float> random_matf(int rows, int cols, Rng& rng, double scale = 1.0) {
  return random_mat(rows, cols, rng, scale).cast<float>();
}

}  // namespace chain::testing
