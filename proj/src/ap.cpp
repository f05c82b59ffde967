#include "chain/ap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "chain/errors.hpp"
#include "chain/rng.hpp"

namespace chain {

void APConfig::validate() const {
  if (!(damping >= 0.5 && damping < 1.0)) throw ArgumentError("ap: damping must be in [0.5, 1)");
  if (convergence_iter < 1 || max_iter < convergence_iter)
    throw ArgumentError("ap: need max_iter >= convergence_iter >= 1");
}

Eigen::MatrixXd build_similarity(const Eigen::MatrixXd& points, const APConfig& cfg) {
  const Eigen::Index n = points.rows();
  if (n < 1) throw ArgumentError("build_similarity: need at least one point");
  if (!points.allFinite()) throw ArgumentError("build_similarity: non-finite points");
  Eigen::MatrixXd s(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    s(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d2 = (points.row(i) - points.row(j)).squaredNorm();
      s(i, j) = -d2;
      s(j, i) = -d2;
    }
  }
  double pref = cfg.preference;
  if (std::isnan(pref)) {
    if (n == 1) {
      pref = 0.0;
    } else {
      std::vector<double> off;
      off.reserve(static_cast<std::size_t>(n) * (n - 1));
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
          if (i != j) off.push_back(s(i, j));
      std::sort(off.begin(), off.end());
      const std::size_t m = off.size();
      pref = (m % 2 == 1) ? off[m / 2] : 0.5 * (off[m / 2 - 1] + off[m / 2]);
    }
  }
  s.diagonal().setConstant(pref);
  return s;
}

APResult affinity_propagation(const Eigen::MatrixXd& similarity, const APConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = similarity.rows();
  if (n < 1 || similarity.cols() != n) throw ArgumentError("affinity_propagation: similarity must be square");
  if (!similarity.allFinite()) throw ArgumentError("affinity_propagation: non-finite similarity");

  APResult res;
  if (n == 1) {
    res.exemplars = {0};
    res.labels = {0};
    res.converged = true;
    res.iterations = 0;
    return res;
  }

  // Symmetric seeded noise breaks exact-tie oscillations on degenerate inputs.
  Eigen::MatrixXd s = similarity;
  if (cfg.noise_scale > 0.0) {
    Rng rng(derive_seed(cfg.noise_seed, static_cast<std::uint64_t>(n)));
    const double amp = cfg.noise_scale * std::max(1.0, s.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < n; ++i) {
      s(i, i) += amp * (rng.uniform() - 0.5);
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double e = amp * (rng.uniform() - 0.5);
        s(i, j) += e;
        s(j, i) += e;
      }
    }
  }

  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  const double lam = cfg.damping;

  std::vector<char> is_exemplar(n, 0), prev(n, 0);
  int stable = 0;
  int it = 0;
  bool converged = false;

  for (it = 1; it <= cfg.max_iter; ++it) {
    // Responsibilities: r(i,k) = s(i,k) - max_{k' != k} (a(i,k') + s(i,k'))
    for (Eigen::Index i = 0; i < n; ++i) {
      double max1 = -std::numeric_limits<double>::infinity();
      double max2 = -std::numeric_limits<double>::infinity();
      Eigen::Index arg1 = -1;
      for (Eigen::Index k = 0; k < n; ++k) {
        const double v = a(i, k) + s(i, k);
        if (v > max1) {
          max2 = max1;
          max1 = v;
          arg1 = k;
        } else if (v > max2) {
          max2 = v;
        }
      }
      for (Eigen::Index k = 0; k < n; ++k) {
        const double rn = s(i, k) - (k == arg1 ? max2 : max1);
        r(i, k) = lam * r(i, k) + (1.0 - lam) * rn;
      }
    }
    // Availabilities: a(i,k) = min(0, r(k,k) + sum_{i' not in {i,k}} max(0, r(i',k)))
    //                 a(k,k) = sum_{i' != k} max(0, r(i',k))
    for (Eigen::Index k = 0; k < n; ++k) {
      double pos_sum = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (i != k) pos_sum += std::max(0.0, r(i, k));
      for (Eigen::Index i = 0; i < n; ++i) {
        double an;
        if (i == k) {
          an = pos_sum;
        } else {
          an = std::min(0.0, r(k, k) + pos_sum - std::max(0.0, r(i, k)));
        }
        a(i, k) = lam * a(i, k) + (1.0 - lam) * an;
      }
    }

    bool changed = false;
    for (Eigen::Index k = 0; k < n; ++k) {
      const char e = (r(k, k) + a(k, k) > 0.0) ? 1 : 0;
      if (e != is_exemplar[k]) changed = true;
      is_exemplar[k] = e;
    }
    if (changed)
      stable = 1;
    else
      ++stable;
    bool any = std::any_of(is_exemplar.begin(), is_exemplar.end(), [](char c) { return c != 0; });
    if (stable >= cfg.convergence_iter && any) {
      converged = true;
      break;
    }
  }
  res.iterations = std::min(it, cfg.max_iter);
  res.converged = converged;

  for (Eigen::Index k = 0; k < n; ++k)
    if (is_exemplar[k]) res.exemplars.push_back(static_cast<int>(k));

  if (res.exemplars.empty()) {
    // No exemplar emerged; degrade to one cluster instead of failing the step.
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < n; ++k)
      if (s(k, k) > s(best, best)) best = k;
    res.exemplars = {static_cast<int>(best)};
    res.converged = false;
    std::fprintf(stderr, "warn=ap_no_exemplar n=%lld fallback=single_cluster\n",
                 static_cast<long long>(n));
  }

  res.labels.assign(n, res.exemplars[0]);
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int k : res.exemplars) {
      if (k == static_cast<int>(i)) {  // exemplars label themselves
        res.labels[i] = k;
        best = std::numeric_limits<double>::infinity();
        break;
      }
      if (s(i, k) > best) {
        best = s(i, k);
        res.labels[i] = k;
      }
    }
  }
  return res;
}

APResult cluster_video_frames(const Eigen::MatrixXd& frames, const APConfig& cfg) {
  if (frames.rows() < 1) throw ArgumentError("cluster_video_frames: empty input");
  return affinity_propagation(build_similarity(frames, cfg), cfg);
}

double ap_objective(const Eigen::MatrixXd& similarity, const APResult& result) {
  double obj = 0.0;
  for (Eigen::Index i = 0; i < similarity.rows(); ++i) obj += similarity(i, result.labels[i]);
  return obj;
}

}  // namespace chain
