#pragma once

#include <algorithm>
#include <vector>

#include "chain/ad.hpp"
#include "chain/ap.hpp"
#include "chain/errors.hpp"
#include "chain/model.hpp"

namespace chain {

struct LossConfig {
  double temperature = 0.5;        // tau of the contrastive term
  double scene_temperature = 0.5;  // tau of the prototypical term
  bool loss_on_binary = true;      // contrast binarized codes (straight-through) instead of h
  bool enable_contrastive = true;
  bool enable_order = true;
  bool enable_scene = true;

  void validate() const {
    if (!(temperature > 0.0) || !(scene_temperature > 0.0))
      throw ArgumentError("loss config: temperature must be > 0");
    if (!enable_contrastive && !enable_order && !enable_scene)
      throw ArgumentError("loss config: no task enabled");
  }
};

struct LossReport {
  double contrastive = 0.0;
  double order = 0.0;
  double scene = 0.0;
  double total = 0.0;
};

// Large negative constant that empties a softmax slot without producing
// non-finite intermediates.
template <class S>
inline constexpr S kNegInfLogit = S(-1e9);

// Cosine similarity of two (row-)vectors as a scalar node.
template <class S>
Var<S> cosine_sim(Var<S> a, Var<S> b) {
  if (a.rows() != 1 || b.rows() != 1 || a.cols() != b.cols())
    throw ArgumentError("cosine_sim: expects two equal-length row vectors");
  return matmul_nt(normalize_rows(a), normalize_rows(b));
}

// InfoNCE over a batch of paired views. `codes` holds 2B rows: view 1 of all
// B videos, then view 2. The positive of row i is its partner row
// (i + B) mod 2B; negatives are both views of every other video.
template <class S>
Var<S> contrastive_loss(Var<S> codes, double tau) {
  const Eigen::Index rows = codes.rows();
  if (rows < 2 || rows % 2 != 0) throw ArgumentError("contrastive_loss: need 2B rows, B >= 1");
  if (!(tau > 0.0)) throw ArgumentError("contrastive_loss: tau must be > 0");
  const Eigen::Index b = rows / 2;

  Var<S> sims = matmul_nt(normalize_rows(codes), normalize_rows(codes));
  Var<S> logits = scale(sims, static_cast<S>(1.0 / tau));
  Mat<S> mask = Mat<S>::Zero(rows, rows);
  mask.diagonal().setConstant(kNegInfLogit<S>);
  logits = add_const(logits, mask);

  std::vector<int> partner(rows);
  for (Eigen::Index i = 0; i < rows; ++i) partner[i] = static_cast<int>((i + b) % rows);
  return cross_entropy_mean(logits, partner);
}

// Mean cross-entropy of per-frame position predictions. `frames` holds
// (n_clips * T) rows, clip-major, so row r carries position r % T.
template <class S>
Var<S> order_loss(Tape<S>& tape, const BoundModel<S>& m, Var<S> frames, int clip_length) {
  if (frames.rows() % clip_length != 0)
    throw ArgumentError("order_loss: rows not a multiple of clip_length");
  Var<S> logits = order_logits(tape, m, frames);
  std::vector<int> labels(frames.rows());
  for (Eigen::Index r = 0; r < frames.rows(); ++r) labels[r] = static_cast<int>(r % clip_length);
  return cross_entropy_mean(logits, labels);
}

// Scene prototypes and per-frame cluster assignments of one video's pooled
// 2T frame rows (no gradient flows into prototypes).
template <class S>
struct SceneAssignment {
  Mat<S> prototypes;            // one row per cluster; empty when single-cluster
  std::vector<int> cluster_of;  // per pooled frame row
  APResult ap;
};

// Clusters a video's pooled frame rows (view 1 then view 2) with AP and
// extracts the prototype rows.
template <class S>
SceneAssignment<S> assign_scenes(const Mat<S>& pooled_values, const APConfig& ap_cfg) {
  SceneAssignment<S> out;
  out.ap = cluster_video_frames(pooled_values.template cast<double>(), ap_cfg);
  if (out.ap.num_clusters() < 1) throw NumericError("assign_scenes: empty cluster assignment");
  const int rows = static_cast<int>(pooled_values.rows());
  out.cluster_of.resize(rows);
  for (int r = 0; r < rows; ++r) {
    const auto it = std::find(out.ap.exemplars.begin(), out.ap.exemplars.end(), out.ap.labels[r]);
    out.cluster_of[r] = static_cast<int>(it - out.ap.exemplars.begin());
  }
  if (out.ap.num_clusters() > 1) {
    out.prototypes.resize(out.ap.num_clusters(), pooled_values.cols());
    for (int k = 0; k < out.ap.num_clusters(); ++k)
      out.prototypes.row(k) = pooled_values.row(out.ap.exemplars[k]);
  }
  return out;
}

// Prototypical contrast of frame rows against fixed prototypes. `frames`
// holds (2B*T) rows, view-1 clips then view-2 clips; assignment i covers the
// pooled rows of video i. Single-cluster videos contribute zero but their
// frames stay in the 2BT denominator.
template <class S>
Var<S> scene_loss_fixed(Tape<S>& tape, Var<S> frames, int batch_videos, int clip_length,
                        double tau, const std::vector<SceneAssignment<S>>& assignments) {
  const int b = batch_videos, t = clip_length;
  if (frames.rows() != static_cast<Eigen::Index>(2) * b * t)
    throw ArgumentError("scene_loss: rows must equal 2 * B * T");
  if (!(tau > 0.0)) throw ArgumentError("scene_loss: tau must be > 0");
  if (static_cast<int>(assignments.size()) != b)
    throw ArgumentError("scene_loss: one assignment per video required");

  std::vector<Var<S>> terms;
  for (int i = 0; i < b; ++i) {
    const SceneAssignment<S>& sa = assignments[i];
    if (sa.ap.num_clusters() == 1) continue;  // no negative prototypes
    Var<S> fv = concat_rows<S>({slice_rows(frames, static_cast<Eigen::Index>(i) * t, t),
                                slice_rows(frames, static_cast<Eigen::Index>(b + i) * t, t)});
    Var<S> sims = matmul_nt(normalize_rows(fv), normalize_rows(tape.constant(sa.prototypes)));
    Var<S> logits = scale(sims, static_cast<S>(1.0 / tau));
    terms.push_back(cross_entropy_sum(logits, sa.cluster_of));
  }

  if (terms.empty()) return tape.constant(Mat<S>::Zero(1, 1));
  Var<S> total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return scale(total, static_cast<S>(1.0 / (2.0 * b * t)));
}

// Fresh clustering per call (the per-step training path).
template <class S>
Var<S> scene_loss(Tape<S>& tape, Var<S> frames, int batch_videos, int clip_length, double tau,
                  const APConfig& ap_cfg = {}, std::vector<APResult>* out_assignments = nullptr) {
  const int b = batch_videos, t = clip_length;
  if (frames.rows() != static_cast<Eigen::Index>(2) * b * t)
    throw ArgumentError("scene_loss: rows must equal 2 * B * T");
  std::vector<SceneAssignment<S>> assignments;
  assignments.reserve(b);
  for (int i = 0; i < b; ++i) {
    Mat<S> pooled(2 * t, frames.cols());
    pooled.topRows(t) = frames.value().middleRows(static_cast<Eigen::Index>(i) * t, t);
    pooled.bottomRows(t) = frames.value().middleRows(static_cast<Eigen::Index>(b + i) * t, t);
    assignments.push_back(assign_scenes(pooled, ap_cfg));
    if (out_assignments) out_assignments->push_back(assignments.back().ap);
  }
  return scene_loss_fixed(tape, frames, batch_videos, clip_length, tau, assignments);
}

// Sum of the enabled terms (unweighted); per-term scalars land in `report`.
template <class S>
Var<S> total_loss(Tape<S>& tape, const BoundModel<S>& m, Var<S> codes, Var<S> frames,
                  int batch_videos, int clip_length, const LossConfig& cfg,
                  const APConfig& ap_cfg, LossReport& report) {
  cfg.validate();
  report = LossReport{};
  std::vector<Var<S>> terms;
  if (cfg.enable_contrastive) {
    Var<S> lc = contrastive_loss(codes, cfg.temperature);
    report.contrastive = static_cast<double>(lc.scalar());
    terms.push_back(lc);
  }
  if (cfg.enable_order) {
    Var<S> lo = order_loss(tape, m, frames, clip_length);
    report.order = static_cast<double>(lo.scalar());
    terms.push_back(lo);
  }
  if (cfg.enable_scene) {
    Var<S> ls = scene_loss(tape, frames, batch_videos, clip_length, cfg.scene_temperature, ap_cfg);
    report.scene = static_cast<double>(ls.scalar());
    terms.push_back(ls);
  }
  Var<S> total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  report.total = static_cast<double>(total.scalar());
  return total;
}

}  // namespace chain
