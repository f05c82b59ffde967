#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "chain/ap.hpp"
#include "chain/augment.hpp"
#include "chain/corpus.hpp"
#include "chain/losses.hpp"
#include "chain/model.hpp"

namespace chain {

struct TrainConfig {
  int batch_size = 32;       // paper default 128; desk default 32
  int epochs = 50;
  double base_lr = 1e-4;
  double min_lr = 1e-5;
  double lr_decay = 0.9;     // multiplied in every lr_decay_every epochs
  int lr_decay_every = 20;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
  bool temporal_aug = true;
  bool spatial_aug = true;
  LossConfig loss;
  AugmentConfig aug;
  EncoderConfig encoder;
  APConfig ap;

  void validate() const {
    if (batch_size < 1) throw ArgumentError("train config: batch_size must be >= 1");
    if (epochs < 0) throw ArgumentError("train config: epochs must be >= 0");
    if (!(min_lr > 0.0) || base_lr < min_lr)
      throw ArgumentError("train config: need base_lr >= min_lr > 0");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0) || lr_decay_every < 1)
      throw ArgumentError("train config: bad lr decay");
    if (!loss.enable_contrastive)
      throw ArgumentError("train config: hash training requires the contrastive task");
    aug.validate();
    ap.validate();
  }
};

inline double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ArgumentError("lr_schedule: epoch must be >= 0");
  return std::max(cfg.min_lr, cfg.base_lr * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_every));
}

template <class S>
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long t = 0;
  std::vector<Mat<S>> m, v;

  static Adam init(const ModelState<S>& model, double b1, double b2, double e) {
    Adam a;
    a.beta1 = b1;
    a.beta2 = b2;
    a.eps = e;
    model.for_each_param([&a](const std::string&, const Mat<S>& p) {
      a.m.push_back(Mat<S>::Zero(p.rows(), p.cols()));
      a.v.push_back(Mat<S>::Zero(p.rows(), p.cols()));
    });
    return a;
  }

  void step(ModelState<S>& model, const std::vector<Mat<S>>& grads, double lr) {
    ++t;
    const S c1 = static_cast<S>(1.0 / (1.0 - std::pow(beta1, static_cast<double>(t))));
    const S c2 = static_cast<S>(1.0 / (1.0 - std::pow(beta2, static_cast<double>(t))));
    const S b1 = static_cast<S>(beta1), b2 = static_cast<S>(beta2);
    const S e = static_cast<S>(eps), rate = static_cast<S>(lr);
    std::size_t i = 0;
    model.for_each_param([&](const std::string&, Mat<S>& p) {
      const Mat<S>& g = grads[i];
      m[i] = b1 * m[i] + (S(1) - b1) * g;
      v[i] = b2 * v[i].array().matrix() + (S(1) - b2) * g.cwiseProduct(g);
      const Mat<S> mhat = m[i] * c1;
      const Mat<S> vhat = v[i] * c2;
      p.array() -= rate * mhat.array() / (vhat.array().sqrt() + e);
      ++i;
    });
  }
};

// One optimizer step's worth of augmented clips: (2B * T) rows, view-1 clips
// of all B videos first, then the view-2 clips, clip-major within each view.
template <class S>
struct TrainBatch {
  Mat<S> inputs;  // (2B*T) x (C*H*W) in raw mode, (2B*T) x D in feature mode
  std::vector<std::string> ids;
  int videos = 0;
  int clip_length = 0;
};

template <class S>
LossReport train_step(ModelState<S>& model, Adam<S>& opt, const TrainBatch<S>& batch,
                      const TrainConfig& cfg, double lr) {
  if (batch.videos < 1) throw ArgumentError("train_step: empty batch");
  Tape<S> tape;
  BoundModel<S> bm = bind_model(tape, model);
  LossReport report;
  try {
    Var<S> x = tape.constant(batch.inputs);
    Var<S> feats = frame_encode(tape, bm, x);
    auto [z, f] = temporal_encode_batch(tape, bm, feats, 2 * batch.videos);
    Var<S> h = hash_project(tape, bm, z);
    if (!h.value().allFinite()) throw NumericError("non-finite hash activations");
    Var<S> codes = cfg.loss.loss_on_binary ? binarize_ste(tape, h) : h;
    Var<S> loss = total_loss(tape, bm, codes, f, batch.videos, batch.clip_length, cfg.loss,
                             cfg.ap, report);
    if (!std::isfinite(report.total)) throw NumericError("non-finite loss");
    tape.backward(loss);
  } catch (const NumericError& e) {
    std::string ids;
    for (const auto& id : batch.ids) ids += (ids.empty() ? "" : ",") + id;
    throw NumericError(std::string(e.what()) + "; batch ids: " + ids);
  }
  std::vector<Mat<S>> grads;
  grads.reserve(bm.by_index.size());
  for (const Var<S>& p : bm.by_index) {
    if (p.grad().size() == 0)
      grads.push_back(Mat<S>::Zero(p.rows(), p.cols()));
    else
      grads.push_back(p.grad());
  }
  opt.step(model, grads, lr);
  return report;
}

struct FitResult {
  ModelState<float> model;
  Adam<float> optimizer;
  std::vector<LossReport> epoch_history;  // per-epoch means
  long long global_step = 0;
  TrainConfig resolved;  // config with shapes filled in from the corpus
};

// Full training loop: loads the corpus into memory, derives all randomness
// from (seed, epoch, record) so runs are reproducible and resumable, logs one
// key=value line per step, and optionally writes checkpoints under run_dir.
FitResult fit(const Manifest& manifest, const TrainConfig& cfg, const std::string& run_dir,
              std::ostream& log);

// Resume from a checkpoint produced by fit/save_checkpoint.
FitResult fit_resume(const Manifest& manifest, const TrainConfig& cfg, const std::string& run_dir,
                     std::ostream& log, const std::string& checkpoint_path);

}  // namespace chain
