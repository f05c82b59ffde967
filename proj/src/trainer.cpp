#include "chain/trainer.hpp"

#include <cmath>
#include <filesystem>

#include "chain/checkpoint.hpp"
#include "chain/errors.hpp"
#include "chain/util.hpp"

namespace fs = std::filesystem;

namespace chain {

namespace {

struct LoadedCorpus {
  std::vector<VideoRecord> records;
  std::vector<FrameSeq> frames;      // raw mode
  std::vector<FeatureSeq> features;  // feature mode
  bool feature_mode = false;
};

LoadedCorpus load_training_corpus(const Manifest& manifest, const TrainConfig& cfg) {
  LoadedCorpus corpus;
  for (const auto& r : manifest.records)
    if (r.split == "train") corpus.records.push_back(r);
  if (corpus.records.empty()) corpus.records = manifest.records;
  if (corpus.records.empty()) throw ArgumentError("fit: empty manifest");

  corpus.feature_mode = is_feature_source(corpus.records.front());
  for (const auto& r : corpus.records) {
    if (is_feature_source(r) != corpus.feature_mode)
      throw ArgumentError("fit: manifest mixes frame and feature sources");
    if (r.frame_count < cfg.encoder.clip_length)
      throw ArgumentError("fit: record " + r.id + " has fewer frames than the clip length");
  }

  const std::size_t n = corpus.records.size();
  if (corpus.feature_mode)
    corpus.features.resize(n);
  else
    corpus.frames.resize(n);
  parallel_for(n, [&](std::size_t i) {
    if (corpus.feature_mode)
      corpus.features[i] = read_features(manifest, corpus.records[i]);
    else
      corpus.frames[i] = read_frames(manifest, corpus.records[i]);
  });
  return corpus;
}

TrainConfig resolve_config(const TrainConfig& cfg, const LoadedCorpus& corpus) {
  TrainConfig out = cfg;
  if (corpus.feature_mode) {
    out.encoder.raw_frames = false;
    out.encoder.frame_dim = static_cast<int>(corpus.features.front().cols());
  } else {
    const FrameSeq& f0 = corpus.frames.front();
    out.encoder.raw_frames = true;
    out.encoder.in_channels = f0.c;
    out.encoder.in_height = f0.h;
    out.encoder.in_width = f0.w;
  }
  out.encoder.validate();
  out.validate();
  return out;
}

// Clip rows for one batch: view-1 clips of all videos, then view-2 clips.
TrainBatch<float> assemble_batch(const LoadedCorpus& corpus, const std::vector<int>& members,
                                 const TrainConfig& cfg, int epoch) {
  const int b = static_cast<int>(members.size());
  const int t = cfg.encoder.clip_length;
  TrainBatch<float> batch;
  batch.videos = b;
  batch.clip_length = t;
  batch.ids.resize(b);
  const Eigen::Index width = corpus.feature_mode
                                 ? static_cast<Eigen::Index>(cfg.encoder.frame_dim)
                                 : static_cast<Eigen::Index>(cfg.encoder.in_channels) *
                                       cfg.encoder.in_height * cfg.encoder.in_width;
  batch.inputs.resize(static_cast<Eigen::Index>(2) * b * t, width);

  std::vector<ClipPair> pairs(b);
  parallel_for(static_cast<std::size_t>(b), [&](std::size_t i) {
    const int rec = members[i];
    const std::uint64_t s1 =
        derive_seed(cfg.seed, {0x617567ULL, static_cast<std::uint64_t>(epoch),
                               static_cast<std::uint64_t>(rec), 1});
    const std::uint64_t s2 =
        derive_seed(cfg.seed, {0x617567ULL, static_cast<std::uint64_t>(epoch),
                               static_cast<std::uint64_t>(rec), 2});
    if (corpus.feature_mode)
      pairs[i] = make_pair(corpus.records[rec].id, corpus.features[rec], t, s1, s2, cfg.aug,
                           cfg.temporal_aug, cfg.spatial_aug);
    else
      pairs[i] = make_pair(corpus.records[rec].id, corpus.frames[rec], t, s1, s2, cfg.aug,
                           cfg.temporal_aug, cfg.spatial_aug);
  });

  for (int i = 0; i < b; ++i) {
    batch.ids[i] = pairs[i].source_id;
    for (int view = 0; view < 2; ++view) {
      const Eigen::Index row0 = (static_cast<Eigen::Index>(view) * b + i) * t;
      if (corpus.feature_mode) {
        const FeatureSeq& feats = view == 0 ? pairs[i].feats1 : pairs[i].feats2;
        batch.inputs.middleRows(row0, t) = feats;
      } else {
        const FrameSeq& frames = view == 0 ? pairs[i].frames1 : pairs[i].frames2;
        for (int j = 0; j < t; ++j)
          for (Eigen::Index k = 0; k < width; ++k)
            batch.inputs(row0 + j, k) = frames.frame(j)[k];
      }
    }
  }
  return batch;
}

FitResult run_fit(const Manifest& manifest, const TrainConfig& raw_cfg, const std::string& run_dir,
                  std::ostream& log, const Checkpoint* resume) {
  LoadedCorpus corpus = load_training_corpus(manifest, raw_cfg);
  const TrainConfig cfg = resolve_config(raw_cfg, corpus);

  FitResult result;
  result.resolved = cfg;
  int start_epoch = 0;
  if (resume) {
    if (resume->model.cfg.clip_length != cfg.encoder.clip_length ||
        resume->model.cfg.code_bits != cfg.encoder.code_bits)
      throw ArgumentError("fit: checkpoint does not match the requested configuration");
    result.model = resume->model;
    result.optimizer = resume->optimizer;
    result.global_step = resume->global_step;
    start_epoch = resume->epoch;
  } else {
    result.model = ModelState<float>::init(cfg.encoder, cfg.seed);
    result.optimizer =
        Adam<float>::init(result.model, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  }

  if (!run_dir.empty()) {
    std::error_code ec;
    fs::create_directories(run_dir, ec);
    if (ec) throw IoError("fit: cannot create run directory " + run_dir);
  }

  const int n = static_cast<int>(corpus.records.size());
  std::vector<int> order(n);

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(cfg.seed, {0x73687566ULL, static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);

    const double lr = lr_schedule(epoch, cfg);
    LossReport epoch_mean;
    int steps_in_epoch = 0;
    for (int off = 0; off < n; off += cfg.batch_size) {
      const int b = std::min(cfg.batch_size, n - off);
      std::vector<int> members(order.begin() + off, order.begin() + off + b);
      TrainBatch<float> batch = assemble_batch(corpus, members, cfg, epoch);
      const LossReport rep = train_step(result.model, result.optimizer, batch, cfg, lr);
      ++result.global_step;
      ++steps_in_epoch;
      epoch_mean.contrastive += rep.contrastive;
      epoch_mean.order += rep.order;
      epoch_mean.scene += rep.scene;
      epoch_mean.total += rep.total;
      log << "step=" << result.global_step << " L_c=" << rep.contrastive << " L_o=" << rep.order
          << " L_s=" << rep.scene << " L=" << rep.total << " lr=" << lr << "\n";
    }
    if (steps_in_epoch > 0) {
      epoch_mean.contrastive /= steps_in_epoch;
      epoch_mean.order /= steps_in_epoch;
      epoch_mean.scene /= steps_in_epoch;
      epoch_mean.total /= steps_in_epoch;
    }
    result.epoch_history.push_back(epoch_mean);

    if (!run_dir.empty() && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 &&
        epoch + 1 < cfg.epochs) {
      Checkpoint ckpt{result.model, result.optimizer, epoch + 1, result.global_step, cfg.seed};
      save_checkpoint((fs::path(run_dir) / ("checkpoint_epoch_" + std::to_string(epoch + 1) +
                                            ".chnc")).string(),
                      ckpt);
    }
  }

  if (!run_dir.empty()) {
    Checkpoint ckpt{result.model, result.optimizer, cfg.epochs, result.global_step, cfg.seed};
    save_checkpoint((fs::path(run_dir) / "model.chnc").string(), ckpt);
  }
  return result;
}

}  // namespace

FitResult fit(const Manifest& manifest, const TrainConfig& cfg, const std::string& run_dir,
              std::ostream& log) {
  return run_fit(manifest, cfg, run_dir, log, nullptr);
}

FitResult fit_resume(const Manifest& manifest, const TrainConfig& cfg, const std::string& run_dir,
                     std::ostream& log, const std::string& checkpoint_path) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  return run_fit(manifest, cfg, run_dir, log, &ckpt);
}

}  // namespace chain
