#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chain/corpus.hpp"
#include "chain/rng.hpp"

namespace chain {

// One frame index per segment, strictly increasing:
// floor(t*L/T) <= idx[t] < floor((t+1)*L/T).
struct ClipIndices {
  std::vector<int> idx;
};

// One spatial transform for ALL frames of one clip. Crop box in source
// pixels; jitter entries are multiplicative factors (1.0 = identity).
struct SpatialSpec {
  int top = 0, left = 0, height = 0, width = 0;
  bool grayscale = false;
  float brightness = 1.0f, contrast = 1.0f, saturation = 1.0f;
  std::uint64_t seed = 0;
};

struct AugmentConfig {
  float crop_scale_min = 0.5f;
  float crop_scale_max = 1.0f;
  float jitter_strength = 0.4f;
  float grayscale_prob = 0.2f;
  float feature_noise_sigma = 0.0f;  // feature-mode stand-in for spatial augmentation

  void validate() const;
};

struct ClipPair {
  std::string source_id;
  bool feature_mode = false;
  FrameSeq frames1, frames2;
  FeatureSeq feats1, feats2;
};

ClipIndices segment_sample(int num_frames, int clip_length, Rng& rng);
// Deterministic mid-segment indices, used at evaluation time.
ClipIndices center_clip(int num_frames, int clip_length);

SpatialSpec draw_spatial_spec(Rng& rng, const AugmentConfig& cfg, int height, int width);
SpatialSpec identity_spec(int height, int width);
bool is_identity(const SpatialSpec& spec, int height, int width);

// Applies the same spec to every frame: crop + bilinear resize back to the
// input size, optional grayscale, then color jitter; output clamped to [0,1].
FrameSeq apply_spatial(const FrameSeq& frames, const SpatialSpec& spec);

// Gathers the indexed frames of a full video into a clip.
FrameSeq gather_frames(const FrameSeq& video, const ClipIndices& indices);
FeatureSeq gather_features(const FeatureSeq& video, const ClipIndices& indices);

FeatureSeq add_feature_noise(const FeatureSeq& features, float sigma, Rng& rng);

// One augmented view; `seed` fully determines the view.
FrameSeq make_view(const FrameSeq& video, int clip_length, std::uint64_t seed,
                   const AugmentConfig& cfg, bool temporal_aug, bool spatial_aug);
FeatureSeq make_view(const FeatureSeq& video, int clip_length, std::uint64_t seed,
                     const AugmentConfig& cfg, bool temporal_aug, bool spatial_aug);

// Two independently augmented views of one video; swapping the two seeds
// swaps the views.
ClipPair make_pair(const std::string& id, const FrameSeq& video, int clip_length,
                   std::uint64_t seed1, std::uint64_t seed2, const AugmentConfig& cfg,
                   bool temporal_aug = true, bool spatial_aug = true);
ClipPair make_pair(const std::string& id, const FeatureSeq& video, int clip_length,
                   std::uint64_t seed1, std::uint64_t seed2, const AugmentConfig& cfg,
                   bool temporal_aug = true, bool spatial_aug = true);

}  // namespace chain
