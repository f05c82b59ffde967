#include "chain/augment.hpp"

#include <algorithm>
#include <cmath>

#include "chain/errors.hpp"

namespace chain {

void AugmentConfig::validate() const {
  if (!(crop_scale_min > 0.0f) || crop_scale_min > crop_scale_max || crop_scale_max > 1.0f)
    throw ArgumentError("augment: crop scale range must satisfy 0 < min <= max <= 1");
  if (jitter_strength < 0.0f) throw ArgumentError("augment: jitter_strength must be >= 0");
  if (grayscale_prob < 0.0f || grayscale_prob > 1.0f)
    throw ArgumentError("augment: grayscale_prob must be in [0,1]");
  if (feature_noise_sigma < 0.0f) throw ArgumentError("augment: feature_noise_sigma must be >= 0");
}

ClipIndices segment_sample(int num_frames, int clip_length, Rng& rng) {
  if (clip_length < 1 || num_frames < clip_length)
    throw ArgumentError("segment_sample: need num_frames >= clip_length >= 1");
  ClipIndices out;
  out.idx.resize(clip_length);
  for (int t = 0; t < clip_length; ++t) {
    const int lo = static_cast<int>(static_cast<std::int64_t>(t) * num_frames / clip_length);
    const int hi = static_cast<int>(static_cast<std::int64_t>(t + 1) * num_frames / clip_length);
    out.idx[t] = lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(hi - lo)));
  }
  return out;
}

ClipIndices center_clip(int num_frames, int clip_length) {
  if (clip_length < 1 || num_frames < clip_length)
    throw ArgumentError("center_clip: need num_frames >= clip_length >= 1");
  ClipIndices out;
  out.idx.resize(clip_length);
  for (int t = 0; t < clip_length; ++t) {
    const int lo = static_cast<int>(static_cast<std::int64_t>(t) * num_frames / clip_length);
    const int hi = static_cast<int>(static_cast<std::int64_t>(t + 1) * num_frames / clip_length);
    out.idx[t] = lo + (hi - lo - 1) / 2;
  }
  return out;
}

SpatialSpec identity_spec(int height, int width) {
  SpatialSpec s;
  s.top = 0;
  s.left = 0;
  s.height = height;
  s.width = width;
  return s;
}

bool is_identity(const SpatialSpec& s, int height, int width) {
  return s.top == 0 && s.left == 0 && s.height == height && s.width == width && !s.grayscale &&
         s.brightness == 1.0f && s.contrast == 1.0f && s.saturation == 1.0f;
}

SpatialSpec draw_spatial_spec(Rng& rng, const AugmentConfig& cfg, int height, int width) {
  cfg.validate();
  SpatialSpec s;
  const double scale = rng.uniform(cfg.crop_scale_min, cfg.crop_scale_max);
  const double side = std::sqrt(scale);
  s.height = std::clamp(static_cast<int>(std::lround(height * side)), 1, height);
  s.width = std::clamp(static_cast<int>(std::lround(width * side)), 1, width);
  s.top = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(height - s.height + 1)));
  s.left = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(width - s.width + 1)));
  s.grayscale = rng.bernoulli(cfg.grayscale_prob);
  const float j = cfg.jitter_strength;
  s.brightness = static_cast<float>(rng.uniform(std::max(0.0f, 1.0f - j), 1.0f + j));
  s.contrast = static_cast<float>(rng.uniform(std::max(0.0f, 1.0f - j), 1.0f + j));
  s.saturation = static_cast<float>(rng.uniform(std::max(0.0f, 1.0f - j), 1.0f + j));
  return s;
}

namespace {

// Luma as g + 0.25(r-g) + 0.25(b-g): equal-channel inputs reproduce exactly,
// which keeps grayscale idempotent in float arithmetic.
inline float luma(float r, float g, float b) { return g + 0.25f * (r - g) + 0.25f * (b - g); }

void bilinear_crop_resize(const float* src, int h, int w, const SpatialSpec& s, float* dst,
                          int oh, int ow) {
  const double sy_scale = static_cast<double>(s.height) / oh;
  const double sx_scale = static_cast<double>(s.width) / ow;
  for (int y = 0; y < oh; ++y) {
    double sy = (y + 0.5) * sy_scale - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(s.height - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, s.height - 1);
    const double fy = sy - y0;
    for (int x = 0; x < ow; ++x) {
      double sx = (x + 0.5) * sx_scale - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(s.width - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, s.width - 1);
      const double fx = sx - x0;
      const float v00 = src[(s.top + y0) * w + (s.left + x0)];
      const float v01 = src[(s.top + y0) * w + (s.left + x1)];
      const float v10 = src[(s.top + y1) * w + (s.left + x0)];
      const float v11 = src[(s.top + y1) * w + (s.left + x1)];
      dst[y * ow + x] = static_cast<float>((1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                           fy * ((1 - fx) * v10 + fx * v11));
    }
  }
}

}  // namespace

FrameSeq apply_spatial(const FrameSeq& frames, const SpatialSpec& spec) {
  const int h = frames.h, w = frames.w, c = frames.c;
  if (spec.top < 0 || spec.left < 0 || spec.height < 1 || spec.width < 1 ||
      spec.top + spec.height > h || spec.left + spec.width > w)
    throw ArgumentError("apply_spatial: crop box outside frame");
  if (is_identity(spec, h, w)) return frames;

  FrameSeq out;
  out.t = frames.t;
  out.c = c;
  out.h = h;
  out.w = w;
  out.data.resize(frames.data.size());
  const int plane = h * w;

  for (int t = 0; t < frames.t; ++t) {
    const float* src = frames.frame(t);
    float* dst = out.frame(t);
    for (int ch = 0; ch < c; ++ch)
      bilinear_crop_resize(src + ch * plane, h, w, spec, dst + ch * plane, h, w);

    if (spec.grayscale && c == 3) {
      for (int p = 0; p < plane; ++p) {
        const float g = luma(dst[p], dst[plane + p], dst[2 * plane + p]);
        dst[p] = g;
        dst[plane + p] = g;
        dst[2 * plane + p] = g;
      }
    }
    if (spec.brightness != 1.0f)
      for (int p = 0; p < c * plane; ++p) dst[p] *= spec.brightness;
    if (spec.contrast != 1.0f) {
      double mean = 0.0;
      if (c == 3) {
        for (int p = 0; p < plane; ++p) mean += luma(dst[p], dst[plane + p], dst[2 * plane + p]);
        mean /= plane;
      } else {
        for (int p = 0; p < c * plane; ++p) mean += dst[p];
        mean /= c * plane;
      }
      const float m = static_cast<float>(mean);
      for (int p = 0; p < c * plane; ++p) dst[p] = m + (dst[p] - m) * spec.contrast;
    }
    if (spec.saturation != 1.0f && c == 3) {
      for (int p = 0; p < plane; ++p) {
        const float g = luma(dst[p], dst[plane + p], dst[2 * plane + p]);
        dst[p] = g + (dst[p] - g) * spec.saturation;
        dst[plane + p] = g + (dst[plane + p] - g) * spec.saturation;
        dst[2 * plane + p] = g + (dst[2 * plane + p] - g) * spec.saturation;
      }
    }
    for (int p = 0; p < c * plane; ++p) dst[p] = std::clamp(dst[p], 0.0f, 1.0f);
  }
  return out;
}

FrameSeq gather_frames(const FrameSeq& video, const ClipIndices& indices) {
  FrameSeq out;
  out.t = static_cast<int>(indices.idx.size());
  out.c = video.c;
  out.h = video.h;
  out.w = video.w;
  out.data.resize(out.frame_elems() * out.t);
  for (int i = 0; i < out.t; ++i) {
    const int src = indices.idx[i];
    if (src < 0 || src >= video.t) throw ArgumentError("gather_frames: index out of range");
    std::copy_n(video.frame(src), video.frame_elems(), out.frame(i));
  }
  return out;
}

FeatureSeq gather_features(const FeatureSeq& video, const ClipIndices& indices) {
  FeatureSeq out(static_cast<Eigen::Index>(indices.idx.size()), video.cols());
  for (std::size_t i = 0; i < indices.idx.size(); ++i) {
    const int src = indices.idx[i];
    if (src < 0 || src >= video.rows()) throw ArgumentError("gather_features: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = video.row(src);
  }
  return out;
}

FeatureSeq add_feature_noise(const FeatureSeq& features, float sigma, Rng& rng) {
  if (sigma <= 0.0f) return features;
  FeatureSeq out = features;
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      out(i, j) += static_cast<float>(rng.normal(0.0, sigma));
  return out;
}

FrameSeq make_view(const FrameSeq& video, int clip_length, std::uint64_t seed,
                   const AugmentConfig& cfg, bool temporal_aug, bool spatial_aug) {
  Rng rng(seed);
  const ClipIndices idx =
      temporal_aug ? segment_sample(video.t, clip_length, rng) : center_clip(video.t, clip_length);
  SpatialSpec spec = spatial_aug ? draw_spatial_spec(rng, cfg, video.h, video.w)
                                 : identity_spec(video.h, video.w);
  spec.seed = seed;
  return apply_spatial(gather_frames(video, idx), spec);
}

FeatureSeq make_view(const FeatureSeq& video, int clip_length, std::uint64_t seed,
                     const AugmentConfig& cfg, bool temporal_aug, bool spatial_aug) {
  Rng rng(seed);
  const ClipIndices idx = temporal_aug
                              ? segment_sample(static_cast<int>(video.rows()), clip_length, rng)
                              : center_clip(static_cast<int>(video.rows()), clip_length);
  FeatureSeq clip = gather_features(video, idx);
  if (spatial_aug) clip = add_feature_noise(clip, cfg.feature_noise_sigma, rng);
  return clip;
}

ClipPair make_pair(const std::string& id, const FrameSeq& video, int clip_length,
                   std::uint64_t seed1, std::uint64_t seed2, const AugmentConfig& cfg,
                   bool temporal_aug, bool spatial_aug) {
  ClipPair p;
  p.source_id = id;
  p.feature_mode = false;
  p.frames1 = make_view(video, clip_length, seed1, cfg, temporal_aug, spatial_aug);
  p.frames2 = make_view(video, clip_length, seed2, cfg, temporal_aug, spatial_aug);
  return p;
}

ClipPair make_pair(const std::string& id, const FeatureSeq& video, int clip_length,
                   std::uint64_t seed1, std::uint64_t seed2, const AugmentConfig& cfg,
                   bool temporal_aug, bool spatial_aug) {
  ClipPair p;
  p.source_id = id;
  p.feature_mode = true;
  p.feats1 = make_view(video, clip_length, seed1, cfg, temporal_aug, spatial_aug);
  p.feats2 = make_view(video, clip_length, seed2, cfg, temporal_aug, spatial_aug);
  return p;
}

}  // namespace chain
