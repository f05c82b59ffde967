#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "chain/ad.hpp"

namespace chain {

struct VideoRecord {
  std::string id;
  int label = 0;
  int frame_count = 0;       // L
  std::string source;        // frame archive (.chnv) or feature file (.chnf), relative to manifest dir
  std::string split = "train";
};

struct Manifest {
  std::vector<VideoRecord> records;
  std::string split = "train";
  int num_classes = 0;
  std::string base_dir;      // directory the manifest was loaded from / written to

  std::string resolve(const VideoRecord& r) const;
};

// T (or L) frames of C x H x W float32 pixels in [0, 1], frame-major.
struct FrameSeq {
  int t = 0, c = 0, h = 0, w = 0;
  std::vector<float> data;

  std::size_t frame_elems() const { return static_cast<std::size_t>(c) * h * w; }
  float* frame(int i) { return data.data() + frame_elems() * i; }
  const float* frame(int i) const { return data.data() + frame_elems() * i; }
};

using FeatureSeq = Mat<float>;  // T x D

// --- file formats -----------------------------------------------------------
// Frame archive: "CHNV" u32 version=1, u32 L, u32 C, u32 H, u32 W,
//                then L*C*H*W float32 little-endian.
// Feature file:  "CHNF" u32 version=1, u32 T, u32 D,
//                then T*D float32 little-endian row-major.
// Manifest:      UTF-8 JSON lines with fields id, label, frame_count, source, split.

void write_frame_archive(const std::string& path, const FrameSeq& frames);
FrameSeq read_frame_archive(const std::string& path);

void write_feature_file(const std::string& path, const FeatureSeq& features);
FeatureSeq read_feature_file(const std::string& path);

void write_manifest(const std::string& path, const Manifest& manifest);
// Loads and validates: unique ids, labels >= 0, every referenced file exists
// and has a parseable header consistent with frame_count.
Manifest load_manifest(const std::string& path);

// Full frame array of a record (raw-frame sources only).
FrameSeq read_frames(const Manifest& manifest, const VideoRecord& record);
FeatureSeq read_features(const Manifest& manifest, const VideoRecord& record);

bool is_feature_source(const VideoRecord& record);

// --- synthetic corpus -------------------------------------------------------

struct GenParams {
  int num_videos = 0;
  int num_classes = 0;
  int frames_per_video = 0;   // L
  int scene_changes = 0;      // background swaps per video
  std::uint64_t seed = 0;
  std::string out_dir;
  int channels = 3;
  int height = 16;
  int width = 16;
  float pixel_noise = 0.02f;
};

// Ground truth for tests and the scene-debug command: scene of frame t is the
// number of cut points <= t.
struct SceneInfo {
  std::string id;
  std::vector<int> cuts;

  int scene_of(int frame) const {
    int s = 0;
    for (int c : cuts)
      if (frame >= c) ++s;
    return s;
  }
};

// Class identity is (shape, size-motion direction): even labels grow, odd
// labels shrink through the same size range, so a model that ignores frame
// order cannot separate the two members of a shape pair. Scene changes are
// background texture swaps at random cut points (every scene >= 2 frames).
// Deterministic: record i derives its stream from mix(seed, i), so serial and
// parallel generation produce byte-identical archives.
Manifest generate_synthetic_corpus(const GenParams& params);

std::vector<SceneInfo> load_scene_info(const std::string& path);

// Renders one video without touching the filesystem (used by tests).
FrameSeq render_synthetic_video(const GenParams& params, int index, int label, SceneInfo* scenes);

}  // namespace chain
