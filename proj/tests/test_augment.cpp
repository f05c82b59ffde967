#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "chain/augment.hpp"
#include "chain/errors.hpp"
#include "helpers.hpp"

using namespace chain;

namespace {

FrameSeq random_frames(int t, int c, int h, int w, Rng& rng) {
  FrameSeq f;
  f.t = t;
  f.c = c;
  f.h = h;
  f.w = w;
  f.data.resize(static_cast<std::size_t>(t) * f.frame_elems());
  for (auto& v : f.data) v = static_cast<float>(rng.uniform());
  return f;
}

}  // namespace

TEST_CASE("segment_sample obeys segment bounds") {
  SUBCASE("L == T is the identity permutation") {
    Rng rng(1);
    const ClipIndices c = segment_sample(6, 6, rng);
    for (int t = 0; t < 6; ++t) CHECK(c.idx[t] == t);
  }
  SUBCASE("L=10 T=5 draws stay in their two-frame segments") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
      const ClipIndices c = segment_sample(10, 5, rng);
      for (int t = 0; t < 5; ++t) {
        CHECK(c.idx[t] >= 2 * t);
        CHECK(c.idx[t] <= 2 * t + 1);
      }
    }
  }
  SUBCASE("strictly increasing and segment-bounded for random L,T") {
    Rng rng(3);
    for (int trial = 0; trial < 500; ++trial) {
      const int t = 1 + static_cast<int>(rng.uniform_int(12));
      const int l = t + static_cast<int>(rng.uniform_int(40));
      const ClipIndices c = segment_sample(l, t, rng);
      for (int i = 0; i < t; ++i) {
        const int lo = static_cast<int>(static_cast<std::int64_t>(i) * l / t);
        const int hi = static_cast<int>(static_cast<std::int64_t>(i + 1) * l / t);
        CHECK(c.idx[i] >= lo);
        CHECK(c.idx[i] < hi);
        if (i > 0) CHECK(c.idx[i] > c.idx[i - 1]);
      }
    }
  }
  SUBCASE("per-segment frequencies are uniform within 0.02 over 10k draws") {
    Rng rng(4);
    std::vector<std::vector<int>> counts(5, std::vector<int>(2, 0));
    const int draws = 10000;
    for (int trial = 0; trial < draws; ++trial) {
      const ClipIndices c = segment_sample(10, 5, rng);
      for (int t = 0; t < 5; ++t) counts[t][c.idx[t] - 2 * t]++;
    }
    for (int t = 0; t < 5; ++t)
      for (int k = 0; k < 2; ++k)
        CHECK(std::abs(counts[t][k] / static_cast<double>(draws) - 0.5) < 0.02);
  }
  SUBCASE("L < T is an argument error") {
    Rng rng(5);
    CHECK_THROWS_AS(segment_sample(3, 5, rng), ArgumentError);
  }
}

TEST_CASE("draw_spatial_spec") {
  AugmentConfig cfg;
  SUBCASE("degenerate config draws the identity spec") {
    cfg.crop_scale_min = 1.0f;
    cfg.crop_scale_max = 1.0f;
    cfg.jitter_strength = 0.0f;
    cfg.grayscale_prob = 0.0f;
    Rng rng(6);
    const SpatialSpec s = draw_spatial_spec(rng, cfg, 16, 16);
    CHECK(is_identity(s, 16, 16));
  }
  SUBCASE("same rng state twice gives identical specs") {
    Rng a(7), b(7);
    const SpatialSpec s1 = draw_spatial_spec(a, cfg, 16, 16);
    const SpatialSpec s2 = draw_spatial_spec(b, cfg, 16, 16);
    CHECK(s1.top == s2.top);
    CHECK(s1.left == s2.left);
    CHECK(s1.height == s2.height);
    CHECK(s1.width == s2.width);
    CHECK(s1.grayscale == s2.grayscale);
    CHECK(s1.brightness == s2.brightness);
    CHECK(s1.contrast == s2.contrast);
    CHECK(s1.saturation == s2.saturation);
  }
  SUBCASE("independent rng states differ in at least one field >= 99% of the time") {
    Rng seeder(8);
    int differ = 0;
    const int pairs = 1000;
    for (int i = 0; i < pairs; ++i) {
      Rng a(seeder.next_u64()), b(seeder.next_u64());
      const SpatialSpec s1 = draw_spatial_spec(a, cfg, 16, 16);
      const SpatialSpec s2 = draw_spatial_spec(b, cfg, 16, 16);
      const bool same = s1.top == s2.top && s1.left == s2.left && s1.height == s2.height &&
                        s1.width == s2.width && s1.grayscale == s2.grayscale &&
                        s1.brightness == s2.brightness && s1.contrast == s2.contrast &&
                        s1.saturation == s2.saturation;
      if (!same) ++differ;
    }
    CHECK(differ >= 990);
  }
  SUBCASE("invalid ranges rejected") {
    Rng rng(9);
    AugmentConfig bad = cfg;
    bad.crop_scale_min = 0.0f;
    CHECK_THROWS_AS(draw_spatial_spec(rng, bad, 16, 16), ArgumentError);
    bad = cfg;
    bad.jitter_strength = -1.0f;
    CHECK_THROWS_AS(draw_spatial_spec(rng, bad, 16, 16), ArgumentError);
  }
}

TEST_CASE("apply_spatial") {
  Rng rng(10);
  FrameSeq frames = random_frames(3, 3, 12, 12, rng);
  SUBCASE("identity spec returns the input exactly") {
    const FrameSeq out = apply_spatial(frames, identity_spec(12, 12));
    CHECK(out.data == frames.data);
  }
  SUBCASE("grayscale is idempotent") {
    SpatialSpec gray = identity_spec(12, 12);
    gray.grayscale = true;
    const FrameSeq once = apply_spatial(frames, gray);
    const FrameSeq twice = apply_spatial(once, gray);
    CHECK(once.data == twice.data);
  }
  SUBCASE("every frame gets the same transform") {
    // apply the spec to a single frame and compare against the clip result
    AugmentConfig cfg;
    Rng r2(11);
    const SpatialSpec spec = draw_spatial_spec(r2, cfg, 12, 12);
    const FrameSeq whole = apply_spatial(frames, spec);
    for (int t = 0; t < frames.t; ++t) {
      FrameSeq single;
      single.t = 1;
      single.c = frames.c;
      single.h = frames.h;
      single.w = frames.w;
      single.data.assign(frames.frame(t), frames.frame(t) + frames.frame_elems());
      const FrameSeq one = apply_spatial(single, spec);
      for (std::size_t k = 0; k < one.data.size(); ++k)
        CHECK(one.data[k] == whole.frame(t)[k]);
    }
  }
  SUBCASE("output clamped to [0,1]") {
    SpatialSpec bright = identity_spec(12, 12);
    bright.brightness = 3.0f;
    const FrameSeq out = apply_spatial(frames, bright);
    for (float v : out.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
  SUBCASE("crop box outside the frame is an argument error") {
    SpatialSpec bad = identity_spec(12, 12);
    bad.left = 8;
    bad.width = 8;
    CHECK_THROWS_AS(apply_spatial(frames, bad), ArgumentError);
  }
}

TEST_CASE("make_pair") {
  Rng rng(12);
  AugmentConfig cfg;
  SUBCASE("L == T with augmentation disabled yields identical views") {
    FrameSeq video = random_frames(5, 3, 12, 12, rng);
    const ClipPair p = make_pair("v", video, 5, 100, 200, cfg, false, false);
    CHECK(p.frames1.data == p.frames2.data);
    CHECK(p.frames1.data == video.data);
  }
  SUBCASE("swapping seeds swaps the views") {
    FrameSeq video = random_frames(16, 3, 12, 12, rng);
    const ClipPair ab = make_pair("v", video, 4, 7, 9, cfg);
    const ClipPair ba = make_pair("v", video, 4, 9, 7, cfg);
    CHECK(ab.frames1.data == ba.frames2.data);
    CHECK(ab.frames2.data == ba.frames1.data);
  }
  SUBCASE("with L = 4T the two views pick different frames in >= 99% of pairs") {
    FrameSeq video = random_frames(32, 1, 8, 8, rng);
    Rng seeder(13);
    int differ = 0;
    const int pairs = 1000;
    for (int i = 0; i < pairs; ++i) {
      const std::uint64_t s1 = seeder.next_u64(), s2 = seeder.next_u64();
      Rng r1(s1), r2(s2);
      const ClipIndices c1 = segment_sample(32, 8, r1);
      const ClipIndices c2 = segment_sample(32, 8, r2);
      if (c1.idx != c2.idx) ++differ;
    }
    CHECK(differ >= 990);
  }
  SUBCASE("feature-mode pair applies noise only as configured") {
    Rng fr(14);
    FeatureSeq video = chain::testing::random_matf(12, 6, fr);
    const ClipPair quiet = make_pair("v", video, 4, 3, 4, cfg);  // sigma defaults to 0
    CHECK(quiet.feature_mode);
    // rows must be exact copies of the sampled rows
    Rng check(3);
    const ClipIndices idx = segment_sample(12, 4, check);
    for (int t = 0; t < 4; ++t)
      CHECK(quiet.feats1.row(t) == video.row(idx.idx[t]));
    AugmentConfig noisy = cfg;
    noisy.feature_noise_sigma = 0.5f;
    const ClipPair loud = make_pair("v", video, 4, 3, 4, noisy, true, true);
    CHECK(loud.feats1 != quiet.feats1);
  }
}
