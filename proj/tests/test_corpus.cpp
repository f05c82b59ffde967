#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "chain/corpus.hpp"
#include "chain/errors.hpp"
#include "chain/rng.hpp"
#include "helpers.hpp"

using namespace chain;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
  const auto p = fs::temp_directory_path() / ("chain_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("feature file round trip is exact and the size matches the header math") {
  const std::string dir = temp_dir("feat");

  SUBCASE("T=25 D=4096 file size is 16 + 25*4096*4 bytes") {
    FeatureSeq f = FeatureSeq::Zero(25, 4096);
    write_feature_file(dir + "/a.chnf", f);
    CHECK(fs::file_size(dir + "/a.chnf") == 16u + 25u * 4096u * 4u);
  }
  SUBCASE("zero matrix round trips to zero") {
    FeatureSeq f = FeatureSeq::Zero(3, 7);
    write_feature_file(dir + "/z.chnf", f);
    CHECK(read_feature_file(dir + "/z.chnf") == f);
  }
  SUBCASE("seeded random matrices round trip bit-exactly") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
      const int t = 1 + static_cast<int>(rng.uniform_int(6));
      const int d = 1 + static_cast<int>(rng.uniform_int(33));
      FeatureSeq f = chain::testing::random_matf(t, d, rng);
      write_feature_file(dir + "/r.chnf", f);
      const FeatureSeq back = read_feature_file(dir + "/r.chnf");
      REQUIRE(back.rows() == f.rows());
      REQUIRE(back.cols() == f.cols());
      CHECK(std::memcmp(back.data(), f.data(), sizeof(float) * f.size()) == 0);
    }
  }
  SUBCASE("bad magic is a format error") {
    std::ofstream out(dir + "/bad.chnf", std::ios::binary);
    out << "NOPE1234567890123456";
    out.close();
    CHECK_THROWS_AS(read_feature_file(dir + "/bad.chnf"), FormatError);
  }
  SUBCASE("non-finite features are rejected on write") {
    FeatureSeq f = FeatureSeq::Zero(2, 2);
    f(0, 0) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(write_feature_file(dir + "/nan.chnf", f), ArgumentError);
  }
}

TEST_CASE("frame archive round trip") {
  const std::string dir = temp_dir("frames");
  SUBCASE("all-black frames read back as exact zeros") {
    FrameSeq f;
    f.t = 4;
    f.c = 3;
    f.h = 8;
    f.w = 8;
    f.data.assign(static_cast<std::size_t>(f.t) * f.frame_elems(), 0.0f);
    write_frame_archive(dir + "/black.chnv", f);
    const FrameSeq back = read_frame_archive(dir + "/black.chnv");
    CHECK(back.t == 4);
    for (float v : back.data) CHECK(v == 0.0f);
  }
  SUBCASE("random frames round trip bitwise") {
    Rng rng(5);
    FrameSeq f;
    f.t = 3;
    f.c = 1;
    f.h = 5;
    f.w = 7;
    f.data.resize(static_cast<std::size_t>(f.t) * f.frame_elems());
    for (auto& v : f.data) v = static_cast<float>(rng.uniform());
    write_frame_archive(dir + "/r.chnv", f);
    const FrameSeq back = read_frame_archive(dir + "/r.chnv");
    CHECK(std::memcmp(back.data.data(), f.data.data(), f.data.size() * 4) == 0);
  }
  SUBCASE("corrupt header is a format error") {
    std::ofstream out(dir + "/bad.chnv", std::ios::binary);
    out << "CHNVxx";
    out.close();
    CHECK_THROWS_AS(read_frame_archive(dir + "/bad.chnv"), FormatError);
  }
}

TEST_CASE("synthetic corpus generation") {
  SUBCASE("200 videos over 10 classes gives 20 records per class") {
    const std::string dir = temp_dir("gen200");
    GenParams p;
    p.num_videos = 200;
    p.num_classes = 10;
    p.frames_per_video = 32;
    p.scene_changes = 1;
    p.seed = 7;
    p.out_dir = dir;
    const Manifest m = generate_synthetic_corpus(p);
    REQUIRE(m.records.size() == 200);
    std::map<int, int> per_class;
    for (const auto& r : m.records) per_class[r.label]++;
    REQUIRE(per_class.size() == 10);
    for (const auto& [label, count] : per_class) CHECK(count == 20);
    // manifest reloads and validates
    const Manifest loaded = load_manifest(dir + "/manifest.jsonl");
    CHECK(loaded.records.size() == 200);
    CHECK(loaded.num_classes == 10);
    // frames are in range and every record has L frames
    const FrameSeq f = read_frames(loaded, loaded.records[13]);
    CHECK(f.t == 32);
    for (float v : f.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
  SUBCASE("10 videos over 10 classes is one per class") {
    const std::string dir = temp_dir("gen10");
    GenParams p;
    p.num_videos = 10;
    p.num_classes = 10;
    p.frames_per_video = 32;
    p.scene_changes = 0;
    p.seed = 0;
    p.out_dir = dir;
    const Manifest m = generate_synthetic_corpus(p);
    std::map<int, int> per_class;
    for (const auto& r : m.records) per_class[r.label]++;
    REQUIRE(per_class.size() == 10);
    for (const auto& [label, count] : per_class) CHECK(count == 1);
  }
  SUBCASE("reruns are byte-identical") {
    const std::string dir1 = temp_dir("det1");
    const std::string dir2 = temp_dir("det2");
    GenParams p;
    p.num_videos = 12;
    p.num_classes = 4;
    p.frames_per_video = 10;
    p.scene_changes = 2;
    p.seed = 42;
    p.out_dir = dir1;
    generate_synthetic_corpus(p);
    p.out_dir = dir2;
    generate_synthetic_corpus(p);
    for (int i = 0; i < 12; ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "/frames/vid_%05d.chnv", i);
      CHECK(slurp(dir1 + name) == slurp(dir2 + name));
    }
    CHECK(slurp(dir1 + "/manifest.jsonl") == slurp(dir2 + "/manifest.jsonl"));
    CHECK(slurp(dir1 + "/scenes.jsonl") == slurp(dir2 + "/scenes.jsonl"));
  }
  SUBCASE("invalid counts are argument errors") {
    GenParams p;
    p.num_videos = 5;
    p.num_classes = 10;
    p.frames_per_video = 32;
    p.out_dir = temp_dir("bad");
    CHECK_THROWS_AS(generate_synthetic_corpus(p), ArgumentError);
    p.num_videos = 20;
    p.frames_per_video = 3;
    p.scene_changes = 1;  // needs >= 4 frames
    CHECK_THROWS_AS(generate_synthetic_corpus(p), ArgumentError);
  }
  SUBCASE("scene cuts leave every scene at least two frames") {
    GenParams p;
    p.num_videos = 1;
    p.num_classes = 1;
    p.frames_per_video = 8;
    p.scene_changes = 3;
    p.seed = 3;
    for (int run = 0; run < 30; ++run) {
      SceneInfo info;
      p.seed = run;
      render_synthetic_video(p, 0, 0, &info);
      REQUIRE(info.cuts.size() == 3);
      int prev = 0;
      for (int c : info.cuts) {
        CHECK(c - prev >= 2);
        prev = c;
      }
      CHECK(p.frames_per_video - prev >= 2);
    }
  }
}

TEST_CASE("manifest validation catches duplicates and missing files") {
  const std::string dir = temp_dir("manifest");
  FrameSeq f;
  f.t = 4;
  f.c = 1;
  f.h = 8;
  f.w = 8;
  f.data.assign(static_cast<std::size_t>(f.t) * f.frame_elems(), 0.25f);
  write_frame_archive(dir + "/a.chnv", f);

  SUBCASE("duplicate ids rejected") {
    std::ofstream out(dir + "/manifest.jsonl");
    out << R"({"id":"a","label":0,"frame_count":4,"source":"a.chnv","split":"train"})" << "\n";
    out << R"({"id":"a","label":1,"frame_count":4,"source":"a.chnv","split":"train"})" << "\n";
    out.close();
    CHECK_THROWS_AS(load_manifest(dir + "/manifest.jsonl"), FormatError);
  }
  SUBCASE("missing source rejected") {
    std::ofstream out(dir + "/manifest.jsonl");
    out << R"({"id":"a","label":0,"frame_count":4,"source":"gone.chnv","split":"train"})" << "\n";
    out.close();
    CHECK_THROWS_AS(load_manifest(dir + "/manifest.jsonl"), FormatError);
  }
  SUBCASE("frame count mismatch rejected") {
    std::ofstream out(dir + "/manifest.jsonl");
    out << R"({"id":"a","label":0,"frame_count":9,"source":"a.chnv","split":"train"})" << "\n";
    out.close();
    CHECK_THROWS_AS(load_manifest(dir + "/manifest.jsonl"), FormatError);
  }
}
