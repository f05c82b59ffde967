#include "chain/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "chain/errors.hpp"
#include "chain/rng.hpp"
#include "chain/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace chain {

namespace {

constexpr std::uint32_t kFrameVersion = 1;
constexpr std::uint32_t kFeatureVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& out, const float* data, std::size_t n) {
  static_assert(sizeof(float) == 4);
  // Little-endian hosts write the raw buffer; this is the only layout we run on.
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
}

void read_f32(std::istream& in, float* data, std::size_t n, const std::string& what) {
  if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 4)))
    throw FormatError("truncated " + what);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return in;
}

void check_magic(std::istream& in, const char* magic, const std::string& what) {
  char m[4];
  if (!in.read(m, 4) || std::memcmp(m, magic, 4) != 0) throw FormatError("bad magic in " + what);
}

}  // namespace

std::string Manifest::resolve(const VideoRecord& r) const {
  fs::path p(r.source);
  if (p.is_absolute() || base_dir.empty()) return r.source;
  return (fs::path(base_dir) / p).string();
}

void write_frame_archive(const std::string& path, const FrameSeq& frames) {
  if (frames.t < 1 || frames.c < 1 || frames.h < 1 || frames.w < 1)
    throw ArgumentError("write_frame_archive: empty shape");
  auto out = open_out(path);
  out.write("CHNV", 4);
  write_u32(out, kFrameVersion);
  write_u32(out, static_cast<std::uint32_t>(frames.t));
  write_u32(out, static_cast<std::uint32_t>(frames.c));
  write_u32(out, static_cast<std::uint32_t>(frames.h));
  write_u32(out, static_cast<std::uint32_t>(frames.w));
  write_f32(out, frames.data.data(), frames.data.size());
  if (!out) throw IoError("write failed: " + path);
}

FrameSeq read_frame_archive(const std::string& path) {
  auto in = open_in(path);
  check_magic(in, "CHNV", path);
  const auto version = read_u32(in, path);
  if (version != kFrameVersion) throw FormatError("unsupported frame archive version in " + path);
  FrameSeq f;
  f.t = static_cast<int>(read_u32(in, path));
  f.c = static_cast<int>(read_u32(in, path));
  f.h = static_cast<int>(read_u32(in, path));
  f.w = static_cast<int>(read_u32(in, path));
  if (f.t < 1 || f.c < 1 || f.h < 1 || f.w < 1) throw FormatError("bad dimensions in " + path);
  f.data.resize(static_cast<std::size_t>(f.t) * f.frame_elems());
  read_f32(in, f.data.data(), f.data.size(), path);
  return f;
}

void write_feature_file(const std::string& path, const FeatureSeq& features) {
  if (!features.allFinite()) throw ArgumentError("write_feature_file: non-finite features");
  auto out = open_out(path);
  out.write("CHNF", 4);
  write_u32(out, kFeatureVersion);
  write_u32(out, static_cast<std::uint32_t>(features.rows()));
  write_u32(out, static_cast<std::uint32_t>(features.cols()));
  write_f32(out, features.data(), static_cast<std::size_t>(features.size()));
  if (!out) throw IoError("write failed: " + path);
}

FeatureSeq read_feature_file(const std::string& path) {
  auto in = open_in(path);
  check_magic(in, "CHNF", path);
  const auto version = read_u32(in, path);
  if (version != kFeatureVersion) throw FormatError("unsupported feature file version in " + path);
  const auto t = read_u32(in, path);
  const auto d = read_u32(in, path);
  if (t < 1 || d < 1) throw FormatError("bad dimensions in " + path);
  FeatureSeq f(t, d);
  read_f32(in, f.data(), static_cast<std::size_t>(f.size()), path);
  if (!f.allFinite()) throw FormatError("non-finite features in " + path);
  return f;
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  auto out = open_out(path);
  for (const auto& r : manifest.records) {
    json line = {{"id", r.id},
                 {"label", r.label},
                 {"frame_count", r.frame_count},
                 {"source", r.source},
                 {"split", r.split}};
    out << line.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

Manifest load_manifest(const std::string& path) {
  auto in = open_in(path);
  Manifest m;
  m.base_dir = fs::path(path).parent_path().string();
  std::string line;
  std::set<std::string> ids;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("manifest " + path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    VideoRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.label = j.at("label").get<int>();
      r.frame_count = j.at("frame_count").get<int>();
      r.source = j.at("source").get<std::string>();
      r.split = j.value("split", std::string("train"));
    } catch (const json::exception& e) {
      throw FormatError("manifest " + path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (r.label < 0) throw FormatError("manifest: negative label for " + r.id);
    if (r.frame_count < 1) throw FormatError("manifest: frame_count < 1 for " + r.id);
    if (!ids.insert(r.id).second) throw FormatError("manifest: duplicate id " + r.id);
    m.records.push_back(std::move(r));
  }
  // Headers must parse and agree with the declared frame counts.
  for (const auto& r : m.records) {
    const std::string src = m.resolve(r);
    if (!fs::exists(src)) throw FormatError("manifest: missing source file " + src);
    if (is_feature_source(r)) {
      auto f = open_in(src);
      check_magic(f, "CHNF", src);
      read_u32(f, src);
      const auto t = read_u32(f, src);
      if (static_cast<int>(t) != r.frame_count)
        throw FormatError("manifest: frame_count mismatch for " + r.id);
    } else {
      auto f = open_in(src);
      check_magic(f, "CHNV", src);
      read_u32(f, src);
      const auto l = read_u32(f, src);
      if (static_cast<int>(l) != r.frame_count)
        throw FormatError("manifest: frame_count mismatch for " + r.id);
    }
  }
  int max_label = -1;
  for (const auto& r : m.records) max_label = std::max(max_label, r.label);
  m.num_classes = max_label + 1;
  if (!m.records.empty()) m.split = m.records.front().split;
  return m;
}

bool is_feature_source(const VideoRecord& record) {
  return record.source.size() >= 5 &&
         record.source.compare(record.source.size() - 5, 5, ".chnf") == 0;
}

FrameSeq read_frames(const Manifest& manifest, const VideoRecord& record) {
  if (is_feature_source(record))
    throw ArgumentError("read_frames: record " + record.id + " is a feature source");
  FrameSeq f = read_frame_archive(manifest.resolve(record));
  if (f.t != record.frame_count)
    throw FormatError("read_frames: frame count mismatch for " + record.id);
  return f;
}

FeatureSeq read_features(const Manifest& manifest, const VideoRecord& record) {
  if (!is_feature_source(record))
    throw ArgumentError("read_features: record " + record.id + " is a frame source");
  FeatureSeq f = read_feature_file(manifest.resolve(record));
  if (f.rows() != record.frame_count)
    throw FormatError("read_features: frame count mismatch for " + record.id);
  return f;
}

// --- synthetic corpus --------------------------------------------------------

namespace {

struct Rgb {
  float r, g, b;
};

// Bright, saturated-ish foreground per class; distinct luminance from any
// background texture even after grayscale augmentation.
Rgb class_color(int label, Rng& rng) {
  const double hue = std::fmod(label * 0.618033988749895, 1.0) * 6.0;
  const double v = 0.95 - 0.05 * rng.uniform();
  const double s = 0.55;
  const int i = static_cast<int>(hue);
  const double f = hue - i;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r, g, b;
  switch (i % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

constexpr int kNumTextures = 7;
constexpr int kNumShapes = 8;

// Dim background textures; id 0 is solid black.
float texture_value(int tex, int x, int y, int phase) {
  switch (tex) {
    case 0: return 0.0f;
    case 1: return 0.28f;
    case 2: return ((x / 2 + y / 2 + phase) % 2 == 0) ? 0.08f : 0.38f;   // checker
    case 3: return ((y + phase) % 4 < 2) ? 0.10f : 0.34f;                // h-stripes
    case 4: return ((x + phase) % 4 < 2) ? 0.12f : 0.36f;                // v-stripes
    case 5: return 0.05f + 0.30f * ((x + y + phase) % 13) / 12.0f;       // diagonal ramp
    default: {
      const std::uint64_t h = mix64((static_cast<std::uint64_t>(x) << 24) ^
                                    (static_cast<std::uint64_t>(y) << 8) ^ phase);
      return 0.06f + 0.30f * static_cast<float>(h >> 40) / 16777216.0f;  // frozen noise
    }
  }
}

bool inside_shape(int shape, double dx, double dy, double r) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  switch (shape % kNumShapes) {
    case 0: return dx * dx + dy * dy <= r * r;                       // disk
    case 1: return ax <= r && ay <= r;                               // square
    case 2: return (ax <= r * 0.4 && ay <= r) || (ay <= r * 0.4 && ax <= r);  // cross
    case 3: return ay <= r && ax <= (r - dy) * 0.5 && dy >= -r;      // triangle
    case 4: return ax + ay <= r;                                     // diamond
    case 5: {                                                        // ring
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.35 * r * r;
    }
    case 6: return ax <= r && (ay <= r * 0.35 || ay >= r * 0.7) && ay <= r;  // double bar
    default: return ax <= r * 0.4 && ay <= r;                        // vertical bar
  }
}

std::vector<int> draw_cuts(int frames, int scene_changes, Rng& rng) {
  // Segment lengths = 2 + random split of the leftover frames, so every scene
  // holds >= 2 frames; cut positions are the running sums.
  const int segments = scene_changes + 1;
  std::vector<int> len(segments, 2);
  int extra = frames - 2 * segments;
  while (extra > 0) {
    len[rng.uniform_int(0, segments - 1)] += 1;
    --extra;
  }
  std::vector<int> cuts;
  int acc = 0;
  for (int i = 0; i + 1 < segments; ++i) {
    acc += len[i];
    cuts.push_back(acc);
  }
  return cuts;
}

}  // namespace

FrameSeq render_synthetic_video(const GenParams& p, int index, int label, SceneInfo* scenes) {
  Rng rng(derive_seed(p.seed, static_cast<std::uint64_t>(index)));
  const int L = p.frames_per_video, C = p.channels, H = p.height, W = p.width;

  const int shape = (label / 2) % kNumShapes;
  const bool grow = (label % 2) == 0;
  const Rgb color = class_color(label, rng);
  const double cx = W * (0.38 + 0.24 * rng.uniform());
  const double cy = H * (0.38 + 0.24 * rng.uniform());
  const double r_min = std::max(1.5, 0.09 * std::min(H, W));
  const double r_max = 0.34 * std::min(H, W);

  std::vector<int> cuts = draw_cuts(L, p.scene_changes, rng);
  std::vector<int> textures(p.scene_changes + 1);
  textures[0] = static_cast<int>(rng.uniform_int(kNumTextures));
  for (std::size_t s = 1; s < textures.size(); ++s)
    textures[s] = (textures[s - 1] + 1 + static_cast<int>(rng.uniform_int(kNumTextures - 1))) % kNumTextures;
  std::vector<int> phases(textures.size());
  for (auto& ph : phases) ph = static_cast<int>(rng.uniform_int(16));

  if (scenes) scenes->cuts = cuts;

  FrameSeq out;
  out.t = L;
  out.c = C;
  out.h = H;
  out.w = W;
  out.data.resize(static_cast<std::size_t>(L) * C * H * W);

  for (int t = 0; t < L; ++t) {
    int scene = 0;
    for (int c : cuts)
      if (t >= c) ++scene;
    const int tex = textures[scene];
    const int phase = phases[scene];
    const double frac = L > 1 ? static_cast<double>(t) / (L - 1) : 0.0;
    const double radius = grow ? r_min + (r_max - r_min) * frac : r_max - (r_max - r_min) * frac;
    float* fr = out.frame(t);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        float base = texture_value(tex, x, y, phase);
        if (tex != 0 && p.pixel_noise > 0.0f)
          base += p.pixel_noise * static_cast<float>(rng.uniform() - 0.5);
        const bool hit = inside_shape(shape, x + 0.5 - cx, y + 0.5 - cy, radius);
        for (int ch = 0; ch < C; ++ch) {
          float v = base;
          if (hit) v = (ch == 0 ? color.r : ch == 1 ? color.g : color.b);
          if (C == 1 && hit) v = 0.9f;
          fr[static_cast<std::size_t>(ch) * H * W + static_cast<std::size_t>(y) * W + x] =
              std::clamp(v, 0.0f, 1.0f);
        }
      }
    }
  }
  return out;
}

Manifest generate_synthetic_corpus(const GenParams& p) {
  if (p.num_classes < 1 || p.num_videos < p.num_classes)
    throw ArgumentError("generate_synthetic_corpus: need num_videos >= num_classes >= 1");
  if (p.scene_changes < 0) throw ArgumentError("generate_synthetic_corpus: scene_changes < 0");
  if (p.frames_per_video < 2 * (p.scene_changes + 1))
    throw ArgumentError("generate_synthetic_corpus: frames_per_video must be >= 2*(scene_changes+1)");
  if (p.channels < 1 || p.height < 1 || p.width < 1)
    throw ArgumentError("generate_synthetic_corpus: bad frame shape");

  std::error_code ec;
  fs::create_directories(fs::path(p.out_dir) / "frames", ec);
  if (ec) throw IoError("cannot create output directory: " + p.out_dir);

  Manifest m;
  m.base_dir = p.out_dir;
  m.num_classes = p.num_classes;
  m.records.resize(p.num_videos);
  std::vector<SceneInfo> scenes(p.num_videos);

  parallel_for(static_cast<std::size_t>(p.num_videos), [&](std::size_t i) {
    const int label = static_cast<int>(i) % p.num_classes;
    char name[32];
    std::snprintf(name, sizeof(name), "vid_%05zu", i);
    SceneInfo info;
    info.id = name;
    FrameSeq frames = render_synthetic_video(p, static_cast<int>(i), label, &info);
    VideoRecord r;
    r.id = name;
    r.label = label;
    r.frame_count = p.frames_per_video;
    r.source = std::string("frames/") + name + ".chnv";
    r.split = "train";
    write_frame_archive((fs::path(p.out_dir) / r.source).string(), frames);
    m.records[i] = std::move(r);
    scenes[i] = std::move(info);
  });

  write_manifest((fs::path(p.out_dir) / "manifest.jsonl").string(), m);
  {
    auto out = open_out((fs::path(p.out_dir) / "scenes.jsonl").string());
    for (const auto& s : scenes) {
      json line = {{"id", s.id}, {"cuts", s.cuts}};
      out << line.dump() << "\n";
    }
  }
  return m;
}

std::vector<SceneInfo> load_scene_info(const std::string& path) {
  auto in = open_in(path);
  std::vector<SceneInfo> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("scenes file " + path + ": " + e.what());
    }
    SceneInfo s;
    s.id = j.at("id").get<std::string>();
    s.cuts = j.at("cuts").get<std::vector<int>>();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace chain
