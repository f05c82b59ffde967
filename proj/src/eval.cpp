#include "chain/eval.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstring>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "chain/augment.hpp"
#include "chain/errors.hpp"

namespace chain {

std::vector<std::uint8_t> pack_code(const std::vector<int>& bits_pm1) {
  const int k = static_cast<int>(bits_pm1.size());
  std::vector<std::uint8_t> out((k + 7) / 8, 0);
  for (int j = 0; j < k; ++j)
    if (bits_pm1[j] > 0) out[j / 8] |= static_cast<std::uint8_t>(1u << (j % 8));
  return out;
}

std::vector<int> unpack_code(const std::uint8_t* code, int bits) {
  std::vector<int> out(bits);
  for (int j = 0; j < bits; ++j) out[j] = (code[j / 8] >> (j % 8)) & 1 ? 1 : -1;
  return out;
}

int hamming(const std::uint8_t* a, const std::uint8_t* b, int bits) {
  int dist = 0;
  for (int byte = 0; byte < (bits + 7) / 8; ++byte)
    dist += std::popcount(static_cast<unsigned>(a[byte] ^ b[byte]));
  return dist;
}

int hamming(const CodeBook& a, std::size_t i, const CodeBook& b, std::size_t j) {
  if (a.bits != b.bits) throw ArgumentError("hamming: code length mismatch");
  return hamming(a.code(i), b.code(j), a.bits);
}

CodeBook encode_corpus(ModelState<float>& model, const Manifest& manifest, std::ostream& log) {
  CodeBook book;
  book.bits = model.cfg.code_bits;
  const int t = model.cfg.clip_length;
  auto t0 = std::chrono::steady_clock::now();

  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const VideoRecord& rec = manifest.records[i];
    if (rec.frame_count < t)
      throw ArgumentError("encode_corpus: record " + rec.id + " shorter than clip length");

    Mat<float> input;
    if (is_feature_source(rec)) {
      FeatureSeq feats = read_features(manifest, rec);
      input = gather_features(feats, center_clip(rec.frame_count, t));
    } else {
      FrameSeq video = read_frames(manifest, rec);
      FrameSeq clip = gather_frames(video, center_clip(rec.frame_count, t));
      input.resize(t, static_cast<Eigen::Index>(clip.frame_elems()));
      for (int j = 0; j < t; ++j)
        for (Eigen::Index k = 0; k < input.cols(); ++k) input(j, k) = clip.frame(j)[k];
    }

    Tape<float> tape;
    BoundModel<float> bm = bind_model(tape, model, /*needs_grad=*/false);
    Var<float> x = tape.constant(std::move(input));
    Var<float> feats = frame_encode(tape, bm, x);
    auto [z, f] = temporal_encode_batch(tape, bm, feats, 1);
    Var<float> h = hash_project(tape, bm, z);
    std::vector<int> bits(model.cfg.code_bits);
    for (int j = 0; j < model.cfg.code_bits; ++j) bits[j] = h.value()(0, j) >= 0.0f ? 1 : -1;

    book.ids.push_back(rec.id);
    book.labels.push_back(rec.label);
    const auto packed = pack_code(bits);
    book.packed.insert(book.packed.end(), packed.begin(), packed.end());

    if ((i + 1) % 100 == 0 || i + 1 == manifest.records.size()) {
      const auto t1 = std::chrono::steady_clock::now();
      const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      const std::size_t batch = ((i + 1) % 100 == 0) ? 100 : (i + 1) % 100;
      log << "encode videos=" << (i + 1) << " avg_ms_per_video=" << (ms / batch) << "\n";
      t0 = t1;
    }
  }
  return book;
}

namespace {

// Ranked database indices for one query: ascending distance, ties by id.
std::vector<int> ranked_list(const CodeBook& queries, std::size_t q, const CodeBook& database) {
  std::vector<int> order;
  order.reserve(database.size());
  std::vector<int> dist(database.size());
  for (std::size_t j = 0; j < database.size(); ++j) {
    if (database.ids[j] == queries.ids[q]) continue;  // self-match exclusion
    dist[j] = hamming(queries, q, database, j);
    order.push_back(static_cast<int>(j));
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    return database.ids[a] < database.ids[b];
  });
  return order;
}

}  // namespace

double map_at_k(const CodeBook& queries, const CodeBook& database, int k_ret) {
  if (database.size() == 0) throw ArgumentError("map_at_k: empty database");
  if (queries.size() == 0) throw ArgumentError("map_at_k: empty query set");
  if (k_ret < 1) throw ArgumentError("map_at_k: K must be >= 1");
  if (queries.bits != database.bits) throw ArgumentError("map_at_k: code length mismatch");

  double sum_ap = 0.0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const std::vector<int> order = ranked_list(queries, q, database);
    int total_relevant = 0;
    for (int j : order)
      if (database.labels[j] == queries.labels[q]) ++total_relevant;
    if (total_relevant == 0) continue;  // contributes 0

    const int depth = std::min<int>(k_ret, static_cast<int>(order.size()));
    int hits = 0;
    double ap = 0.0;
    for (int r = 0; r < depth; ++r) {
      if (database.labels[order[r]] == queries.labels[q]) {
        ++hits;
        ap += static_cast<double>(hits) / (r + 1);
      }
    }
    sum_ap += ap / std::min(k_ret, total_relevant);
  }
  return sum_ap / static_cast<double>(queries.size());
}

std::vector<PRPoint> pr_curve(const CodeBook& queries, const CodeBook& database) {
  if (database.size() == 0 || queries.size() == 0) throw ArgumentError("pr_curve: empty input");
  if (queries.bits != database.bits) throw ArgumentError("pr_curve: code length mismatch");
  const int k = queries.bits;

  // retrieved_rel[rho], retrieved_all[rho], summed over queries.
  std::vector<long long> rel_at(k + 1, 0), all_at(k + 1, 0);
  long long total_relevant = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t j = 0; j < database.size(); ++j) {
      if (database.ids[j] == queries.ids[q]) continue;
      const int d = hamming(queries, q, database, j);
      const bool rel = database.labels[j] == queries.labels[q];
      ++all_at[d];
      if (rel) {
        ++rel_at[d];
        ++total_relevant;
      }
    }
  }
  // prefix sums turn per-distance counts into <=radius counts
  std::vector<PRPoint> curve(k + 1);
  long long rel_cum = 0, all_cum = 0;
  for (int rho = 0; rho <= k; ++rho) {
    rel_cum += rel_at[rho];
    all_cum += all_at[rho];
    curve[rho].radius = rho;
    curve[rho].precision = all_cum == 0 ? 1.0 : static_cast<double>(rel_cum) / all_cum;
    curve[rho].recall = total_relevant == 0 ? 1.0 : static_cast<double>(rel_cum) / total_relevant;
  }
  return curve;
}

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw FormatError("truncated " + what);
  return v;
}

}  // namespace

void write_codebook(const std::string& path, const CodeBook& book) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open codebook for writing: " + path);
  out.write("CHNB", 4);
  write_u32(out, 1);
  write_u32(out, static_cast<std::uint32_t>(book.size()));
  write_u32(out, static_cast<std::uint32_t>(book.bits));
  for (std::size_t i = 0; i < book.size(); ++i) {
    write_u32(out, static_cast<std::uint32_t>(i));
    write_u32(out, static_cast<std::uint32_t>(book.labels[i]));
    out.write(reinterpret_cast<const char*>(book.code(i)), book.stride());
  }
  write_u32(out, static_cast<std::uint32_t>(book.ids.size()));
  for (const auto& id : book.ids) {
    write_u32(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  if (!out) throw IoError("codebook write failed: " + path);
}

CodeBook read_codebook(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open codebook: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "CHNB", 4) != 0)
    throw FormatError("codebook: bad magic in " + path);
  if (read_u32(in, path) != 1) throw FormatError("codebook: unsupported version in " + path);
  const std::uint32_t n = read_u32(in, path);
  const std::uint32_t k = read_u32(in, path);
  if (k < 1) throw FormatError("codebook: bad code length in " + path);
  CodeBook book;
  book.bits = static_cast<int>(k);
  book.labels.resize(n);
  std::vector<std::uint32_t> id_index(n);
  book.packed.resize(static_cast<std::size_t>(n) * book.stride());
  for (std::uint32_t i = 0; i < n; ++i) {
    id_index[i] = read_u32(in, path);
    book.labels[i] = static_cast<int>(read_u32(in, path));
    if (!in.read(reinterpret_cast<char*>(book.packed.data() + static_cast<std::size_t>(i) * book.stride()),
                 book.stride()))
      throw FormatError("codebook: truncated codes in " + path);
  }
  const std::uint32_t table = read_u32(in, path);
  std::vector<std::string> strings(table);
  for (std::uint32_t i = 0; i < table; ++i) {
    const std::uint32_t len = read_u32(in, path);
    strings[i].resize(len);
    if (!in.read(strings[i].data(), len)) throw FormatError("codebook: truncated id table in " + path);
  }
  book.ids.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (id_index[i] >= table) throw FormatError("codebook: id index out of range in " + path);
    book.ids[i] = strings[id_index[i]];
  }
  return book;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<std::pair<int, double>>& map_rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open metrics csv: " + path);
  out << "metric,K,value\n";
  out.precision(12);
  for (const auto& [k, v] : map_rows) out << "map," << k << "," << v << "\n";
  if (!out) throw IoError("metrics csv write failed: " + path);
}

void write_pr_csv(const std::string& path, const std::vector<PRPoint>& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open pr csv: " + path);
  out << "radius,precision,recall\n";
  out.precision(12);
  for (const auto& p : curve) out << p.radius << "," << p.precision << "," << p.recall << "\n";
  if (!out) throw IoError("pr csv write failed: " + path);
}

}  // namespace chain
