#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "chain/corpus.hpp"
#include "chain/model.hpp"

namespace chain {

// Packed binary codes plus the id/label manifest needed for ranking.
// Bit j of a code is (b_j == +1), stored LSB-first within each byte; padding
// bits of the last byte are always zero.
struct CodeBook {
  std::vector<std::string> ids;
  std::vector<int> labels;
  int bits = 0;
  std::vector<std::uint8_t> packed;  // size() == ids.size() * stride()

  int stride() const { return (bits + 7) / 8; }
  std::size_t size() const { return ids.size(); }
  const std::uint8_t* code(std::size_t i) const { return packed.data() + i * stride(); }
};

std::vector<std::uint8_t> pack_code(const std::vector<int>& bits_pm1);
std::vector<int> unpack_code(const std::uint8_t* code, int bits);

// Popcount of the XOR over the packed bytes; padding is zero on both sides by
// construction.
int hamming(const std::uint8_t* a, const std::uint8_t* b, int bits);
int hamming(const CodeBook& a, std::size_t i, const CodeBook& b, std::size_t j);

// Deterministic corpus encoding: mid-segment clip, identity spatial spec,
// sign(h) per video. Logs an average-milliseconds line per 100 videos.
CodeBook encode_corpus(ModelState<float>& model, const Manifest& manifest, std::ostream& log);

// mAP@K with relevance = label equality. Ranked lists sort by (distance, id);
// a query is excluded from its own ranked list when its id appears in the
// database. AP normalizes by min(K_ret, R_q); queries with no relevant
// database entry contribute 0.
double map_at_k(const CodeBook& queries, const CodeBook& database, int k_ret);

struct PRPoint {
  int radius = 0;
  double precision = 0.0;
  double recall = 0.0;
};

// Micro-averaged precision/recall of the retrieved set {d : hamming <= radius}
// for every radius 0..K. Empty denominators report 1.0 (vacuous truth).
std::vector<PRPoint> pr_curve(const CodeBook& queries, const CodeBook& database);

// Code file: "CHNB", u32 version=1, u32 N, u32 K, per record
// (u32 id index, u32 label, stride code bytes), then the id string table
// (u32 count, then u32 length + bytes per id).
void write_codebook(const std::string& path, const CodeBook& book);
CodeBook read_codebook(const std::string& path);

void write_metrics_csv(const std::string& path, const std::vector<std::pair<int, double>>& map_rows);
void write_pr_csv(const std::string& path, const std::vector<PRPoint>& curve);

}  // namespace chain
