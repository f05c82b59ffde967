#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "chain/errors.hpp"
#include "chain/eval.hpp"
#include "helpers.hpp"

using namespace chain;

namespace {

CodeBook make_book(const std::vector<std::vector<int>>& codes, const std::vector<int>& labels,
                   const std::vector<std::string>& ids) {
  CodeBook book;
  book.bits = static_cast<int>(codes[0].size());
  book.ids = ids;
  book.labels = labels;
  for (const auto& c : codes) {
    const auto packed = pack_code(c);
    book.packed.insert(book.packed.end(), packed.begin(), packed.end());
  }
  return book;
}

std::vector<int> random_code(int bits, Rng& rng) {
  std::vector<int> c(bits);
  for (auto& v : c) v = rng.bernoulli(0.5) ? 1 : -1;
  return c;
}

// direct-formula AP oracle: explicit loops, independent ranking
double oracle_map_at_k(const CodeBook& queries, const CodeBook& database, int k_ret) {
  double total = 0.0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    struct Entry {
      int dist;
      std::string id;
      bool rel;
    };
    std::vector<Entry> entries;
    for (std::size_t j = 0; j < database.size(); ++j) {
      if (database.ids[j] == queries.ids[q]) continue;
      int d = 0;
      const auto a = unpack_code(queries.code(q), queries.bits);
      const auto b = unpack_code(database.code(j), database.bits);
      for (int bit = 0; bit < queries.bits; ++bit)
        if (a[bit] != b[bit]) ++d;
      entries.push_back({d, database.ids[j], database.labels[j] == queries.labels[q]});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& x, const Entry& y) {
      return x.dist != y.dist ? x.dist < y.dist : x.id < y.id;
    });
    int r_total = 0;
    for (const auto& e : entries)
      if (e.rel) ++r_total;
    if (r_total == 0) continue;
    int hits = 0;
    double ap = 0.0;
    for (int r = 0; r < std::min<int>(k_ret, static_cast<int>(entries.size())); ++r) {
      if (entries[r].rel) {
        ++hits;
        ap += static_cast<double>(hits) / (r + 1);
      }
    }
    total += ap / std::min(k_ret, r_total);
  }
  return total / queries.size();
}

}  // namespace

TEST_CASE("pack/unpack round trips with zero padding bits") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int bits = 1 + static_cast<int>(rng.uniform_int(40));
    const auto code = random_code(bits, rng);
    const auto packed = pack_code(code);
    CHECK(unpack_code(packed.data(), bits) == code);
    // padding bits of the last byte stay zero
    if (bits % 8 != 0) {
      const std::uint8_t last = packed.back();
      CHECK((last >> (bits % 8)) == 0);
    }
  }
}

TEST_CASE("hamming") {
  SUBCASE("identical and complementary codes") {
    Rng rng(2);
    const int bits = 19;
    const auto a = random_code(bits, rng);
    std::vector<int> na(bits);
    for (int i = 0; i < bits; ++i) na[i] = -a[i];
    const auto pa = pack_code(a);
    const auto pna = pack_code(na);
    CHECK(hamming(pa.data(), pa.data(), bits) == 0);
    CHECK(hamming(pa.data(), pna.data(), bits) == bits);
  }
  SUBCASE("matches the naive per-bit loop on random pairs") {
    Rng rng(3);
    for (int trial = 0; trial < 500; ++trial) {
      const int bits = 1 + static_cast<int>(rng.uniform_int(64));
      const auto a = random_code(bits, rng);
      const auto b = random_code(bits, rng);
      int naive = 0;
      for (int i = 0; i < bits; ++i)
        if (a[i] != b[i]) ++naive;
      const auto pa = pack_code(a);
      const auto pb = pack_code(b);
      CHECK(hamming(pa.data(), pb.data(), bits) == naive);
    }
  }
  SUBCASE("is a metric on random codes") {
    Rng rng(4);
    const int bits = 24;
    for (int trial = 0; trial < 100; ++trial) {
      const auto a = pack_code(random_code(bits, rng));
      const auto b = pack_code(random_code(bits, rng));
      const auto c = pack_code(random_code(bits, rng));
      const int ab = hamming(a.data(), b.data(), bits);
      const int ba = hamming(b.data(), a.data(), bits);
      const int ac = hamming(a.data(), c.data(), bits);
      const int cb = hamming(c.data(), b.data(), bits);
      CHECK(ab == ba);
      CHECK(hamming(a.data(), a.data(), bits) == 0);
      CHECK(ab <= ac + cb);
    }
  }
  SUBCASE("length mismatch rejected") {
    CodeBook a = make_book({{1, -1}}, {0}, {"a"});
    CodeBook b = make_book({{1, -1, 1, 1, 1, -1, 1, 1, 1}}, {0}, {"b"});
    CHECK_THROWS_AS(hamming(a, 0, b, 0), ArgumentError);
  }
}

TEST_CASE("map_at_k formula cases") {
  SUBCASE("all top-K relevant gives AP = 1") {
    // one query; database sorted by distance: 3 relevant at distance 0,1,2
    CodeBook q = make_book({{1, 1, 1, 1}}, {0}, {"q"});
    CodeBook db = make_book({{1, 1, 1, 1}, {1, 1, 1, -1}, {1, 1, -1, -1}}, {0, 0, 0},
                            {"a", "b", "c"});
    CHECK(map_at_k(q, db, 3) == doctest::Approx(1.0));
  }
  SUBCASE("no relevant in top-K gives AP = 0") {
    CodeBook q = make_book({{1, 1, 1, 1}}, {0}, {"q"});
    CodeBook db = make_book({{1, 1, 1, 1}, {1, 1, 1, -1}}, {1, 1}, {"a", "b"});
    CHECK(map_at_k(q, db, 2) == doctest::Approx(0.0));
  }
  SUBCASE("relevance pattern (1,0,1) at K=3 gives 5/6") {
    // distances 0 < 1 < 2 force the ranking; labels make ranks 1 and 3 relevant
    CodeBook q = make_book({{1, 1, 1, 1}}, {0}, {"q"});
    CodeBook db = make_book({{1, 1, 1, 1}, {1, 1, 1, -1}, {1, 1, -1, -1}, {-1, -1, -1, -1}},
                            {0, 1, 0, 0}, {"a", "b", "c", "d"});
    // R_q = 3 >= 2, normalization min(3, 3) = 3? pattern over top-3: (1,0,1)
    // AP = (1/min(3, R_q)) * (1/1 + 2/3) with R_q = 3 -> (1 + 2/3)/3
    CHECK(map_at_k(q, db, 3) == doctest::Approx((1.0 + 2.0 / 3.0) / 3.0));
    // with K=3 but only the first three db items (R_q = 2): (1/2)(1 + 2/3) = 5/6
    CodeBook db2 = make_book({{1, 1, 1, 1}, {1, 1, 1, -1}, {1, 1, -1, -1}}, {0, 1, 0},
                             {"a", "b", "c"});
    CHECK(map_at_k(q, db2, 3) == doctest::Approx(5.0 / 6.0));
  }
  SUBCASE("empty database rejected") {
    CodeBook q = make_book({{1, 1}}, {0}, {"q"});
    CodeBook empty;
    empty.bits = 2;
    CHECK_THROWS_AS(map_at_k(q, empty, 5), ArgumentError);
  }
}

TEST_CASE("map_at_k matches the direct-formula oracle on random instances") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(99));
    const int nq = 1 + static_cast<int>(rng.uniform_int(20));
    const int bits = 4 + static_cast<int>(rng.uniform_int(12));
    const int classes = 1 + static_cast<int>(rng.uniform_int(5));
    const int k_ret = 1 + static_cast<int>(rng.uniform_int(10));
    std::vector<std::vector<int>> dbc, qc;
    std::vector<int> dbl, ql;
    std::vector<std::string> dbi, qi;
    for (int i = 0; i < n; ++i) {
      dbc.push_back(random_code(bits, rng));
      dbl.push_back(static_cast<int>(rng.uniform_int(classes)));
      dbi.push_back("db" + std::to_string(i));
    }
    for (int i = 0; i < nq; ++i) {
      qc.push_back(random_code(bits, rng));
      ql.push_back(static_cast<int>(rng.uniform_int(classes)));
      qi.push_back(rng.bernoulli(0.3) && i < n ? dbi[i] : "q" + std::to_string(i));
    }
    const CodeBook db = make_book(dbc, dbl, dbi);
    const CodeBook q = make_book(qc, ql, qi);
    CHECK(std::abs(map_at_k(q, db, k_ret) - oracle_map_at_k(q, db, k_ret)) < 1e-12);
  }
}

TEST_CASE("map is invariant under database permutation") {
  Rng rng(6);
  const int n = 40, bits = 12;
  std::vector<std::vector<int>> codes;
  std::vector<int> labels;
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) {
    codes.push_back(random_code(bits, rng));
    labels.push_back(static_cast<int>(rng.uniform_int(4)));
    ids.push_back("v" + std::to_string(i));
  }
  const CodeBook db = make_book(codes, labels, ids);

  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<std::vector<int>> pc;
  std::vector<int> pl;
  std::vector<std::string> pi;
  for (int i = 0; i < n; ++i) {
    pc.push_back(codes[perm[i]]);
    pl.push_back(labels[perm[i]]);
    pi.push_back(ids[perm[i]]);
  }
  const CodeBook shuffled = make_book(pc, pl, pi);
  CHECK(map_at_k(db, db, 5) == map_at_k(db, shuffled, 5));  // exact equality
}

TEST_CASE("pr_curve") {
  SUBCASE("radius K retrieves everything: recall exactly 1") {
    Rng rng(7);
    const int n = 20, bits = 10;
    std::vector<std::vector<int>> codes;
    std::vector<int> labels;
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) {
      codes.push_back(random_code(bits, rng));
      labels.push_back(i % 3);
      ids.push_back("v" + std::to_string(i));
    }
    const CodeBook db = make_book(codes, labels, ids);
    const auto curve = pr_curve(db, db);
    REQUIRE(curve.size() == static_cast<std::size_t>(bits + 1));
    CHECK(curve.back().recall == 1.0);
    for (std::size_t i = 1; i < curve.size(); ++i)
      CHECK(curve[i].recall >= curve[i - 1].recall);  // non-decreasing sweep
  }
  SUBCASE("single-class database has precision 1 at all radii") {
    CodeBook db = make_book({{1, 1, -1, 1}, {1, -1, -1, 1}, {-1, 1, 1, 1}}, {0, 0, 0},
                            {"a", "b", "c"});
    for (const auto& p : pr_curve(db, db)) CHECK(p.precision == 1.0);
  }
  SUBCASE("three-item toy codebook matches hand enumeration") {
    // q=a: b at distance 1 (relevant), c at distance 4 (irrelevant)
    CodeBook db = make_book({{1, 1, 1, 1}, {1, 1, 1, -1}, {-1, -1, -1, -1}}, {0, 0, 1},
                            {"a", "b", "c"});
    CodeBook q = make_book({{1, 1, 1, 1}}, {0}, {"a"});
    const auto curve = pr_curve(q, db);
    // rho=0: nothing retrieved -> precision 1 (vacuous), recall 0
    CHECK(curve[0].precision == 1.0);
    CHECK(curve[0].recall == 0.0);
    // rho=1..3: only b retrieved -> precision 1, recall 1
    for (int rho = 1; rho <= 3; ++rho) {
      CHECK(curve[rho].precision == 1.0);
      CHECK(curve[rho].recall == 1.0);
    }
    // rho=4: b and c retrieved -> precision 1/2, recall 1
    CHECK(curve[4].precision == doctest::Approx(0.5));
    CHECK(curve[4].recall == 1.0);
  }
}

TEST_CASE("codebook file round trip") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "chain_test_codebook";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Rng rng(8);
  std::vector<std::vector<int>> codes;
  std::vector<int> labels;
  std::vector<std::string> ids;
  for (int i = 0; i < 17; ++i) {
    codes.push_back(random_code(13, rng));
    labels.push_back(i % 4);
    ids.push_back("vid_" + std::to_string(i));
  }
  const CodeBook book = make_book(codes, labels, ids);
  const std::string path = (dir / "codes.chnb").string();
  write_codebook(path, book);
  const CodeBook back = read_codebook(path);
  CHECK(back.bits == book.bits);
  CHECK(back.ids == book.ids);
  CHECK(back.labels == book.labels);
  CHECK(back.packed == book.packed);

  SUBCASE("bad magic rejected") {
    std::ofstream out((dir / "bad.chnb").string(), std::ios::binary);
    out << "XXXX";
    out.close();
    CHECK_THROWS_AS(read_codebook((dir / "bad.chnb").string()), FormatError);
  }
}
