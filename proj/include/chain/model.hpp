#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "chain/ad.hpp"
#include "chain/errors.hpp"
#include "chain/rng.hpp"

namespace chain {

struct EncoderConfig {
  int frame_dim = 128;   // D: per-frame feature width
  int model_dim = 64;    // d: token width inside the temporal encoder
  int num_layers = 1;
  int num_heads = 1;
  int clip_length = 8;   // T
  int code_bits = 16;    // K
  // Raw-frame mode runs the toy CNN in front of the temporal encoder;
  // feature mode treats the input rows as pre-extracted D-dim features.
  bool raw_frames = false;
  int in_channels = 3;
  int in_height = 16;
  int in_width = 16;

  int order_classes() const { return clip_length; }
  int cnn_c1() const { return std::max(4, frame_dim / 8); }
  int cnn_c2() const { return std::max(8, frame_dim / 4); }

  void validate() const {
    if (frame_dim < 1 || model_dim < 1 || clip_length < 1) throw ArgumentError("encoder config: dims must be >= 1");
    if (code_bits < 1) throw ArgumentError("encoder config: code_bits must be >= 1");
    if (num_layers < 1 || num_heads < 1) throw ArgumentError("encoder config: layers/heads must be >= 1");
    if (model_dim % num_heads != 0) throw ArgumentError("encoder config: model_dim not divisible by num_heads");
    if (raw_frames) {
      if (in_channels < 1) throw ArgumentError("encoder config: in_channels must be >= 1");
      if (in_height % 8 != 0 || in_width % 8 != 0 || in_height < 8 || in_width < 8)
        throw ArgumentError("encoder config: raw frames need height/width divisible by 8");
    }
  }
};

template <class S>
struct AttnParams {
  Mat<S> wq, bq, wk, bk, wv, bv, wo, bo;
};

// All trainable parameters. Weights are stored (out x in) and applied as
// x * W^T. Positional embedding row 0 belongs to the CLS token.
template <class S>
struct ModelState {
  EncoderConfig cfg;

  Mat<S> conv1_w, conv1_b, conv2_w, conv2_b, conv3_w, conv3_b;
  Mat<S> proj_w, proj_b;
  Mat<S> cls;
  Mat<S> pos;
  std::vector<AttnParams<S>> layers;
  Mat<S> hash1_w, hash1_b, hash2_w, hash2_b;
  Mat<S> order_w, order_b;

  static ModelState init(const EncoderConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelState m;
    m.cfg = cfg;
    Rng rng(derive_seed(seed, {0x6d6f64656cULL}));  // "model"
    auto glorot = [&rng](int out, int in) {
      Mat<S> w(out, in);
      const double limit = std::sqrt(6.0 / (in + out));
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = static_cast<S>(rng.uniform(-limit, limit));
      return w;
    };
    auto zeros = [](int out, int in) { return Mat<S>::Zero(out, in); };
    auto small_normal = [&rng](int r, int c) {
      Mat<S> w(r, c);
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = static_cast<S>(rng.normal(0.0, 0.02));
      return w;
    };

    const int d = cfg.model_dim, D = cfg.frame_dim, T = cfg.clip_length, K = cfg.code_bits;
    if (cfg.raw_frames) {
      const int c1 = cfg.cnn_c1(), c2 = cfg.cnn_c2();
      m.conv1_w = glorot(c1, cfg.in_channels * 9);
      m.conv1_b = zeros(1, c1);
      m.conv2_w = glorot(c2, c1 * 9);
      m.conv2_b = zeros(1, c2);
      m.conv3_w = glorot(D, c2 * 9);
      m.conv3_b = zeros(1, D);
    }
    m.proj_w = glorot(d, D);
    m.proj_b = zeros(1, d);
    m.cls = small_normal(1, d);
    m.pos = small_normal(T + 1, d);
    m.layers.resize(cfg.num_layers);
    for (auto& l : m.layers) {
      l.wq = glorot(d, d);
      l.bq = zeros(1, d);
      l.wk = glorot(d, d);
      l.bk = zeros(1, d);
      l.wv = glorot(d, d);
      l.bv = zeros(1, d);
      l.wo = glorot(d, d);
      l.bo = zeros(1, d);
    }
    m.hash1_w = glorot(d, d);
    m.hash1_b = zeros(1, d);
    m.hash2_w = glorot(K, d);
    m.hash2_b = zeros(1, K);
    m.order_w = glorot(T, d);
    m.order_b = zeros(1, T);
    return m;
  }

  template <class F>
  void for_each_param(F&& f) {
    if (cfg.raw_frames) {
      f("conv1_w", conv1_w); f("conv1_b", conv1_b);
      f("conv2_w", conv2_w); f("conv2_b", conv2_b);
      f("conv3_w", conv3_w); f("conv3_b", conv3_b);
    }
    f("proj_w", proj_w); f("proj_b", proj_b);
    f("cls", cls); f("pos", pos);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string p = "layer" + std::to_string(i) + "_";
      f(p + "wq", layers[i].wq); f(p + "bq", layers[i].bq);
      f(p + "wk", layers[i].wk); f(p + "bk", layers[i].bk);
      f(p + "wv", layers[i].wv); f(p + "bv", layers[i].bv);
      f(p + "wo", layers[i].wo); f(p + "bo", layers[i].bo);
    }
    f("hash1_w", hash1_w); f("hash1_b", hash1_b);
    f("hash2_w", hash2_w); f("hash2_b", hash2_b);
    f("order_w", order_w); f("order_b", order_b);
  }

  template <class F>
  void for_each_param(F&& f) const {
    const_cast<ModelState*>(this)->for_each_param(
        [&f](const std::string& name, Mat<S>& p) { f(name, static_cast<const Mat<S>&>(p)); });
  }

  bool all_finite() const {
    bool ok = true;
    for_each_param([&ok](const std::string&, const Mat<S>& p) { ok = ok && p.allFinite(); });
    return ok;
  }

  template <class S2>
  ModelState<S2> cast() const {
    ModelState<S2> out;
    out.cfg = cfg;
    out.layers.resize(layers.size());
    auto src = collect();
    std::size_t i = 0;
    out.for_each_param([&](const std::string&, Mat<S2>& p) {
      p = src[i++]->template cast<S2>();
    });
    return out;
  }

  std::vector<const Mat<S>*> collect() const {
    std::vector<const Mat<S>*> v;
    for_each_param([&v](const std::string&, const Mat<S>& p) { v.push_back(&p); });
    return v;
  }
};

// Tape leaves for every parameter of one forward/backward pass.
template <class S>
struct BoundModel {
  const EncoderConfig* cfg = nullptr;
  std::vector<std::pair<std::string, Var<S>>> params;  // for_each_param order
  std::vector<Var<S>> by_index;

  Var<S> operator[](const std::string& name) const {
    for (const auto& [n, v] : params)
      if (n == name) return v;
    throw ArgumentError("unknown parameter: " + name);
  }
};

template <class S>
BoundModel<S> bind_model(Tape<S>& tape, ModelState<S>& m, bool needs_grad = true) {
  BoundModel<S> b;
  b.cfg = &m.cfg;
  m.for_each_param([&](const std::string& name, Mat<S>& p) {
    Var<S> v = tape.leaf(p, needs_grad);
    b.params.emplace_back(name, v);
    b.by_index.push_back(v);
  });
  return b;
}

// Frame-level encoding: identity in feature mode, the toy CNN (three
// conv->relu->maxpool blocks then global average pooling) in raw mode.
template <class S>
Var<S> frame_encode(Tape<S>& tape, const BoundModel<S>& m, Var<S> x) {
  const EncoderConfig& cfg = *m.cfg;
  if (!cfg.raw_frames) {
    if (x.cols() != cfg.frame_dim) throw ArgumentError("frame_encode: feature width mismatch");
    return x;
  }
  PlaneShape s0{cfg.in_channels, cfg.in_height, cfg.in_width};
  if (x.cols() != s0.elems()) throw ArgumentError("frame_encode: frame size mismatch");
  Var<S> h1 = maxpool2x2(relu(conv3x3_same(x, m["conv1_w"], m["conv1_b"], s0)),
                         PlaneShape{cfg.cnn_c1(), s0.h, s0.w});
  PlaneShape s1{cfg.cnn_c1(), s0.h / 2, s0.w / 2};
  Var<S> h2 = maxpool2x2(relu(conv3x3_same(h1, m["conv2_w"], m["conv2_b"], s1)),
                         PlaneShape{cfg.cnn_c2(), s1.h, s1.w});
  PlaneShape s2{cfg.cnn_c2(), s1.h / 2, s1.w / 2};
  Var<S> h3 = maxpool2x2(relu(conv3x3_same(h2, m["conv3_w"], m["conv3_b"], s2)),
                         PlaneShape{cfg.frame_dim, s2.h, s2.w});
  PlaneShape s3{cfg.frame_dim, s2.h / 2, s2.w / 2};
  return global_avg_pool(h3, s3);
}

// One residual single- or multi-head attention block: y = x + Wo(attn(x)).
template <class S>
Var<S> attention_block(Var<S> u, Var<S> wq, Var<S> bq, Var<S> wk, Var<S> bk, Var<S> wv,
                       Var<S> bv, Var<S> wo, Var<S> bo, int num_heads) {
  const int d = static_cast<int>(u.cols());
  const int dh = d / num_heads;
  Var<S> q = add_rowvec(matmul_nt(u, wq), bq);
  Var<S> k = add_rowvec(matmul_nt(u, wk), bk);
  Var<S> v = add_rowvec(matmul_nt(u, wv), bv);
  std::vector<Var<S>> heads;
  heads.reserve(num_heads);
  for (int h = 0; h < num_heads; ++h) {
    Var<S> qh = num_heads == 1 ? q : slice_cols(q, h * dh, dh);
    Var<S> kh = num_heads == 1 ? k : slice_cols(k, h * dh, dh);
    Var<S> vh = num_heads == 1 ? v : slice_cols(v, h * dh, dh);
    Var<S> scores = scale(matmul_nt(qh, kh), static_cast<S>(1.0 / std::sqrt(double(dh))));
    heads.push_back(matmul(softmax_rows(scores), vh));
  }
  Var<S> ctx = num_heads == 1 ? heads[0] : concat_cols(heads);
  return add(u, add_rowvec(matmul_nt(ctx, wo), bo));
}

// Temporal encoding of a batch of clips. `feats` holds (n_clips * T) rows of
// D-dim frame features, clip-major. Returns the CLS representations
// (n_clips x d) and the frame representations ((n_clips * T) x d).
template <class S>
std::pair<Var<S>, Var<S>> temporal_encode_batch(Tape<S>& tape, const BoundModel<S>& m,
                                                Var<S> feats, int n_clips) {
  const EncoderConfig& cfg = *m.cfg;
  const int T = cfg.clip_length;
  if (feats.rows() != static_cast<Eigen::Index>(n_clips) * T)
    throw ArgumentError("temporal_encode: row count is not n_clips * clip_length");
  if (!feats.value().allFinite()) throw NumericError("temporal_encode: non-finite features");

  Var<S> x = add_rowvec(matmul_nt(feats, m["proj_w"]), m["proj_b"]);
  Var<S> cls = m["cls"];
  Var<S> pos = m["pos"];
  std::vector<Var<S>> zs, fs;
  zs.reserve(n_clips);
  fs.reserve(n_clips);
  for (int c = 0; c < n_clips; ++c) {
    Var<S> u = add(concat_rows<S>({cls, slice_rows(x, static_cast<Eigen::Index>(c) * T, T)}), pos);
    for (int l = 0; l < cfg.num_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + "_";
      u = attention_block(u, m[p + "wq"], m[p + "bq"], m[p + "wk"], m[p + "bk"], m[p + "wv"],
                          m[p + "bv"], m[p + "wo"], m[p + "bo"], cfg.num_heads);
    }
    zs.push_back(slice_rows(u, 0, 1));
    fs.push_back(slice_rows(u, 1, T));
  }
  Var<S> z = n_clips == 1 ? zs[0] : concat_rows(zs);
  Var<S> f = n_clips == 1 ? fs[0] : concat_rows(fs);
  if (!z.value().allFinite() || !f.value().allFinite())
    throw NumericError("temporal_encode: non-finite activations");
  return {z, f};
}

// Two affine layers d -> d -> K with ReLU in between and tanh on top, so the
// real-valued code lands strictly inside (-1, 1)^K.
template <class S>
Var<S> hash_project(Tape<S>& tape, const BoundModel<S>& m, Var<S> z) {
  Var<S> h1 = relu(add_rowvec(matmul_nt(z, m["hash1_w"]), m["hash1_b"]));
  return vtanh(add_rowvec(matmul_nt(h1, m["hash2_w"]), m["hash2_b"]));
}

template <class S>
Var<S> binarize_ste(Tape<S>& tape, Var<S> h) {
  return ste_sign(h);
}

template <class S>
Var<S> order_logits(Tape<S>& tape, const BoundModel<S>& m, Var<S> f) {
  return add_rowvec(matmul_nt(f, m["order_w"]), m["order_b"]);
}

}  // namespace chain
