#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "chain/errors.hpp"

// Reverse-mode autodiff over dense row-major matrices. A Tape owns the nodes
// of one forward pass; ops append nodes and attach a backward closure that
// scatters the node's gradient to its parents. Creation order is a
// topological order, so backward() is a single reverse sweep. Templated on
// the scalar so the training path runs in float while finite-difference
// tests instantiate the exact same graph in double.

namespace chain {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
class Tape;

template <class S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  const Mat<S>& value() const { return tape->value(id); }
  const Mat<S>& grad() const { return tape->grad(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  S scalar() const { return value()(0, 0); }
};

template <class S>
class Tape {
 public:
  using M = Mat<S>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<S> leaf(M v, bool needs_grad = false) { return push(std::move(v), needs_grad); }
  Var<S> constant(M v) { return push(std::move(v), false); }

  Var<S> push(M v, bool needs_grad) {
    nodes_.push_back(Node{std::move(v), M(), nullptr, needs_grad});
    return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  void set_back(int id, std::function<void()> f) { nodes_[id].back = std::move(f); }

  const M& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  const M& grad(int id) const {
    const Node& n = nodes_[id];
    if (n.grad.size() == 0) {
      static const M empty;
      if (n.value.size() == 0) return empty;
      zero_.setZero(n.value.rows(), n.value.cols());
      return zero_;
    }
    return n.grad;
  }

  void accumulate(int id, const M& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  // Accumulate into a sub-block of the parent's gradient.
  template <class Expr>
  void accumulate_block(int id, Eigen::Index r0, Eigen::Index c0, Eigen::Index nr,
                        Eigen::Index nc, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = M::Zero(n.value.rows(), n.value.cols());
    n.grad.block(r0, c0, nr, nc) += g;
  }

  void backward(Var<S> root) {
    if (root.value().size() != 1) throw ArgumentError("backward: root must be a scalar node");
    nodes_[root.id].grad = M::Constant(1, 1, S(1));
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.back && n.needs_grad && n.grad.size() != 0) n.back();
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    M value;
    M grad;
    std::function<void()> back;
    bool needs_grad;
  };
  std::vector<Node> nodes_;
  mutable M zero_;
};

namespace ad_detail {

template <class S>
bool needs(Var<S> a) {
  return a.tape->needs_grad(a.id);
}

template <class S>
bool needs(Var<S> a, Var<S> b) {
  return needs(a) || needs(b);
}

}  // namespace ad_detail

// ---------------------------------------------------------------------------
// Elementwise / broadcast ops

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
  Tape<S>* t = a.tape;
  Var<S> out = t->push(a.value() + b.value(), ad_detail::needs(a, b));
  if (ad_detail::needs(a, b)) {
    int ia = a.id, ib = b.id, io = out.id;
    t->set_back(io, [t, ia, ib, io] {
      t->accumulate(ia, t->grad(io));
      t->accumulate(ib, t->grad(io));
    });
  }
  return out;
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
  Tape<S>* t = a.tape;
  Var<S> out = t->push(a.value() - b.value(), ad_detail::needs(a, b));
  if (ad_detail::needs(a, b)) {
    int ia = a.id, ib = b.id, io = out.id;
    t->set_back(io, [t, ia, ib, io] {
      t->accumulate(ia, t->grad(io));
      t->accumulate(ib, Mat<S>(-t->grad(io)));
    });
  }
  return out;
}

// a (n x m) + row vector r (1 x m), broadcast over rows.
template <class S>
Var<S> add_rowvec(Var<S> a, Var<S> r) {
  Tape<S>* t = a.tape;
  Mat<S> v = a.value();
  v.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(r.value().row(0));
  Var<S> out = t->push(std::move(v), ad_detail::needs(a, r));
  if (ad_detail::needs(a, r)) {
    int ia = a.id, ir = r.id, io = out.id;
    t->set_back(io, [t, ia, ir, io] {
      const auto& g = t->grad(io);
      t->accumulate(ia, g);
      t->accumulate(ir, Mat<S>(g.colwise().sum()));
    });
  }
  return out;
}

template <class S>
Var<S> scale(Var<S> a, S c) {
  Tape<S>* t = a.tape;
  Var<S> out = t->push(Mat<S>(a.value() * c), ad_detail::needs(a));
  if (ad_detail::needs(a)) {
    int ia = a.id, io = out.id;
    t->set_back(io, [t, ia, io, c] { t->accumulate(ia, Mat<S>(t->grad(io) * c)); });
  }
  return out;
}

// Elementwise product with a fixed matrix; used by tests to build scalar
// probes with distinct per-entry weights.
template <class S>
Var<S> mul_const(Var<S> a, const Mat<S>& c) {
  Tape<S>* t = a.tape;
  Var<S> out = t->push(Mat<S>(a.value().cwiseProduct(c)), ad_detail::needs(a));
  if (ad_detail::needs(a)) {
    int ia = a.id, io = out.id;
    auto cc = std::make_shared<Mat<S>>(c);
    t->set_back(io, [t, ia, io, cc] { t->accumulate(ia, Mat<S>(t->grad(io).cwiseProduct(*cc))); });
  }
  return out;
}

// a + fixed matrix (no gradient into the constant); used for logit masks.
template <class S>
Var<S> add_const(Var<S> a, const Mat<S>& c) {
  Tape<S>* t = a.tape;
  Var<S> out = t->push(Mat<S>(a.value() + c), ad_detail::needs(a));
  if (ad_detail::needs(a)) {
    int ia = a.id, io = out.id;
    t->set_back(io, [t, ia, io] { t->accumulate(ia, t->grad(io)); });
  }
  return out;
}

template <class S>
Var<S> relu(Var<S> a) {
  Tape<S>* t = a.tape;
  Var<S> out = t->push(Mat<S>(a.value().cwiseMax(S(0))), ad_detail::needs(a));
  if (ad_detail::needs(a)) {
    int ia = a.id, io = out.id;
    t->set_back(io, [t, ia, io] {
      Mat<S> g = t->grad(io).cwiseProduct(
          (t->value(io).array() > S(0)).template cast<S>().matrix());
      t->accumulate(ia, g);
    });
  }
  return out;
}

template <class S>
Var<S> vtanh(Var<S> a) {
  Tape<S>* t = a.tape;
  Var<S> out = t->push(Mat<S>(a.value().array().tanh().matrix()), ad_detail::needs(a));
  if (ad_detail::needs(a)) {
    int ia = a.id, io = out.id;
    t->set_back(io, [t, ia, io] {
      const auto& y = t->value(io);
      Mat<S> g = t->grad(io).cwiseProduct((S(1) - y.array().square()).matrix());
      t->accumulate(ia, g);
    });
  }
  return out;
}

// Forward: sign with sign(0) = +1. Backward: straight-through identity.
template <class S>
Var<S> ste_sign(Var<S> a) {
  Tape<S>* t = a.tape;
  Mat<S> v = (a.value().array() >= S(0)).select(Mat<S>::Constant(a.rows(), a.cols(), S(1)),
                                                Mat<S>::Constant(a.rows(), a.cols(), S(-1)));
  Var<S> out = t->push(std::move(v), ad_detail::needs(a));
  if (ad_detail::needs(a)) {
    int ia = a.id, io = out.id;
    t->set_back(io, [t, ia, io] { t->accumulate(ia, t->grad(io)); });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix products

template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
  Tape<S>* t = a.tape;
  Var<S> out = t->push(Mat<S>(a.value() * b.value()), ad_detail::needs(a, b));
  if (ad_detail::needs(a, b)) {
    int ia = a.id, ib = b.id, io = out.id;
    t->set_back(io, [t, ia, ib, io] {
      const auto& g = t->grad(io);
      t->accumulate(ia, Mat<S>(g * t->value(ib).transpose()));
      t->accumulate(ib, Mat<S>(t->value(ia).transpose() * g));
    });
  }
  return out;
}

// a * b^T; the natural layout for x * W^T with weights stored (out x in).
template <class S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  Tape<S>* t = a.tape;
  Var<S> out = t->push(Mat<S>(a.value() * b.value().transpose()), ad_detail::needs(a, b));
  if (ad_detail::needs(a, b)) {
    int ia = a.id, ib = b.id, io = out.id;
    t->set_back(io, [t, ia, ib, io] {
      const auto& g = t->grad(io);
      t->accumulate(ia, Mat<S>(g * t->value(ib)));
      t->accumulate(ib, Mat<S>(g.transpose() * t->value(ia)));
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Row-wise reductions and normalizations

template <class S>
Var<S> softmax_rows(Var<S> a) {
  Tape<S>* t = a.tape;
  const Mat<S>& x = a.value();
  Mat<S> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const S m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp();
    y.row(i) /= y.row(i).sum();
  }
  Var<S> out = t->push(std::move(y), ad_detail::needs(a));
  if (ad_detail::needs(a)) {
    int ia = a.id, io = out.id;
    t->set_back(io, [t, ia, io] {
      const auto& yv = t->value(io);
      const auto& g = t->grad(io);
      Mat<S> gx(yv.rows(), yv.cols());
      for (Eigen::Index i = 0; i < yv.rows(); ++i) {
        const S dot = g.row(i).dot(yv.row(i));
        gx.row(i) = (yv.row(i).array() * (g.row(i).array() - dot)).matrix();
      }
      t->accumulate(ia, gx);
    });
  }
  return out;
}

// Numerically stable per-row log-sum-exp; output is n x 1.
template <class S>
Var<S> logsumexp_rows(Var<S> a) {
  Tape<S>* t = a.tape;
  const Mat<S>& x = a.value();
  Mat<S> y(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const S m = x.row(i).maxCoeff();
    y(i, 0) = m + std::log((x.row(i).array() - m).exp().sum());
  }
  Var<S> out = t->push(std::move(y), ad_detail::needs(a));
  if (ad_detail::needs(a)) {
    int ia = a.id, io = out.id;
    t->set_back(io, [t, ia, io] {
      const auto& x2 = t->value(ia);
      const auto& y2 = t->value(io);
      const auto& g = t->grad(io);
      Mat<S> gx(x2.rows(), x2.cols());
      for (Eigen::Index i = 0; i < x2.rows(); ++i)
        gx.row(i) = g(i, 0) * (x2.row(i).array() - y2(i, 0)).exp().matrix();
      t->accumulate(ia, gx);
    });
  }
  return out;
}

// y(i, 0) = a(i, idx[i])
template <class S>
Var<S> gather_cols(Var<S> a, std::vector<int> idx) {
  Tape<S>* t = a.tape;
  const Mat<S>& x = a.value();
  if (static_cast<Eigen::Index>(idx.size()) != x.rows())
    throw ArgumentError("gather_cols: index size mismatch");
  Mat<S> y(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) y(i, 0) = x(i, idx[i]);
  Var<S> out = t->push(std::move(y), ad_detail::needs(a));
  if (ad_detail::needs(a)) {
    int ia = a.id, io = out.id;
    auto ix = std::make_shared<std::vector<int>>(std::move(idx));
    t->set_back(io, [t, ia, io, ix] {
      const auto& g = t->grad(io);
      Mat<S> gx = Mat<S>::Zero(t->value(ia).rows(), t->value(ia).cols());
      for (Eigen::Index i = 0; i < gx.rows(); ++i) gx(i, (*ix)[i]) += g(i, 0);
      t->accumulate(ia, gx);
    });
  }
  return out;
}

// Rows rescaled to unit L2 norm. Rejects (near-)zero rows: cosine similarity
// is undefined there.
template <class S>
Var<S> normalize_rows(Var<S> a) {
  Tape<S>* t = a.tape;
  const Mat<S>& x = a.value();
  auto norms = std::make_shared<std::vector<S>>(x.rows());
  Mat<S> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const S n = x.row(i).norm();
    if (!(n > S(1e-12))) throw NumericError("normalize_rows: zero-norm row");
    (*norms)[i] = n;
    y.row(i) = x.row(i) / n;
  }
  Var<S> out = t->push(std::move(y), ad_detail::needs(a));
  if (ad_detail::needs(a)) {
    int ia = a.id, io = out.id;
    t->set_back(io, [t, ia, io, norms] {
      const auto& yv = t->value(io);
      const auto& g = t->grad(io);
      Mat<S> gx(yv.rows(), yv.cols());
      for (Eigen::Index i = 0; i < yv.rows(); ++i) {
        const S dot = g.row(i).dot(yv.row(i));
        gx.row(i) = (g.row(i) - dot * yv.row(i)) / (*norms)[i];
      }
      t->accumulate(ia, gx);
    });
  }
  return out;
}

template <class S>
Var<S> mean_all(Var<S> a) {
  Tape<S>* t = a.tape;
  Var<S> out = t->push(Mat<S>::Constant(1, 1, a.value().mean()), ad_detail::needs(a));
  if (ad_detail::needs(a)) {
    int ia = a.id, io = out.id;
    t->set_back(io, [t, ia, io] {
      const auto& v = t->value(ia);
      const S g = t->grad(io)(0, 0) / static_cast<S>(v.size());
      t->accumulate(ia, Mat<S>::Constant(v.rows(), v.cols(), g));
    });
  }
  return out;
}

template <class S>
Var<S> sum_all(Var<S> a) {
  Tape<S>* t = a.tape;
  Var<S> out = t->push(Mat<S>::Constant(1, 1, a.value().sum()), ad_detail::needs(a));
  if (ad_detail::needs(a)) {
    int ia = a.id, io = out.id;
    t->set_back(io, [t, ia, io] {
      const auto& v = t->value(ia);
      t->accumulate(ia, Mat<S>::Constant(v.rows(), v.cols(), t->grad(io)(0, 0)));
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Structural ops

template <class S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ArgumentError("concat_rows: empty list");
  Tape<S>* t = parts[0].tape;
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].cols();
  bool ng = false;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ArgumentError("concat_rows: column mismatch");
    rows += p.rows();
    ng = ng || ad_detail::needs(p);
  }
  Mat<S> v(rows, cols);
  Eigen::Index r = 0;
  std::vector<std::pair<int, Eigen::Index>> spans;
  for (const auto& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    spans.emplace_back(p.id, p.rows());
    r += p.rows();
  }
  Var<S> out = t->push(std::move(v), ng);
  if (ng) {
    int io = out.id;
    auto sp = std::make_shared<std::vector<std::pair<int, Eigen::Index>>>(std::move(spans));
    t->set_back(io, [t, io, sp] {
      const auto& g = t->grad(io);
      Eigen::Index r2 = 0;
      for (const auto& [pid, nr] : *sp) {
        t->accumulate(pid, Mat<S>(g.middleRows(r2, nr)));
        r2 += nr;
      }
    });
  }
  return out;
}

template <class S>
Var<S> slice_rows(Var<S> a, Eigen::Index r0, Eigen::Index n) {
  Tape<S>* t = a.tape;
  Var<S> out = t->push(Mat<S>(a.value().middleRows(r0, n)), ad_detail::needs(a));
  if (ad_detail::needs(a)) {
    int ia = a.id, io = out.id;
    t->set_back(io, [t, ia, io, r0, n] {
      t->accumulate_block(ia, r0, 0, n, t->value(ia).cols(), t->grad(io));
    });
  }
  return out;
}

template <class S>
Var<S> slice_cols(Var<S> a, Eigen::Index c0, Eigen::Index n) {
  Tape<S>* t = a.tape;
  Var<S> out = t->push(Mat<S>(a.value().middleCols(c0, n)), ad_detail::needs(a));
  if (ad_detail::needs(a)) {
    int ia = a.id, io = out.id;
    t->set_back(io, [t, ia, io, c0, n] {
      t->accumulate_block(ia, 0, c0, t->value(ia).rows(), n, t->grad(io));
    });
  }
  return out;
}

template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: empty list");
  Tape<S>* t = parts[0].tape;
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool ng = false;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ArgumentError("concat_cols: row mismatch");
    cols += p.cols();
    ng = ng || ad_detail::needs(p);
  }
  Mat<S> v(rows, cols);
  Eigen::Index c = 0;
  std::vector<std::pair<int, Eigen::Index>> spans;
  for (const auto& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    spans.emplace_back(p.id, p.cols());
    c += p.cols();
  }
  Var<S> out = t->push(std::move(v), ng);
  if (ng) {
    int io = out.id;
    auto sp = std::make_shared<std::vector<std::pair<int, Eigen::Index>>>(std::move(spans));
    t->set_back(io, [t, io, sp] {
      const auto& g = t->grad(io);
      Eigen::Index c2 = 0;
      for (const auto& [pid, nc] : *sp) {
        t->accumulate(pid, Mat<S>(g.middleCols(c2, nc)));
        c2 += nc;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Image ops for the toy CNN. Samples are matrix rows laid out channel-major:
// row = [c0 plane row-major, c1 plane, ...].

struct PlaneShape {
  int c = 0;
  int h = 0;
  int w = 0;
  int pixels() const { return h * w; }
  int elems() const { return c * h * w; }
};

// 3x3 convolution, stride 1, zero padding 1 (same spatial size).
// w: (c_out) x (c_in * 9), bias: 1 x c_out.
template <class S>
Var<S> conv3x3_same(Var<S> x, Var<S> w, Var<S> b, PlaneShape in) {
  Tape<S>* t = x.tape;
  const Mat<S>& xv = x.value();
  const int n = static_cast<int>(xv.rows());
  const int cout = static_cast<int>(w.rows());
  if (xv.cols() != in.elems()) throw ArgumentError("conv3x3_same: input shape mismatch");
  if (w.cols() != in.c * 9) throw ArgumentError("conv3x3_same: weight shape mismatch");

  const int P = in.pixels();
  auto col = std::make_shared<Mat<S>>(static_cast<Eigen::Index>(n) * P, in.c * 9);
  col->setZero();
  for (int s = 0; s < n; ++s) {
    for (int y = 0; y < in.h; ++y) {
      for (int xx = 0; xx < in.w; ++xx) {
        const Eigen::Index row = static_cast<Eigen::Index>(s) * P + y * in.w + xx;
        for (int ci = 0; ci < in.c; ++ci) {
          const S* plane = xv.row(s).data() + ci * P;
          for (int ky = 0; ky < 3; ++ky) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= in.h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int sx = xx + kx - 1;
              if (sx < 0 || sx >= in.w) continue;
              (*col)(row, ci * 9 + ky * 3 + kx) = plane[sy * in.w + sx];
            }
          }
        }
      }
    }
  }

  Mat<S> prod = (*col) * w.value().transpose();  // (n*P) x cout
  prod.rowwise() += Eigen::Matrix<S, 1, Eigen::Dynamic>(b.value().row(0));
  Mat<S> out(n, static_cast<Eigen::Index>(cout) * P);
  for (int s = 0; s < n; ++s)
    for (int co = 0; co < cout; ++co)
      for (int p = 0; p < P; ++p)
        out(s, static_cast<Eigen::Index>(co) * P + p) = prod(static_cast<Eigen::Index>(s) * P + p, co);

  const bool ng = ad_detail::needs(x, w) || ad_detail::needs(b);
  Var<S> o = t->push(std::move(out), ng);
  if (ng) {
    int ix = x.id, iw = w.id, ib = b.id, io = o.id;
    t->set_back(io, [t, ix, iw, ib, io, col, in, n, cout, P] {
      const auto& g = t->grad(io);
      Mat<S> gprod(static_cast<Eigen::Index>(n) * P, cout);
      for (int s = 0; s < n; ++s)
        for (int co = 0; co < cout; ++co)
          for (int p = 0; p < P; ++p)
            gprod(static_cast<Eigen::Index>(s) * P + p, co) =
                g(s, static_cast<Eigen::Index>(co) * P + p);
      t->accumulate(iw, Mat<S>(gprod.transpose() * (*col)));
      t->accumulate(ib, Mat<S>(gprod.colwise().sum()));
      if (t->needs_grad(ix)) {
        Mat<S> gcol = gprod * t->value(iw);  // (n*P) x (c_in*9)
        Mat<S> gx = Mat<S>::Zero(n, in.elems());
        for (int s = 0; s < n; ++s) {
          for (int y = 0; y < in.h; ++y) {
            for (int xx = 0; xx < in.w; ++xx) {
              const Eigen::Index row = static_cast<Eigen::Index>(s) * P + y * in.w + xx;
              for (int ci = 0; ci < in.c; ++ci) {
                S* plane = gx.row(s).data() + ci * P;
                for (int ky = 0; ky < 3; ++ky) {
                  const int sy = y + ky - 1;
                  if (sy < 0 || sy >= in.h) continue;
                  for (int kx = 0; kx < 3; ++kx) {
                    const int sx = xx + kx - 1;
                    if (sx < 0 || sx >= in.w) continue;
                    plane[sy * in.w + sx] += gcol(row, ci * 9 + ky * 3 + kx);
                  }
                }
              }
            }
          }
        }
        t->accumulate(ix, gx);
      }
    });
  }
  return o;
}

// 2x2 max pooling, stride 2. Requires even spatial dims.
template <class S>
Var<S> maxpool2x2(Var<S> x, PlaneShape in) {
  Tape<S>* t = x.tape;
  if (in.h % 2 != 0 || in.w % 2 != 0) throw ArgumentError("maxpool2x2: odd spatial size");
  const Mat<S>& xv = x.value();
  const int n = static_cast<int>(xv.rows());
  const int oh = in.h / 2, ow = in.w / 2;
  const int P = in.pixels(), OP = oh * ow;
  Mat<S> out(n, static_cast<Eigen::Index>(in.c) * OP);
  auto arg = std::make_shared<std::vector<int>>(static_cast<std::size_t>(n) * in.c * OP);
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < in.c; ++c) {
      const S* plane = xv.row(s).data() + static_cast<Eigen::Index>(c) * P;
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          int best = (2 * y) * in.w + 2 * xx;
          S bv = plane[best];
          const int cand[3] = {(2 * y) * in.w + 2 * xx + 1, (2 * y + 1) * in.w + 2 * xx,
                               (2 * y + 1) * in.w + 2 * xx + 1};
          for (int k = 0; k < 3; ++k)
            if (plane[cand[k]] > bv) {
              bv = plane[cand[k]];
              best = cand[k];
            }
          out(s, static_cast<Eigen::Index>(c) * OP + y * ow + xx) = bv;
          (*arg)[(static_cast<std::size_t>(s) * in.c + c) * OP + y * ow + xx] = best;
        }
      }
    }
  }
  Var<S> o = t->push(std::move(out), ad_detail::needs(x));
  if (ad_detail::needs(x)) {
    int ix = x.id, io = o.id;
    t->set_back(io, [t, ix, io, arg, in, n, OP, P] {
      const auto& g = t->grad(io);
      Mat<S> gx = Mat<S>::Zero(n, in.elems());
      for (int s = 0; s < n; ++s)
        for (int c = 0; c < in.c; ++c)
          for (int p = 0; p < OP; ++p)
            gx(s, static_cast<Eigen::Index>(c) * P +
                      (*arg)[(static_cast<std::size_t>(s) * in.c + c) * OP + p]) +=
                g(s, static_cast<Eigen::Index>(c) * OP + p);
      t->accumulate(ix, gx);
    });
  }
  return o;
}

// Global average pooling: (n x c*h*w) -> (n x c).
template <class S>
Var<S> global_avg_pool(Var<S> x, PlaneShape in) {
  Tape<S>* t = x.tape;
  const Mat<S>& xv = x.value();
  const int n = static_cast<int>(xv.rows());
  const int P = in.pixels();
  Mat<S> out(n, in.c);
  for (int s = 0; s < n; ++s)
    for (int c = 0; c < in.c; ++c)
      out(s, c) = xv.row(s).segment(static_cast<Eigen::Index>(c) * P, P).mean();
  Var<S> o = t->push(std::move(out), ad_detail::needs(x));
  if (ad_detail::needs(x)) {
    int ix = x.id, io = o.id;
    t->set_back(io, [t, ix, io, in, n, P] {
      const auto& g = t->grad(io);
      Mat<S> gx(n, in.elems());
      for (int s = 0; s < n; ++s)
        for (int c = 0; c < in.c; ++c)
          gx.row(s).segment(static_cast<Eigen::Index>(c) * P, P).setConstant(g(s, c) / S(P));
      t->accumulate(ix, gx);
    });
  }
  return o;
}

// Mean cross-entropy between rows of `logits` and integer labels; the standard
// composition used by the order and scene tasks.
template <class S>
Var<S> cross_entropy_mean(Var<S> logits, const std::vector<int>& labels) {
  Var<S> lse = logsumexp_rows(logits);
  Var<S> pos = gather_cols(logits, labels);
  return mean_all(sub(lse, pos));
}

template <class S>
Var<S> cross_entropy_sum(Var<S> logits, const std::vector<int>& labels) {
  Var<S> lse = logsumexp_rows(logits);
  Var<S> pos = gather_cols(logits, labels);
  return sum_all(sub(lse, pos));
}

}  // namespace chain
