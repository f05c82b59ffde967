#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "chain/ad.hpp"
#include "helpers.hpp"

using namespace chain;
using chain::testing::random_mat;

namespace {

// FD check of a scalar graph over explicit leaf inputs.
double op_check(const std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>& graph,
                std::vector<Mat<double>> inputs, double eps = 1e-6) {
  Tape<double> tape;
  std::vector<Var<double>> leaves;
  for (const auto& m : inputs) leaves.push_back(tape.leaf(m, true));
  Var<double> loss = graph(tape, leaves);
  tape.backward(loss);
  std::vector<Mat<double>> analytic;
  for (auto& l : leaves)
    analytic.push_back(l.grad().size() ? l.grad() : Mat<double>::Zero(l.rows(), l.cols()));

  double max_err = 0.0;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    for (Eigen::Index i = 0; i < inputs[p].rows(); ++i) {
      for (Eigen::Index j = 0; j < inputs[p].cols(); ++j) {
        auto eval = [&](double delta) {
          std::vector<Mat<double>> shifted = inputs;
          shifted[p](i, j) += delta;
          Tape<double> t2;
          std::vector<Var<double>> l2;
          for (const auto& m : shifted) l2.push_back(t2.leaf(m, false));
          return graph(t2, l2).scalar();
        };
        const double num = (eval(eps) - eval(-eps)) / (2 * eps);
        const double ana = analytic[p](i, j);
        max_err = std::max(max_err,
                           std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-2}));
      }
    }
  }
  return max_err;
}

Mat<double> probe(int r, int c, std::uint64_t seed) {
  Rng rng(seed);
  return random_mat(r, c, rng);
}

}  // namespace

TEST_CASE("linear ops match finite differences") {
  Rng rng(11);
  auto a = random_mat(3, 4, rng);
  auto b = random_mat(4, 5, rng);
  auto w = random_mat(5, 4, rng);
  auto bias = random_mat(1, 5, rng);

  CHECK(op_check(
            [&](Tape<double>& t, std::vector<Var<double>>& v) {
              return sum_all(mul_const(matmul(v[0], v[1]), probe(3, 5, 1)));
            },
            {a, b}) < 1e-6);
  CHECK(op_check(
            [&](Tape<double>& t, std::vector<Var<double>>& v) {
              return sum_all(mul_const(add_rowvec(matmul_nt(v[0], v[1]), v[2]), probe(3, 5, 2)));
            },
            {a, w, bias}) < 1e-6);
  CHECK(op_check(
            [&](Tape<double>& t, std::vector<Var<double>>& v) {
              return mean_all(sub(scale(v[0], 1.7), add(v[0], v[1])));
            },
            {a, a}) < 1e-6);
}

TEST_CASE("nonlinearities match finite differences") {
  Rng rng(12);
  auto x = random_mat(4, 6, rng);
  CHECK(op_check(
            [&](Tape<double>& t, std::vector<Var<double>>& v) {
              return sum_all(mul_const(vtanh(v[0]), probe(4, 6, 3)));
            },
            {x}) < 1e-6);
  CHECK(op_check(
            [&](Tape<double>& t, std::vector<Var<double>>& v) {
              return sum_all(mul_const(relu(v[0]), probe(4, 6, 4)));
            },
            {x}) < 1e-6);
  CHECK(op_check(
            [&](Tape<double>& t, std::vector<Var<double>>& v) {
              return sum_all(mul_const(softmax_rows(v[0]), probe(4, 6, 5)));
            },
            {x}) < 1e-6);
  CHECK(op_check(
            [&](Tape<double>& t, std::vector<Var<double>>& v) {
              return sum_all(mul_const(logsumexp_rows(v[0]), probe(4, 1, 6)));
            },
            {x}) < 1e-6);
  CHECK(op_check(
            [&](Tape<double>& t, std::vector<Var<double>>& v) {
              return sum_all(mul_const(normalize_rows(v[0]), probe(4, 6, 7)));
            },
            {x}) < 1e-6);
}

TEST_CASE("structural ops match finite differences") {
  Rng rng(13);
  auto x = random_mat(5, 4, rng);
  auto y = random_mat(2, 4, rng);
  CHECK(op_check(
            [&](Tape<double>& t, std::vector<Var<double>>& v) {
              Var<double> cat = concat_rows<double>({v[0], v[1]});
              Var<double> s = slice_rows(cat, 1, 4);
              return sum_all(mul_const(s, probe(4, 4, 8)));
            },
            {x, y}) < 1e-6);
  CHECK(op_check(
            [&](Tape<double>& t, std::vector<Var<double>>& v) {
              Var<double> c1 = slice_cols(v[0], 0, 2);
              Var<double> c2 = slice_cols(v[0], 2, 2);
              return sum_all(mul_const(concat_cols<double>({c2, c1}), probe(5, 4, 9)));
            },
            {x}) < 1e-6);
  CHECK(op_check(
            [&](Tape<double>& t, std::vector<Var<double>>& v) {
              return cross_entropy_mean(v[0], {0, 3, 1, 2, 0});
            },
            {x}) < 1e-6);
}

TEST_CASE("image ops match finite differences") {
  Rng rng(14);
  PlaneShape in{2, 4, 4};
  auto x = random_mat(3, in.elems(), rng);
  auto w = random_mat(3, in.c * 9, rng);
  auto b = random_mat(1, 3, rng);
  CHECK(op_check(
            [&](Tape<double>& t, std::vector<Var<double>>& v) {
              return sum_all(mul_const(conv3x3_same(v[0], v[1], v[2], in), probe(3, 3 * 16, 10)));
            },
            {x, w, b}) < 1e-6);
  CHECK(op_check(
            [&](Tape<double>& t, std::vector<Var<double>>& v) {
              return sum_all(mul_const(maxpool2x2(v[0], in), probe(3, 2 * 4, 11)));
            },
            {x}) < 1e-6);
  CHECK(op_check(
            [&](Tape<double>& t, std::vector<Var<double>>& v) {
              return sum_all(mul_const(global_avg_pool(v[0], in), probe(3, 2, 12)));
            },
            {x}) < 1e-6);
}

TEST_CASE("ste_sign forwards signs and passes gradients through unchanged") {
  Tape<double> tape;
  Mat<double> h(1, 4);
  h << 0.3, -0.7, 0.0, -0.0;
  Var<double> hv = tape.leaf(h, true);
  Var<double> b = ste_sign(hv);
  CHECK(b.value()(0, 0) == 1.0);
  CHECK(b.value()(0, 1) == -1.0);
  CHECK(b.value()(0, 2) == 1.0);  // sign(0) = +1
  Var<double> loss = sum_all(mul_const(b, probe(1, 4, 15)));
  tape.backward(loss);
  // identity Jacobian: gradient w.r.t. h equals the probe weights exactly
  CHECK(hv.grad() == probe(1, 4, 15));
}

TEST_CASE("gradients accumulate across multiple uses of one node") {
  Tape<double> tape;
  Mat<double> x(1, 1);
  x << 2.0;
  Var<double> v = tape.leaf(x, true);
  Var<double> y = add(v, v);  // y = 2x
  tape.backward(sum_all(y));
  CHECK(v.grad()(0, 0) == doctest::Approx(2.0));
}
