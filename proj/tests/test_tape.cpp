#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <functional>
#include <vector>

#include "diffant/rng.hpp"
#include "diffant/tape.hpp"
#include "doctest.h"

using namespace diffant;

namespace {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// central finite differences against the tape's reverse pass, entry by entry
void check_grads(const std::vector<Eigen::MatrixXd>& inputs, const Builder& build,
                 double tol = 1e-6) {
  Tape t;
  std::vector<Var> leaves;
  for (const auto& m : inputs) leaves.push_back(t.leaf(m));
  Var root = build(t, leaves);
  REQUIRE(t.value(root).size() == 1);
  t.backward(root);
  std::vector<Eigen::MatrixXd> analytic;
  for (Var l : leaves) analytic.push_back(t.grad(l));

  const double h = 1e-5;
  auto eval = [&](std::size_t i, Eigen::Index r, Eigen::Index c, double delta) {
    std::vector<Eigen::MatrixXd> bumped = inputs;
    bumped[i](r, c) += delta;
    Tape t2;
    std::vector<Var> lv;
    for (const auto& m : bumped) lv.push_back(t2.leaf(m));
    return t2.scalar(build(t2, lv));
  };
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index r = 0; r < inputs[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < inputs[i].cols(); ++c) {
        const double fd = (eval(i, r, c, h) - eval(i, r, c, -h)) / (2.0 * h);
        const double a = analytic[i](r, c);
        const double scale = std::max({1.0, std::abs(fd), std::abs(a)});
        CHECK(std::abs(fd - a) <= tol * scale);
      }
    }
  }
}

// contract an op's matrix output against a fixed random matrix so every
// entry of the jacobian is exercised with a non-uniform upstream gradient
Builder contracted(const Eigen::MatrixXd& weights,
                   std::function<Var(Tape&, const std::vector<Var>&)> op) {
  return [weights, op](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(t.cwise_mul(op(t, v), t.constant(weights)));
  };
}

Eigen::MatrixXd rand_mat(RngStream& r, int rows, int cols) {
  return r.gaussian_matrix(rows, cols);
}

Eigen::MatrixXd away_from_zero(Eigen::MatrixXd m, double margin = 0.1) {
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (std::abs(m(i)) < margin) m(i) = m(i) < 0 ? -margin : margin;
  return m;
}

}  // namespace

TEST_CASE("elementwise and structural op gradients") {
  RngStream r(21);
  const Eigen::MatrixXd w34 = rand_mat(r, 3, 4);

  check_grads({rand_mat(r, 3, 4), rand_mat(r, 3, 4)},
              contracted(w34, [](Tape& t, const std::vector<Var>& v) {
                return t.add(v[0], v[1]);
              }));
  check_grads({rand_mat(r, 3, 4), rand_mat(r, 3, 4)},
              contracted(w34, [](Tape& t, const std::vector<Var>& v) {
                return t.sub(v[0], v[1]);
              }));
  check_grads({rand_mat(r, 3, 4)},
              contracted(w34, [](Tape& t, const std::vector<Var>& v) {
                return t.scale(v[0], -1.7);
              }));
  check_grads({rand_mat(r, 3, 4), rand_mat(r, 3, 4)},
              contracted(w34, [](Tape& t, const std::vector<Var>& v) {
                return t.cwise_mul(v[0], v[1]);
              }));
  check_grads({rand_mat(r, 3, 4), rand_mat(r, 1, 4)},
              contracted(w34, [](Tape& t, const std::vector<Var>& v) {
                return t.add_rowvec(v[0], v[1]);
              }));
  check_grads({rand_mat(r, 3, 5), rand_mat(r, 5, 4)},
              contracted(w34, [](Tape& t, const std::vector<Var>& v) {
                return t.matmul(v[0], v[1]);
              }));
  check_grads({rand_mat(r, 4, 3)},
              contracted(w34, [](Tape& t, const std::vector<Var>& v) {
                return t.transpose(v[0]);
              }));
  check_grads({rand_mat(r, 3, 2), rand_mat(r, 3, 1), rand_mat(r, 3, 1)},
              contracted(w34, [](Tape& t, const std::vector<Var>& v) {
                return t.concat_cols({v[0], v[1], v[2]});
              }));
  check_grads({rand_mat(r, 3, 7)},
              contracted(w34, [](Tape& t, const std::vector<Var>& v) {
                return t.slice_cols(v[0], 2, 4);
              }));
  check_grads({rand_mat(r, 6, 4)},
              contracted(w34, [](Tape& t, const std::vector<Var>& v) {
                return t.slice_rows(v[0], 1, 3);
              }));
  check_grads({away_from_zero(rand_mat(r, 3, 4))},
              contracted(w34, [](Tape& t, const std::vector<Var>& v) {
                return t.relu(v[0]);
              }));
  check_grads({rand_mat(r, 3, 4)},
              contracted(w34, [](Tape& t, const std::vector<Var>& v) {
                return t.exp(v[0]);
              }));
}

TEST_CASE("normalization op gradients") {
  RngStream r(22);
  const Eigen::MatrixXd w35 = rand_mat(r, 3, 5);
  check_grads({rand_mat(r, 3, 5)},
              contracted(w35, [](Tape& t, const std::vector<Var>& v) {
                return t.softmax_rows(v[0]);
              }),
              1e-5);
  check_grads({rand_mat(r, 3, 5)},
              contracted(w35, [](Tape& t, const std::vector<Var>& v) {
                return t.log_softmax_rows(v[0]);
              }),
              1e-5);
  const Eigen::MatrixXd w46 = rand_mat(r, 4, 6);
  check_grads({rand_mat(r, 4, 6), rand_mat(r, 1, 6), rand_mat(r, 1, 6)},
              contracted(w46, [](Tape& t, const std::vector<Var>& v) {
                return t.layer_norm_rows(v[0], v[1], v[2]);
              }),
              1e-5);
}

TEST_CASE("reduction gradients") {
  RngStream r(23);
  check_grads({rand_mat(r, 4, 3)}, [](Tape& t, const std::vector<Var>& v) {
    return t.sum_all(v[0]);
  });
  check_grads({rand_mat(r, 4, 3), rand_mat(r, 4, 3)},
              [](Tape& t, const std::vector<Var>& v) { return t.mse(v[0], v[1]); });

  const Eigen::MatrixXd target = rand_mat(r, 4, 1);
  Eigen::VectorXd weights(4);
  weights << 1.0, 0.0, 1.0, 2.0;
  check_grads({rand_mat(r, 4, 1)}, [&](Tape& t, const std::vector<Var>& v) {
    return t.weighted_row_mse(v[0], target, weights);
  });

  const std::vector<int> labels = {2, 0, 4, 1};
  check_grads({rand_mat(r, 4, 5)}, [&](Tape& t, const std::vector<Var>& v) {
    return t.cross_entropy_rows(v[0], labels);
  });

  Eigen::MatrixXd targets01(2, 4);
  targets01 << 1, 0, 0, 1, 0, 1, 0, 0;
  check_grads({rand_mat(r, 2, 4)}, [&](Tape& t, const std::vector<Var>& v) {
    return t.binary_ce_logits(v[0], targets01);
  });

  // deltas straddle the clamp but stay away from |delta| == tau
  Eigen::MatrixXd lp(4, 2);
  lp << 0.0, 1.0, -0.3, 0.6, 2.2, 0.2, 2.0, -1.4;
  check_grads({lp}, [](Tape& t, const std::vector<Var>& v) {
    return t.clipped_delta_sq(v[0], 1.0);
  });

  check_grads({rand_mat(r, 1, 1), rand_mat(r, 1, 1), rand_mat(r, 1, 1)},
              [](Tape& t, const std::vector<Var>& v) {
                return t.weighted_sum({v[0], v[1], v[2]}, {1.0, 0.5, -2.0});
              });
}

TEST_CASE("reused nodes accumulate gradient") {
  Tape t;
  Var x = t.leaf(Eigen::MatrixXd::Constant(2, 2, 3.0));
  t.backward(t.sum_all(t.add(x, x)));
  CHECK((t.grad(x).array() == 2.0).all());
}

TEST_CASE("forward values of the composite ops") {
  Tape t;
  RngStream r(9);
  Var x = t.leaf(r.gaussian_matrix(3, 5));

  const Eigen::MatrixXd sm = t.value(t.softmax_rows(x));
  for (Eigen::Index i = 0; i < sm.rows(); ++i)
    CHECK(sm.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((t.value(t.log_softmax_rows(x)) - sm.array().log().matrix()).cwiseAbs().maxCoeff() <
        1e-12);

  Var gain = t.leaf(Eigen::MatrixXd::Ones(1, 5));
  Var bias = t.leaf(Eigen::MatrixXd::Zero(1, 5));
  const Eigen::MatrixXd ln = t.value(t.layer_norm_rows(x, gain, bias));
  for (Eigen::Index i = 0; i < ln.rows(); ++i) {
    CHECK(ln.row(i).mean() == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(ln.row(i).array().square().mean() == doctest::Approx(1.0).epsilon(1e-3));
  }

  // closed-form loss values
  Var two = t.leaf(Eigen::MatrixXd::Zero(1, 2));
  CHECK(t.scalar(t.cross_entropy_rows(two, {0})) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Var ones = t.leaf(Eigen::MatrixXd::Ones(1, 2));
  Var zeros = t.leaf(Eigen::MatrixXd::Zero(1, 2));
  CHECK(t.scalar(t.mse(ones, zeros)) == doctest::Approx(1.0).epsilon(1e-12));

  Eigen::MatrixXd lp(2, 1);
  lp << 0.0, -1.0;
  CHECK(t.scalar(t.clipped_delta_sq(t.leaf(lp), 4.0)) == doctest::Approx(1.0).epsilon(1e-12));
  Eigen::MatrixXd big(2, 1);
  big << 0.0, -9.0;  // delta 9 clamps at tau
  CHECK(t.scalar(t.clipped_delta_sq(t.leaf(big), 4.0)) == doctest::Approx(16.0).epsilon(1e-12));
}

TEST_CASE("dropout is the identity when inactive") {
  Tape t;
  RngStream r(2);
  const Eigen::MatrixXd m = r.gaussian_matrix(3, 3);
  Var x = t.leaf(m);
  CHECK((t.value(t.dropout(x, 0.0, &r, true)) - m).norm() == 0.0);
  CHECK((t.value(t.dropout(x, 0.5, nullptr, false)) - m).norm() == 0.0);

  Tape t2;
  Var y = t2.leaf(m);
  t2.backward(t2.sum_all(t2.dropout(y, 0.5, nullptr, false)));
  CHECK((t2.grad(y).array() == 1.0).all());
}

TEST_CASE("parameter gradients accumulate into the store") {
  ParamStore ps;
  RngStream r(13);
  const Eigen::MatrixXd w = r.gaussian_matrix(2, 3);
  const Eigen::MatrixXd scale = r.gaussian_matrix(2, 3);
  const int i = ps.add("w", w);
  ps.zero_grads();

  Tape t(ps);
  t.backward(t.sum_all(t.cwise_mul(t.param(i), t.constant(scale))));
  CHECK((ps.at(i).grad - scale).norm() == 0.0);

  // a second pass accumulates on top
  Tape t2(ps);
  t2.backward(t2.sum_all(t2.cwise_mul(t2.param(i), t2.constant(scale))));
  CHECK((ps.at(i).grad - 2.0 * scale).norm() == 0.0);

  CHECK(ps.grad_norm() == doctest::Approx((2.0 * scale).norm()).epsilon(1e-12));
  ps.scale_grads(0.5);
  CHECK((ps.at(i).grad - scale).norm() < 1e-12);
}
