#include "diffant/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace diffant {
namespace {

[[noreturn]] void shape_error(const std::string& op, const Eigen::MatrixXd& a,
                              const Eigen::MatrixXd& b) {
  throw std::invalid_argument(op + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                              std::to_string(b.cols()) + ")");
}

}  // namespace

int Tape::push(Eigen::MatrixXd value, bool wants_grad) {
  Node n;
  n.value = std::move(value);
  n.wants_grad = wants_grad;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("tape: invalid var");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("tape: invalid var");
  return nodes_[static_cast<std::size_t>(v.id)];
}

void Tape::accum(int id, const Eigen::MatrixXd& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.wants_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

Var Tape::constant(Eigen::MatrixXd v) { return Var{push(std::move(v), false)}; }

Var Tape::leaf(Eigen::MatrixXd v) { return Var{push(std::move(v), true)}; }

Var Tape::param(int store_index) {
  if (!ro_) throw std::invalid_argument("tape: no parameter store bound");
  Var v{push(ro_->at(store_index).value, true)};
  node(v).param = store_index;
  return v;
}

const Eigen::MatrixXd& Tape::value(Var v) const { return node(v).value; }

double Tape::scalar(Var v) const {
  const Eigen::MatrixXd& m = node(v).value;
  if (m.rows() != 1 || m.cols() != 1) throw std::invalid_argument("tape: scalar() on non-scalar");
  return m(0, 0);
}

const Eigen::MatrixXd& Tape::grad(Var v) {
  Node& n = node(v);
  if (!n.has_grad) {
    n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

Var Tape::add(Var a, Var b) {
  const auto& va = node(a).value;
  const auto& vb = node(b).value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error("add", va, vb);
  const bool wg = node(a).wants_grad || node(b).wants_grad;
  Var out{push(va + vb, wg)};
  if (wg) {
    node(out).backward = [a, b](Tape& t, int self) {
      const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      t.accum(a.id, g);
      t.accum(b.id, g);
    };
  }
  return out;
}

Var Tape::sub(Var a, Var b) {
  const auto& va = node(a).value;
  const auto& vb = node(b).value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error("sub", va, vb);
  const bool wg = node(a).wants_grad || node(b).wants_grad;
  Var out{push(va - vb, wg)};
  if (wg) {
    node(out).backward = [a, b](Tape& t, int self) {
      const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      t.accum(a.id, g);
      t.accum(b.id, -g);
    };
  }
  return out;
}

Var Tape::scale(Var a, double factor) {
  const bool wg = node(a).wants_grad;
  Var out{push(node(a).value * factor, wg)};
  if (wg) {
    node(out).backward = [a, factor](Tape& t, int self) {
      t.accum(a.id, t.nodes_[static_cast<std::size_t>(self)].grad * factor);
    };
  }
  return out;
}

Var Tape::cwise_mul(Var a, Var b) {
  const auto& va = node(a).value;
  const auto& vb = node(b).value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error("cwise_mul", va, vb);
  const bool wg = node(a).wants_grad || node(b).wants_grad;
  Var out{push(va.cwiseProduct(vb), wg)};
  if (wg) {
    node(out).backward = [a, b](Tape& t, int self) {
      const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      t.accum(a.id, g.cwiseProduct(t.nodes_[static_cast<std::size_t>(b.id)].value));
      t.accum(b.id, g.cwiseProduct(t.nodes_[static_cast<std::size_t>(a.id)].value));
    };
  }
  return out;
}

Var Tape::add_rowvec(Var m, Var row) {
  const auto& vm = node(m).value;
  const auto& vr = node(row).value;
  if (vr.rows() != 1 || vr.cols() != vm.cols()) shape_error("add_rowvec", vm, vr);
  const bool wg = node(m).wants_grad || node(row).wants_grad;
  Eigen::MatrixXd out_v = vm;
  out_v.rowwise() += vr.row(0);
  Var out{push(std::move(out_v), wg)};
  if (wg) {
    node(out).backward = [m, row](Tape& t, int self) {
      const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      t.accum(m.id, g);
      t.accum(row.id, g.colwise().sum());
    };
  }
  return out;
}

Var Tape::matmul(Var a, Var b) {
  const auto& va = node(a).value;
  const auto& vb = node(b).value;
  if (va.cols() != vb.rows()) shape_error("matmul", va, vb);
  const bool wg = node(a).wants_grad || node(b).wants_grad;
  Var out{push(va * vb, wg)};
  if (wg) {
    node(out).backward = [a, b](Tape& t, int self) {
      const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      t.accum(a.id, g * t.nodes_[static_cast<std::size_t>(b.id)].value.transpose());
      t.accum(b.id, t.nodes_[static_cast<std::size_t>(a.id)].value.transpose() * g);
    };
  }
  return out;
}

Var Tape::transpose(Var a) {
  const bool wg = node(a).wants_grad;
  Var out{push(node(a).value.transpose(), wg)};
  if (wg) {
    node(out).backward = [a](Tape& t, int self) {
      t.accum(a.id, t.nodes_[static_cast<std::size_t>(self)].grad.transpose());
    };
  }
  return out;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  Eigen::Index rows = node(parts[0]).value.rows();
  Eigen::Index cols = 0;
  bool wg = false;
  for (Var p : parts) {
    if (node(p).value.rows() != rows) shape_error("concat_cols", node(parts[0]).value, node(p).value);
    cols += node(p).value.cols();
    wg = wg || node(p).wants_grad;
  }
  Eigen::MatrixXd v(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    v.middleCols(at, node(p).value.cols()) = node(p).value;
    at += node(p).value.cols();
  }
  Var out{push(std::move(v), wg)};
  if (wg) {
    std::vector<Var> ps = parts;
    node(out).backward = [ps](Tape& t, int self) {
      const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      Eigen::Index at = 0;
      for (Var p : ps) {
        const Eigen::Index c = t.nodes_[static_cast<std::size_t>(p.id)].value.cols();
        t.accum(p.id, g.middleCols(at, c));
        at += c;
      }
    };
  }
  return out;
}

Var Tape::slice_cols(Var a, Eigen::Index begin, Eigen::Index count) {
  const auto& va = node(a).value;
  if (begin < 0 || count < 0 || begin + count > va.cols())
    throw std::invalid_argument("slice_cols: range out of bounds");
  const bool wg = node(a).wants_grad;
  Var out{push(va.middleCols(begin, count), wg)};
  if (wg) {
    node(out).backward = [a, begin, count](Tape& t, int self) {
      const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      const auto& va = t.nodes_[static_cast<std::size_t>(a.id)].value;
      Eigen::MatrixXd full = Eigen::MatrixXd::Zero(va.rows(), va.cols());
      full.middleCols(begin, count) = g;
      t.accum(a.id, full);
    };
  }
  return out;
}

Var Tape::slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
  const auto& va = node(a).value;
  if (begin < 0 || count < 0 || begin + count > va.rows())
    throw std::invalid_argument("slice_rows: range out of bounds");
  const bool wg = node(a).wants_grad;
  Var out{push(va.middleRows(begin, count), wg)};
  if (wg) {
    node(out).backward = [a, begin, count](Tape& t, int self) {
      const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      const auto& va = t.nodes_[static_cast<std::size_t>(a.id)].value;
      Eigen::MatrixXd full = Eigen::MatrixXd::Zero(va.rows(), va.cols());
      full.middleRows(begin, count) = g;
      t.accum(a.id, full);
    };
  }
  return out;
}

Var Tape::relu(Var a) {
  const bool wg = node(a).wants_grad;
  Var out{push(node(a).value.cwiseMax(0.0), wg)};
  if (wg) {
    node(out).backward = [a](Tape& t, int self) {
      const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      const auto& va = t.nodes_[static_cast<std::size_t>(a.id)].value;
      t.accum(a.id, (va.array() > 0.0).select(g, Eigen::MatrixXd::Zero(g.rows(), g.cols())));
    };
  }
  return out;
}

Var Tape::exp(Var a) {
  const bool wg = node(a).wants_grad;
  Var out{push(node(a).value.array().exp().matrix(), wg)};
  if (wg) {
    node(out).backward = [a](Tape& t, int self) {
      const Node& n = t.nodes_[static_cast<std::size_t>(self)];
      t.accum(a.id, n.grad.cwiseProduct(n.value));
    };
  }
  return out;
}

Var Tape::softmax_rows(Var a) {
  const auto& va = node(a).value;
  Eigen::MatrixXd y(va.rows(), va.cols());
  for (Eigen::Index i = 0; i < va.rows(); ++i) {
    const double mx = va.row(i).maxCoeff();
    Eigen::ArrayXd e = (va.row(i).array() - mx).exp();
    y.row(i) = (e / e.sum()).matrix();
  }
  const bool wg = node(a).wants_grad;
  Var out{push(std::move(y), wg)};
  if (wg) {
    node(out).backward = [a](Tape& t, int self) {
      const Node& n = t.nodes_[static_cast<std::size_t>(self)];
      const Eigen::VectorXd rowdot = n.grad.cwiseProduct(n.value).rowwise().sum();
      Eigen::MatrixXd dx = n.grad;
      dx.colwise() -= rowdot;
      t.accum(a.id, dx.cwiseProduct(n.value));
    };
  }
  return out;
}

Var Tape::log_softmax_rows(Var a) {
  const auto& va = node(a).value;
  Eigen::MatrixXd y(va.rows(), va.cols());
  for (Eigen::Index i = 0; i < va.rows(); ++i) {
    const double mx = va.row(i).maxCoeff();
    const double lse = mx + std::log((va.row(i).array() - mx).exp().sum());
    y.row(i) = va.row(i).array() - lse;
  }
  const bool wg = node(a).wants_grad;
  Var out{push(std::move(y), wg)};
  if (wg) {
    node(out).backward = [a](Tape& t, int self) {
      const Node& n = t.nodes_[static_cast<std::size_t>(self)];
      const Eigen::VectorXd rowsum = n.grad.rowwise().sum();
      Eigen::MatrixXd soft = n.value.array().exp().matrix();
      soft.array().colwise() *= rowsum.array();
      t.accum(a.id, n.grad - soft);
    };
  }
  return out;
}

Var Tape::layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const auto& vx = node(x).value;
  const auto& vg = node(gain).value;
  const auto& vb = node(bias).value;
  if (vg.rows() != 1 || vg.cols() != vx.cols()) shape_error("layer_norm_rows", vx, vg);
  if (vb.rows() != 1 || vb.cols() != vx.cols()) shape_error("layer_norm_rows", vx, vb);

  Eigen::MatrixXd xhat(vx.rows(), vx.cols());
  Eigen::VectorXd inv_std(vx.rows());
  for (Eigen::Index i = 0; i < vx.rows(); ++i) {
    const double mu = vx.row(i).mean();
    const double var = (vx.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (vx.row(i).array() - mu) * inv_std(i);
  }
  Eigen::MatrixXd y = xhat;
  y.array().rowwise() *= vg.row(0).array();
  y.rowwise() += vb.row(0);

  const bool wg = node(x).wants_grad || node(gain).wants_grad || node(bias).wants_grad;
  Var out{push(std::move(y), wg)};
  if (wg) {
    node(out).backward = [x, gain, bias, xhat, inv_std](Tape& t, int self) {
      const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      const auto& vg = t.nodes_[static_cast<std::size_t>(gain.id)].value;
      t.accum(bias.id, g.colwise().sum());
      t.accum(gain.id, g.cwiseProduct(xhat).colwise().sum());

      Eigen::MatrixXd h = g;
      h.array().rowwise() *= vg.row(0).array();
      const double c = static_cast<double>(xhat.cols());
      const Eigen::VectorXd mh = h.rowwise().sum() / c;
      const Eigen::VectorXd mhx = h.cwiseProduct(xhat).rowwise().sum() / c;
      Eigen::MatrixXd dx = h;
      dx.colwise() -= mh;
      dx.array() -= xhat.array().colwise() * mhx.array();
      dx.array().colwise() *= inv_std.array();
      t.accum(x.id, dx);
    };
  }
  return out;
}

Var Tape::dropout(Var a, double rate, RngStream* rng, bool training) {
  if (!training || rate <= 0.0) return a;
  if (rate >= 1.0 || !rng) throw std::invalid_argument("dropout: bad rate or missing rng");
  const auto& va = node(a).value;
  Eigen::MatrixXd mask(va.rows(), va.cols());
  const double keep = 1.0 - rate;
  for (Eigen::Index i = 0; i < va.rows(); ++i)
    for (Eigen::Index j = 0; j < va.cols(); ++j)
      mask(i, j) = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
  const bool wg = node(a).wants_grad;
  Var out{push(va.cwiseProduct(mask), wg)};
  if (wg) {
    node(out).backward = [a, mask](Tape& t, int self) {
      t.accum(a.id, t.nodes_[static_cast<std::size_t>(self)].grad.cwiseProduct(mask));
    };
  }
  return out;
}

Var Tape::sum_all(Var a) {
  const bool wg = node(a).wants_grad;
  Eigen::MatrixXd s(1, 1);
  s(0, 0) = node(a).value.sum();
  Var out{push(std::move(s), wg)};
  if (wg) {
    node(out).backward = [a](Tape& t, int self) {
      const double g = t.nodes_[static_cast<std::size_t>(self)].grad(0, 0);
      const auto& va = t.nodes_[static_cast<std::size_t>(a.id)].value;
      t.accum(a.id, Eigen::MatrixXd::Constant(va.rows(), va.cols(), g));
    };
  }
  return out;
}

Var Tape::mse(Var a, Var b) {
  const auto& va = node(a).value;
  const auto& vb = node(b).value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error("mse", va, vb);
  const double n = static_cast<double>(va.size());
  Eigen::MatrixXd s(1, 1);
  s(0, 0) = (va - vb).squaredNorm() / n;
  const bool wg = node(a).wants_grad || node(b).wants_grad;
  Var out{push(std::move(s), wg)};
  if (wg) {
    node(out).backward = [a, b, n](Tape& t, int self) {
      const double g = t.nodes_[static_cast<std::size_t>(self)].grad(0, 0);
      const Eigen::MatrixXd d = (t.nodes_[static_cast<std::size_t>(a.id)].value -
                                 t.nodes_[static_cast<std::size_t>(b.id)].value) *
                                (2.0 * g / n);
      t.accum(a.id, d);
      t.accum(b.id, -d);
    };
  }
  return out;
}

Var Tape::weighted_row_mse(Var a, const Eigen::MatrixXd& target, const Eigen::VectorXd& weights) {
  const auto& va = node(a).value;
  if (va.rows() != target.rows() || va.cols() != target.cols()) shape_error("weighted_row_mse", va, target);
  if (weights.size() != va.rows()) throw std::invalid_argument("weighted_row_mse: weight count");
  const double denom = weights.sum() * static_cast<double>(va.cols());
  Eigen::MatrixXd s(1, 1);
  if (denom <= 0.0) {
    s(0, 0) = 0.0;
    return Var{push(std::move(s), false)};
  }
  Eigen::MatrixXd d = va - target;
  d.array().colwise() *= weights.array().sqrt();  // so squaredNorm applies row weights
  s(0, 0) = d.squaredNorm() / denom;
  const bool wg = node(a).wants_grad;
  Var out{push(std::move(s), wg)};
  if (wg) {
    node(out).backward = [a, target, weights, denom](Tape& t, int self) {
      const double g = t.nodes_[static_cast<std::size_t>(self)].grad(0, 0);
      Eigen::MatrixXd d = t.nodes_[static_cast<std::size_t>(a.id)].value - target;
      d.array().colwise() *= weights.array();
      t.accum(a.id, d * (2.0 * g / denom));
    };
  }
  return out;
}

Var Tape::cross_entropy_rows(Var logits, const std::vector<int>& labels) {
  const auto& v = node(logits).value;
  if (static_cast<Eigen::Index>(labels.size()) != v.rows())
    throw std::invalid_argument("cross_entropy_rows: label count");
  const Eigen::Index rows = v.rows();
  Eigen::MatrixXd soft(v.rows(), v.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= v.cols()) throw std::invalid_argument("cross_entropy_rows: label out of range");
    const double mx = v.row(i).maxCoeff();
    Eigen::ArrayXd e = (v.row(i).array() - mx).exp();
    const double z = e.sum();
    soft.row(i) = (e / z).matrix();
    total -= v(i, y) - mx - std::log(z);
  }
  Eigen::MatrixXd s(1, 1);
  s(0, 0) = total / static_cast<double>(rows);
  const bool wg = node(logits).wants_grad;
  Var out{push(std::move(s), wg)};
  if (wg) {
    node(out).backward = [logits, labels, soft](Tape& t, int self) {
      const double g = t.nodes_[static_cast<std::size_t>(self)].grad(0, 0);
      Eigen::MatrixXd d = soft;
      for (Eigen::Index i = 0; i < d.rows(); ++i) d(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
      t.accum(logits.id, d * (g / static_cast<double>(d.rows())));
    };
  }
  return out;
}

Var Tape::binary_ce_logits(Var logits, const Eigen::MatrixXd& targets) {
  const auto& v = node(logits).value;
  if (v.rows() != targets.rows() || v.cols() != targets.cols())
    shape_error("binary_ce_logits", v, targets);
  const double n = static_cast<double>(v.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      const double x = v(i, j);
      total += std::max(x, 0.0) - x * targets(i, j) + std::log1p(std::exp(-std::abs(x)));
    }
  Eigen::MatrixXd s(1, 1);
  s(0, 0) = total / n;
  const bool wg = node(logits).wants_grad;
  Var out{push(std::move(s), wg)};
  if (wg) {
    node(out).backward = [logits, targets, n](Tape& t, int self) {
      const double g = t.nodes_[static_cast<std::size_t>(self)].grad(0, 0);
      const auto& v = t.nodes_[static_cast<std::size_t>(logits.id)].value;
      Eigen::MatrixXd d = (1.0 / (1.0 + (-v.array()).exp())).matrix() - targets;
      t.accum(logits.id, d * (g / n));
    };
  }
  return out;
}

Var Tape::clipped_delta_sq(Var log_probs, double tau) {
  const auto& v = node(log_probs).value;
  Eigen::MatrixXd s(1, 1);
  if (v.rows() < 2) {
    s(0, 0) = 0.0;
    return Var{push(std::move(s), false)};
  }
  const Eigen::MatrixXd delta = v.bottomRows(v.rows() - 1) - v.topRows(v.rows() - 1);
  const double n = static_cast<double>(delta.size());
  s(0, 0) = delta.array().abs().min(tau).square().sum() / n;
  const bool wg = node(log_probs).wants_grad;
  Var out{push(std::move(s), wg)};
  if (wg) {
    node(out).backward = [log_probs, tau, delta, n](Tape& t, int self) {
      const double g = t.nodes_[static_cast<std::size_t>(self)].grad(0, 0);
      // d/d(delta) of min(|delta|, tau)^2 is 2*delta inside the clip, 0 outside
      Eigen::MatrixXd dd =
          (delta.array().abs() < tau).select(delta * (2.0 * g / n),
                                             Eigen::MatrixXd::Zero(delta.rows(), delta.cols()));
      const auto& v = t.nodes_[static_cast<std::size_t>(log_probs.id)].value;
      Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(v.rows(), v.cols());
      dx.bottomRows(dd.rows()) += dd;
      dx.topRows(dd.rows()) -= dd;
      t.accum(log_probs.id, dx);
    };
  }
  return out;
}

Var Tape::weighted_sum(const std::vector<Var>& terms, const std::vector<double>& coeffs) {
  if (terms.empty() || terms.size() != coeffs.size())
    throw std::invalid_argument("weighted_sum: size mismatch");
  const auto& v0 = node(terms[0]).value;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(v0.rows(), v0.cols());
  bool wg = false;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const auto& v = node(terms[k]).value;
    if (v.rows() != acc.rows() || v.cols() != acc.cols()) shape_error("weighted_sum", acc, v);
    acc += coeffs[k] * v;
    wg = wg || node(terms[k]).wants_grad;
  }
  Var out{push(std::move(acc), wg)};
  if (wg) {
    std::vector<Var> ts = terms;
    std::vector<double> cs = coeffs;
    node(out).backward = [ts, cs](Tape& t, int self) {
      const auto& g = t.nodes_[static_cast<std::size_t>(self)].grad;
      for (std::size_t k = 0; k < ts.size(); ++k) t.accum(ts[k].id, cs[k] * g);
    };
  }
  return out;
}

void Tape::backward(Var root) {
  Node& r = node(root);
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw std::invalid_argument("backward: root must be scalar");
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  r.grad = Eigen::MatrixXd::Ones(1, 1);
  r.has_grad = true;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.has_grad && n.backward) n.backward(*this, i);
  }
  for (const auto& n : nodes_) {
    if (n.param >= 0 && n.has_grad) {
      if (!rw_) throw std::invalid_argument("backward: parameter store bound read-only");
      rw_->at(n.param).grad += n.grad;
    }
  }
}

}  // namespace diffant
