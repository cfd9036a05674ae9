#include "amrforge/autodiff.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

namespace amrforge {

namespace detail {

double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

double gelu_derivative(double x) {
  constexpr double c = 0.7978845608028654;
  const double u = c * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

Mat layer_norm_rows(const Mat& x, const Mat& gain, const Mat& bias, double eps, Eigen::VectorXd* inv_std) {
  const auto n = x.cols();
  Mat out(x.rows(), n);
  if (inv_std) inv_std->resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().sum() / static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    if (inv_std) (*inv_std)(r) = is;
    out.row(r) = ((x.row(r).array() - mean) * is * gain.row(0).array() + bias.row(0).array()).matrix();
  }
  return out;
}

void softmax_rows(Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    if (!std::isfinite(mx)) {
      m.row(r).setZero();
      continue;
    }
    m.row(r) = (m.row(r).array() - mx).exp().matrix();
    m.row(r) /= m.row(r).sum();
  }
}

}  // namespace detail

Tape::Var Tape::push(Mat value, bool requires_grad, std::function<void(Tape&, const Mat&)> backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Tape::Var Tape::constant(Mat value) { return push(std::move(value), false, nullptr); }

Tape::Var Tape::input(const Mat& value, bool requires_grad) {
  Node n;
  n.ref = &value;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

const Mat& Tape::value(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  return n.ref ? *n.ref : n.value;
}

Mat Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.size() == 0) return Mat::Zero(value(v).rows(), value(v).cols());
  return n.grad;
}

void Tape::accumulate(Var v, const Mat& g) { accumulate_expr(v, g); }

template <class Expr>
void Tape::accumulate_expr(Var v, const Expr& g) {
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

bool Tape::any_grad(std::initializer_list<Var> vars) const {
  for (auto v : vars) {
    if (requires_grad(v)) return true;
  }
  return false;
}

void Tape::backward(Var output) {
  const Mat& out = value(output);
  if (out.rows() != 1 || out.cols() != 1) throw std::invalid_argument("backward: output must be 1x1");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!requires_grad(output)) return;
  nodes_[static_cast<std::size_t>(output.id)].grad = Mat::Ones(1, 1);
  for (int id = output.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    const Mat g = std::move(n.grad);
    n.backward(*this, g);
    n.grad = g;
  }
}

Tape::Var Tape::matmul(Var a, Var b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.cols() != bv.rows()) throw std::invalid_argument("matmul: shape mismatch");
  return push(av * bv, any_grad({a, b}), [a, b](Tape& t, const Mat& g) {
    if (t.requires_grad(a)) t.accumulate_expr(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate_expr(b, t.value(a).transpose() * g);
  });
}

Tape::Var Tape::matmul_nt(Var x, Var w) {
  const Mat& xv = value(x);
  const Mat& wv = value(w);
  if (xv.cols() != wv.cols()) throw std::invalid_argument("matmul_nt: shape mismatch");
  return push(xv * wv.transpose(), any_grad({x, w}), [x, w](Tape& t, const Mat& g) {
    if (t.requires_grad(x)) t.accumulate_expr(x, g * t.value(w));
    if (t.requires_grad(w)) t.accumulate_expr(w, g.transpose() * t.value(x));
  });
}

Tape::Var Tape::add(Var a, Var b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) throw std::invalid_argument("add: shape mismatch");
  return push(av + bv, any_grad({a, b}), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Tape::Var Tape::add_row(Var x, Var row) {
  const Mat& xv = value(x);
  const Mat& rv = value(row);
  if (rv.rows() != 1 || rv.cols() != xv.cols()) throw std::invalid_argument("add_row: shape mismatch");
  Mat out = xv;
  out.rowwise() += rv.row(0);
  return push(std::move(out), any_grad({x, row}), [x, row](Tape& t, const Mat& g) {
    t.accumulate(x, g);
    if (t.requires_grad(row)) t.accumulate_expr(row, g.colwise().sum());
  });
}

Tape::Var Tape::scale(Var x, double s) {
  return push(value(x) * s, requires_grad(x), [x, s](Tape& t, const Mat& g) { t.accumulate_expr(x, g * s); });
}

Tape::Var Tape::gelu(Var x) {
  return push(value(x).unaryExpr([](double v) { return detail::gelu(v); }), requires_grad(x),
              [x](Tape& t, const Mat& g) {
                t.accumulate_expr(x, g.cwiseProduct(t.value(x).unaryExpr(
                                         [](double v) { return detail::gelu_derivative(v); })));
              });
}

Tape::Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  Eigen::VectorXd inv_std;
  Mat out = detail::layer_norm_rows(value(x), value(gain), value(bias), eps, &inv_std);
  return push(std::move(out), any_grad({x, gain, bias}), [x, gain, bias, inv_std](Tape& t, const Mat& g) {
    const Mat& xv = t.value(x);
    const auto n = static_cast<double>(xv.cols());
    Mat xhat(xv.rows(), xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      xhat.row(r) = (xv.row(r).array() - xv.row(r).mean()) * inv_std(r);
    }
    if (t.requires_grad(gain)) t.accumulate_expr(gain, g.cwiseProduct(xhat).colwise().sum());
    if (t.requires_grad(bias)) t.accumulate_expr(bias, g.colwise().sum());
    if (t.requires_grad(x)) {
      const auto& gv = t.value(gain);
      Mat dx(xv.rows(), xv.cols());
      for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        const Eigen::RowVectorXd dxhat = g.row(r).cwiseProduct(gv.row(0));
        const double m1 = dxhat.sum() / n;
        const double m2 = dxhat.cwiseProduct(xhat.row(r)).sum() / n;
        dx.row(r) = (dxhat.array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
      }
      t.accumulate(x, dx);
    }
  });
}

Tape::Var Tape::gather_rows(Var table, std::vector<int> rows) {
  const Mat& tv = value(table);
  Mat out(static_cast<Eigen::Index>(rows.size()), tv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= tv.rows()) {
      throw std::out_of_range("gather_rows: index " + std::to_string(rows[i]) + " outside table of " +
                              std::to_string(tv.rows()));
    }
    out.row(static_cast<Eigen::Index>(i)) = tv.row(rows[i]);
  }
  return push(std::move(out), requires_grad(table), [table, rows = std::move(rows)](Tape& t, const Mat& g) {
    Mat d = Mat::Zero(t.value(table).rows(), t.value(table).cols());
    for (std::size_t i = 0; i < rows.size(); ++i) d.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(table, d);
  });
}

Tape::Var Tape::attention(Var q, Var k, Var v, int heads, std::vector<int> q_offsets, std::vector<int> k_offsets,
                          bool causal) {
  const Mat& qv = value(q);
  const Mat& kv = value(k);
  const Mat& vv = value(v);
  if (heads <= 0 || qv.cols() % heads != 0 || kv.cols() != qv.cols() || vv.cols() != qv.cols() ||
      kv.rows() != vv.rows()) {
    throw std::invalid_argument("attention: shape mismatch");
  }
  if (q_offsets.size() != k_offsets.size() || q_offsets.empty() || q_offsets.back() != qv.rows() ||
      k_offsets.back() != kv.rows()) {
    throw std::invalid_argument("attention: bad segment offsets");
  }
  const int dk = static_cast<int>(qv.cols()) / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const std::size_t segments = q_offsets.size() - 1;

  // probabilities per (segment, head), kept for the backward pass
  auto probs = std::make_shared<std::vector<Mat>>(segments * static_cast<std::size_t>(heads));
  Mat out = Mat::Zero(qv.rows(), qv.cols());
  for (std::size_t s = 0; s < segments; ++s) {
    const int q0 = q_offsets[s], nq = q_offsets[s + 1] - q_offsets[s];
    const int k0 = k_offsets[s], nk = k_offsets[s + 1] - k_offsets[s];
    if (nq < 0 || nk < 0) throw std::invalid_argument("attention: offsets must be nondecreasing");
    if (causal && nq != nk) throw std::invalid_argument("attention: causal segments must have equal lengths");
    if (nq == 0 || nk == 0) continue;
    for (int h = 0; h < heads; ++h) {
      Mat p = qv.block(q0, h * dk, nq, dk) * kv.block(k0, h * dk, nk, dk).transpose() * inv_sqrt;
      if (causal) {
        for (int i = 0; i < nq; ++i) {
          for (int j = i + 1; j < nk; ++j) p(i, j) = -std::numeric_limits<double>::infinity();
        }
      }
      detail::softmax_rows(p);
      out.block(q0, h * dk, nq, dk) = p * vv.block(k0, h * dk, nk, dk);
      (*probs)[s * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)] = std::move(p);
    }
  }
  return push(std::move(out), any_grad({q, k, v}),
              [q, k, v, heads, dk, inv_sqrt, probs, q_offsets = std::move(q_offsets),
               k_offsets = std::move(k_offsets)](Tape& t, const Mat& g) {
                const Mat& qv = t.value(q);
                const Mat& kv = t.value(k);
                const Mat& vv = t.value(v);
                Mat dq = Mat::Zero(qv.rows(), qv.cols());
                Mat dkm = Mat::Zero(kv.rows(), kv.cols());
                Mat dv = Mat::Zero(vv.rows(), vv.cols());
                for (std::size_t s = 0; s + 1 < q_offsets.size(); ++s) {
                  const int q0 = q_offsets[s], nq = q_offsets[s + 1] - q_offsets[s];
                  const int k0 = k_offsets[s], nk = k_offsets[s + 1] - k_offsets[s];
                  if (nq == 0 || nk == 0) continue;
                  for (int h = 0; h < heads; ++h) {
                    const Mat& p = (*probs)[s * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)];
                    const auto go = g.block(q0, h * dk, nq, dk);
                    dv.block(k0, h * dk, nk, dk) += p.transpose() * go;
                    const Mat dp = go * vv.block(k0, h * dk, nk, dk).transpose();
                    Mat ds = p.cwiseProduct(dp);
                    const Eigen::VectorXd rows = ds.rowwise().sum();
                    ds -= p.cwiseProduct(rows.replicate(1, nk));
                    ds *= inv_sqrt;
                    dq.block(q0, h * dk, nq, dk) += ds * kv.block(k0, h * dk, nk, dk);
                    dkm.block(k0, h * dk, nk, dk) += ds.transpose() * qv.block(q0, h * dk, nq, dk);
                  }
                }
                t.accumulate(q, dq);
                t.accumulate(k, dkm);
                t.accumulate(v, dv);
              });
}

Tape::Var Tape::cross_entropy(Var logits, std::vector<int> labels, double normalizer) {
  const Mat& lv = value(logits);
  if (static_cast<Eigen::Index>(labels.size()) != lv.rows()) {
    throw std::invalid_argument("cross_entropy: one label per row required");
  }
  if (!(normalizer > 0.0)) throw std::invalid_argument("cross_entropy: normalizer must be positive");
  auto probs = std::make_shared<Mat>(lv);
  detail::softmax_rows(*probs);
  double total = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const int y = labels[r];
    if (y < 0) continue;
    if (y >= lv.cols()) throw std::out_of_range("cross_entropy: label outside vocabulary");
    const auto row = lv.row(static_cast<Eigen::Index>(r));
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    total += lse - row(y);
  }
  Mat out(1, 1);
  out(0, 0) = total / normalizer;
  return push(std::move(out), requires_grad(logits),
              [logits, probs, normalizer, labels = std::move(labels)](Tape& t, const Mat& g) {
                Mat d = Mat::Zero(probs->rows(), probs->cols());
                for (std::size_t r = 0; r < labels.size(); ++r) {
                  if (labels[r] < 0) continue;
                  const auto i = static_cast<Eigen::Index>(r);
                  d.row(i) = probs->row(i);
                  d(i, labels[r]) -= 1.0;
                }
                t.accumulate_expr(logits, d * (g(0, 0) / normalizer));
              });
}

}  // namespace amrforge
