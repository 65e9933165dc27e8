#pragma once

#include "amd/types.hpp"

#include <cassert>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

// Reverse-mode autodiff over dense Eigen matrices. A Tape owns a DAG of
// value nodes; each op appends a node plus a backward closure that scatters
// the node's gradient into its inputs. Scalars are 1x1 matrices.
//
// Templated on the scalar so training runs in float while the loss-gradient
// oracle runs the identical code in double.

namespace amd::ad {

template <class S>
class Tape;

template <class S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  const MatT<S>& value() const { return tape->value(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool needs_grad() const { return tape->needs_grad(id); }
};

template <class S>
class Tape {
 public:
  using Mat = MatT<S>;

  int size() const { return static_cast<int>(nodes_.size()); }
  void clear() { nodes_.clear(); }

  const Mat& value(int id) const { return nodes_[id].value; }
  const Mat& grad(int id) const { return nodes_[id].grad; }
  Mat& grad_ref(int id) { return nodes_[id].grad; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  Var<S> constant(Mat v) { return append(std::move(v), false); }
  Var<S> leaf(Mat v) { return append(std::move(v), true); }

  Var<S> append(Mat v, bool needs_grad) {
    nodes_.push_back(Node{std::move(v), Mat(), {}, needs_grad});
    return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  void set_backward(int id, std::function<void()> fn) { nodes_[id].backward = std::move(fn); }

  // Seeds d(out)/d(out) = 1 and sweeps the tape in reverse; `out` must be 1x1.
  void backward(Var<S> out) {
    assert(out.value().rows() == 1 && out.value().cols() == 1);
    for (auto& n : nodes_) {
      if (n.needs_grad) n.grad.setZero(n.value.rows(), n.value.cols());
    }
    nodes_[out.id].grad(0, 0) = S(1);
    for (int i = out.id; i >= 0; --i) {
      if (nodes_[i].needs_grad && nodes_[i].backward) nodes_[i].backward();
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void()> backward;
    bool needs_grad;
  };
  std::vector<Node> nodes_;
};

namespace detail {

template <class S>
bool either(Var<S> a, Var<S> b) {
  return a.needs_grad() || b.needs_grad();
}

// Appends a node; bwd receives this node's gradient and adds into inputs.
template <class S, class Bwd>
Var<S> unary(Var<S> a, MatT<S> v, Bwd bwd) {
  Tape<S>* t = a.tape;
  Var<S> out = t->append(std::move(v), a.needs_grad());
  if (out.needs_grad()) {
    int oid = out.id, aid = a.id;
    t->set_backward(oid, [t, oid, aid, bwd] { bwd(t->grad(oid), t->grad_ref(aid)); });
  }
  return out;
}

template <class S, class Bwd>
Var<S> binary(Var<S> a, Var<S> b, MatT<S> v, Bwd bwd) {
  Tape<S>* t = a.tape;
  Var<S> out = t->append(std::move(v), either(a, b));
  if (out.needs_grad()) {
    int oid = out.id, aid = a.id, bid = b.id;
    bool ga = a.needs_grad(), gb = b.needs_grad();
    t->set_backward(oid, [t, oid, aid, bid, ga, gb, bwd] {
      bwd(t->grad(oid), ga ? &t->grad_ref(aid) : nullptr, gb ? &t->grad_ref(bid) : nullptr);
    });
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise / linear algebra

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  return detail::binary(a, b, MatT<S>(a.value() + b.value()),
                        [](const MatT<S>& g, MatT<S>* da, MatT<S>* db) {
                          if (da) *da += g;
                          if (db) *db += g;
                        });
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  return detail::binary(a, b, MatT<S>(a.value() - b.value()),
                        [](const MatT<S>& g, MatT<S>* da, MatT<S>* db) {
                          if (da) *da += g;
                          if (db) *db -= g;
                        });
}

template <class S>
Var<S> mul(Var<S> a, Var<S> b) {  // Hadamard
  assert(a.rows() == b.rows() && a.cols() == b.cols());
  Tape<S>* t = a.tape;
  int aid = a.id, bid = b.id;
  return detail::binary(a, b, MatT<S>(a.value().cwiseProduct(b.value())),
                        [t, aid, bid](const MatT<S>& g, MatT<S>* da, MatT<S>* db) {
                          if (da) *da += g.cwiseProduct(t->value(bid));
                          if (db) *db += g.cwiseProduct(t->value(aid));
                        });
}

template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
  assert(a.cols() == b.rows());
  Tape<S>* t = a.tape;
  int aid = a.id, bid = b.id;
  return detail::binary(a, b, MatT<S>(a.value() * b.value()),
                        [t, aid, bid](const MatT<S>& g, MatT<S>* da, MatT<S>* db) {
                          if (da) da->noalias() += g * t->value(bid).transpose();
                          if (db) db->noalias() += t->value(aid).transpose() * g;
                        });
}

template <class S>
Var<S> scale(Var<S> a, S c) {
  return detail::unary(a, MatT<S>(a.value() * c),
                       [c](const MatT<S>& g, MatT<S>& da) { da += g * c; });
}

template <class S>
Var<S> add_scalar(Var<S> a, S c) {
  return detail::unary(a, MatT<S>((a.value().array() + c).matrix()),
                       [](const MatT<S>& g, MatT<S>& da) { da += g; });
}

// Broadcasts a 1xC row vector over every row of a.
template <class S>
Var<S> add_rowvec(Var<S> a, Var<S> r) {
  assert(r.rows() == 1 && r.cols() == a.cols());
  MatT<S> v = a.value().rowwise() + r.value().row(0);
  return detail::binary(a, r, std::move(v), [](const MatT<S>& g, MatT<S>* da, MatT<S>* dr) {
    if (da) *da += g;
    if (dr) dr->row(0) += g.colwise().sum();
  });
}

template <class S>
Var<S> transpose(Var<S> a) {
  return detail::unary(a, MatT<S>(a.value().transpose()),
                       [](const MatT<S>& g, MatT<S>& da) { da += g.transpose(); });
}

// ---------------------------------------------------------------------------
// shape ops

template <class S>
Var<S> rows(Var<S> a, int start, int n) {
  assert(start >= 0 && start + n <= a.rows());
  return detail::unary(a, MatT<S>(a.value().middleRows(start, n)),
                       [start, n](const MatT<S>& g, MatT<S>& da) {
                         da.middleRows(start, n) += g;
                       });
}

template <class S>
Var<S> cols(Var<S> a, int start, int n) {
  assert(start >= 0 && start + n <= a.cols());
  return detail::unary(a, MatT<S>(a.value().middleCols(start, n)),
                       [start, n](const MatT<S>& g, MatT<S>& da) {
                         da.middleCols(start, n) += g;
                       });
}

template <class S>
Var<S> vcat(const std::vector<Var<S>>& parts) {
  assert(!parts.empty());
  Tape<S>* t = parts.front().tape;
  Eigen::Index total = 0;
  bool ng = false;
  for (const auto& p : parts) {
    total += p.rows();
    ng = ng || p.needs_grad();
  }
  MatT<S> v(total, parts.front().cols());
  Eigen::Index at = 0;
  std::vector<std::pair<int, std::pair<Eigen::Index, Eigen::Index>>> spans;
  for (const auto& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    spans.push_back({p.id, {at, p.rows()}});
    at += p.rows();
  }
  Var<S> out = t->append(std::move(v), ng);
  if (ng) {
    int oid = out.id;
    t->set_backward(oid, [t, oid, spans] {
      const MatT<S>& g = t->grad(oid);
      for (const auto& [pid, span] : spans) {
        if (t->needs_grad(pid)) t->grad_ref(pid) += g.middleRows(span.first, span.second);
      }
    });
  }
  return out;
}

template <class S>
Var<S> hcat(const std::vector<Var<S>>& parts) {
  assert(!parts.empty());
  Tape<S>* t = parts.front().tape;
  Eigen::Index total = 0;
  bool ng = false;
  for (const auto& p : parts) {
    total += p.cols();
    ng = ng || p.needs_grad();
  }
  MatT<S> v(parts.front().rows(), total);
  Eigen::Index at = 0;
  std::vector<std::pair<int, std::pair<Eigen::Index, Eigen::Index>>> spans;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    spans.push_back({p.id, {at, p.cols()}});
    at += p.cols();
  }
  Var<S> out = t->append(std::move(v), ng);
  if (ng) {
    int oid = out.id;
    t->set_backward(oid, [t, oid, spans] {
      const MatT<S>& g = t->grad(oid);
      for (const auto& [pid, span] : spans) {
        if (t->needs_grad(pid)) t->grad_ref(pid) += g.middleCols(span.first, span.second);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// nonlinearities and reductions

template <class S>
Var<S> square(Var<S> a) {
  Tape<S>* t = a.tape;
  int aid = a.id;
  return detail::unary(a, MatT<S>(a.value().array().square().matrix()),
                       [t, aid](const MatT<S>& g, MatT<S>& da) {
                         da += S(2) * g.cwiseProduct(t->value(aid));
                       });
}

template <class S>
Var<S> sin(Var<S> a) {
  Tape<S>* t = a.tape;
  int aid = a.id;
  return detail::unary(a, MatT<S>(a.value().array().sin().matrix()),
                       [t, aid](const MatT<S>& g, MatT<S>& da) {
                         da += g.cwiseProduct(MatT<S>(t->value(aid).array().cos().matrix()));
                       });
}

template <class S>
Var<S> cos(Var<S> a) {
  Tape<S>* t = a.tape;
  int aid = a.id;
  return detail::unary(a, MatT<S>(a.value().array().cos().matrix()),
                       [t, aid](const MatT<S>& g, MatT<S>& da) {
                         da -= g.cwiseProduct(MatT<S>(t->value(aid).array().sin().matrix()));
                       });
}

template <class S>
Var<S> gelu(Var<S> a) {
  const S inv_sqrt2 = S(0.70710678118654752440);
  const S inv_sqrt2pi = S(0.39894228040143267794);
  Tape<S>* t = a.tape;
  int aid = a.id;
  MatT<S> v = a.value().unaryExpr([&](S x) {
    return S(0.5) * x * (S(1) + std::erf(x * inv_sqrt2));
  });
  return detail::unary(a, std::move(v),
                       [t, aid, inv_sqrt2, inv_sqrt2pi](const MatT<S>& g, MatT<S>& da) {
                         const MatT<S>& x = t->value(aid);
                         MatT<S> d = x.unaryExpr([&](S xv) {
                           const S phi = S(0.5) * (S(1) + std::erf(xv * inv_sqrt2));
                           const S pdf = inv_sqrt2pi * std::exp(S(-0.5) * xv * xv);
                           return phi + xv * pdf;
                         });
                         da += g.cwiseProduct(d);
                       });
}

// Prefix sums down the row index: out(i,:) = sum_{j<=i} a(j,:).
template <class S>
Var<S> cumsum_rows(Var<S> a) {
  MatT<S> v = a.value();
  for (Eigen::Index i = 1; i < v.rows(); ++i) v.row(i) += v.row(i - 1);
  return detail::unary(a, std::move(v), [](const MatT<S>& g, MatT<S>& da) {
    MatT<S> acc = g;
    for (Eigen::Index i = acc.rows() - 2; i >= 0; --i) acc.row(i) += acc.row(i + 1);
    da += acc;
  });
}

template <class S>
Var<S> softmax_rows(Var<S> a) {
  MatT<S> v = a.value();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const S m = v.row(i).maxCoeff();
    v.row(i) = (v.row(i).array() - m).exp().matrix();
    v.row(i) /= v.row(i).sum();
  }
  Tape<S>* t = a.tape;
  Var<S> out = detail::unary(a, std::move(v), [](const MatT<S>&, MatT<S>&) {});
  if (out.needs_grad()) {
    int oid = out.id, aid = a.id;
    t->set_backward(oid, [t, oid, aid] {
      const MatT<S>& s = t->value(oid);
      const MatT<S>& g = t->grad(oid);
      MatT<S>& da = t->grad_ref(aid);
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const S dot = g.row(i).dot(s.row(i));
        da.row(i) += s.row(i).cwiseProduct(((g.row(i).array() - dot).matrix()));
      }
    });
  }
  return out;
}

template <class S>
Var<S> log_softmax_rows(Var<S> a) {
  MatT<S> v = a.value();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const S m = v.row(i).maxCoeff();
    const S lse = m + std::log((v.row(i).array() - m).exp().sum());
    v.row(i) = (v.row(i).array() - lse).matrix();
  }
  Tape<S>* t = a.tape;
  Var<S> out = detail::unary(a, std::move(v), [](const MatT<S>&, MatT<S>&) {});
  if (out.needs_grad()) {
    int oid = out.id, aid = a.id;
    t->set_backward(oid, [t, oid, aid] {
      const MatT<S>& ls = t->value(oid);
      const MatT<S>& g = t->grad(oid);
      MatT<S>& da = t->grad_ref(aid);
      for (Eigen::Index i = 0; i < ls.rows(); ++i) {
        const S gsum = g.row(i).sum();
        da.row(i) += g.row(i) - gsum * ls.row(i).array().exp().matrix();
      }
    });
  }
  return out;
}

// Per-row layer norm with affine gain/bias (both 1xC).
template <class S>
Var<S> layernorm_rows(Var<S> x, Var<S> gain, Var<S> bias, S eps = S(1e-5)) {
  assert(gain.rows() == 1 && bias.rows() == 1);
  const MatT<S>& xv = x.value();
  MatT<S> xhat(xv.rows(), xv.cols());
  VecT<S> inv_sigma(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const S mu = xv.row(i).mean();
    const S var = (xv.row(i).array() - mu).square().mean();
    const S is = S(1) / std::sqrt(var + eps);
    inv_sigma(i) = is;
    xhat.row(i) = ((xv.row(i).array() - mu) * is).matrix();
  }
  MatT<S> v = ((xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
               bias.value().row(0).array())
                  .matrix();
  Tape<S>* t = x.tape;
  bool ng = x.needs_grad() || gain.needs_grad() || bias.needs_grad();
  Var<S> out = t->append(std::move(v), ng);
  if (ng) {
    int oid = out.id, xid = x.id, gid = gain.id, bid = bias.id;
    t->set_backward(oid, [t, oid, xid, gid, bid, xhat, inv_sigma] {
      const MatT<S>& g = t->grad(oid);
      const MatT<S>& gainv = t->value(gid);
      if (t->needs_grad(bid)) t->grad_ref(bid).row(0) += g.colwise().sum();
      if (t->needs_grad(gid)) t->grad_ref(gid).row(0) += g.cwiseProduct(xhat).colwise().sum();
      if (t->needs_grad(xid)) {
        MatT<S>& dx = t->grad_ref(xid);
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          Eigen::Matrix<S, 1, Eigen::Dynamic> d1 =
              g.row(i).cwiseProduct(gainv.row(0));
          const S m1 = d1.mean();
          const S m2 = d1.cwiseProduct(xhat.row(i)).mean();
          dx.row(i) += inv_sigma(i) * (d1.array() - m1 - xhat.row(i).array() * m2).matrix();
        }
      }
    });
  }
  return out;
}

// Per-row L2 normalization: y_i = x_i / max(||x_i||, eps).
template <class S>
Var<S> l2_normalize_rows(Var<S> x, S eps = S(1e-8)) {
  const MatT<S>& xv = x.value();
  MatT<S> v(xv.rows(), xv.cols());
  VecT<S> inv_norm(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const S n = std::max(xv.row(i).norm(), eps);
    inv_norm(i) = S(1) / n;
    v.row(i) = xv.row(i) * inv_norm(i);
  }
  Tape<S>* t = x.tape;
  Var<S> out = t->append(std::move(v), x.needs_grad());
  if (out.needs_grad()) {
    int oid = out.id, xid = x.id;
    t->set_backward(oid, [t, oid, xid, inv_norm] {
      const MatT<S>& y = t->value(oid);
      const MatT<S>& g = t->grad(oid);
      MatT<S>& dx = t->grad_ref(xid);
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const S dot = g.row(i).dot(y.row(i));
        dx.row(i) += inv_norm(i) * (g.row(i) - dot * y.row(i));
      }
    });
  }
  return out;
}

template <class S>
Var<S> sum_all(Var<S> a) {
  MatT<S> v(1, 1);
  v(0, 0) = a.value().sum();
  return detail::unary(a, std::move(v), [](const MatT<S>& g, MatT<S>& da) {
    da.array() += g(0, 0);
  });
}

template <class S>
Var<S> mean_all(Var<S> a) {
  const S inv = S(1) / static_cast<S>(a.rows() * a.cols());
  MatT<S> v(1, 1);
  v(0, 0) = a.value().sum() * inv;
  return detail::unary(a, std::move(v), [inv](const MatT<S>& g, MatT<S>& da) {
    da.array() += g(0, 0) * inv;
  });
}

// Column means: 1xC vector of per-column averages (temporal mean pooling).
template <class S>
Var<S> mean_pool_rows(Var<S> a) {
  const S inv = S(1) / static_cast<S>(a.rows());
  MatT<S> v = a.value().colwise().mean();
  return detail::unary(a, std::move(v), [inv](const MatT<S>& g, MatT<S>& da) {
    da.rowwise() += (g.row(0) * inv).eval();
  });
}

// affine(x, w, b) = x*w + b broadcast; the workhorse for every linear layer.
template <class S>
Var<S> affine(Var<S> x, Var<S> w, Var<S> b) {
  return add_rowvec(matmul(x, w), b);
}

}  // namespace amd::ad
