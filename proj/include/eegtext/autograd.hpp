#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "eegtext/matrix.hpp"
#include "eegtext/rng.hpp"

namespace eegtext::ag {

// A named trainable array. Layers own these; graph nodes reference them.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {}

  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
  std::size_t size() const { return value.size(); }
};

struct Node;
using Var = std::shared_ptr<Node>;

// Tape node. Op results own their value; parameter leaves alias the Param's
// storage so large weights are never copied into the graph. `backprop` reads
// this node's grad and accumulates into parents.
struct Node {
  Matrix owned;
  const Matrix* value = nullptr;
  Matrix grad;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;
  Param* bound = nullptr;
  bool needs_grad = false;

  const Matrix& val() const { return *value; }

  void ensure_grad() {
    if (grad.empty()) grad = Matrix(value->rows(), value->cols());
  }
};

inline Var constant(Matrix m) {
  auto n = std::make_shared<Node>();
  n->owned = std::move(m);
  n->value = &n->owned;
  return n;
}

inline Var param(Param& p) {
  auto n = std::make_shared<Node>();
  n->value = &p.value;
  n->needs_grad = p.trainable;
  n->bound = &p;
  if (p.trainable) {
    n->backprop = [&p](Node& self) {
      if (p.grad.empty()) p.zero_grad();
      add_in_place(p.grad, self.grad);
    };
  }
  return n;
}

namespace detail {

inline Var make_op(Matrix value, std::vector<Var> parents,
                   std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->owned = std::move(value);
  n->value = &n->owned;
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->needs_grad) {
      n->needs_grad = true;
      break;
    }
  }
  if (n->needs_grad) n->backprop = std::move(backprop);
  return n;
}

inline void accum(Node& target, const Matrix& g) {
  target.ensure_grad();
  add_in_place(target.grad, g);
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Matrix v = eegtext::matmul(a->val(), b->val());
  return detail::make_op(std::move(v), {a, b}, [a, b](Node& self) {
    if (a->needs_grad) detail::accum(*a, eegtext::matmul_nt(self.grad, b->val()));
    if (b->needs_grad) detail::accum(*b, eegtext::matmul_tn(a->val(), self.grad));
  });
}

// a(r,k) * b(s,k)^T
inline Var matmul_nt(Var a, Var b) {
  Matrix v = eegtext::matmul_nt(a->val(), b->val());
  return detail::make_op(std::move(v), {a, b}, [a, b](Node& self) {
    if (a->needs_grad) detail::accum(*a, eegtext::matmul(self.grad, b->val()));
    if (b->needs_grad) detail::accum(*b, eegtext::matmul_tn(self.grad, a->val()));
  });
}

inline Var add(Var a, Var b) {
  check_shapes(a->val().same_shape(b->val()), "ag::add");
  Matrix v = a->val();
  add_in_place(v, b->val());
  return detail::make_op(std::move(v), {a, b}, [a, b](Node& self) {
    if (a->needs_grad) detail::accum(*a, self.grad);
    if (b->needs_grad) detail::accum(*b, self.grad);
  });
}

// broadcast add of a 1 x c row vector
inline Var add_rowvec(Var a, Var bias) {
  check_shapes(bias->val().rows() == 1 && bias->val().cols() == a->val().cols(),
               "ag::add_rowvec");
  Matrix v = a->val();
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) += bias->val()(0, j);
  return detail::make_op(std::move(v), {a, bias}, [a, bias](Node& self) {
    if (a->needs_grad) detail::accum(*a, self.grad);
    if (bias->needs_grad) {
      Matrix g(1, self.grad.cols());
      for (std::size_t i = 0; i < self.grad.rows(); ++i)
        for (std::size_t j = 0; j < self.grad.cols(); ++j) g(0, j) += self.grad(i, j);
      detail::accum(*bias, g);
    }
  });
}

// add a constant matrix (gradient passes through untouched)
inline Var add_const(Var a, const Matrix& m) {
  check_shapes(a->val().same_shape(m), "ag::add_const");
  Matrix v = a->val();
  add_in_place(v, m);
  return detail::make_op(std::move(v), {a}, [a](Node& self) {
    if (a->needs_grad) detail::accum(*a, self.grad);
  });
}

inline Var scale(Var a, double s) {
  Matrix v = a->val();
  for (double& x : v.raw()) x *= s;
  return detail::make_op(std::move(v), {a}, [a, s](Node& self) {
    if (!a->needs_grad) return;
    Matrix g = self.grad;
    for (double& x : g.raw()) x *= s;
    detail::accum(*a, g);
  });
}

// elementwise product
inline Var mul(Var a, Var b) {
  check_shapes(a->val().same_shape(b->val()), "ag::mul");
  Matrix v = a->val();
  for (std::size_t i = 0; i < v.size(); ++i) v.raw()[i] *= b->val().raw()[i];
  return detail::make_op(std::move(v), {a, b}, [a, b](Node& self) {
    if (a->needs_grad) {
      Matrix g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g.raw()[i] *= b->val().raw()[i];
      detail::accum(*a, g);
    }
    if (b->needs_grad) {
      Matrix g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g.raw()[i] *= a->val().raw()[i];
      detail::accum(*b, g);
    }
  });
}

inline Var relu(Var a) {
  Matrix v = a->val();
  for (double& x : v.raw()) x = x > 0.0 ? x : 0.0;
  return detail::make_op(std::move(v), {a}, [a](Node& self) {
    if (!a->needs_grad) return;
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (a->val().raw()[i] <= 0.0) g.raw()[i] = 0.0;
    detail::accum(*a, g);
  });
}

inline Var sigmoid(Var a) {
  Matrix v = a->val();
  for (double& x : v.raw()) x = 1.0 / (1.0 + std::exp(-x));
  return detail::make_op(std::move(v), {a}, [a](Node& self) {
    if (!a->needs_grad) return;
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.val().raw()[i];
      g.raw()[i] *= y * (1.0 - y);
    }
    detail::accum(*a, g);
  });
}

inline Var tanh_op(Var a) {
  Matrix v = a->val();
  for (double& x : v.raw()) x = std::tanh(x);
  return detail::make_op(std::move(v), {a}, [a](Node& self) {
    if (!a->needs_grad) return;
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.val().raw()[i];
      g.raw()[i] *= 1.0 - y * y;
    }
    detail::accum(*a, g);
  });
}

inline Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
  check_shapes(c0 < c1 && c1 <= a->val().cols(), "ag::slice_cols");
  Matrix v(a->val().rows(), c1 - c0);
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) = a->val()(i, c0 + j);
  return detail::make_op(std::move(v), {a}, [a, c0](Node& self) {
    if (!a->needs_grad) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < self.grad.rows(); ++i)
      for (std::size_t j = 0; j < self.grad.cols(); ++j)
        a->grad(i, c0 + j) += self.grad(i, j);
  });
}

inline Var slice_rows(Var a, std::size_t r0, std::size_t r1) {
  check_shapes(r0 < r1 && r1 <= a->val().rows(), "ag::slice_rows");
  Matrix v(r1 - r0, a->val().cols());
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) = a->val()(r0 + i, j);
  return detail::make_op(std::move(v), {a}, [a, r0](Node& self) {
    if (!a->needs_grad) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < self.grad.rows(); ++i)
      for (std::size_t j = 0; j < self.grad.cols(); ++j)
        a->grad(r0 + i, j) += self.grad(i, j);
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  check_shapes(!parts.empty(), "ag::concat_cols");
  std::size_t cols = 0;
  for (const auto& p : parts) {
    check_shapes(p->val().rows() == parts[0]->val().rows(), "ag::concat_cols rows");
    cols += p->val().cols();
  }
  Matrix v(parts[0]->val().rows(), cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p->val().rows(); ++i)
      for (std::size_t j = 0; j < p->val().cols(); ++j) v(i, off + j) = p->val()(i, j);
    off += p->val().cols();
  }
  return detail::make_op(std::move(v), parts, [parts](Node& self) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      if (p->needs_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < p->val().rows(); ++i)
          for (std::size_t j = 0; j < p->val().cols(); ++j)
            p->grad(i, j) += self.grad(i, off + j);
      }
      off += p->val().cols();
    }
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  check_shapes(!parts.empty(), "ag::concat_rows");
  std::size_t rows = 0;
  for (const auto& p : parts) {
    check_shapes(p->val().cols() == parts[0]->val().cols(), "ag::concat_rows cols");
    rows += p->val().rows();
  }
  Matrix v(rows, parts[0]->val().cols());
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p->val().rows(); ++i)
      for (std::size_t j = 0; j < p->val().cols(); ++j) v(off + i, j) = p->val()(i, j);
    off += p->val().rows();
  }
  return detail::make_op(std::move(v), parts, [parts](Node& self) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      if (p->needs_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < p->val().rows(); ++i)
          for (std::size_t j = 0; j < p->val().cols(); ++j)
            p->grad(i, j) += self.grad(off + i, j);
      }
      off += p->val().rows();
    }
  });
}

// rows of `table` selected by ids (embedding lookup)
inline Var gather_rows(Var table, const std::vector<int>& ids) {
  for (int id : ids)
    check_shapes(id >= 0 && static_cast<std::size_t>(id) < table->val().rows(),
                 "ag::gather_rows id");
  Matrix v(ids.size(), table->val().cols());
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j)
      v(i, j) = table->val()(static_cast<std::size_t>(ids[i]), j);
  return detail::make_op(std::move(v), {table}, [table, ids](Node& self) {
    if (!table->needs_grad) return;
    table->ensure_grad();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < self.grad.cols(); ++j)
        table->grad(static_cast<std::size_t>(ids[i]), j) += self.grad(i, j);
  });
}

inline Var softmax_rows(Var a) {
  Matrix v = a->val();
  for (std::size_t i = 0; i < v.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < v.cols(); ++j) mx = std::max(mx, v(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < v.cols(); ++j) {
      v(i, j) = std::exp(v(i, j) - mx);
      sum += v(i, j);
    }
    for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) /= sum;
  }
  return detail::make_op(std::move(v), {a}, [a](Node& self) {
    if (!a->needs_grad) return;
    Matrix g(self.grad.rows(), self.grad.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += self.grad(i, j) * self.val()(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j)
        g(i, j) = self.val()(i, j) * (self.grad(i, j) - dot);
    }
    detail::accum(*a, g);
  });
}

// per-row layer normalization with learned gain/bias (1 x c each)
inline Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5) {
  const std::size_t r = x->val().rows(), c = x->val().cols();
  check_shapes(gamma->val().rows() == 1 && gamma->val().cols() == c, "ag::layer_norm gamma");
  check_shapes(beta->val().rows() == 1 && beta->val().cols() == c, "ag::layer_norm beta");

  auto xhat = std::make_shared<Matrix>(r, c);
  auto inv_std = std::make_shared<std::vector<double>>(r);
  Matrix v(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += x->val()(i, j);
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = x->val()(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double istd = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = istd;
    for (std::size_t j = 0; j < c; ++j) {
      const double xh = (x->val()(i, j) - mean) * istd;
      (*xhat)(i, j) = xh;
      v(i, j) = gamma->val()(0, j) * xh + beta->val()(0, j);
    }
  }
  return detail::make_op(
      std::move(v), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std](Node& self) {
        const std::size_t r = self.grad.rows(), c = self.grad.cols();
        if (gamma->needs_grad) {
          Matrix gg(1, c);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gg(0, j) += self.grad(i, j) * (*xhat)(i, j);
          detail::accum(*gamma, gg);
        }
        if (beta->needs_grad) {
          Matrix gb(1, c);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gb(0, j) += self.grad(i, j);
          detail::accum(*beta, gb);
        }
        if (x->needs_grad) {
          Matrix gx(r, c);
          for (std::size_t i = 0; i < r; ++i) {
            double mean_h = 0.0, mean_hx = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double h = self.grad(i, j) * gamma->val()(0, j);
              mean_h += h;
              mean_hx += h * (*xhat)(i, j);
            }
            mean_h /= static_cast<double>(c);
            mean_hx /= static_cast<double>(c);
            for (std::size_t j = 0; j < c; ++j) {
              const double h = self.grad(i, j) * gamma->val()(0, j);
              gx(i, j) = (h - mean_h - (*xhat)(i, j) * mean_hx) * (*inv_std)[i];
            }
          }
          detail::accum(*x, gx);
        }
      });
}

// 1 x c mean over rows
inline Var mean_rows(Var a) {
  const std::size_t r = a->val().rows(), c = a->val().cols();
  Matrix v(1, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v(0, j) += a->val()(i, j);
  for (double& x : v.raw()) x /= static_cast<double>(r);
  return detail::make_op(std::move(v), {a}, [a, r](Node& self) {
    if (!a->needs_grad) return;
    Matrix g(a->val().rows(), a->val().cols());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j)
        g(i, j) = self.grad(0, j) / static_cast<double>(r);
    detail::accum(*a, g);
  });
}

// mean over unmasked rows of -log softmax(logits)[target]; scalar 1 x 1.
// Stable via logsumexp; fused softmax-minus-onehot backward.
inline Var cross_entropy_with_logits(Var logits, const std::vector<int>& targets,
                                     const std::vector<bool>& keep) {
  const std::size_t t_len = logits->val().rows(), vocab = logits->val().cols();
  check_shapes(targets.size() == t_len, "ag::cross_entropy targets");
  check_shapes(keep.size() == t_len, "ag::cross_entropy mask");
  std::size_t n_keep = 0;
  for (bool k : keep)
    if (k) ++n_keep;
  if (n_keep == 0) throw std::invalid_argument("cross_entropy: all positions masked");
  for (std::size_t t = 0; t < t_len; ++t)
    if (keep[t] && (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= vocab))
      throw std::out_of_range("cross_entropy: target id out of vocabulary");

  double loss = 0.0;
  for (std::size_t t = 0; t < t_len; ++t) {
    if (!keep[t]) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < vocab; ++j) mx = std::max(mx, logits->val()(t, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) sum += std::exp(logits->val()(t, j) - mx);
    const double lse = mx + std::log(sum);
    loss += lse - logits->val()(t, static_cast<std::size_t>(targets[t]));
  }
  Matrix v(1, 1);
  v(0, 0) = loss / static_cast<double>(n_keep);
  return detail::make_op(
      std::move(v), {logits}, [logits, targets, keep, n_keep](Node& self) {
        if (!logits->needs_grad) return;
        const std::size_t t_len = logits->val().rows(), vocab = logits->val().cols();
        const double g0 = self.grad(0, 0) / static_cast<double>(n_keep);
        Matrix g(t_len, vocab);
        for (std::size_t t = 0; t < t_len; ++t) {
          if (!keep[t]) continue;
          double mx = -std::numeric_limits<double>::infinity();
          for (std::size_t j = 0; j < vocab; ++j) mx = std::max(mx, logits->val()(t, j));
          double sum = 0.0;
          for (std::size_t j = 0; j < vocab; ++j) sum += std::exp(logits->val()(t, j) - mx);
          for (std::size_t j = 0; j < vocab; ++j) {
            const double p = std::exp(logits->val()(t, j) - mx) / sum;
            g(t, j) = g0 * (p - (static_cast<std::size_t>(targets[t]) == j ? 1.0 : 0.0));
          }
        }
        detail::accum(*logits, g);
      });
}

// inverted dropout; identity when not training or rate == 0
inline Var dropout(Var a, double rate, Rng& rng, bool training) {
  if (!training || rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  auto mask = std::make_shared<Matrix>(a->val().rows(), a->val().cols());
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix v = a->val();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double m = rng.uniform() < rate ? 0.0 : keep_scale;
    mask->raw()[i] = m;
    v.raw()[i] *= m;
  }
  return detail::make_op(std::move(v), {a}, [a, mask](Node& self) {
    if (!a->needs_grad) return;
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g.raw()[i] *= mask->raw()[i];
    detail::accum(*a, g);
  });
}

// Reverse-mode sweep from `root`. `seed` scales the whole gradient, which is
// how batch-mean weighting is applied without building a joint graph.
inline void backward(const Var& root, double seed = 1.0) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child == 0) {
      if (visited.count(node) || !node->needs_grad) {
        stack.pop_back();
        continue;
      }
      visited.insert(node);
    }
    if (next_child < node->parents.size()) {
      Node* child = node->parents[next_child].get();
      ++next_child;
      if (!visited.count(child) && child->needs_grad) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad = Matrix(root->val().rows(), root->val().cols(), seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

}  // namespace eegtext::ag
