#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "eegtext/autograd.hpp"
#include "eegtext/matrix.hpp"
#include "eegtext/rng.hpp"

namespace eegtext::nn {

using ag::Param;
using ag::Var;

inline Matrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& x : m.raw()) x = rng.uniform(-limit, limit);
  return m;
}

struct Linear {
  Param weight;  // in x out
  Param bias;    // 1 x out

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : weight(name + ".weight", glorot_uniform(in, out, rng)),
        bias(name + ".bias", Matrix(1, out)) {}

  Var operator()(Var x) {
    return ag::add_rowvec(ag::matmul(x, ag::param(weight)), ag::param(bias));
  }

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }

  void collect(std::vector<Param*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

struct LayerNorm {
  Param gamma;  // 1 x d, init 1
  Param beta;   // 1 x d, init 0

  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim)
      : gamma(name + ".gamma", Matrix(1, dim, 1.0)), beta(name + ".beta", Matrix(1, dim)) {}

  Var operator()(Var x) { return ag::layer_norm(x, ag::param(gamma), ag::param(beta)); }

  void collect(std::vector<Param*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

// Additive attention mask: -1e30 absorbs any finite score, so masked keys
// contribute exactly zero weight after softmax.
inline Matrix attention_mask_matrix(std::size_t q_len, std::size_t kv_len,
                                    const std::vector<bool>& kv_keep, bool causal) {
  Matrix m(q_len, kv_len);
  constexpr double neg = -1e30;
  for (std::size_t i = 0; i < q_len; ++i) {
    for (std::size_t j = 0; j < kv_len; ++j) {
      const bool masked = (!kv_keep.empty() && !kv_keep[j]) || (causal && j > i);
      if (masked) m(i, j) = neg;
    }
  }
  return m;
}

struct MultiHeadAttention {
  std::size_t heads = 1;
  Linear wq, wk, wv, wo;

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t dim, std::size_t n_heads, Rng& rng)
      : heads(n_heads),
        wq(name + ".wq", dim, dim, rng),
        wk(name + ".wk", dim, dim, rng),
        wv(name + ".wv", dim, dim, rng),
        wo(name + ".wo", dim, dim, rng) {
    if (dim % n_heads != 0)
      throw std::invalid_argument("attention dim must be divisible by head count");
  }

  Var operator()(Var q_in, Var kv_in, const std::vector<bool>& kv_keep, bool causal) {
    const std::size_t dim = wq.out_dim();
    const std::size_t hd = dim / heads;
    Var q = wq(q_in), k = wk(kv_in), v = wv(kv_in);
    const Matrix mask = attention_mask_matrix(q_in->val().rows(), kv_in->val().rows(),
                                              kv_keep, causal);
    std::vector<Var> ctx;
    ctx.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      Var qh = ag::slice_cols(q, h * hd, (h + 1) * hd);
      Var kh = ag::slice_cols(k, h * hd, (h + 1) * hd);
      Var vh = ag::slice_cols(v, h * hd, (h + 1) * hd);
      Var scores = ag::scale(ag::matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(hd)));
      scores = ag::add_const(scores, mask);
      ctx.push_back(ag::matmul(ag::softmax_rows(scores), vh));
    }
    return wo(ag::concat_cols(ctx));
  }

  void collect(std::vector<Param*>& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
  }
};

struct FeedForward {
  Linear fc1, fc2;

  FeedForward() = default;
  FeedForward(const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng)
      : fc1(name + ".fc1", dim, hidden, rng), fc2(name + ".fc2", hidden, dim, rng) {}

  Var operator()(Var x) { return fc2(ag::relu(fc1(x))); }

  void collect(std::vector<Param*>& out) {
    fc1.collect(out);
    fc2.collect(out);
  }
};

// Pre-norm encoder layer: x + attn(ln1(x)), then x + ff(ln2(x)).
struct TransformerEncoderLayer {
  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  FeedForward ff;

  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(const std::string& name, std::size_t dim, std::size_t n_heads,
                          std::size_t ff_dim, Rng& rng)
      : ln1(name + ".ln1", dim),
        ln2(name + ".ln2", dim),
        attn(name + ".attn", dim, n_heads, rng),
        ff(name + ".ff", dim, ff_dim, rng) {}

  Var operator()(Var x, const std::vector<bool>& keep) {
    Var n1 = ln1(x);
    x = ag::add(x, attn(n1, n1, keep, false));
    return ag::add(x, ff(ln2(x)));
  }

  void collect(std::vector<Param*>& out) {
    ln1.collect(out);
    ln2.collect(out);
    attn.collect(out);
    ff.collect(out);
  }
};

struct TransformerEncoder {
  std::vector<TransformerEncoderLayer> layers;
  LayerNorm final_ln;

  TransformerEncoder() = default;
  TransformerEncoder(const std::string& name, std::size_t n_layers, std::size_t dim,
                     std::size_t n_heads, std::size_t ff_dim, Rng& rng)
      : final_ln(name + ".final_ln", dim) {
    for (std::size_t i = 0; i < n_layers; ++i)
      layers.emplace_back(name + ".layer" + std::to_string(i), dim, n_heads, ff_dim, rng);
  }

  Var operator()(Var x, const std::vector<bool>& keep) {
    for (auto& layer : layers) x = layer(x, keep);
    return final_ln(x);
  }

  void collect(std::vector<Param*>& out) {
    for (auto& layer : layers) layer.collect(out);
    final_ln.collect(out);
  }
};

struct TransformerDecoderLayer {
  LayerNorm ln1, ln2, ln3;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ff;

  TransformerDecoderLayer() = default;
  TransformerDecoderLayer(const std::string& name, std::size_t dim, std::size_t n_heads,
                          std::size_t ff_dim, Rng& rng)
      : ln1(name + ".ln1", dim),
        ln2(name + ".ln2", dim),
        ln3(name + ".ln3", dim),
        self_attn(name + ".self_attn", dim, n_heads, rng),
        cross_attn(name + ".cross_attn", dim, n_heads, rng),
        ff(name + ".ff", dim, ff_dim, rng) {}

  Var operator()(Var x, Var memory, const std::vector<bool>& memory_keep) {
    Var n1 = ln1(x);
    x = ag::add(x, self_attn(n1, n1, {}, true));
    x = ag::add(x, cross_attn(ln2(x), memory, memory_keep, false));
    return ag::add(x, ff(ln3(x)));
  }

  void collect(std::vector<Param*>& out) {
    ln1.collect(out);
    ln2.collect(out);
    ln3.collect(out);
    self_attn.collect(out);
    cross_attn.collect(out);
    ff.collect(out);
  }
};

struct TransformerDecoder {
  std::vector<TransformerDecoderLayer> layers;
  LayerNorm final_ln;

  TransformerDecoder() = default;
  TransformerDecoder(const std::string& name, std::size_t n_layers, std::size_t dim,
                     std::size_t n_heads, std::size_t ff_dim, Rng& rng)
      : final_ln(name + ".final_ln", dim) {
    for (std::size_t i = 0; i < n_layers; ++i)
      layers.emplace_back(name + ".layer" + std::to_string(i), dim, n_heads, ff_dim, rng);
  }

  Var operator()(Var x, Var memory, const std::vector<bool>& memory_keep) {
    for (auto& layer : layers) x = layer(x, memory, memory_keep);
    return final_ln(x);
  }

  void collect(std::vector<Param*>& out) {
    for (auto& layer : layers) layer.collect(out);
    final_ln.collect(out);
  }
};

struct Embedding {
  Param table;  // vocab x dim

  Embedding() = default;
  Embedding(const std::string& name, std::size_t vocab, std::size_t dim, Rng& rng)
      : table(name + ".table", Matrix(vocab, dim)) {
    for (double& x : table.value.raw()) x = rng.gaussian(0.0, 0.02);
  }

  Var operator()(const std::vector<int>& ids) {
    return ag::gather_rows(ag::param(table), ids);
  }

  void collect(std::vector<Param*>& out) { out.push_back(&table); }
};

inline Matrix sinusoidal_positions(std::size_t len, std::size_t dim) {
  Matrix pe(len, dim);
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t j = 0; j + 1 < dim; j += 2) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, static_cast<double>(j) / static_cast<double>(dim));
      pe(pos, j) = std::sin(angle);
      pe(pos, j + 1) = std::cos(angle);
    }
  }
  return pe;
}

inline Var add_positions(Var x) {
  return ag::add_const(x, sinusoidal_positions(x->val().rows(), x->val().cols()));
}

// Single-direction LSTM; gate layout [i f g o]. Forget-gate bias starts at 1.
struct LstmLayer {
  Param wx;  // in x 4h
  Param wh;  // h x 4h
  Param b;   // 1 x 4h
  std::size_t hidden = 0;

  LstmLayer() = default;
  LstmLayer(const std::string& name, std::size_t in, std::size_t h, Rng& rng)
      : wx(name + ".wx", glorot_uniform(in, 4 * h, rng)),
        wh(name + ".wh", glorot_uniform(h, 4 * h, rng)),
        b(name + ".b", Matrix(1, 4 * h)),
        hidden(h) {
    for (std::size_t j = h; j < 2 * h; ++j) b.value(0, j) = 1.0;
  }

  // xs is L x in; returns L x h
  Var operator()(Var xs, bool reverse) {
    const std::size_t len = xs->val().rows(), h = hidden;
    Var wx_v = ag::param(wx), wh_v = ag::param(wh), b_v = ag::param(b);
    Var h_prev = ag::constant(Matrix(1, h));
    Var c_prev = ag::constant(Matrix(1, h));
    std::vector<Var> outputs(len);
    for (std::size_t step = 0; step < len; ++step) {
      const std::size_t t = reverse ? len - 1 - step : step;
      Var x_t = ag::slice_rows(xs, t, t + 1);
      Var z = ag::add_rowvec(
          ag::add(ag::matmul(x_t, wx_v), ag::matmul(h_prev, wh_v)), b_v);
      Var i_g = ag::sigmoid(ag::slice_cols(z, 0, h));
      Var f_g = ag::sigmoid(ag::slice_cols(z, h, 2 * h));
      Var g_g = ag::tanh_op(ag::slice_cols(z, 2 * h, 3 * h));
      Var o_g = ag::sigmoid(ag::slice_cols(z, 3 * h, 4 * h));
      Var c_t = ag::add(ag::mul(f_g, c_prev), ag::mul(i_g, g_g));
      Var h_t = ag::mul(o_g, ag::tanh_op(c_t));
      outputs[t] = h_t;
      h_prev = h_t;
      c_prev = c_t;
    }
    return ag::concat_rows(outputs);
  }

  void collect(std::vector<Param*>& out) {
    out.push_back(&wx);
    out.push_back(&wh);
    out.push_back(&b);
  }
};

// Stack of bidirectional LSTM layers; each layer emits L x 2h.
struct BiLstm {
  std::vector<LstmLayer> fwd, bwd;
  std::size_t hidden = 0;

  BiLstm() = default;
  BiLstm(const std::string& name, std::size_t n_layers, std::size_t in, std::size_t h,
         Rng& rng)
      : hidden(h) {
    std::size_t dim = in;
    for (std::size_t i = 0; i < n_layers; ++i) {
      fwd.emplace_back(name + ".fwd" + std::to_string(i), dim, h, rng);
      bwd.emplace_back(name + ".bwd" + std::to_string(i), dim, h, rng);
      dim = 2 * h;
    }
  }

  Var operator()(Var xs) {
    for (std::size_t i = 0; i < fwd.size(); ++i)
      xs = ag::concat_cols({fwd[i](xs, false), bwd[i](xs, true)});
    return xs;
  }

  void collect(std::vector<Param*>& out) {
    for (auto& l : fwd) l.collect(out);
    for (auto& l : bwd) l.collect(out);
  }
};

inline std::size_t count_values(const std::vector<Param*>& params) {
  std::size_t n = 0;
  for (const Param* p : params) n += p->size();
  return n;
}

}  // namespace eegtext::nn
