#pragma once

// Visit-sequence encoder: attention-pooling over codes per visit,
// demographic concatenation, sinusoidal positions, a pre-norm transformer
// encoder stack, and attention-pooling over visits into one instance vector.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "temposurv/autodiff.hpp"
#include "temposurv/errors.hpp"
#include "temposurv/rng.hpp"

namespace temposurv {

using ad::Graph;
using ad::Mask;
using ad::Tensor;

struct PoolParams {
  Tensor w1;  // [in x in]
  Tensor b1;  // [in]
  Tensor w2;  // [in x 1]
};

struct TransformerLayerParams {
  std::vector<Tensor> wq, wk, wv;  // per head, [D x D/H]
  Tensor wo, bo;                   // [D x D], [D]
  Tensor ln1_gain, ln1_bias;       // [D]
  Tensor ln2_gain, ln2_bias;       // [D]
  Tensor ff1, ff1_bias;            // [D x 2D], [2D]
  Tensor ff2, ff2_bias;            // [2D x D], [D]
};

struct EncoderDims {
  int d_c = 16;
  int d_s = 4;
  int D = 32;
  int H = 2;
  int L = 2;
  int n_max = 8;
  int m_max = 16;

  int d_in() const { return d_c + d_s; }
  int d_head() const { return D / H; }

  void validate() const {
    if (d_c <= 0 || d_s < 0 || D <= 0 || H <= 0 || L <= 0 || n_max <= 0 || m_max <= 0)
      throw ConfigError("encoder dimensions must be positive (d_s may be 0)");
    if (D % H != 0)
      throw ConfigError("transformer dimension " + std::to_string(D) +
                        " not divisible by head count " + std::to_string(H));
  }
};

struct EncoderParams {
  EncoderDims dims;
  PoolParams visit_pool;     // over d_c
  PoolParams instance_pool;  // over D
  Tensor w_in, b_in;         // [d x D], [D]
  Tensor pos_enc;            // [n_max x D], fixed
  std::vector<TransformerLayerParams> layers;
  Tensor lnf_gain, lnf_bias;  // final layer norm, [D]

  static Tensor glorot(Rng& rng, int rows, int cols) {
    Tensor t = Tensor::zeros({rows, cols}, true);
    const double bound = std::sqrt(6.0 / (rows + cols));
    for (auto& v : t.values()) v = rng.uniform(-bound, bound);
    return t;
  }

  static Tensor zeros_vec(int n, double fill = 0.0) {
    Tensor t = Tensor::zeros({n}, true);
    for (auto& v : t.values()) v = fill;
    return t;
  }

  static PoolParams init_pool(Rng& rng, int in) {
    PoolParams p;
    p.w1 = glorot(rng, in, in);
    p.b1 = zeros_vec(in);
    p.w2 = glorot(rng, in, 1);
    return p;
  }

  static Tensor sinusoidal_table(int n_max, int D) {
    Tensor t = Tensor::zeros({n_max, D});
    for (int pos = 0; pos < n_max; ++pos)
      for (int i = 0; i < D; ++i) {
        const double angle = pos / std::pow(10000.0, (2.0 * (i / 2)) / D);
        t.values()[pos * D + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
      }
    return t;
  }

  static EncoderParams init(const EncoderDims& dims, Rng& rng) {
    dims.validate();
    EncoderParams p;
    p.dims = dims;
    p.visit_pool = init_pool(rng, dims.d_c);
    p.instance_pool = init_pool(rng, dims.D);
    p.w_in = glorot(rng, dims.d_in(), dims.D);
    p.b_in = zeros_vec(dims.D);
    p.pos_enc = sinusoidal_table(dims.n_max, dims.D);
    for (int l = 0; l < dims.L; ++l) {
      TransformerLayerParams layer;
      for (int h = 0; h < dims.H; ++h) {
        layer.wq.push_back(glorot(rng, dims.D, dims.d_head()));
        layer.wk.push_back(glorot(rng, dims.D, dims.d_head()));
        layer.wv.push_back(glorot(rng, dims.D, dims.d_head()));
      }
      layer.wo = glorot(rng, dims.D, dims.D);
      layer.bo = zeros_vec(dims.D);
      layer.ln1_gain = zeros_vec(dims.D, 1.0);
      layer.ln1_bias = zeros_vec(dims.D);
      layer.ln2_gain = zeros_vec(dims.D, 1.0);
      layer.ln2_bias = zeros_vec(dims.D);
      layer.ff1 = glorot(rng, dims.D, 2 * dims.D);
      layer.ff1_bias = zeros_vec(2 * dims.D);
      layer.ff2 = glorot(rng, 2 * dims.D, dims.D);
      layer.ff2_bias = zeros_vec(dims.D);
      p.layers.push_back(std::move(layer));
    }
    p.lnf_gain = zeros_vec(dims.D, 1.0);
    p.lnf_bias = zeros_vec(dims.D);
    return p;
  }

  void named_params(std::vector<std::pair<std::string, Tensor>>& out,
                    const std::string& prefix) const {
    out.emplace_back(prefix + ".visit_pool.w1", visit_pool.w1);
    out.emplace_back(prefix + ".visit_pool.b1", visit_pool.b1);
    out.emplace_back(prefix + ".visit_pool.w2", visit_pool.w2);
    out.emplace_back(prefix + ".instance_pool.w1", instance_pool.w1);
    out.emplace_back(prefix + ".instance_pool.b1", instance_pool.b1);
    out.emplace_back(prefix + ".instance_pool.w2", instance_pool.w2);
    out.emplace_back(prefix + ".w_in", w_in);
    out.emplace_back(prefix + ".b_in", b_in);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string lp = prefix + ".layer" + std::to_string(l);
      for (std::size_t h = 0; h < layers[l].wq.size(); ++h) {
        out.emplace_back(lp + ".wq" + std::to_string(h), layers[l].wq[h]);
        out.emplace_back(lp + ".wk" + std::to_string(h), layers[l].wk[h]);
        out.emplace_back(lp + ".wv" + std::to_string(h), layers[l].wv[h]);
      }
      out.emplace_back(lp + ".wo", layers[l].wo);
      out.emplace_back(lp + ".bo", layers[l].bo);
      out.emplace_back(lp + ".ln1_gain", layers[l].ln1_gain);
      out.emplace_back(lp + ".ln1_bias", layers[l].ln1_bias);
      out.emplace_back(lp + ".ln2_gain", layers[l].ln2_gain);
      out.emplace_back(lp + ".ln2_bias", layers[l].ln2_bias);
      out.emplace_back(lp + ".ff1", layers[l].ff1);
      out.emplace_back(lp + ".ff1_bias", layers[l].ff1_bias);
      out.emplace_back(lp + ".ff2", layers[l].ff2);
      out.emplace_back(lp + ".ff2_bias", layers[l].ff2_bias);
    }
    out.emplace_back(prefix + ".lnf_gain", lnf_gain);
    out.emplace_back(prefix + ".lnf_bias", lnf_bias);
  }
};

namespace detail {
inline int count_unmasked(const Mask& m) {
  int n = 0;
  for (auto b : m) n += b ? 1 : 0;
  return n;
}
}  // namespace detail

// attention-pooling shared by the visit level and the instance level:
// e = relu(V.w1 + b1).w2, alpha = masked softmax(e), out = alpha.V
inline std::pair<Tensor, Tensor> attention_pool(Graph& g, const Tensor& v, const Mask& mask,
                                                const PoolParams& p) {
  if (v.rank() != 2) throw DimensionError("attention_pool: rank-2 input required");
  const int m = v.shape()[0];
  if (static_cast<int>(mask.size()) != m)
    throw MaskError("attention_pool: mask length " + std::to_string(mask.size()) +
                    " does not match row count " + std::to_string(m));
  Tensor hidden = g.relu(g.add_bias(g.matmul(v, p.w1), p.b1));
  Tensor e = g.reshape(g.matmul(hidden, p.w2), {m});
  Tensor alpha = g.softmax(e, &mask);
  Tensor pooled = g.vecmat(alpha, v);
  return {pooled, alpha};
}

inline std::pair<Tensor, Tensor> pool_visit(Graph& g, const Tensor& code_embeds,
                                            const Mask& code_mask, const EncoderParams& p) {
  if (detail::count_unmasked(code_mask) == 0)
    throw ValidationError("pool_visit: visit has no unmasked codes");
  return attention_pool(g, code_embeds, code_mask, p.visit_pool);
}

inline std::pair<Tensor, Tensor> pool_instance(Graph& g, const Tensor& u_rows,
                                               const Mask& visit_mask,
                                               const EncoderParams& p) {
  if (detail::count_unmasked(visit_mask) == 0)
    throw ValidationError("pool_instance: all visits masked");
  return attention_pool(g, u_rows, visit_mask, p.instance_pool);
}

// replicate the static demographic vector across visit rows and append it
inline Tensor integrate_demographics(Graph& g, const Tensor& p, const Tensor& s) {
  if (p.rank() != 2) throw DimensionError("integrate_demographics: rank-2 visits required");
  if (!s.defined() || s.size() == 0) return p;
  if (s.rank() != 1) throw DimensionError("integrate_demographics: rank-1 demographics required");
  const int n = p.shape()[0];
  std::vector<Tensor> rows(static_cast<std::size_t>(n), s);
  return g.concat_cols(p, g.stack_rows(rows));
}

struct SequenceEncoding {
  Tensor u_rows;                            // [N x D]
  std::vector<std::vector<Tensor>> attn;    // [layer][head] -> [N x N]
};

inline SequenceEncoding encode_sequence_full(Graph& g, const Tensor& f, const Mask& visit_mask,
                                             const EncoderParams& p) {
  if (f.rank() != 2) throw DimensionError("encode_sequence: rank-2 input required");
  const int n = f.shape()[0];
  if (n > p.dims.n_max)
    throw ValidationError("encode_sequence: " + std::to_string(n) + " visits exceed n_max " +
                          std::to_string(p.dims.n_max));
  if (f.shape()[1] != p.dims.d_in())
    throw DimensionError("encode_sequence: input width " + std::to_string(f.shape()[1]) +
                         ", expected " + std::to_string(p.dims.d_in()));
  if (static_cast<int>(visit_mask.size()) != n)
    throw MaskError("encode_sequence: mask length does not match visit count");
  if (detail::count_unmasked(visit_mask) == 0)
    throw ValidationError("encode_sequence: all visits masked");

  const int D = p.dims.D;
  Tensor pe_slice = Tensor::zeros({n, D});
  std::copy(p.pos_enc.values().begin(), p.pos_enc.values().begin() + n * D,
            pe_slice.values().begin());

  SequenceEncoding out;
  Tensor x = g.add(g.add_bias(g.matmul(f, p.w_in), p.b_in), pe_slice);
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(p.dims.d_head()));

  for (const TransformerLayerParams& layer : p.layers) {
    Tensor xn = g.layer_norm(x, layer.ln1_gain, layer.ln1_bias);
    std::vector<Tensor> heads;
    std::vector<Tensor> layer_attn;
    for (int h = 0; h < p.dims.H; ++h) {
      Tensor q = g.matmul(xn, layer.wq[h]);
      Tensor k = g.matmul(xn, layer.wk[h]);
      Tensor v = g.matmul(xn, layer.wv[h]);
      Tensor scores = g.scale(g.matmul(q, g.transpose(k)), inv_sqrt_dh);
      Tensor attn = g.softmax(scores, &visit_mask);  // masks padded keys every row
      layer_attn.push_back(attn);
      heads.push_back(g.matmul(attn, v));
    }
    Tensor merged = heads[0];
    for (std::size_t h = 1; h < heads.size(); ++h) merged = g.concat_cols(merged, heads[h]);
    Tensor projected = g.add_bias(g.matmul(merged, layer.wo), layer.bo);
    x = g.add(x, projected);

    Tensor xn2 = g.layer_norm(x, layer.ln2_gain, layer.ln2_bias);
    Tensor ff = g.add_bias(
        g.matmul(g.relu(g.add_bias(g.matmul(xn2, layer.ff1), layer.ff1_bias)), layer.ff2),
        layer.ff2_bias);
    x = g.add(x, ff);
    out.attn.push_back(std::move(layer_attn));
  }
  out.u_rows = g.layer_norm(x, p.lnf_gain, p.lnf_bias);
  return out;
}

inline Tensor encode_sequence(Graph& g, const Tensor& f, const Mask& visit_mask,
                              const EncoderParams& p) {
  return encode_sequence_full(g, f, visit_mask, p).u_rows;
}

}  // namespace temposurv
