#include "vgw/flowformer.hpp"

#include <cmath>

#include "vgw/errors.hpp"

namespace vgw {

namespace {

void require_increasing(const std::vector<int>& frames, const char* what) {
  for (size_t i = 1; i < frames.size(); ++i) {
    if (frames[i] <= frames[i - 1]) {
      throw ValidationError(std::string(what) + ": frame indices must be strictly increasing");
    }
  }
}

// Xavier-normal initialization for a [fan_in, fan_out] matrix.
Tensor xavier(int64_t fan_in, int64_t fan_out, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  return Tensor::gaussian({fan_in, fan_out}, rng, stddev);
}

}  // namespace

int TokenLayout::grid() const {
  return static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_patch))));
}

void TokenLayout::validate() const {
  if (n_special != 5) throw ValidationError("layout: 5 special tokens required");
  const int g = grid();
  if (g * g != n_patch || n_patch <= 0) {
    throw ValidationError("layout: n_patch must be a perfect square, got " + std::to_string(n_patch));
  }
}

void ModelConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0) {
    throw ValidationError("model: d_model (" + std::to_string(d_model) +
                          ") must be a positive multiple of n_heads (" + std::to_string(n_heads) + ")");
  }
  if (head_dim() % 2 != 0) {
    throw ValidationError("model: head_dim must be even, got " + std::to_string(head_dim()));
  }
  if (L_d < 1 || L_s < 1) throw ValidationError("model: L_d and L_s must be >= 1");
  if (mlp_ratio < 1) throw ValidationError("model: mlp_ratio must be >= 1");
  if (k < 1 || m < 1) throw ValidationError("model: k and m must be >= 1");
  if (rope_base <= 1.0) throw ValidationError("model: rope_base must exceed 1");
}

std::vector<TokenPos> layout_positions(const TokenLayout& layout, const std::vector<int>& frames) {
  std::vector<TokenPos> pos;
  pos.reserve(frames.size() * static_cast<size_t>(layout.tokens()));
  const int g = layout.grid();
  for (int f : frames) {
    for (int s = 0; s < layout.n_special; ++s) pos.push_back({f, 0, 0});
    for (int p = 0; p < layout.n_patch; ++p) pos.push_back({f, p / g, p % g});
  }
  return pos;
}

NodeId Bound::id(const std::string& name) const {
  const int i = params->index(name);
  if (i < 0) throw ValidationError("bound model: unknown parameter '" + name + "'");
  return ids[static_cast<size_t>(i)];
}

Former::Former(ModelConfig cfg, TokenLayout layout) : cfg_(cfg), layout_(layout) {
  cfg_.validate();
  layout_.validate();
}

ParamSet Former::init_params(uint64_t seed) const {
  Rng rng(derive_seed(seed, 0xf0a2e7));
  ParamSet p;
  const int64_t d = cfg_.d_model;
  const int64_t dt = cfg_.d_model;
  const int64_t feat = 2 * kTimeFreqs;
  const int64_t hidden = d * cfg_.mlp_ratio;

  p.add("time.w1", xavier(feat, dt, rng));
  p.add("time.b1", Tensor({1, dt}));
  p.add("time.w2", xavier(dt, dt, rng));
  p.add("time.b2", Tensor({1, dt}));

  auto add_block = [&](const std::string& blk) {
    p.add(blk + ".attn.wq", xavier(d, d, rng));
    p.add(blk + ".attn.bq", Tensor({1, d}));
    p.add(blk + ".attn.wk", xavier(d, d, rng));
    p.add(blk + ".attn.bk", Tensor({1, d}));
    p.add(blk + ".attn.wv", xavier(d, d, rng));
    p.add(blk + ".attn.bv", Tensor({1, d}));
    p.add(blk + ".attn.wo", xavier(d, d, rng));
    p.add(blk + ".attn.bo", Tensor({1, d}));
    p.add(blk + ".mlp.w1", xavier(d, hidden, rng));
    p.add(blk + ".mlp.b1", Tensor({1, hidden}));
    p.add(blk + ".mlp.w2", xavier(hidden, d, rng));
    p.add(blk + ".mlp.b2", Tensor({1, d}));
    // adaLN modulation head: zero so every residual branch starts closed.
    p.add(blk + ".mod.w", Tensor({dt, 6 * d}));
    p.add(blk + ".mod.b", Tensor({1, 6 * d}));
  };
  for (int i = 0; i < cfg_.L_d; ++i) add_block("dual" + std::to_string(i));
  for (int i = 0; i < cfg_.L_s; ++i) add_block("single" + std::to_string(i));

  // Zero-initialized output head: a fresh model predicts exactly zero.
  p.add("out.w", Tensor({d, d}));
  p.add("out.b", Tensor({1, d}));
  return p;
}

Bound Former::bind(Graph& g, const ParamSet& p, bool for_grad) const {
  Bound b;
  b.params = &p;
  b.ids.reserve(p.tensors.size());
  for (size_t i = 0; i < p.tensors.size(); ++i) {
    b.ids.push_back(g.leaf(&p.tensors[i], p.names[i], for_grad));
  }
  return b;
}

Tensor Former::time_features(double tau, double base) {
  Tensor f({1, 2 * kTimeFreqs});
  for (int i = 0; i < kTimeFreqs; ++i) {
    const double w = std::pow(base, static_cast<double>(i) / static_cast<double>(kTimeFreqs));
    f.data[static_cast<size_t>(i)] = std::sin(tau * w);
    f.data[static_cast<size_t>(kTimeFreqs + i)] = std::cos(tau * w);
  }
  return f;
}

std::vector<BlockMod> Former::time_embed(Graph& g, const Bound& b, double tau) const {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw ValidationError("time_embed: tau must lie in [0, 1], got " + std::to_string(tau));
  }
  const int64_t d = cfg_.d_model;
  const NodeId feats = g.constant(time_features(tau, cfg_.rope_base));
  const NodeId h = g.gelu(g.add(g.matmul(feats, b.id("time.w1")), b.id("time.b1")));
  const NodeId temb = g.add(g.matmul(h, b.id("time.w2")), b.id("time.b2"));
  const NodeId act = g.gelu(temb);

  std::vector<BlockMod> mods;
  auto block_mod = [&](const std::string& blk) {
    const NodeId mod = g.add(g.matmul(act, b.id(blk + ".mod.w")), b.id(blk + ".mod.b"));
    BlockMod bm;
    bm.attn.scale = g.slice(mod, 1, 0 * d, d);
    bm.attn.shift = g.slice(mod, 1, 1 * d, d);
    bm.attn.gate = g.slice(mod, 1, 2 * d, d);
    bm.mlp.scale = g.slice(mod, 1, 3 * d, d);
    bm.mlp.shift = g.slice(mod, 1, 4 * d, d);
    bm.mlp.gate = g.slice(mod, 1, 5 * d, d);
    return bm;
  };
  for (int i = 0; i < cfg_.L_d; ++i) mods.push_back(block_mod("dual" + std::to_string(i)));
  for (int i = 0; i < cfg_.L_s; ++i) mods.push_back(block_mod("single" + std::to_string(i)));
  return mods;
}

NodeId Former::adaln(Graph& g, NodeId x, const SublayerMod& mod) const {
  const NodeId ln = g.layer_norm(x);
  return g.add(g.add(ln, g.mul(ln, mod.scale)), mod.shift);
}

Former::RopeTables Former::rope_tables(const std::vector<TokenPos>& pos) const {
  const int hd = cfg_.head_dim();
  const int pairs = hd / 2;
  const int base_sz = pairs / 3;
  const int rem = pairs % 3;
  // Pair counts per axis group; frame first, then grid row, then column.
  const int sizes[3] = {base_sz + (rem > 0 ? 1 : 0), base_sz + (rem > 1 ? 1 : 0), base_sz};

  RopeTables t;
  t.cos_t = Tensor({static_cast<int64_t>(pos.size()), hd});
  t.sin_t = Tensor({static_cast<int64_t>(pos.size()), hd});
  for (size_t r = 0; r < pos.size(); ++r) {
    const double axes[3] = {static_cast<double>(pos[r].frame), static_cast<double>(pos[r].row),
                            static_cast<double>(pos[r].col)};
    int pair = 0;
    for (int gidx = 0; gidx < 3; ++gidx) {
      for (int j = 0; j < sizes[gidx]; ++j, ++pair) {
        const double freq =
            std::pow(cfg_.rope_base, -static_cast<double>(j) / static_cast<double>(sizes[gidx]));
        const double a = axes[gidx] * freq;
        const double c = std::cos(a), s = std::sin(a);
        t.cos_t.at(static_cast<int64_t>(r), 2 * pair) = c;
        t.cos_t.at(static_cast<int64_t>(r), 2 * pair + 1) = c;
        t.sin_t.at(static_cast<int64_t>(r), 2 * pair) = s;
        t.sin_t.at(static_cast<int64_t>(r), 2 * pair + 1) = s;
      }
    }
  }
  return t;
}

Tensor Former::pair_swap() const {
  const int hd = cfg_.head_dim();
  Tensor p({hd, hd});
  for (int j = 0; j < hd / 2; ++j) {
    p.at(2 * j + 1, 2 * j) = -1.0;  // y_{2j}   = -x_{2j+1}
    p.at(2 * j, 2 * j + 1) = 1.0;   // y_{2j+1} =  x_{2j}
  }
  return p;
}

NodeId Former::rope(Graph& g, NodeId x, const std::vector<TokenPos>& pos) const {
  const Tensor& tx = g.value(x);
  if (tx.shape.size() != 2 || tx.shape[0] != static_cast<int64_t>(pos.size()) ||
      tx.shape[1] != cfg_.head_dim()) {
    throw ValidationError("rope: input must be [" + std::to_string(pos.size()) + ", " +
                          std::to_string(cfg_.head_dim()) + "], got " + shape_str(tx.shape));
  }
  RopeTables t = rope_tables(pos);
  const NodeId cos_n = g.constant(std::move(t.cos_t));
  const NodeId sin_n = g.constant(std::move(t.sin_t));
  const NodeId swap = g.constant(pair_swap());
  return g.add(g.mul(x, cos_n), g.mul(g.matmul(x, swap), sin_n));
}

NodeId Former::attention(Graph& g, const Bound& b, const std::string& prefix, NodeId q_in,
                         NodeId kv_in, const std::vector<TokenPos>& q_pos,
                         const std::vector<TokenPos>& kv_pos) const {
  const int hd = cfg_.head_dim();
  const NodeId q = g.add(g.matmul(q_in, b.id(prefix + ".wq")), b.id(prefix + ".bq"));
  const NodeId k = g.add(g.matmul(kv_in, b.id(prefix + ".wk")), b.id(prefix + ".bk"));
  const NodeId v = g.add(g.matmul(kv_in, b.id(prefix + ".wv")), b.id(prefix + ".bv"));
  const NodeId wo = b.id(prefix + ".wo");

  NodeId merged = -1;
  for (int h = 0; h < cfg_.n_heads; ++h) {
    const NodeId qh = rope(g, g.slice(q, 1, h * hd, hd), q_pos);
    const NodeId kh = rope(g, g.slice(k, 1, h * hd, hd), kv_pos);
    const NodeId vh = g.slice(v, 1, h * hd, hd);
    NodeId scores = g.scale(g.matmul(qh, g.transpose(kh)), 1.0 / std::sqrt(static_cast<double>(hd)));
    const NodeId att = g.softmax(scores);
    const NodeId oh = g.matmul(att, vh);
    // Merging heads through per-head row blocks of the output projection.
    const NodeId contrib = g.matmul(oh, g.slice(wo, 0, h * hd, hd));
    merged = (merged < 0) ? contrib : g.add(merged, contrib);
  }
  return g.add(merged, b.id(prefix + ".bo"));
}

NodeId Former::mlp(Graph& g, const Bound& b, const std::string& prefix, NodeId x) const {
  const NodeId h = g.gelu(g.add(g.matmul(x, b.id(prefix + ".w1")), b.id(prefix + ".b1")));
  return g.add(g.matmul(h, b.id(prefix + ".w2")), b.id(prefix + ".b2"));
}

NodeId Former::dual_block(Graph& g, const Bound& b, int block, NodeId x, NodeId cond,
                          const std::vector<TokenPos>& chunk_pos,
                          const std::vector<TokenPos>& cond_pos, const BlockMod& mod) const {
  const std::string blk = "dual" + std::to_string(block);
  const NodeId xa = adaln(g, x, mod.attn);
  // Queries come from the modulated chunk; keys and values additionally see
  // the raw condition tokens.
  const NodeId kv = g.concat_tokens(xa, cond);
  std::vector<TokenPos> kv_pos = chunk_pos;
  kv_pos.insert(kv_pos.end(), cond_pos.begin(), cond_pos.end());
  const NodeId att = attention(g, b, blk + ".attn", xa, kv, chunk_pos, kv_pos);
  NodeId out = g.add(x, g.mul(att, mod.attn.gate));
  const NodeId xm = adaln(g, out, mod.mlp);
  out = g.add(out, g.mul(mlp(g, b, blk + ".mlp", xm), mod.mlp.gate));
  return out;
}

NodeId Former::single_block(Graph& g, const Bound& b, int block, NodeId x,
                            const std::vector<TokenPos>& chunk_pos, const BlockMod& mod) const {
  const std::string blk = "single" + std::to_string(block);
  const NodeId xa = adaln(g, x, mod.attn);
  const NodeId att = attention(g, b, blk + ".attn", xa, xa, chunk_pos, chunk_pos);
  NodeId out = g.add(x, g.mul(att, mod.attn.gate));
  const NodeId xm = adaln(g, out, mod.mlp);
  out = g.add(out, g.mul(mlp(g, b, blk + ".mlp", xm), mod.mlp.gate));
  return out;
}

NodeId Former::forward(Graph& g, const Bound& b, NodeId z_tau, double tau, NodeId cond,
                       const std::vector<int>& cond_frames,
                       const std::vector<int>& chunk_frames) const {
  const int n = layout_.tokens();
  const Tensor& zt = g.value(z_tau);
  const Tensor& ct = g.value(cond);
  if (static_cast<int>(cond_frames.size()) != cfg_.k ||
      static_cast<int>(chunk_frames.size()) != cfg_.m) {
    throw ValidationError("forward: expected " + std::to_string(cfg_.k) + " condition and " +
                          std::to_string(cfg_.m) + " chunk frames, got " +
                          std::to_string(cond_frames.size()) + " and " +
                          std::to_string(chunk_frames.size()));
  }
  require_increasing(cond_frames, "forward condition");
  require_increasing(chunk_frames, "forward chunk");
  if (cond_frames.back() >= chunk_frames.front()) {
    throw ValidationError("forward: condition frames must precede chunk frames");
  }
  if (zt.shape != Shape{static_cast<int64_t>(cfg_.m) * n, cfg_.d_model}) {
    throw ValidationError("forward: chunk tokens must be [" + std::to_string(cfg_.m * n) + ", " +
                          std::to_string(cfg_.d_model) + "], got " + shape_str(zt.shape));
  }
  if (ct.shape != Shape{static_cast<int64_t>(cfg_.k) * n, cfg_.d_model}) {
    throw ValidationError("forward: condition tokens must be [" + std::to_string(cfg_.k * n) +
                          ", " + std::to_string(cfg_.d_model) + "], got " + shape_str(ct.shape));
  }

  // Window-relative frame coordinates keep rotary phases in the range seen
  // during training regardless of absolute rollout position.
  const int f0 = cond_frames.front();
  std::vector<int> rel_cond, rel_chunk;
  for (int f : cond_frames) rel_cond.push_back(f - f0);
  for (int f : chunk_frames) rel_chunk.push_back(f - f0);
  const std::vector<TokenPos> cond_pos = layout_positions(layout_, rel_cond);
  const std::vector<TokenPos> chunk_pos = layout_positions(layout_, rel_chunk);

  const std::vector<BlockMod> mods = time_embed(g, b, tau);
  NodeId x = z_tau;
  for (int i = 0; i < cfg_.L_d; ++i) {
    try {
      x = dual_block(g, b, i, x, cond, chunk_pos, cond_pos, mods[static_cast<size_t>(i)]);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " in dual block " + std::to_string(i));
    }
  }
  for (int i = 0; i < cfg_.L_s; ++i) {
    try {
      x = single_block(g, b, i, x, chunk_pos, mods[static_cast<size_t>(cfg_.L_d + i)]);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " in single block " + std::to_string(i));
    }
  }
  return g.add(g.matmul(g.layer_norm(x), b.id("out.w")), b.id("out.b"));
}

Tensor Former::forward_value(const ParamSet& p, const Tensor& z_tau, double tau,
                             const Tensor& cond, const std::vector<int>& cond_frames,
                             const std::vector<int>& chunk_frames) const {
  Graph g;
  const Bound b = bind(g, p, /*for_grad=*/false);
  const NodeId zt = g.leaf(&z_tau);
  const NodeId c = g.leaf(&cond);
  const NodeId out = forward(g, b, zt, tau, c, cond_frames, chunk_frames);
  return g.value(out);
}

}  // namespace vgw
