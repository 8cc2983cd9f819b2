#pragma once

#include <cstdint>
#include <vector>

#include "vgw/fdcheck.hpp"
#include "vgw/graph.hpp"

namespace vgw {

struct TokenLayout {
  int n_special = 5;
  int n_patch = 16;

  int tokens() const { return n_special + n_patch; }
  int grid() const;
  void validate() const;
};

struct ModelConfig {
  int d_model = 256;
  int n_heads = 4;
  int L_d = 8;  // dual-stream depth
  int L_s = 8;  // single-stream depth
  int mlp_ratio = 4;
  int k = 2;  // context frames
  int m = 2;  // predicted frames per chunk
  double rope_base = 10000.0;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;
};

// Per-token rotary position: separate phase ladders for the frame, grid-row
// and grid-column axes, packed into thirds of each head.
struct TokenPos {
  int frame = 0;
  int row = 0;
  int col = 0;
};

std::vector<TokenPos> layout_positions(const TokenLayout& layout, const std::vector<int>& frames);

// Time-conditioning vectors for one transformer sublayer.
struct SublayerMod {
  NodeId scale = -1;
  NodeId shift = -1;
  NodeId gate = -1;
};

struct BlockMod {
  SublayerMod attn;
  SublayerMod mlp;
};

// Parameter leaves bound into one graph.
struct Bound {
  std::vector<NodeId> ids;  // aligned with ParamSet order
  const ParamSet* params = nullptr;
  NodeId id(const std::string& name) const;
};

// Chunk-denoising transformer over frozen latents: L_d dual-stream blocks
// whose attention reads [modulated chunk; raw condition], then L_s
// single-stream blocks over the chunk alone, with adaLN-zero gating
// everywhere and a zero-initialized output projection.
class Former {
 public:
  Former(ModelConfig cfg, TokenLayout layout);

  const ModelConfig& config() const { return cfg_; }
  const TokenLayout& layout() const { return layout_; }

  ParamSet init_params(uint64_t seed) const;

  Bound bind(Graph& g, const ParamSet& p, bool for_grad) const;

  // Sinusoidal features of tau (256 frequencies) -> 2-layer MLP -> per-block
  // scale/shift/gate triples for each sublayer. Gate projections start at
  // zero, so a fresh model is an identity trunk.
  std::vector<BlockMod> time_embed(Graph& g, const Bound& b, double tau) const;

  NodeId adaln(Graph& g, NodeId x, const SublayerMod& mod) const;

  NodeId dual_block(Graph& g, const Bound& b, int block, NodeId x, NodeId cond,
                    const std::vector<TokenPos>& chunk_pos,
                    const std::vector<TokenPos>& cond_pos, const BlockMod& mod) const;

  NodeId single_block(Graph& g, const Bound& b, int block, NodeId x,
                      const std::vector<TokenPos>& chunk_pos, const BlockMod& mod) const;

  // Full denoiser: z_tau holds m frames of corrupted tokens, cond holds k
  // frames of conditioning tokens; both are flattened [frames*tokens, d].
  // Condition frames must precede chunk frames.
  NodeId forward(Graph& g, const Bound& b, NodeId z_tau, double tau, NodeId cond,
                 const std::vector<int>& cond_frames,
                 const std::vector<int>& chunk_frames) const;

  // Value-only convenience wrapper (no gradient bookkeeping).
  Tensor forward_value(const ParamSet& p, const Tensor& z_tau, double tau, const Tensor& cond,
                       const std::vector<int>& cond_frames,
                       const std::vector<int>& chunk_frames) const;

  // Rotary application with explicit tables; public for property tests.
  NodeId rope(Graph& g, NodeId x, const std::vector<TokenPos>& pos) const;

  static Tensor time_features(double tau, double base);
  static constexpr int kTimeFreqs = 256;

 private:
  struct RopeTables {
    Tensor cos_t;  // [tokens, head_dim]
    Tensor sin_t;
  };
  RopeTables rope_tables(const std::vector<TokenPos>& pos) const;
  Tensor pair_swap() const;  // [head_dim, head_dim] constant

  NodeId attention(Graph& g, const Bound& b, const std::string& prefix, NodeId q_in, NodeId kv_in,
                   const std::vector<TokenPos>& q_pos, const std::vector<TokenPos>& kv_pos) const;
  NodeId mlp(Graph& g, const Bound& b, const std::string& prefix, NodeId x) const;

  ModelConfig cfg_;
  TokenLayout layout_;
};

}  // namespace vgw
