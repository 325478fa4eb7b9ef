#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "unpack/config.hpp"
#include "unpack/model.hpp"
#include "unpack/tensor.hpp"

namespace unpack {

struct CaptureFlags {
  bool components = true;
  bool attention = true;  // alpha plus rotated q/k per head
  bool mlp_pre = true;
  bool ln_stats = true;
  bool residuals = false;  // raw LN inputs per site
  bool logits = true;

  static CaptureFlags all() { return {true, true, true, true, true, true}; }
  static CaptureFlags lean() { return {false, false, false, false, false, true}; }
};

/// Everything attribution reads from one prompt. Read-only once forward() returns.
struct ForwardCapture {
  ModelConfig config;
  CaptureFlags flags;
  std::vector<int> token_ids;

  /// components[pos] is [n_components, d_model], rows in dense ComponentId order.
  /// Head rows exclude b_V, MLP rows exclude b_out.
  std::vector<RowMatF> components;
  /// Sum of every bias written before each site (b_O + sum_h b_V W_O, b_out), indexed by Site::index().
  std::vector<VecD> site_bias;
  /// LN input statistics, [site, pos]; var is the biased variance.
  RowMatD ln_mean, ln_var;
  /// alpha[l*H + h] is [query, source].
  std::vector<RowMatD> attn;
  /// Projected query/key per head including bias and rotation, [pos, d_head].
  std::vector<RowMatD> q_rot, k_rot;
  /// Pre-activations including b_in, [pos, d_mlp] per layer.
  std::vector<RowMatD> mlp_pre;
  /// Raw LN inputs, [pos, d_model] per site.
  std::vector<RowMatF> residuals;
  RowMatF logits;

  int n_pos() const { return static_cast<int>(token_ids.size()); }
  const RowMatD& alpha(int l, int h) const { return attn[l * config.n_heads + h]; }
  const RowMatD& q(int l, int h) const { return q_rot[l * config.n_heads + h]; }
  const RowMatD& k(int l, int h) const { return k_rot[l * config.n_heads + h]; }
  double ln_sigma(Site site, int pos) const;
  auto component(int index, int pos) const { return components[pos].row(index); }
};

/// Called with the raw residual entering each LayerNorm; may modify the copy that
/// the LayerNorm sees (the trunk itself is never changed).
using LnInputHook = std::function<void(Site, int pos, Eigen::Ref<Eigen::RowVectorXf>)>;

/// Runs the model over `token_ids` (no BOS is added). Throws UsageError on empty input,
/// out-of-vocabulary ids, or more positions than n_ctx.
ForwardCapture forward(const Model& model, std::span<const int> token_ids, CaptureFlags flags = {},
                       const LnInputHook& hook = {});

/// Writers strictly before `site`, with their vectors at `pos`.
std::vector<std::pair<ComponentId, VecD>> residual_components(const ForwardCapture& capture, Site site, int pos);

/// Rotates the leading rotary dims of a [pos, d_head] block in place (NeoX half layout).
void apply_rotary(const Model& model, Eigen::Ref<RowMatF> x);

}  // namespace unpack
