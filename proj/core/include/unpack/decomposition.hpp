#pragma once

#include <map>
#include <span>
#include <tuple>
#include <vector>

#include "unpack/forward.hpp"
#include "unpack/model.hpp"

namespace unpack {

/// w ⊙ (v − mean v) / sqrt(variance + eps).
VecD marginal_normalize(const VecD& v, double variance, const VecD& ln_weight, double eps);

/// Population std over the entries; 0 for fewer than two entries.
double score_attn(std::span<const double> contribs);
/// Euclidean norm.
double score_mlp(std::span<const double> contribs);

/// Per-component contributions to every selection score of one captured prompt.
///
/// Everything is f64. Site inputs are rebuilt as sum of normalized components plus the
/// normalized bias remainder plus the LN bias, so the completeness identities hold to
/// rounding. Lazily caches projected queries/keys; not thread-safe.
class Decomposer {
 public:
  Decomposer(const Model& model, const ForwardCapture& capture);

  const Model& model() const { return model_; }
  const ForwardCapture& capture() const { return cap_; }
  const ModelConfig& config() const { return model_.config(); }
  int n_pos() const { return cap_.n_pos(); }

  /// Components writing before the site (prefix of the dense index).
  int prefix(Site site) const { return components_before(config(), site); }
  double sigma(Site site, int pos) const;
  const VecD& ln_weight(Site site) const { return ln_w_[site.index()]; }
  const VecD& ln_bias(Site site) const { return ln_b_[site.index()]; }
  /// Raw components minus their hidden-dim mean, [K, d_model].
  const RowMatD& centered(int pos) const { return centered_[pos]; }

  /// Rows are c̃_k for k < prefix(site).
  RowMatD normalized(Site site, int pos) const;
  VecD normalized_bias(Site site, int pos) const;
  /// LN(X) rebuilt from the decomposition.
  VecD ln_output(Site site, int pos) const;

  /// Projected query / key of a head including bias and rotation, [d_head].
  const RowMatD& q_full(int l, int h) const;
  const RowMatD& k_full(int l, int h) const;
  double attn_logit(int l, int h, int q, int s) const;

  /// s_j(q,s) = <X_q, c_js>_QK for j < prefix(attn l); plus the term carried by biases.
  VecD key_contribs(int l, int h, int q, int s) const;
  double key_bias_term(int l, int h, int q, int s) const;
  /// s_j(q,s) = <c_jq, X_s>_QK.
  VecD query_contribs(int l, int h, int q, int s) const;
  double query_bias_term(int l, int h, int q, int s) const;
  /// Both of the above for every source s <= q at once, [prefix, q+1].
  RowMatD key_contribs_all(int l, int h, int q) const;
  RowMatD query_contribs_all(int l, int h, int q) const;
  /// Column s holds the folded key-side direction for (q, s): key contribution of component j
  /// is centered(s).row(j) · column s. [d_model, q+1].
  RowMatD key_directions(int l, int h, int q) const;
  /// diag(w / sigma) W_in at (mlp l, q), so that s_k = centered(q).row(k) · result.
  RowMatD mlp_input_matrix(int l, int q) const;

  /// Centered value vectors c̃_js W_V W_O, [prefix, d_model].
  RowMatD value_vectors(int l, int h, int s) const;
  /// <v_js, dir> for every j, without materializing the vectors.
  VecD value_projections(int l, int h, int s, const VecD& dir) const;
  /// U_s: sum of the centered value vectors at s.
  VecD value_sum(int l, int h, int s) const;
  /// Realized multi-head output direction sum_h sum_s alpha U_s at q.
  VecD attn_output(int l, int q) const;

  /// s_k[j] = c̃_kq W_in[:, j], [prefix(mlp l), d_mlp].
  RowMatD mlp_contribs(int l, int q) const;
  /// pre − b_in − sum_k s_k = (LN bias + normalized bias remainder) W_in.
  VecD mlp_bias_term(int l, int q) const;

 private:
  VecD rotate_back(const VecD& v, int pos) const;  // R_pos^T on the rotary dims
  VecD fold_input(Site site, int pos, const VecD& g) const;  // w ⊙ g / sigma

  const Model& model_;
  const ForwardCapture& cap_;
  std::vector<RowMatD> centered_;
  std::vector<VecD> ln_w_, ln_b_;
  mutable std::map<std::pair<int, int>, RowMatD> q_cache_, k_cache_;
};

}  // namespace unpack
