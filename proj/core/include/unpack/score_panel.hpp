#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "unpack/config.hpp"
#include "unpack/model.hpp"
#include "unpack/tensor.hpp"

namespace unpack {

/// Component -> sublayer communication scores over a prompt set.
///
/// Receivers are every attention head (A<l>.H<h>, index l*H + h) followed by every MLP
/// (MLP<l>, index L*H + l). Entries where the source does not write before the receiver are 0.
struct ScorePanel {
  ModelConfig config;
  int n_prompts = 0;
  long n_positions = 0;  // (prompt, query) pairs averaged over

  RowMatD attn_score;  // [K, L*H]: mean over (prompt, q) of std over sources
  RowMatD mlp_score;   // [K, L]:   mean over (prompt, q) of the L2 norm over neurons
  /// sum over receiver heads of |mean over (prompt, q) of mean over sources|
  VecD attn_strength;
  /// sum over MLP layers of || mean over (prompt, q) of the per-neuron contributions ||
  VecD mlp_strength;

  int n_receivers() const { return config.n_layers * (config.n_heads + 1); }
  std::string receiver_name(int r) const;
  bool upstream(int component, int receiver) const;
};

/// Streams the prompt set: one prompt's capture at a time, and within each receiver one
/// source layer's component block at a time, reducing immediately. Prompts are processed in
/// lexicographic token order, so the result does not depend on input order.
ScorePanel stream_score_panel(const Model& model, const std::vector<std::vector<int>>& prompts);

/// Tab-separated: component, receiver, kind, score; then one strength row per component.
void write_panel_tsv(const ScorePanel& panel, std::ostream& out);
/// Container pair (manifest + blob) holding the four panel tensors.
void write_panel_binary(const ScorePanel& panel, const std::filesystem::path& manifest,
                        const std::filesystem::path& blob);
ScorePanel read_panel_binary(const std::filesystem::path& manifest, const std::filesystem::path& blob);

}  // namespace unpack
