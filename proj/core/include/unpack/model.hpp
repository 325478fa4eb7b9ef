#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "unpack/config.hpp"
#include "unpack/tensor.hpp"
#include "unpack/tokenizer.hpp"

namespace unpack {

/// Name and shape of one tensor the runtime expects for a given config.
struct TensorSpec {
  std::string name;
  std::vector<std::int64_t> shape;
  bool optional = false;
};

/// Tensor layout (per layer l, heads stacked on the leading axis):
///
///   embed.weight [vocab, d_model]         pos_embed.weight [n_ctx, d_model] (learned only)
///   blocks.l.ln1.{weight,bias} [d_model]  blocks.l.ln2.{weight,bias} [d_model]
///   blocks.l.attn.W_{Q,K,V} [H, d_model, d_head]   blocks.l.attn.b_{Q,K,V} [H, d_head]
///   blocks.l.attn.W_O [H, d_head, d_model]         blocks.l.attn.b_O [d_model]
///   blocks.l.mlp.W_in [d_model, d_mlp]  b_in [d_mlp]  W_out [d_mlp, d_model]  b_out [d_model]
///   ln_final.{weight,bias} [d_model]      unembed.weight [vocab, d_model] (absent when tied)
///   unembed.bias [vocab] (optional)
std::vector<TensorSpec> expected_tensors(const ModelConfig& cfg);

/// Immutable after construction; safe to share across threads.
class Model {
 public:
  Model(ModelConfig cfg, std::map<std::string, Tensor> tensors, std::shared_ptr<const Tokenizer> tokenizer = nullptr);

  const ModelConfig& config() const { return cfg_; }
  const Tokenizer* tokenizer() const { return tokenizer_.get(); }
  std::shared_ptr<const Tokenizer> shared_tokenizer() const { return tokenizer_; }

  bool has(const std::string& name) const { return tensors_.contains(name); }
  const Tensor& tensor(const std::string& name) const;
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

  ConstMatMapF embed() const;
  ConstMatMapF pos_embed() const;
  ConstMatMapF unembed() const;  // [vocab, d_model]
  const float* unembed_bias() const { return unembed_bias_; }

  ConstVecMapF ln1_w(int l) const { return vec(layers_[l].ln1_w, cfg_.d_model); }
  ConstVecMapF ln1_b(int l) const { return vec(layers_[l].ln1_b, cfg_.d_model); }
  ConstVecMapF ln2_w(int l) const { return vec(layers_[l].ln2_w, cfg_.d_model); }
  ConstVecMapF ln2_b(int l) const { return vec(layers_[l].ln2_b, cfg_.d_model); }
  ConstVecMapF lnf_w() const { return vec(lnf_w_, cfg_.d_model); }
  ConstVecMapF lnf_b() const { return vec(lnf_b_, cfg_.d_model); }

  ConstMatMapF w_q(int l, int h) const { return head_in(layers_[l].w_q, h); }
  ConstMatMapF w_k(int l, int h) const { return head_in(layers_[l].w_k, h); }
  ConstMatMapF w_v(int l, int h) const { return head_in(layers_[l].w_v, h); }
  ConstMatMapF w_o(int l, int h) const;  // [d_head, d_model]
  ConstVecMapF b_q(int l, int h) const { return vec(layers_[l].b_q + h * cfg_.d_head, cfg_.d_head); }
  ConstVecMapF b_k(int l, int h) const { return vec(layers_[l].b_k + h * cfg_.d_head, cfg_.d_head); }
  ConstVecMapF b_v(int l, int h) const { return vec(layers_[l].b_v + h * cfg_.d_head, cfg_.d_head); }
  ConstVecMapF b_o(int l) const { return vec(layers_[l].b_o, cfg_.d_model); }

  ConstMatMapF w_in(int l) const;   // [d_model, d_mlp]
  ConstMatMapF w_out(int l) const;  // [d_mlp, d_model]
  ConstVecMapF b_in(int l) const { return vec(layers_[l].b_in, cfg_.d_mlp); }
  ConstVecMapF b_out(int l) const { return vec(layers_[l].b_out, cfg_.d_model); }

  /// Rotary tables, [n_ctx, rotary_dims/2] each.
  const RowMatF& rotary_cos() const { return rot_cos_; }
  const RowMatF& rotary_sin() const { return rot_sin_; }

  /// phi(x) of the configured activation and the limit phi(x)/x as x -> 0.
  double activation(double x) const;
  double activation_slope_at_zero() const;

 private:
  struct LayerPtrs {
    const float *ln1_w, *ln1_b, *ln2_w, *ln2_b;
    const float *w_q, *w_k, *w_v, *w_o, *b_q, *b_k, *b_v, *b_o;
    const float *w_in, *b_in, *w_out, *b_out;
  };
  static ConstVecMapF vec(const float* p, int n) { return ConstVecMapF(p, n); }
  ConstMatMapF head_in(const float* base, int h) const;

  ModelConfig cfg_;
  std::map<std::string, Tensor> tensors_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  std::vector<LayerPtrs> layers_;
  const float* embed_ = nullptr;
  const float* pos_ = nullptr;
  const float* unembed_ = nullptr;
  const float* unembed_bias_ = nullptr;
  const float* lnf_w_ = nullptr;
  const float* lnf_b_ = nullptr;
  RowMatF rot_cos_, rot_sin_;
};

/// Manifest field list for a config (the inverse of config_from_fields).
std::vector<std::pair<std::string, std::string>> config_fields(const ModelConfig& cfg);
ModelConfig config_from_fields(const std::vector<std::pair<std::string, std::string>>& fields);

/// Loads `manifest`, `weights.bin`, `vocab` and `merges` from a model directory.
/// Either returns a fully validated model or throws ModelError naming the problem.
Model load_model(const std::filesystem::path& dir);

/// Writes the container layout that load_model reads (tokenizer files included when present).
void save_model(const Model& model, const std::filesystem::path& dir);

}  // namespace unpack
