#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace unpack {

enum class BlockLayout { sequential, parallel };
enum class PositionScheme { learned, rotary };

// gelu is the tanh approximation used by GPT-2; gelu_erf is the exact form used by GPT-NeoX.
enum class Activation { gelu, gelu_erf, relu };

std::string_view to_string(BlockLayout v);
std::string_view to_string(PositionScheme v);
std::string_view to_string(Activation v);
BlockLayout parse_block_layout(std::string_view s);
PositionScheme parse_position_scheme(std::string_view s);
Activation parse_activation(std::string_view s);

struct ModelConfig {
  int n_layers = 0;
  int n_heads = 0;
  int d_model = 0;
  int d_head = 0;
  int d_mlp = 0;
  int vocab_size = 0;
  int n_ctx = 1024;
  BlockLayout block_layout = BlockLayout::sequential;
  PositionScheme position_scheme = PositionScheme::learned;
  double rotary_fraction = 1.0;
  double rotary_base = 10000.0;
  Activation activation = Activation::gelu;
  double ln_epsilon = 1e-5;
  bool tied_embeddings = false;
  int bos_token_id = -1;

  /// Throws ModelError when a field is out of range.
  void validate() const;

  int n_components() const { return 1 + n_layers * (n_heads + 1); }
  int rotary_dims() const;
};

/// One writer into the residual stream.
///
/// Components are totally ordered by dataflow: the embedding first, then for each
/// layer its heads in index order followed by its MLP. The dense index used by
/// ForwardCapture follows the same order, so every sublayer input reads a prefix.
class ComponentId {
 public:
  enum class Kind : std::uint8_t { embedding, attn_head, mlp };

  constexpr ComponentId() = default;

  static constexpr ComponentId embedding() { return ComponentId(Kind::embedding, -1, -1); }
  static constexpr ComponentId head(int layer, int head) {
    return ComponentId(Kind::attn_head, layer, head);
  }
  static constexpr ComponentId mlp(int layer) { return ComponentId(Kind::mlp, layer, -1); }

  static ComponentId from_index(int index, const ModelConfig& cfg);
  /// Accepts "embed", "A<layer>.H<head>" and "MLP<layer>".
  static ComponentId parse(std::string_view name);

  constexpr Kind kind() const { return kind_; }
  constexpr int layer() const { return layer_; }
  constexpr int head_index() const { return head_; }
  constexpr bool is_embedding() const { return kind_ == Kind::embedding; }
  constexpr bool is_head() const { return kind_ == Kind::attn_head; }
  constexpr bool is_mlp() const { return kind_ == Kind::mlp; }

  int index(const ModelConfig& cfg) const;
  bool valid_for(const ModelConfig& cfg) const;
  std::string name() const;

  constexpr auto operator<=>(const ComponentId& o) const {
    if (auto c = order_key() <=> o.order_key(); c != 0) return c;
    return head_ <=> o.head_;
  }
  constexpr bool operator==(const ComponentId& o) const = default;

 private:
  constexpr ComponentId(Kind k, int layer, int head) : kind_(k), layer_(layer), head_(head) {}
  constexpr int order_key() const {
    // embedding < layer l heads < layer l mlp < layer l+1 ...
    if (kind_ == Kind::embedding) return -1;
    return layer_ * 2 + (kind_ == Kind::mlp ? 1 : 0);
  }

  Kind kind_ = Kind::embedding;
  int layer_ = -1;
  int head_ = -1;
};

enum class Sublayer { attn, mlp, final_ln };

/// An LN input site: the residual stream entering one LayerNorm.
struct Site {
  int layer = 0;
  Sublayer sublayer = Sublayer::attn;

  static Site attn(int l) { return {l, Sublayer::attn}; }
  static Site mlp(int l) { return {l, Sublayer::mlp}; }
  static Site final_ln(const ModelConfig& cfg) { return {cfg.n_layers, Sublayer::final_ln}; }

  /// Dense index: 2l for attention input, 2l+1 for MLP input, 2L for the final LN.
  int index() const;
  static int count(const ModelConfig& cfg) { return 2 * cfg.n_layers + 1; }
  bool valid_for(const ModelConfig& cfg) const;
  std::string name() const;

  bool operator==(const Site&) const = default;
};

/// Number of components that write strictly before `site` in the dataflow.
/// With the parallel layout the layer's own heads are not inputs of its MLP.
int components_before(const ModelConfig& cfg, Site site);

}  // namespace unpack
