#include "unpack/config.hpp"

#include <charconv>
#include <cmath>

#include "unpack/errors.hpp"

namespace unpack {

std::string_view to_string(BlockLayout v) {
  return v == BlockLayout::sequential ? "sequential" : "parallel";
}

std::string_view to_string(PositionScheme v) {
  return v == PositionScheme::learned ? "learned" : "rotary";
}

std::string_view to_string(Activation v) {
  switch (v) {
    case Activation::gelu: return "gelu";
    case Activation::gelu_erf: return "gelu_erf";
    case Activation::relu: return "relu";
  }
  return "gelu";
}

BlockLayout parse_block_layout(std::string_view s) {
  if (s == "sequential") return BlockLayout::sequential;
  if (s == "parallel") return BlockLayout::parallel;
  throw ModelError("unsupported block_layout '" + std::string(s) + "'");
}

PositionScheme parse_position_scheme(std::string_view s) {
  if (s == "learned") return PositionScheme::learned;
  if (s == "rotary") return PositionScheme::rotary;
  throw ModelError("unsupported position_scheme '" + std::string(s) + "'");
}

Activation parse_activation(std::string_view s) {
  if (s == "gelu" || s == "gelu_new") return Activation::gelu;
  if (s == "gelu_erf") return Activation::gelu_erf;
  if (s == "relu") return Activation::relu;
  throw ModelError("unsupported activation '" + std::string(s) + "'");
}

int ModelConfig::rotary_dims() const {
  if (position_scheme != PositionScheme::rotary) return 0;
  return static_cast<int>(std::lround(rotary_fraction * d_head));
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ModelError("invalid model config: " + what);
  };
  require(n_layers >= 0, "n_layers must be >= 0");
  require(n_heads >= 1, "n_heads must be >= 1");
  require(d_model >= 1 && d_head >= 1 && d_mlp >= 1, "dimensions must be positive");
  require(vocab_size >= 1, "vocab_size must be positive");
  require(n_ctx >= 1, "n_ctx must be positive");
  require(ln_epsilon > 0.0, "ln_epsilon must be > 0");
  require(bos_token_id < vocab_size, "bos_token_id out of vocabulary");
  if (position_scheme == PositionScheme::rotary) {
    require(rotary_fraction > 0.0 && rotary_fraction <= 1.0, "rotary_fraction must be in (0, 1]");
    double dims = rotary_fraction * d_head;
    require(std::abs(dims - std::round(dims)) < 1e-9, "rotary_fraction * d_head must be an integer");
    require(static_cast<long>(std::lround(dims)) % 2 == 0, "rotary_fraction * d_head must be even");
    require(rotary_base > 0.0, "rotary_base must be positive");
  }
}

ComponentId ComponentId::from_index(int index, const ModelConfig& cfg) {
  if (index < 0 || index >= cfg.n_components()) {
    throw UsageError("component index " + std::to_string(index) + " out of range");
  }
  if (index == 0) return embedding();
  int rel = index - 1;
  int layer = rel / (cfg.n_heads + 1);
  int slot = rel % (cfg.n_heads + 1);
  return slot == cfg.n_heads ? mlp(layer) : head(layer, slot);
}

int ComponentId::index(const ModelConfig& cfg) const {
  switch (kind_) {
    case Kind::embedding: return 0;
    case Kind::attn_head: return 1 + layer_ * (cfg.n_heads + 1) + head_;
    case Kind::mlp: return 1 + layer_ * (cfg.n_heads + 1) + cfg.n_heads;
  }
  return 0;
}

bool ComponentId::valid_for(const ModelConfig& cfg) const {
  switch (kind_) {
    case Kind::embedding: return true;
    case Kind::attn_head:
      return layer_ >= 0 && layer_ < cfg.n_layers && head_ >= 0 && head_ < cfg.n_heads;
    case Kind::mlp: return layer_ >= 0 && layer_ < cfg.n_layers;
  }
  return false;
}

std::string ComponentId::name() const {
  switch (kind_) {
    case Kind::embedding: return "embed";
    case Kind::attn_head: return "A" + std::to_string(layer_) + ".H" + std::to_string(head_);
    case Kind::mlp: return "MLP" + std::to_string(layer_);
  }
  return "?";
}

namespace {

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && out >= 0;
}

}  // namespace

ComponentId ComponentId::parse(std::string_view name) {
  if (name == "embed" || name == "emb" || name == "embedding") return embedding();
  if (name.starts_with("MLP")) {
    int layer = 0;
    if (parse_int(name.substr(3), layer)) return mlp(layer);
  } else if (name.starts_with("A")) {
    auto dot = name.find(".H");
    int layer = 0, h = 0;
    if (dot != std::string_view::npos && parse_int(name.substr(1, dot - 1), layer) &&
        parse_int(name.substr(dot + 2), h)) {
      return head(layer, h);
    }
  }
  throw UsageError("cannot parse component name '" + std::string(name) +
                   "' (expected embed, A<l>.H<h> or MLP<l>)");
}

int Site::index() const {
  switch (sublayer) {
    case Sublayer::attn: return 2 * layer;
    case Sublayer::mlp: return 2 * layer + 1;
    case Sublayer::final_ln: return 2 * layer;
  }
  return 0;
}

bool Site::valid_for(const ModelConfig& cfg) const {
  if (sublayer == Sublayer::final_ln) return layer == cfg.n_layers;
  return layer >= 0 && layer < cfg.n_layers;
}

std::string Site::name() const {
  switch (sublayer) {
    case Sublayer::attn: return "L" + std::to_string(layer) + ".attn_in";
    case Sublayer::mlp: return "L" + std::to_string(layer) + ".mlp_in";
    case Sublayer::final_ln: return "final_ln";
  }
  return "?";
}

int components_before(const ModelConfig& cfg, Site site) {
  if (!site.valid_for(cfg)) throw UsageError("site " + site.name() + " out of range");
  const int per_layer = cfg.n_heads + 1;
  switch (site.sublayer) {
    case Sublayer::attn: return 1 + site.layer * per_layer;
    case Sublayer::mlp:
      return cfg.block_layout == BlockLayout::sequential ? 1 + site.layer * per_layer + cfg.n_heads
                                                         : 1 + site.layer * per_layer;
    case Sublayer::final_ln: return cfg.n_components();
  }
  return 0;
}

}  // namespace unpack
