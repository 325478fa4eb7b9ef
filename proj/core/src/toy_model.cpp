#include "unpack/toy_model.hpp"

#include <cmath>
#include <random>

namespace unpack {

ModelConfig toy_config(int n_layers, BlockLayout layout, bool rotary, int vocab_size) {
  ModelConfig cfg;
  cfg.n_layers = n_layers;
  cfg.n_heads = 2;
  cfg.d_model = 16;
  cfg.d_head = 8;
  cfg.d_mlp = 32;
  cfg.vocab_size = vocab_size;
  cfg.n_ctx = 32;
  cfg.block_layout = layout;
  cfg.position_scheme = rotary ? PositionScheme::rotary : PositionScheme::learned;
  cfg.rotary_fraction = rotary ? 0.5 : 1.0;
  cfg.activation = layout == BlockLayout::parallel ? Activation::gelu_erf : Activation::gelu;
  cfg.bos_token_id = vocab_size >= 257 ? 256 : 0;
  return cfg;
}

Model make_toy_model(const ModelConfig& cfg, const ToyModelOptions& opts) {
  cfg.validate();
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::map<std::string, Tensor> tensors;
  for (const auto& spec : expected_tensors(cfg)) {
    if (spec.optional) continue;
    Tensor t(spec.shape);
    const std::string& name = spec.name;
    const bool is_ln_weight = name.find("ln") != std::string::npos && name.ends_with(".weight");
    const bool is_bias = name.ends_with("bias") || name.find(".b_") != std::string::npos;
    const bool values = name.ends_with("W_V") || name.ends_with("W_O");
    double sd = 0.0;
    if (is_ln_weight) {
      sd = 0.1;
    } else if (is_bias) {
      sd = opts.bias_scale;
    } else {
      // fan-in is the second-to-last axis for projections; embeddings use d_model
      const std::int64_t fan = spec.shape.size() >= 2 ? spec.shape[spec.shape.size() - 2] : 1;
      const bool table = name.starts_with("embed") || name.starts_with("pos_embed") || name.starts_with("unembed");
      sd = opts.init_scale / std::sqrt(static_cast<double>(table ? 1 : fan));
    }
    if (opts.zero_weights && !is_ln_weight) sd = 0.0;
    if (opts.zero_values && values) sd = 0.0;
    if (opts.zero_mlp_in && name.ends_with("W_in")) sd = 0.0;
    for (auto& v : t.data) {
      const double g = gauss(rng);
      v = static_cast<float>((is_ln_weight ? 1.0 : 0.0) + (opts.zero_weights && is_ln_weight ? 0.0 : sd * g));
    }
    tensors.emplace(name, std::move(t));
  }
  std::shared_ptr<const Tokenizer> tok;
  if (cfg.vocab_size >= 257) tok = std::make_shared<const Tokenizer>(Tokenizer::byte_level());
  return Model(cfg, std::move(tensors), std::move(tok));
}

std::vector<int> random_tokens(int n, int vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> ids(n);
  for (auto& id : ids) id = static_cast<int>(rng() % static_cast<std::uint64_t>(vocab));
  return ids;
}

}  // namespace unpack
