#include <iostream>
#include <memory>

#include "commands.hpp"
#include "common.hpp"
#include "unpack/errors.hpp"
#include "unpack/tokenizer.hpp"
#include "unpack/toy_model.hpp"

namespace unpack::cli {

Action add_toy(CLI::App& app, int, char**) {
  auto* sub = app.add_subcommand("toy", "write a random model directory (byte-level tokenizer)");
  auto out = std::make_shared<std::string>();
  auto cfg = std::make_shared<ModelConfig>(toy_config(2, BlockLayout::sequential, false, 300));
  auto layout = std::make_shared<std::string>("sequential");
  auto rotary = std::make_shared<bool>(false);
  auto seed = std::make_shared<std::uint64_t>(0);
  auto tokenizer = std::make_shared<std::string>();
  cfg->n_ctx = 128;
  sub->add_option("--out", *out, "model directory to create")->required();
  sub->add_option("--layers", cfg->n_layers)->capture_default_str();
  sub->add_option("--heads", cfg->n_heads)->capture_default_str();
  sub->add_option("--d-model", cfg->d_model)->capture_default_str();
  sub->add_option("--d-head", cfg->d_head)->capture_default_str();
  sub->add_option("--d-mlp", cfg->d_mlp)->capture_default_str();
  sub->add_option("--vocab", cfg->vocab_size, "vocabulary size (>= 257 attaches the byte tokenizer)")
      ->capture_default_str();
  sub->add_option("--n-ctx", cfg->n_ctx)->capture_default_str();
  sub->add_option("--layout", *layout)->check(CLI::IsMember({"sequential", "parallel"}))->capture_default_str();
  sub->add_flag("--rotary", *rotary, "rotary positions on half of each head");
  sub->add_option("--seed", *seed)->capture_default_str();
  sub->add_option("--tokenizer", *tokenizer, "directory with vocab and merges to attach instead of the byte tokenizer");
  return [=] {
    ModelConfig c = *cfg;
    c.block_layout = parse_block_layout(*layout);
    c.position_scheme = *rotary ? PositionScheme::rotary : PositionScheme::learned;
    c.rotary_fraction = *rotary ? 0.5 : 1.0;
    c.activation = c.block_layout == BlockLayout::parallel ? Activation::gelu_erf : Activation::gelu;
    c.bos_token_id = c.vocab_size >= 257 ? 256 : 0;
    try {
      c.validate();
    } catch (const ModelError& e) {
      throw UsageError(e.what());
    }
    if (std::filesystem::exists(*out) && !std::filesystem::is_empty(*out)) {
      throw UsageError("--out " + *out + " exists and is not empty");
    }
    if (!tokenizer->empty()) {
      const std::filesystem::path dir = *tokenizer;
      auto tok = std::make_shared<const Tokenizer>(Tokenizer::load(dir / "vocab", dir / "merges"));
      if (tok->vocab_size() > c.vocab_size) {
        throw UsageError("--vocab " + std::to_string(c.vocab_size) + " is smaller than the tokenizer's " +
                         std::to_string(tok->vocab_size()));
      }
      c.bos_token_id = tok->special_token("<|endoftext|>").value_or(0);
      const Model base = make_toy_model(c, {.seed = *seed});
      save_model(Model(c, base.tensors(), tok), *out);
    } else {
      save_model(make_toy_model(c, {.seed = *seed}), *out);
    }
    std::cout << "wrote " << *out << " (" << c.n_layers << " layers, " << c.n_heads << " heads, "
              << to_string(c.block_layout) << ")\n";
  };
}

}  // namespace unpack::cli
