#pragma once

#include <cstdint>
#include <vector>

#include "unpack/model.hpp"

namespace unpack {

struct ToyModelOptions {
  std::uint64_t seed = 0;
  /// Weight entries are N(0, init_scale^2 / fan_in); LN weights are 1 + N(0, 0.1^2).
  double init_scale = 1.0;
  double bias_scale = 0.1;
  bool zero_weights = false;  // every tensor zero except LN weights (= 1)
  bool zero_values = false;   // W_V = W_O = 0
  bool zero_mlp_in = false;   // W_in = 0
};

/// Random model with the given shape. A byte-level tokenizer is attached when the
/// vocabulary has room for it (vocab_size >= 257).
Model make_toy_model(const ModelConfig& cfg, const ToyModelOptions& opts = {});

/// Small ready-made shapes used throughout the tests.
ModelConfig toy_config(int n_layers, BlockLayout layout, bool rotary, int vocab_size = 64);

/// Deterministic random token ids in [0, vocab).
std::vector<int> random_tokens(int n, int vocab, std::uint64_t seed);

}  // namespace unpack
