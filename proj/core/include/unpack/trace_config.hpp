#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace unpack {

enum class AttnKeySide { k_only, kqv };
enum class MlpKeySide { weighted, l2 };
enum class VDispatch { raw, aligned };

struct Target {
  enum class Kind { single, logit_diff };
  Kind kind = Kind::single;
  int token = -1;
  int distractor = -1;  // logit_diff only

  static Target single_token(int t) { return {Kind::single, t, -1}; }
  static Target diff(int t, int alt) { return {Kind::logit_diff, t, alt}; }
};

struct TraceConfig {
  AttnKeySide attn_key_side = AttnKeySide::k_only;
  MlpKeySide mlp_key_side = MlpKeySide::weighted;
  VDispatch v_dispatch = VDispatch::raw;
  double beta = 0.8;
  double tau = 1e-3;
  std::size_t top_k_paths = 2000;
  double w_k = 1.0 / 3.0, w_q = 1.0 / 3.0, w_v = 1.0 / 3.0;
  Target target;

  /// Enumeration stops after this many expanded frames and marks the ledger truncated.
  std::size_t max_frames = 20'000'000;
  /// Credit entries below this magnitude are dropped by aggregate_token_credit (0 = exact).
  double aggregate_floor = 0.0;

  /// Throws UsageError on an inconsistent tuple (e.g. l2 with aligned, weights not summing to 1).
  void validate() const;

  /// One of the six named variants, with the default beta/tau/top-k/weights.
  static TraceConfig named(std::string_view name);
  static const std::vector<std::string>& names();
  /// The variant name if the three axes match a named config, else "custom".
  std::string variant_name() const;

  /// Flat key/value description in flag-name order, for run manifests.
  std::vector<std::pair<std::string, std::string>> describe() const;
};

std::string_view to_string(AttnKeySide v);
std::string_view to_string(MlpKeySide v);
std::string_view to_string(VDispatch v);

}  // namespace unpack
