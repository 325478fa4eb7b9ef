#include "unpack/trace_config.hpp"

#include <cmath>
#include <sstream>

#include "unpack/errors.hpp"

namespace unpack {

std::string_view to_string(AttnKeySide v) { return v == AttnKeySide::k_only ? "k_only" : "kqv"; }
std::string_view to_string(MlpKeySide v) { return v == MlpKeySide::weighted ? "weighted" : "l2"; }
std::string_view to_string(VDispatch v) { return v == VDispatch::raw ? "raw" : "aligned"; }

const std::vector<std::string>& TraceConfig::names() {
  static const std::vector<std::string> kNames = {"k_only_weighted", "k_only_l2",    "k_only_aligned",
                                                  "kqv_weighted",    "kqv_l2",       "kqv_aligned"};
  return kNames;
}

TraceConfig TraceConfig::named(std::string_view name) {
  TraceConfig c;
  std::string_view rest;
  if (name.starts_with("k_only_")) {
    c.attn_key_side = AttnKeySide::k_only;
    rest = name.substr(7);
  } else if (name.starts_with("kqv_")) {
    c.attn_key_side = AttnKeySide::kqv;
    rest = name.substr(4);
  }
  if (rest == "weighted") {
    c.mlp_key_side = MlpKeySide::weighted;
    c.v_dispatch = VDispatch::raw;
  } else if (rest == "l2") {
    c.mlp_key_side = MlpKeySide::l2;
    c.v_dispatch = VDispatch::raw;
  } else if (rest == "aligned") {
    c.mlp_key_side = MlpKeySide::weighted;
    c.v_dispatch = VDispatch::aligned;
  } else {
    std::string all;
    for (const auto& n : names()) all += (all.empty() ? "" : ", ") + n;
    throw UsageError("unknown config '" + std::string(name) + "'; valid configs: " + all);
  }
  return c;
}

std::string TraceConfig::variant_name() const {
  std::string s = attn_key_side == AttnKeySide::k_only ? "k_only_" : "kqv_";
  if (mlp_key_side == MlpKeySide::l2 && v_dispatch == VDispatch::raw) return s + "l2";
  if (mlp_key_side == MlpKeySide::weighted) return s + (v_dispatch == VDispatch::raw ? "weighted" : "aligned");
  return "custom";
}

void TraceConfig::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw UsageError("beta must be a finite value >= 0");
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw UsageError("tau must be a finite value >= 0");
  if (!(aggregate_floor >= 0.0)) throw UsageError("aggregate_floor must be >= 0");
  if (mlp_key_side == MlpKeySide::l2 && v_dispatch == VDispatch::aligned) {
    throw UsageError("the l2 MLP rule has no per-neuron split, so aligned dispatch is not available with it");
  }
  if (attn_key_side == AttnKeySide::kqv) {
    if (w_k < 0.0 || w_q < 0.0 || w_v < 0.0) throw UsageError("branch weights must be nonnegative");
    if (std::abs(w_k + w_q + w_v - 1.0) > 1e-9) throw UsageError("branch weights must sum to 1");
  }
}

std::vector<std::pair<std::string, std::string>> TraceConfig::describe() const {
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  return {
      {"config", variant_name()},
      {"attn_key_side", std::string(to_string(attn_key_side))},
      {"mlp_key_side", std::string(to_string(mlp_key_side))},
      {"v_dispatch", std::string(to_string(v_dispatch))},
      {"beta", num(beta)},
      {"tau", num(tau)},
      {"topk", std::to_string(top_k_paths)},
      {"weights", num(w_k) + "," + num(w_q) + "," + num(w_v)},
      {"target", std::to_string(target.token)},
      {"target_alt", target.kind == Target::Kind::logit_diff ? std::to_string(target.distractor) : ""},
      {"max_frames", std::to_string(max_frames)},
      {"aggregate_floor", num(aggregate_floor)},
  };
}

}  // namespace unpack
