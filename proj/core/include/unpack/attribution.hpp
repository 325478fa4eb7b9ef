#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "unpack/decomposition.hpp"
#include "unpack/forward.hpp"
#include "unpack/model.hpp"
#include "unpack/trace_config.hpp"

namespace unpack {

/// How a frame was reached from its parent.
enum class EntryMode : std::uint8_t { root, K, Q, V, mlp };
std::string_view to_string(EntryMode m);
EntryMode parse_entry_mode(std::string_view s);

struct Hop {
  ComponentId component;
  int position = 0;
  EntryMode mode = EntryMode::root;
  bool operator==(const Hop&) const = default;
};

/// hops[0] is the embedding, hops.back() the root.
struct Path {
  std::vector<Hop> hops;
  double magnitude = 0.0;
  int terminal_position = 0;
};

struct CreditLedger {
  VecD token_credit;
  std::vector<Path> paths;  // by descending |magnitude|
  double total_root_importance = 0.0;
  double lost_credit = 0.0;    // dropped at zero denominators
  double pruned_credit = 0.0;  // sum of |I| over frames cut by tau
  std::uint64_t floor_trips = 0;
  std::uint64_t frames = 0;
  bool truncated = false;
  int position = 0;
  std::string root;  // "target" or the rerooted component name
};

struct AggregateResult {
  VecD token_credit;
  double total_root_importance = 0.0;
  double lost_credit = 0.0;
  std::uint64_t floor_trips = 0;
};

/// Gradient of the centered (or differenced) logit at `pos` w.r.t. the raw residual entering
/// the final LN, with sigma frozen. Centered along the hidden dimension.
VecD target_direction(const Model& model, const ForwardCapture& capture, const Target& target, int pos);

/// One backward step's output: credit at (component, position) entering by `mode`, carrying
/// direction `origin` (an index into the attributor's direction table).
struct Child {
  int component = 0;
  int position = 0;
  double importance = 0.0;
  int origin = 0;
  EntryMode mode = EntryMode::K;
};

/// The recursion over one captured prompt. Holds share caches; not thread-safe, so use one
/// per thread. All public results are deterministic.
class Attributor {
 public:
  Attributor(const Model& model, const ForwardCapture& capture, TraceConfig config);

  const TraceConfig& config() const { return cfg_; }
  const Decomposer& decomposer() const { return dec_; }

  /// I(c_k) = <c_k(p), d_t> for every component.
  VecD root_importances(int pos);

  CreditLedger trace(int pos);
  AggregateResult aggregate_token_credit(int pos);
  /// Unit importance at `component`, root direction = its realized output at `pos`.
  CreditLedger reroot(ComponentId component, int pos);
  AggregateResult reroot_aggregate(ComponentId component, int pos);

  // Dispatch primitives. `depth` counts from the current root; the root direction must have
  // been set by trace/reroot or set_root_direction.
  void set_root_direction(VecD dir, int root_pos);
  /// Source credits I_s for a head frame at query q.
  std::vector<std::pair<int, double>> attention_v_dispatch(int l, int h, int q, double importance, int origin,
                                                           int depth);
  /// Children of source credit I_s through the key side (and Q/V branches under kqv).
  std::vector<Child> attention_k_dispatch(int l, int h, int q, int s, double source_importance, int origin);
  std::vector<Child> mlp_dispatch(int l, int q, double importance, int origin, int depth);

  const VecD& direction(int origin);
  int root_origin() const { return 0; }
  double lost_credit() const { return lost_; }
  std::uint64_t floor_trips() const { return trips_; }

 private:
  struct ShareBlock {
    RowMatD share;  // [prefix, sources] (K/Q) or [prefix, 1] (V)
    std::vector<std::uint8_t> dead, floored;
  };
  struct MlpInfo {
    VecD gate;        // phi(pre)
    VecD gate_ratio;  // phi(pre)/pre
    VecD norms;       // |s_k| over neurons (L2 rule)
    VecD deep_transfer;
    double deep_lost = 0.0;
    std::uint64_t deep_trips = 0;
    bool deep_ready = false;
  };
  struct Transfer {
    VecD transfer;  // child credit per unit parent credit
    double lost = 0.0;
    std::uint64_t trips = 0;
    VecD neuron_share;
  };

  int mlp_root_origin(int l) const { return 1 + l; }
  int mlp_deep_origin(int l, int q) const { return 1 + L_ + l * n_ + q; }
  int n_origins() const { return 1 + L_ + L_ * n_; }

  const ShareBlock& key_shares(int l, int h, int q);
  const ShareBlock& query_shares(int l, int h, int q);
  const ShareBlock& value_shares(int l, int h, int s, int origin);
  const VecD& value_sum(int l, int h, int s);
  MlpInfo& mlp_info(int l, int q);
  Transfer mlp_transfer(int l, int q, const VecD& neuron_weights);
  void ensure_deep(int l, int q);
  VecD mlp_child_direction(int l, int q, const VecD& neuron_share);
  std::vector<double> source_weights(int l, int h, int q, int origin, int depth);

  void reset_root();
  void expand(std::vector<Child>& out, int comp, int pos, double importance, int origin, int depth);
  void dfs(const Child& frame, int depth, std::vector<Hop>& stack, CreditLedger& ledger);
  AggregateResult propagate(const std::vector<Child>& roots, double total);
  void finish_paths(CreditLedger& ledger);

  const Model& model_;
  const ForwardCapture& cap_;
  TraceConfig cfg_;
  Decomposer dec_;
  int L_, H_, n_;

  std::vector<VecD> dirs_;
  std::vector<std::uint8_t> dir_ready_;
  int root_pos_ = -1;

  std::map<std::tuple<int, int, int>, ShareBlock> key_cache_, query_cache_;
  std::map<std::tuple<int, int, int, int>, ShareBlock> value_cache_;
  std::map<std::tuple<int, int, int>, VecD> vsum_cache_;
  std::map<std::pair<int, int>, MlpInfo> mlp_cache_;

  double lost_ = 0.0;
  std::uint64_t trips_ = 0;

  // path heap state during trace
  struct HeapEntry {
    double key;
    std::uint64_t seq;
    Path path;
  };
  std::vector<HeapEntry> heap_;
  std::uint64_t seq_ = 0;
};

/// Ranks upstream heads (layer >= layer_floor) of a rerooted ledger by the summed |magnitude|
/// of paths whose hop into the root entered with `mode` (nullopt = any mode).
struct RoleRank {
  std::string role;
  bool found = false;
  int rank = 0;  // 1-based; 0 when no head of the role scored
};
using RoleTable = std::vector<std::pair<std::string, std::vector<ComponentId>>>;
std::vector<RoleRank> rank_upstream(const CreditLedger& ledger, std::optional<EntryMode> mode, int layer_floor,
                                    const RoleTable& roles, int found_within = 100);

/// Heads ordered by upstream score, as used by rank_upstream.
std::vector<std::pair<ComponentId, double>> upstream_head_scores(const CreditLedger& ledger,
                                                                 std::optional<EntryMode> mode, int layer_floor);

}  // namespace unpack
