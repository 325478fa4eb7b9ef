#pragma once

#include <string>
#include <vector>

#include "unpack/forward.hpp"
#include "unpack/score_panel.hpp"
#include "unpack/text_io.hpp"

namespace unpack {

enum class Channel { cut_attention, cut_mlp };
std::string_view to_string(Channel c);
Channel parse_channel(std::string_view s);

struct AblationSpec {
  ComponentId component;
  Channel channel = Channel::cut_attention;
};

/// Throws UsageError unless the component writes before at least one LN of the channel.
void validate_spec(const ModelConfig& cfg, const AblationSpec& spec);

/// Forward with the component's clean output subtracted from every downstream LN input of
/// the channel. `clean` must be a capture of the same tokens with components.
RowMatF ablate_forward(const Model& model, std::span<const int> tokens, const AblationSpec& spec,
                       const ForwardCapture& clean);
RowMatF ablate_forward(const Model& model, std::span<const int> tokens, const AblationSpec& spec);

/// Sum of next-token NLL and the number of predicted tokens for one logits block.
std::pair<double, long> sequence_nll(const RowMatF& logits, std::span<const int> tokens);

struct KnockoutResult {
  AblationSpec spec;
  double strength = 0;
  double baseline_ppl = 0;
  double ablated_ppl = 0;
  double delta_ppl = 0;
};

struct KnockoutRun {
  double baseline_ppl = 0;
  long tokens = 0;
  std::vector<KnockoutResult> results;
};

/// Corpus sequences must already carry BOS. `panel` supplies strengths when given.
KnockoutRun delta_ppl(const Model& model, const std::vector<AblationSpec>& specs,
                      const std::vector<std::vector<int>>& corpus, const ScorePanel* panel = nullptr, int jobs = 1);

/// Per source layer (the embedding is its own group), components at evenly spaced quantiles
/// of the channel's strength. Groups with no downstream receiver in the channel are skipped.
std::vector<ComponentId> select_knockout_components(const ScorePanel& panel, int per_layer, Channel channel);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct SpearmanRow {
  Channel channel;
  double within_layer = 0;  // mean over groups with >= 2 results
  int groups = 0;
  double cross_layer = 0;
  int n = 0;
};
std::vector<SpearmanRow> spearman_report(const std::vector<KnockoutResult>& results);

Table knockout_table(const KnockoutRun& run);
Table spearman_table(const std::vector<SpearmanRow>& rows);

}  // namespace unpack
