#pragma once

#include <vector>

#include "unpack/ioi.hpp"
#include "unpack/text_io.hpp"

namespace unpack {

struct MetricReport {
  int n = 0;
  double io_gt_s1 = 0, io_gt_s2 = 0, top1 = 0, top1_star = 0;  // fractions
  double mean_io_share = 0;                                    // percent of positive credit
  double mean_p_io = 0;
};

/// credits[i] is the token credit of prompts[i] for target IO; p_io may be empty.
MetricReport token_metrics(const std::vector<IoiPrompt>& prompts, const std::vector<VecD>& credits,
                           const std::vector<double>& p_io = {});

/// Mean percent-of-positive credit at the duplicate slot.
struct SuppressionReport {
  int n = 0;
  double c_to_c = 0, s2_to_s = 0, c_to_b = 0, s1_to_s = 0;
  double gap = 0;  // s1_to_s - s2_to_s
};

/// ioi_s: IOI credit for S minus IO; abc_c / abc_b: ABC credit for C (resp. B) minus A.
SuppressionReport s2_suppression(const std::vector<PromptPair>& pairs, const std::vector<VecD>& ioi_s,
                                 const std::vector<VecD>& abc_c, const std::vector<VecD>& abc_b);

/// All four credit vectors of one prompt pair, computed at END with aggregate_token_credit.
struct PromptCredits {
  VecD io, s, c, b;
  double p_io = 0;
};
PromptCredits credit_prompt(const Model& model, const PromptPair& pair, const TraceConfig& config);

struct ConfigReport {
  std::string config;
  double beta = 0;
  MetricReport tokens;
  SuppressionReport suppression;
};
ConfigReport evaluate_config(const Model& model, const std::vector<PromptPair>& pairs, const TraceConfig& config,
                             int jobs = 1);

/// kqv_aligned at each beta.
std::vector<ConfigReport> beta_sweep(const Model& model, const std::vector<PromptPair>& pairs,
                                     const std::vector<double>& betas, int jobs = 1);

Table token_table(const std::vector<ConfigReport>& reports);
Table suppression_table(const std::vector<ConfigReport>& reports);
Table beta_table(const std::vector<ConfigReport>& reports);
/// Cross-model summary: IO>S1, IO>S2, Top-1, Mean IO, P(IO).
Table model_table(const std::vector<std::pair<std::string, ConfigReport>>& rows);
/// Cross-model S2 comparison: C->C, S2->S, C->B, S1->S, gap.
Table model_suppression_table(const std::vector<std::pair<std::string, ConfigReport>>& rows);

}  // namespace unpack
