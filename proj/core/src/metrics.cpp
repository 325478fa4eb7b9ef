#include "unpack/metrics.hpp"

#include <cmath>

#include "unpack/errors.hpp"
#include "unpack/parallel.hpp"
#include "unpack/paths.hpp"

namespace unpack {

MetricReport token_metrics(const std::vector<IoiPrompt>& prompts, const std::vector<VecD>& credits,
                           const std::vector<double>& p_io) {
  if (prompts.empty()) throw UsageError("token_metrics: no prompts");
  if (credits.size() != prompts.size()) throw UsageError("token_metrics: one credit vector per prompt expected");
  MetricReport r;
  r.n = static_cast<int>(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const IoiPrompt& p = prompts[i];
    const VecD& c = credits[i];
    const double io = c(p.pos_io);
    r.io_gt_s1 += io > c(p.pos_s1);
    r.io_gt_s2 += io > c(p.pos_s2);
    bool top = true, top_star = true;
    for (Eigen::Index j = 0; j < c.size(); ++j) {
      if (j == p.pos_io || c(j) < io) continue;
      top = false;
      if (j != 0) top_star = false;
    }
    r.top1 += top;
    r.top1_star += top_star;
    r.mean_io_share += percent_of_positive(c)(p.pos_io);
    if (!p_io.empty()) r.mean_p_io += p_io.at(i);
  }
  const double n = r.n;
  r.io_gt_s1 /= n;
  r.io_gt_s2 /= n;
  r.top1 /= n;
  r.top1_star /= n;
  r.mean_io_share /= n;
  r.mean_p_io /= n;
  return r;
}

SuppressionReport s2_suppression(const std::vector<PromptPair>& pairs, const std::vector<VecD>& ioi_s,
                                 const std::vector<VecD>& abc_c, const std::vector<VecD>& abc_b) {
  if (pairs.empty()) throw UsageError("s2_suppression: no prompts");
  if (ioi_s.size() != pairs.size() || abc_c.size() != pairs.size() || abc_b.size() != pairs.size()) {
    throw UsageError("s2_suppression: unpaired credit vectors");
  }
  SuppressionReport r;
  r.n = static_cast<int>(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const IoiPrompt& ioi = pairs[i].ioi;
    const IoiPrompt& abc = pairs[i].abc;
    if (!ioi.is_ioi()) throw UsageError("s2_suppression: IOI prompt does not repeat its subject");
    if (abc.is_ioi() || abc.pos_s2 != ioi.pos_s2) throw UsageError("s2_suppression: prompts are not paired");
    r.c_to_c += percent_of_positive(abc_c[i])(abc.pos_s2);
    r.c_to_b += percent_of_positive(abc_b[i])(abc.pos_s2);
    const VecD s = percent_of_positive(ioi_s[i]);
    r.s2_to_s += s(ioi.pos_s2);
    r.s1_to_s += s(ioi.pos_s1);
  }
  const double n = r.n;
  r.c_to_c /= n;
  r.c_to_b /= n;
  r.s2_to_s /= n;
  r.s1_to_s /= n;
  r.gap = r.s1_to_s - r.s2_to_s;
  return r;
}

namespace {

double softmax_prob(const RowMatF& logits, int pos, int token) {
  const auto row = logits.row(pos).cast<double>();
  const double mx = row.maxCoeff();
  return std::exp(row(token) - mx) / (row.array() - mx).exp().sum();
}

}  // namespace

PromptCredits credit_prompt(const Model& model, const PromptPair& pair, const TraceConfig& config) {
  PromptCredits out;
  const int io = pair.ioi.name_tokens[0], s = pair.ioi.name_tokens[1];
  {
    const ForwardCapture cap = forward(model, pair.ioi.tokens);
    const int end = pair.ioi.pos_end;
    TraceConfig c = config;
    c.target = Target::single_token(io);
    out.io = Attributor(model, cap, c).aggregate_token_credit(end).token_credit;
    c.target = Target::diff(s, io);
    out.s = Attributor(model, cap, c).aggregate_token_credit(end).token_credit;
    out.p_io = softmax_prob(cap.logits, end, io);
  }
  {
    const ForwardCapture cap = forward(model, pair.abc.tokens);
    const int end = pair.abc.pos_end;
    const int a = pair.abc.name_tokens[0], b = pair.abc.name_tokens[1], cc = pair.abc.name_tokens[2];
    TraceConfig c = config;
    c.target = Target::diff(cc, a);
    out.c = Attributor(model, cap, c).aggregate_token_credit(end).token_credit;
    c.target = Target::diff(b, a);
    out.b = Attributor(model, cap, c).aggregate_token_credit(end).token_credit;
  }
  return out;
}

ConfigReport evaluate_config(const Model& model, const std::vector<PromptPair>& pairs, const TraceConfig& config,
                             int jobs) {
  if (pairs.empty()) throw UsageError("evaluate: no prompts");
  std::vector<PromptCredits> credits(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), jobs, [&](int i) { credits[i] = credit_prompt(model, pairs[i], config); });
  std::vector<IoiPrompt> prompts;
  std::vector<VecD> io, s, c, b;
  std::vector<double> p;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    prompts.push_back(pairs[i].ioi);
    io.push_back(credits[i].io);
    s.push_back(credits[i].s);
    c.push_back(credits[i].c);
    b.push_back(credits[i].b);
    p.push_back(credits[i].p_io);
  }
  ConfigReport r;
  r.config = config.variant_name();
  r.beta = config.beta;
  r.tokens = token_metrics(prompts, io, p);
  r.suppression = s2_suppression(pairs, s, c, b);
  return r;
}

std::vector<ConfigReport> beta_sweep(const Model& model, const std::vector<PromptPair>& pairs,
                                     const std::vector<double>& betas, int jobs) {
  std::vector<ConfigReport> out;
  for (double beta : betas) {
    TraceConfig c = TraceConfig::named("kqv_aligned");
    c.beta = beta;
    out.push_back(evaluate_config(model, pairs, c, jobs));
  }
  return out;
}

Table token_table(const std::vector<ConfigReport>& reports) {
  Table t;
  t.header = {"Configuration", "IO>S1", "IO>S2", "Top-1", "Top-1*", "Mean IO"};
  for (const auto& r : reports) {
    t.add({r.config, fmt_pct(r.tokens.io_gt_s1, 0), fmt_pct(r.tokens.io_gt_s2, 0), fmt_pct(r.tokens.top1, 0),
           fmt_pct(r.tokens.top1_star, 0), fmt_signed_pct(r.tokens.mean_io_share)});
  }
  return t;
}

Table suppression_table(const std::vector<ConfigReport>& reports) {
  Table t;
  t.header = {"Configuration", "C->C", "S2->S", "C->B", "S1->S", "S1-S2 gap"};
  for (const auto& r : reports) {
    const auto& s = r.suppression;
    t.add({r.config, fmt_signed(s.c_to_c), fmt_signed(s.s2_to_s), fmt_signed(s.c_to_b), fmt_signed(s.s1_to_s), fmt_signed(s.gap)});
  }
  return t;
}

Table beta_table(const std::vector<ConfigReport>& reports) {
  Table t;
  t.header = {"beta", "IO>S1", "IO>S2", "Top-1", "Mean IO", "S1->S", "S2->S", "Gap"};
  for (const auto& r : reports) {
    t.add({fmt(r.beta, 1), fmt_pct(r.tokens.io_gt_s1, 0), fmt_pct(r.tokens.io_gt_s2, 0), fmt_pct(r.tokens.top1, 0),
           fmt_signed_pct(r.tokens.mean_io_share), fmt_signed(r.suppression.s1_to_s), fmt_signed(r.suppression.s2_to_s),
           fmt_signed(r.suppression.gap)});
  }
  return t;
}

Table model_table(const std::vector<std::pair<std::string, ConfigReport>>& rows) {
  Table t;
  t.header = {"Model", "IO>S1", "IO>S2", "Top-1", "Mean IO", "P(IO)"};
  for (const auto& [name, r] : rows) {
    t.add({name, fmt_pct(r.tokens.io_gt_s1, 0), fmt_pct(r.tokens.io_gt_s2, 0), fmt_pct(r.tokens.top1, 0),
           fmt_signed_pct(r.tokens.mean_io_share), fmt(r.tokens.mean_p_io, 3)});
  }
  return t;
}

Table model_suppression_table(const std::vector<std::pair<std::string, ConfigReport>>& rows) {
  Table t;
  t.header = {"Model", "C->C", "S2->S", "C->B", "S1->S", "S1-S2 gap"};
  for (const auto& [name, r] : rows) {
    const auto& s = r.suppression;
    t.add({name, fmt_signed(s.c_to_c), fmt_signed(s.s2_to_s), fmt_signed(s.c_to_b), fmt_signed(s.s1_to_s), fmt_signed(s.gap)});
  }
  return t;
}

}  // namespace unpack
