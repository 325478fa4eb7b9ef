#include "unpack/knockout.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "unpack/errors.hpp"
#include "unpack/parallel.hpp"

namespace unpack {

std::string_view to_string(Channel c) { return c == Channel::cut_attention ? "cut_attention" : "cut_mlp"; }

Channel parse_channel(std::string_view s) {
  if (s == "cut_attention" || s == "attn") return Channel::cut_attention;
  if (s == "cut_mlp" || s == "mlp") return Channel::cut_mlp;
  throw UsageError("unknown channel '" + std::string(s) + "' (cut_attention, cut_mlp)");
}

namespace {

bool channel_site(Channel ch, const Site& site) {
  if (site.sublayer == Sublayer::final_ln) return false;
  return ch == Channel::cut_attention ? site.sublayer == Sublayer::attn : site.sublayer == Sublayer::mlp;
}

bool has_receiver(const ModelConfig& cfg, int index, Channel ch) {
  for (int l = 0; l < cfg.n_layers; ++l) {
    const Site s = ch == Channel::cut_attention ? Site::attn(l) : Site::mlp(l);
    if (index < components_before(cfg, s)) return true;
  }
  return false;
}

}  // namespace

void validate_spec(const ModelConfig& cfg, const AblationSpec& spec) {
  if (!spec.component.valid_for(cfg)) throw UsageError("ablation: component out of range");
  if (!has_receiver(cfg, spec.component.index(cfg), spec.channel)) {
    throw UsageError("ablation: " + spec.component.name() + " has no downstream " +
                     std::string(to_string(spec.channel)) + " receiver");
  }
}

RowMatF ablate_forward(const Model& model, std::span<const int> tokens, const AblationSpec& spec,
                       const ForwardCapture& clean) {
  const ModelConfig& cfg = model.config();
  validate_spec(cfg, spec);
  if (!clean.flags.components || clean.n_pos() != static_cast<int>(tokens.size())) {
    throw UsageError("ablation: clean capture does not match the tokens");
  }
  const int k = spec.component.index(cfg);
  const LnInputHook hook = [&](Site site, int pos, Eigen::Ref<Eigen::RowVectorXf> x) {
    if (!channel_site(spec.channel, site) || k >= components_before(cfg, site)) return;
    x -= clean.component(k, pos);
  };
  return forward(model, tokens, CaptureFlags::lean(), hook).logits;
}

RowMatF ablate_forward(const Model& model, std::span<const int> tokens, const AblationSpec& spec) {
  CaptureFlags flags = CaptureFlags::lean();
  flags.components = true;
  const ForwardCapture clean = forward(model, tokens, flags);
  return ablate_forward(model, tokens, spec, clean);
}

std::pair<double, long> sequence_nll(const RowMatF& logits, std::span<const int> tokens) {
  double nll = 0.0;
  long count = 0;
  for (std::size_t p = 0; p + 1 < tokens.size(); ++p) {
    const auto row = logits.row(static_cast<Eigen::Index>(p)).cast<double>();
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    nll += lse - row(tokens[p + 1]);
    ++count;
  }
  return {nll, count};
}

KnockoutRun delta_ppl(const Model& model, const std::vector<AblationSpec>& specs,
                      const std::vector<std::vector<int>>& corpus, const ScorePanel* panel, int jobs) {
  if (corpus.empty()) throw UsageError("knockout: empty corpus");
  const ModelConfig& cfg = model.config();
  for (const auto& s : specs) validate_spec(cfg, s);

  const int n = static_cast<int>(corpus.size());
  const int S = static_cast<int>(specs.size());
  std::vector<double> base_nll(n);
  std::vector<long> base_cnt(n);
  std::vector<std::vector<double>> abl_nll(S, std::vector<double>(n));

  CaptureFlags flags = CaptureFlags::lean();
  flags.components = true;
  parallel_for(n, jobs, [&](int i) {
    const ForwardCapture clean = forward(model, corpus[i], flags);
    std::tie(base_nll[i], base_cnt[i]) = sequence_nll(clean.logits, corpus[i]);
    for (int s = 0; s < S; ++s) abl_nll[s][i] = sequence_nll(ablate_forward(model, corpus[i], specs[s], clean), corpus[i]).first;
  });

  KnockoutRun run;
  run.tokens = std::accumulate(base_cnt.begin(), base_cnt.end(), 0L);
  if (run.tokens == 0) throw UsageError("knockout: corpus has no predicted tokens");
  // fixed-order reduction
  double total = 0.0;
  for (double v : base_nll) total += v;
  run.baseline_ppl = std::exp(total / run.tokens);
  for (int s = 0; s < S; ++s) {
    double t = 0.0;
    for (double v : abl_nll[s]) t += v;
    KnockoutResult r;
    r.spec = specs[s];
    r.baseline_ppl = run.baseline_ppl;
    r.ablated_ppl = std::exp(t / run.tokens);
    r.delta_ppl = r.ablated_ppl - r.baseline_ppl;
    if (panel) {
      const int k = specs[s].component.index(cfg);
      r.strength = specs[s].channel == Channel::cut_attention ? panel->attn_strength(k) : panel->mlp_strength(k);
    }
    run.results.push_back(r);
  }
  return run;
}

namespace {

// group id: 0 for the embedding, 1 + layer otherwise
int source_group(const ComponentId& c) { return c.is_embedding() ? 0 : 1 + c.layer(); }

}  // namespace

std::vector<ComponentId> select_knockout_components(const ScorePanel& panel, int per_layer, Channel channel) {
  if (per_layer < 0) throw UsageError("per-layer count must be non-negative");
  const ModelConfig& cfg = panel.config;
  const VecD& strength = channel == Channel::cut_attention ? panel.attn_strength : panel.mlp_strength;
  std::vector<ComponentId> out;
  if (per_layer == 0) return out;
  std::vector<std::vector<int>> groups(cfg.n_layers + 1);
  for (int k = 0; k < cfg.n_components(); ++k) {
    if (has_receiver(cfg, k, channel)) groups[source_group(ComponentId::from_index(k, cfg))].push_back(k);
  }
  for (auto& g : groups) {
    if (g.empty()) continue;
    std::stable_sort(g.begin(), g.end(), [&](int a, int b) { return strength(a) < strength(b); });
    const int n = static_cast<int>(g.size());
    const int m = std::min(per_layer, n);
    std::vector<int> picked;
    for (int i = 0; i < m; ++i) {
      const int q = m == 1 ? (n - 1) / 2 : static_cast<int>(std::lround(static_cast<double>(i) * (n - 1) / (m - 1)));
      picked.push_back(g[q]);
    }
    std::sort(picked.begin(), picked.end());
    picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
    for (int k : picked) out.push_back(ComponentId::from_index(k, cfg));
  }
  return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw UsageError("spearman: need two equal-length lists of >= 2");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::vector<SpearmanRow> spearman_report(const std::vector<KnockoutResult>& results) {
  std::vector<SpearmanRow> rows;
  for (Channel ch : {Channel::cut_attention, Channel::cut_mlp}) {
    std::vector<double> xs, ys;
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const auto& r : results) {
      if (r.spec.channel != ch) continue;
      xs.push_back(r.strength);
      ys.push_back(r.delta_ppl);
      auto& g = groups[source_group(r.spec.component)];
      g.first.push_back(r.strength);
      g.second.push_back(r.delta_ppl);
    }
    if (xs.size() < 2) continue;
    SpearmanRow row{ch};
    row.n = static_cast<int>(xs.size());
    row.cross_layer = spearman(xs, ys);
    double sum = 0.0;
    for (const auto& [id, g] : groups) {
      if (g.first.size() < 2) continue;
      sum += spearman(g.first, g.second);
      ++row.groups;
    }
    row.within_layer = row.groups ? sum / row.groups : 0.0;
    rows.push_back(row);
  }
  return rows;
}

Table knockout_table(const KnockoutRun& run) {
  Table t;
  t.notes.push_back("baseline_ppl = " + fmt(run.baseline_ppl, 6) + "; tokens = " + std::to_string(run.tokens));
  t.header = {"component", "channel", "strength", "delta_ppl"};
  for (const auto& r : run.results) {
    t.add({r.spec.component.name(), std::string(to_string(r.spec.channel)), fmt(r.strength, 8), fmt(r.delta_ppl, 8)});
  }
  return t;
}

Table spearman_table(const std::vector<SpearmanRow>& rows) {
  Table t;
  t.header = {"channel", "within_layer_rho", "groups", "cross_layer_rho", "n"};
  for (const auto& r : rows) {
    t.add({std::string(to_string(r.channel)), fmt(r.within_layer, 3), std::to_string(r.groups), fmt(r.cross_layer, 3),
           std::to_string(r.n)});
  }
  return t;
}

}  // namespace unpack
