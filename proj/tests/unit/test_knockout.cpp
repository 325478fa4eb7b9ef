#include <cmath>

#include "common.hpp"
#include "unpack/errors.hpp"
#include "unpack/knockout.hpp"

using namespace unpack;
using namespace unpack::test;

namespace {

VecD ln(const VecD& x, ConstVecMapF w, ConstVecMapF b, double eps) {
  return layer_norm(x, w.cast<double>(), b.cast<double>(), eps);
}

}  // namespace

TEST(Knockout, NullAblationIsBitIdentical) {
  const ModelConfig cfg = toy_config(2, BlockLayout::sequential, false);
  const Model m = make_toy_model(cfg, {.seed = 41, .zero_values = true});
  const auto tokens = random_tokens(6, 64, 1);
  const ForwardCapture clean = forward(m, tokens);
  const RowMatF ab = ablate_forward(m, tokens, {ComponentId::head(0, 1), Channel::cut_attention});
  EXPECT_TRUE(ab == clean.logits);
  const KnockoutRun run = delta_ppl(m, {{ComponentId::head(0, 0), Channel::cut_mlp}}, {tokens, random_tokens(4, 64, 2)});
  ASSERT_EQ(run.results.size(), 1u);
  EXPECT_EQ(run.results[0].delta_ppl, 0.0);
  EXPECT_EQ(run.tokens, 5 + 3);
}

TEST(Knockout, CutMlpMatchesHandSplicedForward) {
  for (auto layout : {BlockLayout::sequential, BlockLayout::parallel}) {
    const ModelConfig cfg = toy_config(1, layout, false);
    const Model m = make_toy_model(cfg, {.seed = 42});
    const auto tokens = random_tokens(5, 64, 3);
    const ForwardCapture clean = forward(m, tokens, CaptureFlags::all());
    const RowMatF ab = ablate_forward(m, tokens, {ComponentId::embedding(), Channel::cut_mlp});
    const RowMatD wu = m.unembed().cast<double>();
    double worst = 0, scale = 0;
    for (int p = 0; p < 5; ++p) {
      const VecD mlp_in = clean.residuals[Site::mlp(0).index()].row(p).cast<double>().transpose();
      const VecD emb = clean.component(0, p).cast<double>().transpose();
      const VecD y = ln(mlp_in - emb, m.ln2_w(0), m.ln2_b(0), cfg.ln_epsilon);
      VecD pre = m.w_in(0).cast<double>().transpose() * y + m.b_in(0).cast<double>();
      for (Eigen::Index j = 0; j < pre.size(); ++j) pre(j) = m.activation(pre(j));
      const VecD mlp_out = m.w_out(0).cast<double>().transpose() * pre + m.b_out(0).cast<double>();
      // trunk: everything the clean run wrote except the MLP, then the ablated MLP
      const VecD clean_mlp = clean.component(ComponentId::mlp(0).index(cfg), p).cast<double>().transpose() +
                             m.b_out(0).cast<double>();
      const VecD final_in = clean.residuals[Site::final_ln(cfg).index()].row(p).cast<double>().transpose() -
                            clean_mlp + mlp_out;
      VecD logits = wu * ln(final_in, m.lnf_w(), m.lnf_b(), cfg.ln_epsilon);
      if (m.unembed_bias()) {
        for (Eigen::Index v = 0; v < logits.size(); ++v) logits(v) += m.unembed_bias()[v];
      }
      worst = std::max(worst, (ab.row(p).cast<double>().transpose() - logits).cwiseAbs().maxCoeff());
      scale = std::max(scale, logits.cwiseAbs().maxCoeff());
    }
    EXPECT_LE(worst, 1e-6 * scale);
  }
}

TEST(Knockout, CutAttentionOfEmbeddingLeavesOnlyLnBiasInLayerZero) {
  // layer 0's attention input is exactly the embedding, so its LN sees a zero vector
  const ModelConfig cfg = toy_config(1, BlockLayout::sequential, false);
  const Model m = make_toy_model(cfg, {.seed = 43});
  const auto tokens = random_tokens(4, 64, 4);
  const RowMatF a = ablate_forward(m, tokens, {ComponentId::embedding(), Channel::cut_attention});
  const RowMatF b = ablate_forward(m, random_tokens(4, 64, 5), {ComponentId::embedding(), Channel::cut_attention});
  EXPECT_FALSE(a.isApprox(forward(m, tokens).logits));
  EXPECT_FALSE(a.isApprox(b));
}

TEST(Knockout, SpecValidation) {
  const ModelConfig cfg = toy_config(2, BlockLayout::parallel, false);
  EXPECT_THROW(validate_spec(cfg, {ComponentId::mlp(1), Channel::cut_attention}), UsageError);
  EXPECT_THROW(validate_spec(cfg, {ComponentId::mlp(1), Channel::cut_mlp}), UsageError);
  EXPECT_THROW(validate_spec(cfg, {ComponentId::head(1, 0), Channel::cut_mlp}), UsageError);  // parallel
  EXPECT_NO_THROW(validate_spec(cfg, {ComponentId::head(0, 0), Channel::cut_mlp}));
  EXPECT_THROW(validate_spec(cfg, {ComponentId::head(5, 0), Channel::cut_mlp}), UsageError);
  const ModelConfig seq = toy_config(2, BlockLayout::sequential, false);
  EXPECT_NO_THROW(validate_spec(seq, {ComponentId::head(1, 0), Channel::cut_mlp}));
  EXPECT_EQ(parse_channel("cut_mlp"), Channel::cut_mlp);
  EXPECT_THROW(parse_channel("cut_everything"), UsageError);
}

TEST(Knockout, SequenceNll) {
  RowMatF logits = RowMatF::Zero(3, 4);
  logits(0, 2) = std::log(3.0f);
  const auto [nll, n] = sequence_nll(logits, std::vector<int>{0, 2, 1});
  EXPECT_EQ(n, 2);
  EXPECT_NEAR(nll, -std::log(0.5) + std::log(4.0), 1e-6);
}

TEST(Knockout, DeltaPplIsDeterministicAcrossJobs) {
  const Model m = make_toy_model(toy_config(2, BlockLayout::sequential, true), {.seed = 44});
  std::vector<std::vector<int>> corpus;
  for (int i = 0; i < 5; ++i) corpus.push_back(random_tokens(6, 64, 50 + i));
  const std::vector<AblationSpec> specs{{ComponentId::embedding(), Channel::cut_mlp},
                                        {ComponentId::head(0, 1), Channel::cut_attention},
                                        {ComponentId::mlp(0), Channel::cut_attention}};
  const KnockoutRun a = delta_ppl(m, specs, corpus, nullptr, 1);
  const KnockoutRun b = delta_ppl(m, specs, corpus, nullptr, 3);
  ASSERT_EQ(a.results.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(a.results[i].delta_ppl, b.results[i].delta_ppl);
  EXPECT_EQ(a.baseline_ppl, b.baseline_ppl);
  double nll = 0;
  for (const auto& s : corpus) nll += sequence_nll(forward(m, s).logits, s).first;
  EXPECT_NEAR(a.baseline_ppl, std::exp(nll / 25), 1e-9 * a.baseline_ppl);
  EXPECT_THROW(delta_ppl(m, specs, {}), UsageError);
}

TEST(Knockout, SelectionTakesQuantilesPerGroup) {
  ScorePanel p;
  p.config = toy_config(2, BlockLayout::parallel, false);  // K = 7
  p.attn_strength = VecD::Zero(7);
  p.mlp_strength = VecD::Zero(7);
  // layer 0 group: A0.H0=3, A0.H1=1, MLP0=2; layer 1: A1.H0=5, A1.H1=4, MLP1=6
  p.attn_strength << 9, 3, 1, 2, 5, 4, 6;
  p.mlp_strength = p.attn_strength;
  auto names = [](const std::vector<ComponentId>& v) {
    std::vector<std::string> out;
    for (const auto& c : v) out.push_back(c.name());
    return out;
  };
  // attention: layer 1 writers have no receiver
  EXPECT_EQ(names(select_knockout_components(p, 1, Channel::cut_attention)),
            (std::vector<std::string>{"embed", "MLP0"}));
  EXPECT_EQ(names(select_knockout_components(p, 2, Channel::cut_attention)),
            (std::vector<std::string>{"embed", "A0.H0", "A0.H1"}));
  EXPECT_EQ(names(select_knockout_components(p, 5, Channel::cut_attention)),
            (std::vector<std::string>{"embed", "A0.H0", "A0.H1", "MLP0"}));
  // parallel: layer 1 heads read the same input as MLP1, so nothing in layer 1 is cut
  EXPECT_EQ(names(select_knockout_components(p, 3, Channel::cut_mlp)),
            (std::vector<std::string>{"embed", "A0.H0", "A0.H1", "MLP0"}));
  EXPECT_TRUE(select_knockout_components(p, 0, Channel::cut_mlp).empty());
}

TEST(Knockout, SelectionCountForTwelveLayerParallelShape) {
  ScorePanel p;
  p.config = toy_config(12, BlockLayout::parallel, false);
  p.config.n_heads = 12;
  const int K = p.config.n_components();
  p.attn_strength = VecD::LinSpaced(K, 0, 1);
  p.mlp_strength = p.attn_strength;
  EXPECT_EQ(select_knockout_components(p, 5, Channel::cut_attention).size(), 56u);
}

TEST(Spearman, KnownValues) {
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0, 1e-12);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-12);
  EXPECT_NEAR(spearman({1, 2, 3}, {1, std::exp(5.0), 1e9}), 1.0, 1e-12);
  // ties: ranks (1.5, 1.5, 3) vs (1, 2, 3)
  EXPECT_NEAR(spearman({1, 1, 2}, {1, 2, 3}), 0.8660254037844386, 1e-12);
  EXPECT_EQ(spearman({1, 1, 1}, {1, 2, 3}), 0.0);
  EXPECT_THROW(spearman({1}, {1}), UsageError);
}

TEST(Spearman, ReportGroupsBySourceLayer) {
  std::vector<KnockoutResult> rs;
  auto add = [&](ComponentId c, double s, double d) {
    KnockoutResult r;
    r.spec = {c, Channel::cut_attention};
    r.strength = s;
    r.delta_ppl = d;
    rs.push_back(r);
  };
  add(ComponentId::embedding(), 10, 100);
  add(ComponentId::head(0, 0), 1, 3);
  add(ComponentId::head(0, 1), 2, 2);
  add(ComponentId::head(1, 0), 1, 1);
  add(ComponentId::head(1, 1), 3, 5);
  const auto rows = spearman_report(rs);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].groups, 2);
  EXPECT_NEAR(rows[0].within_layer, 0.0, 1e-12);  // -1 and +1
  EXPECT_EQ(rows[0].n, 5);
  EXPECT_EQ(spearman_table(rows).rows.size(), 1u);
}
