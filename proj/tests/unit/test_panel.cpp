#include <sstream>

#include "common.hpp"
#include "unpack/decomposition.hpp"
#include "unpack/errors.hpp"
#include "unpack/score_panel.hpp"

using namespace unpack;
using namespace unpack::test;

namespace {

// per (prompt, q, receiver) from the per-pair contribution routes, all at once
ScorePanel naive_panel(const Model& model, const std::vector<std::vector<int>>& prompts) {
  const ModelConfig& cfg = model.config();
  const int L = cfg.n_layers, H = cfg.n_heads, K = cfg.n_components();
  ScorePanel p;
  p.config = cfg;
  p.attn_score = RowMatD::Zero(K, L * H);
  p.mlp_score = RowMatD::Zero(K, L);
  RowMatD attn_mean = RowMatD::Zero(K, L * H);
  std::vector<RowMatD> mlp_mean(L, RowMatD::Zero(K, cfg.d_mlp));
  long count = 0;
  for (const auto& tokens : prompts) {
    const ForwardCapture cap = forward(model, tokens, CaptureFlags::all());
    const Decomposer dec(model, cap);
    for (int q = 0; q < cap.n_pos(); ++q) {
      ++count;
      for (int l = 0; l < L; ++l) {
        for (int h = 0; h < H; ++h) {
          RowMatD s(dec.prefix(Site::attn(l)), q + 1);
          for (int src = 0; src <= q; ++src) s.col(src) = dec.key_contribs(l, h, q, src);
          for (Eigen::Index k = 0; k < s.rows(); ++k) {
            const double mu = s.row(k).mean();
            p.attn_score(k, l * H + h) += std::sqrt((s.row(k).array() - mu).square().mean());
            attn_mean(k, l * H + h) += mu;
          }
        }
        const RowMatD m = dec.mlp_contribs(l, q);
        for (Eigen::Index k = 0; k < m.rows(); ++k) {
          p.mlp_score(k, l) += m.row(k).norm();
          mlp_mean[l].row(k) += m.row(k);
        }
      }
    }
  }
  p.attn_score /= count;
  p.mlp_score /= count;
  p.attn_strength = (attn_mean / count).cwiseAbs().rowwise().sum();
  p.mlp_strength = VecD::Zero(K);
  for (int l = 0; l < L; ++l) p.mlp_strength += (mlp_mean[l] / count).rowwise().norm();
  p.n_positions = count;
  return p;
}

double rel_err(const RowMatD& a, const RowMatD& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff());
}

std::vector<std::vector<int>> prompt_set(int n, std::uint64_t seed) {
  std::vector<std::vector<int>> out;
  for (int i = 0; i < n; ++i) out.push_back(random_tokens(3 + i % 4, 64, seed + i));
  return out;
}

}  // namespace

class PanelShapes : public ::testing::TestWithParam<Shape> {};

TEST_P(PanelShapes, StreamedMatchesNaive) {
  const Shape s = GetParam();
  const Model m = make_toy_model(toy_config(s.layers, s.layout, s.rotary), {.seed = 31});
  const auto prompts = prompt_set(4, 100);
  const ScorePanel a = stream_score_panel(m, prompts);
  const ScorePanel b = naive_panel(m, prompts);
  EXPECT_EQ(a.n_positions, b.n_positions);
  EXPECT_EQ(a.n_prompts, 4);
  EXPECT_LE(rel_err(a.attn_score, b.attn_score), 1e-6);
  EXPECT_LE(rel_err(a.mlp_score, b.mlp_score), 1e-6);
  EXPECT_LE(rel_err(a.attn_strength, b.attn_strength), 1e-6);
  EXPECT_LE(rel_err(a.mlp_strength, b.mlp_strength), 1e-6);
  for (int k = 0; k < m.config().n_components(); ++k) {
    for (int r = 0; r < a.n_receivers(); ++r) {
      if (a.upstream(k, r)) continue;
      const int heads = m.config().n_layers * m.config().n_heads;
      EXPECT_EQ(r < heads ? a.attn_score(k, r) : a.mlp_score(k, r - heads), 0.0);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Toy, PanelShapes, ::testing::ValuesIn(all_shapes()), shape_name);

TEST(Panel, PromptOrderDoesNotMatter) {
  const Model m = make_toy_model(toy_config(2, BlockLayout::parallel, true), {.seed = 32});
  auto prompts = prompt_set(5, 7);
  const ScorePanel a = stream_score_panel(m, prompts);
  std::reverse(prompts.begin(), prompts.end());
  std::swap(prompts[0], prompts[2]);
  const ScorePanel b = stream_score_panel(m, prompts);
  EXPECT_TRUE(a.attn_score == b.attn_score);
  EXPECT_TRUE(a.mlp_score == b.mlp_score);
  EXPECT_TRUE(a.attn_strength == b.attn_strength);
  EXPECT_TRUE(a.mlp_strength == b.mlp_strength);
}

TEST(Panel, SinglePromptAndEmptySet) {
  const Model m = make_toy_model(toy_config(2, BlockLayout::sequential, false), {.seed = 33});
  const std::vector<std::vector<int>> one{random_tokens(5, 64, 3)};
  const ScorePanel a = stream_score_panel(m, one);
  EXPECT_LE(rel_err(a.attn_score, naive_panel(m, one).attn_score), 1e-6);
  EXPECT_EQ(a.n_positions, 5);
  EXPECT_THROW(stream_score_panel(m, {}), UsageError);
}

TEST(Panel, FirstPositionHasNoSpread) {
  const Model m = make_toy_model(toy_config(1, BlockLayout::sequential, false), {.seed = 34});
  const ScorePanel a = stream_score_panel(m, {{5}});
  EXPECT_EQ(a.attn_score.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(a.attn_strength(0), 0.0);
}

TEST(Panel, ReceiverNamesAndUpstream) {
  const Model m = make_toy_model(toy_config(2, BlockLayout::parallel, false), {.seed = 35});
  const ScorePanel a = stream_score_panel(m, {{1, 2, 3}});
  EXPECT_EQ(a.n_receivers(), 6);
  EXPECT_EQ(a.receiver_name(0), "A0.H0");
  EXPECT_EQ(a.receiver_name(3), "A1.H1");
  EXPECT_EQ(a.receiver_name(4), "MLP0");
  const ModelConfig& cfg = m.config();
  EXPECT_TRUE(a.upstream(0, 0));
  EXPECT_FALSE(a.upstream(ComponentId::head(0, 0).index(cfg), 4));  // parallel: same-layer heads miss MLP0
  EXPECT_TRUE(a.upstream(ComponentId::mlp(0).index(cfg), 2));
}

TEST(Panel, BinaryRoundTripAndTsv) {
  const Model m = make_toy_model(toy_config(2, BlockLayout::sequential, true), {.seed = 36});
  const ScorePanel a = stream_score_panel(m, prompt_set(2, 9));
  const auto dir = temp_dir("panel");
  write_panel_binary(a, dir / "panel.manifest", dir / "panel.bin");
  const ScorePanel b = read_panel_binary(dir / "panel.manifest", dir / "panel.bin");
  EXPECT_EQ(b.config.n_layers, 2);
  EXPECT_EQ(b.n_prompts, a.n_prompts);
  EXPECT_EQ(b.n_positions, a.n_positions);
  EXPECT_LE(rel_err(b.attn_score, a.attn_score), 1e-6);
  EXPECT_LE(rel_err(b.mlp_strength, a.mlp_strength), 1e-6);

  std::ostringstream out;
  write_panel_tsv(a, out);
  const std::string s = out.str();
  EXPECT_EQ(s.rfind("# averaging = joint", 0), 0u);
  EXPECT_NE(s.find("component\treceiver\tkind\tscore\n"), std::string::npos);
  EXPECT_NE(s.find("embed\tA0.H0\tattn_score\t"), std::string::npos);
  EXPECT_NE(s.find("MLP1\t*\tmlp_strength\t"), std::string::npos);
}
