#include "common.hpp"
#include "unpack/container.hpp"
#include "unpack/errors.hpp"

using namespace unpack;
using namespace unpack::test;

class ForwardShapes : public ::testing::TestWithParam<Shape> {};

TEST_P(ForwardShapes, ComponentSumIdentity) {
  const Shape s = GetParam();
  const Model m = make_toy_model(toy_config(s.layers, s.layout, s.rotary), {.seed = 3});
  const auto ids = random_tokens(9, 64, 4);
  const ForwardCapture cap = forward(m, ids, CaptureFlags::all());
  const ModelConfig& cfg = m.config();
  for (int site = 0; site < Site::count(cfg); ++site) {
    const Site st = site == 2 * cfg.n_layers ? Site::final_ln(cfg) : (site % 2 ? Site::mlp(site / 2) : Site::attn(site / 2));
    ASSERT_EQ(st.index(), site);
    const int m_before = components_before(cfg, st);
    for (int p = 0; p < cap.n_pos(); ++p) {
      const VecD sum = cap.components[p].topRows(m_before).cast<double>().colwise().sum().transpose() +
                       cap.site_bias[site];
      const VecD raw = cap.residuals[site].row(p).cast<double>().transpose();
      EXPECT_LE((sum - raw).norm(), 1e-5 * raw.norm()) << st.name() << " pos " << p;
      auto listed = residual_components(cap, st, p);
      ASSERT_EQ(static_cast<int>(listed.size()), m_before);
    }
  }
}

TEST_P(ForwardShapes, AttentionRowsAreCausalDistributions) {
  const Shape s = GetParam();
  const Model m = make_toy_model(toy_config(s.layers, s.layout, s.rotary), {.seed = 8, .init_scale = 3.0});
  const ForwardCapture cap = forward(m, random_tokens(12, 64, 1));
  for (const RowMatD& a : cap.attn) {
    for (int q = 0; q < a.rows(); ++q) {
      EXPECT_NEAR(a.row(q).sum(), 1.0, 1e-6);
      for (int src = q + 1; src < a.cols(); ++src) EXPECT_EQ(a(q, src), 0.0);
    }
  }
}

TEST_P(ForwardShapes, Deterministic) {
  const Shape s = GetParam();
  const Model m = make_toy_model(toy_config(s.layers, s.layout, s.rotary), {.seed = 2});
  const auto ids = random_tokens(10, 64, 9);
  const ForwardCapture a = forward(m, ids, CaptureFlags::all());
  const ForwardCapture b = forward(m, ids, CaptureFlags::all());
  EXPECT_TRUE(a.logits == b.logits);
  for (int p = 0; p < a.n_pos(); ++p) EXPECT_TRUE(a.components[p] == b.components[p]);
  for (std::size_t i = 0; i < a.attn.size(); ++i) EXPECT_TRUE(a.attn[i] == b.attn[i]);
}

INSTANTIATE_TEST_SUITE_P(Toy, ForwardShapes, ::testing::ValuesIn(all_shapes()), shape_name);

TEST(ForwardTest, ZeroWeightsGiveUniformLogits) {
  const Model m = make_toy_model(toy_config(2, BlockLayout::sequential, false), {.zero_weights = true});
  const ForwardCapture cap = forward(m, random_tokens(5, 64, 0));
  for (int p = 0; p < cap.n_pos(); ++p) {
    EXPECT_EQ(cap.logits.row(p).maxCoeff(), cap.logits.row(p).minCoeff());
  }
}

TEST(ForwardTest, ZeroWritersLeaveOnlyTheEmbedding) {
  ToyModelOptions o{.seed = 4, .zero_values = true, .zero_mlp_in = true};
  o.bias_scale = 0.0;
  const Model m = make_toy_model(toy_config(1, BlockLayout::sequential, false), o);
  const ForwardCapture cap = forward(m, random_tokens(6, 64, 2), CaptureFlags::all());
  const Site fin = Site::final_ln(m.config());
  for (int p = 0; p < cap.n_pos(); ++p) {
    const VecD raw = cap.residuals[fin.index()].row(p).cast<double>().transpose();
    const VecD emb = cap.component(0, p).cast<double>().transpose();
    EXPECT_LE((raw - emb).norm(), 1e-6 * emb.norm());
    for (int k = 1; k < m.config().n_components(); ++k) EXPECT_EQ(cap.components[p].row(k).norm(), 0.0);
  }
}

TEST(ForwardTest, ParallelMlpInputExcludesSameLayerHeads) {
  const Model m = make_toy_model(toy_config(2, BlockLayout::parallel, true), {.seed = 1});
  const ForwardCapture cap = forward(m, random_tokens(4, 64, 3), CaptureFlags::all());
  const auto listed = residual_components(cap, Site::mlp(0), 2);
  ASSERT_EQ(listed.size(), 1u);
  EXPECT_TRUE(listed[0].first.is_embedding());
  EXPECT_EQ(residual_components(cap, Site::attn(0), 0).size(), 1u);
}

TEST(ForwardTest, InputErrors) {
  const Model m = make_toy_model(toy_config(1, BlockLayout::sequential, false));
  EXPECT_THROW(forward(m, std::vector<int>{}), UsageError);
  EXPECT_THROW(forward(m, std::vector<int>{64}), UsageError);
  EXPECT_THROW(forward(m, random_tokens(33, 64, 0)), UsageError);
}

// Reference logits recorded from the source implementation on tiny random models.
class ReferenceLogits : public ::testing::TestWithParam<std::string> {};

TEST_P(ReferenceLogits, MatchSourceImplementation) {
  const auto dir = fixture_dir() / "reference" / GetParam();
  const Model m = load_model(dir);
  const Container ref = read_container(dir / "fixtures/logits_ref.manifest", dir / "fixtures/logits_ref.bin");
  const int prompts = std::stoi(*ref.field("prompts"));
  ASSERT_GT(prompts, 0);
  for (int i = 0; i < prompts; ++i) {
    const Tensor& t = ref.tensors.at("prompt" + std::to_string(i) + ".tokens");
    const Tensor& l = ref.tensors.at("prompt" + std::to_string(i) + ".logits");
    std::vector<int> ids(t.data.begin(), t.data.end());
    const ForwardCapture cap = forward(m, ids, CaptureFlags::lean());
    const int rows = static_cast<int>(l.shape[0]);
    const int V = static_cast<int>(l.shape[1]);
    ASSERT_EQ(V, m.config().vocab_size);
    for (int r = 0; r < rows; ++r) {
      const int p = cap.n_pos() - rows + r;
      double max_ref = 0, max_diff = 0;
      for (int v = 0; v < V; ++v) {
        const double want = l.data[static_cast<std::size_t>(r) * V + v];
        max_ref = std::max(max_ref, std::abs(want));
        max_diff = std::max(max_diff, std::abs(want - cap.logits(p, v)));
      }
      EXPECT_LE(max_diff, 1e-3 * max_ref) << "prompt " << i << " pos " << p;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Tiny, ReferenceLogits, ::testing::Values("gpt2_tiny", "neox_tiny", "neox_seq_tiny"));
