#include <random>

#include "common.hpp"
#include "unpack/attribution.hpp"
#include "unpack/errors.hpp"
#include "unpack/paths.hpp"
#include "unpack/safe_denom.hpp"

using namespace unpack;
using namespace unpack::test;

namespace {

struct Fixture {
  Model model;
  ForwardCapture cap;
  Fixture(int layers, BlockLayout layout, bool rotary, std::uint64_t seed, int n = 6, ToyModelOptions o = {})
      : model(make_toy_model(toy_config(layers, layout, rotary), (o.seed = seed, o))),
        cap(forward(model, random_tokens(n, 64, seed + 7), CaptureFlags::all())) {}
};

TraceConfig config(const std::string& name, int target, double beta = 0.8, double tau = 0.0) {
  TraceConfig c = TraceConfig::named(name);
  c.beta = beta;
  c.tau = tau;
  c.top_k_paths = 1'000'000;
  c.target = Target::single_token(target);
  return c;
}

// centered logit with the final LN standard deviation frozen at its captured value
double frozen_logit(const Model& m, const ForwardCapture& cap, const VecD& x, int pos, int t) {
  const ModelConfig& cfg = m.config();
  const double sigma = cap.ln_sigma(Site::final_ln(cfg), pos);
  const VecD y = ((x.array() - x.mean()) / sigma * m.lnf_w().cast<double>().array() +
                  m.lnf_b().cast<double>().array()).matrix();
  const RowMatD wu = m.unembed().cast<double>();
  const VecD u = wu.row(t).transpose() - wu.colwise().mean().transpose();
  return y.dot(u);
}

}  // namespace

TEST(TargetDirection, DegenerateTargets) {
  const Fixture f(2, BlockLayout::sequential, false, 1);
  EXPECT_EQ(target_direction(f.model, f.cap, Target::diff(5, 5), 3).norm(), 0.0);
  auto tensors = f.model.tensors();
  const int d = f.model.config().d_model;
  for (const char* name : {"embed.weight", "unembed.weight"}) {
    if (!tensors.contains(name)) continue;
    Tensor& e = tensors[name];
    for (int v = 1; v < f.model.config().vocab_size; ++v) {
      std::copy(e.data.begin(), e.data.begin() + d, e.data.begin() + static_cast<std::ptrdiff_t>(v) * d);
    }
  }
  const Model same(f.model.config(), tensors);
  const ForwardCapture cap = forward(same, random_tokens(4, 64, 2), CaptureFlags::all());
  EXPECT_LE(target_direction(same, cap, Target::single_token(9), 2).norm(), 1e-12);
  EXPECT_THROW(target_direction(same, cap, Target::single_token(64), 2), UsageError);
}

TEST(TargetDirection, MatchesFrozenLnFiniteDifferences) {
  for (auto layout : {BlockLayout::sequential, BlockLayout::parallel}) {
    const Fixture f(2, layout, layout == BlockLayout::parallel, 2);
    const ModelConfig& cfg = f.model.config();
    const int p = f.cap.n_pos() - 1, t = 17;
    const VecD d = target_direction(f.model, f.cap, Target::single_token(t), p);
    const VecD x = f.cap.residuals[Site::final_ln(cfg).index()].row(p).cast<double>().transpose();
    const double delta = 1e-3;
    for (int k = 0; k < cfg.n_components(); ++k) {
      const VecD c = f.cap.component(k, p).cast<double>().transpose();
      const double fd = (frozen_logit(f.model, f.cap, x + delta * c, p, t) - frozen_logit(f.model, f.cap, x, p, t)) / delta;
      EXPECT_TRUE(close(c.dot(d), fd, 1e-3, 1e-3 * c.norm() * d.norm())) << "component " << k;
    }
  }
}

class Variants : public ::testing::TestWithParam<std::tuple<std::string, BlockLayout>> {};

TEST_P(Variants, ConservationWithoutFloorTrips) {
  const auto [name, layout] = GetParam();
  const Fixture f(2, layout, layout == BlockLayout::parallel, 3);
  Attributor a(f.model, f.cap, config(name, 11, 1e-9));
  const VecD roots = a.root_importances(5);
  const CreditLedger led = a.trace(5);
  ASSERT_EQ(led.floor_trips, 0u);
  ASSERT_EQ(led.lost_credit, 0.0);
  ASSERT_FALSE(led.truncated);
  EXPECT_TRUE(close(led.token_credit.sum(), roots.sum(), 1e-4, roots.cwiseAbs().sum()));
  EXPECT_NEAR(led.total_root_importance, roots.sum(), 1e-12);
  const AggregateResult agg = a.aggregate_token_credit(5);
  EXPECT_EQ(agg.floor_trips, 0u);
  EXPECT_TRUE(close(agg.token_credit.sum(), roots.sum(), 1e-4, roots.cwiseAbs().sum()));
}

TEST_P(Variants, AggregateEqualsExhaustiveTrace) {
  const auto [name, layout] = GetParam();
  const Fixture f(2, layout, layout == BlockLayout::parallel, 4);
  Attributor a(f.model, f.cap, config(name, 23));
  const CreditLedger led = a.trace(5);
  ASSERT_FALSE(led.truncated);
  ASSERT_GT(led.paths.size(), 100u);
  ASSERT_GT(led.token_credit.cwiseAbs().minCoeff(), 0.0);
  const AggregateResult agg = a.aggregate_token_credit(5);
  const double scale = led.token_credit.cwiseAbs().sum();
  EXPECT_LE((agg.token_credit - led.token_credit).cwiseAbs().maxCoeff(), 1e-6 * scale)
      << agg.token_credit.transpose() << "\n" << led.token_credit.transpose();
  // the enumerated paths are all the paths, so they sum to the ledger too
  VecD from_paths = VecD::Zero(led.token_credit.size());
  for (const Path& p : led.paths) from_paths(p.hops.front().position) += p.magnitude;
  EXPECT_LE((from_paths - led.token_credit).cwiseAbs().maxCoeff(), 1e-9 * scale);
  EXPECT_NEAR(agg.lost_credit, led.lost_credit, 1e-9 * scale);
}

TEST_P(Variants, SignFlipOfTargetNegatesCredit) {
  const auto [name, layout] = GetParam();
  const Fixture f(2, layout, false, 5);
  TraceConfig c = config(name, 0);
  c.target = Target::diff(3, 9);
  const VecD a = Attributor(f.model, f.cap, c).aggregate_token_credit(4).token_credit;
  c.target = Target::diff(9, 3);
  const VecD b = Attributor(f.model, f.cap, c).aggregate_token_credit(4).token_credit;
  EXPECT_LE((a + b).cwiseAbs().maxCoeff(), 1e-12 * (1 + a.cwiseAbs().sum()));
}

INSTANTIATE_TEST_SUITE_P(
    Toy, Variants,
    ::testing::Combine(::testing::ValuesIn(TraceConfig::names()),
                       ::testing::Values(BlockLayout::sequential, BlockLayout::parallel)),
    [](const auto& info) {
      return std::get<0>(info.param) + (std::get<1>(info.param) == BlockLayout::parallel ? "_parallel" : "_sequential");
    });

TEST(Attribution, AggregateMatchesTraceOnThreeLayers) {
  const Fixture f(3, BlockLayout::parallel, true, 6, 4);
  Attributor a(f.model, f.cap, config("kqv_aligned", 5));
  const CreditLedger led = a.trace(3);
  ASSERT_FALSE(led.truncated);
  const AggregateResult agg = a.aggregate_token_credit(3);
  EXPECT_LE((agg.token_credit - led.token_credit).cwiseAbs().maxCoeff(), 1e-6 * led.token_credit.cwiseAbs().sum());
}

TEST(Attribution, UnitWeightsReproduceKOnly) {
  for (const char* mlp : {"weighted", "l2", "aligned"}) {
    const Fixture f(2, BlockLayout::sequential, false, 7);
    TraceConfig k = config(std::string("k_only_") + mlp, 30, 0.8, 1e-4);
    TraceConfig q = config(std::string("kqv_") + mlp, 30, 0.8, 1e-4);
    q.w_k = 1.0, q.w_q = 0.0, q.w_v = 0.0;
    const CreditLedger a = Attributor(f.model, f.cap, k).trace(5);
    const CreditLedger b = Attributor(f.model, f.cap, q).trace(5);
    ASSERT_EQ(a.paths.size(), b.paths.size()) << mlp;
    for (std::size_t i = 0; i < a.paths.size(); ++i) {
      ASSERT_EQ(a.paths[i].hops, b.paths[i].hops);
      ASSERT_EQ(a.paths[i].magnitude, b.paths[i].magnitude);
    }
    EXPECT_TRUE(a.token_credit == b.token_credit);
  }
}

TEST(Attribution, ZeroLayerModelPutsCreditAtThePosition) {
  const Model m = make_toy_model(toy_config(0, BlockLayout::sequential, false), {.seed = 1});
  const ForwardCapture cap = forward(m, random_tokens(5, 64, 1), CaptureFlags::all());
  Attributor a(m, cap, config("kqv_aligned", 4));
  const CreditLedger led = a.trace(3);
  const VecD roots = a.root_importances(3);
  ASSERT_EQ(roots.size(), 1);
  for (int p = 0; p < 5; ++p) EXPECT_EQ(led.token_credit(p), p == 3 ? roots(0) : 0.0);
  ASSERT_EQ(led.paths.size(), 1u);
  EXPECT_EQ(led.paths[0].hops.size(), 1u);
}

TEST(Attribution, PathsWalkStrictlyUpstream) {
  const Fixture f(3, BlockLayout::sequential, true, 8, 5);
  Attributor a(f.model, f.cap, config("kqv_aligned", 2, 0.8, 1e-3));
  const CreditLedger led = a.trace(4);
  ASSERT_FALSE(led.paths.empty());
  const ModelConfig& cfg = f.model.config();
  for (const Path& p : led.paths) {
    EXPECT_TRUE(p.hops.front().component.is_embedding());
    EXPECT_EQ(p.hops.back().mode, EntryMode::root);
    for (std::size_t i = 0; i + 1 < p.hops.size(); ++i) {
      EXPECT_LT(p.hops[i].component.index(cfg), p.hops[i + 1].component.index(cfg));
      EXPECT_LE(p.hops[i].position, p.hops[i + 1].position);
    }
  }
  for (std::size_t i = 1; i < led.paths.size(); ++i) {
    EXPECT_GE(std::abs(led.paths[i - 1].magnitude), std::abs(led.paths[i].magnitude));
  }
}

TEST(Attribution, TopKKeepsTheLargestPaths) {
  const Fixture f(2, BlockLayout::parallel, false, 9);
  TraceConfig c = config("kqv_weighted", 12, 0.8, 0.0);
  const CreditLedger all = Attributor(f.model, f.cap, c).trace(5);
  c.top_k_paths = 10;
  const CreditLedger top = Attributor(f.model, f.cap, c).trace(5);
  ASSERT_EQ(top.paths.size(), 10u);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(top.paths[i].hops, all.paths[i].hops);
    EXPECT_EQ(top.paths[i].magnitude, all.paths[i].magnitude);
  }
  EXPECT_TRUE(top.token_credit == all.token_credit);
}

TEST(Attribution, TauPrunesEnumerationOnly) {
  const Fixture f(2, BlockLayout::sequential, false, 10);
  TraceConfig c = config("kqv_aligned", 12, 0.8, 0.0);
  const CreditLedger exact = Attributor(f.model, f.cap, c).trace(5);
  c.tau = 1e-2;
  const CreditLedger pruned = Attributor(f.model, f.cap, c).trace(5);
  EXPECT_LT(pruned.frames, exact.frames);
  EXPECT_GT(pruned.pruned_credit, 0.0);
  for (const Path& p : pruned.paths) EXPECT_GE(std::abs(p.magnitude), 1e-2);
}

TEST(Attribution, MaxFramesTruncates) {
  const Fixture f(2, BlockLayout::sequential, false, 10);
  TraceConfig c = config("kqv_aligned", 12);
  c.max_frames = 50;
  const CreditLedger led = Attributor(f.model, f.cap, c).trace(5);
  EXPECT_TRUE(led.truncated);
  EXPECT_LE(led.frames, 50u);
}

TEST(Dispatch, ValueDepthOneUsesAttentionWeights) {
  const Fixture f(2, BlockLayout::sequential, false, 11);
  Attributor a(f.model, f.cap, config("kqv_aligned", 1));
  a.set_root_direction(target_direction(f.model, f.cap, Target::single_token(1), 5), 5);
  for (int h = 0; h < 2; ++h) {
    const auto out = a.attention_v_dispatch(1, h, 4, 2.0, 0, 1);
    double total = 0;
    for (const auto& [s, v] : out) {
      EXPECT_NEAR(v, 2.0 * f.cap.alpha(1, h)(4, s), 1e-12);
      total += v;
    }
    EXPECT_NEAR(total, 2.0, 1e-12);
    const auto first = a.attention_v_dispatch(1, h, 0, 2.0, 0, 1);
    ASSERT_EQ(first.size(), 1u);
    EXPECT_EQ(first[0].first, 0);
    EXPECT_DOUBLE_EQ(first[0].second, 2.0);
  }
}

TEST(Dispatch, ValueDepthZeroIsBoundedAndMatchesFormula) {
  const Fixture f(2, BlockLayout::parallel, true, 12);
  for (const char* name : {"kqv_weighted", "kqv_aligned"}) {
    Attributor a(f.model, f.cap, config(name, 1));
    const VecD d = target_direction(f.model, f.cap, Target::single_token(1), 5);
    a.set_root_direction(d, 5);
    const Decomposer& dec = a.decomposer();
    const bool aligned = std::string(name) == "kqv_aligned";
    VecD dir = aligned ? dec.attn_output(1, 5) : d;
    dir.array() -= dir.mean();
    for (int h = 0; h < 2; ++h) {
      std::vector<double> r;
      for (int s = 0; s <= 5; ++s) r.push_back(f.cap.alpha(1, h)(5, s) * dec.value_sum(1, h, s).dot(dir));
      const double denom = safe_denom(r, 0.8);
      const auto out = a.attention_v_dispatch(1, h, 5, 1.5, 0, 0);
      double mass = 0;
      for (const auto& [s, v] : out) {
        EXPECT_NEAR(v, 1.5 * r[s] / denom, 1e-12);
        mass += std::abs(v);
      }
      EXPECT_LE(mass, 1.5 / 0.8 + 1e-12);
    }
  }
}

TEST(Dispatch, KeyQueryValueBranchesMatchHandRolledShares) {
  const Fixture f(2, BlockLayout::sequential, false, 13);
  TraceConfig c = config("kqv_weighted", 3);
  c.w_k = 0.5, c.w_q = 0.3, c.w_v = 0.2;
  Attributor a(f.model, f.cap, c);
  const VecD d = target_direction(f.model, f.cap, Target::single_token(3), 5);
  a.set_root_direction(d, 5);
  const Decomposer& dec = a.decomposer();
  const int l = 1, h = 1, q = 5, s = 2;
  const double is = 0.7;
  const auto kids = a.attention_k_dispatch(l, h, q, s, is, 0);
  const VecD rk = dec.key_contribs(l, h, q, s), rq = dec.query_contribs(l, h, q, s);
  const VecD rv = dec.value_vectors(l, h, s) * (d.array() - d.mean()).matrix();
  auto denom = [](const VecD& r) { return safe_denom(std::span<const double>(r.data(), r.size()), 0.8); };
  double sum[3] = {0, 0, 0};
  int seen = 0;
  for (const Child& k : kids) {
    if (k.mode == EntryMode::K) {
      EXPECT_EQ(k.position, s);
      EXPECT_NEAR(k.importance, 0.5 * is * rk(k.component) / denom(rk), 1e-12);
      sum[0] += k.importance;
    } else if (k.mode == EntryMode::Q) {
      EXPECT_EQ(k.position, q);
      EXPECT_NEAR(k.importance, 0.3 * is * rq(k.component) / denom(rq), 1e-12);
      sum[1] += k.importance;
    } else {
      ASSERT_EQ(k.mode, EntryMode::V);
      EXPECT_EQ(k.position, s);
      EXPECT_NEAR(k.importance, 0.2 * is * rv(k.component) / denom(rv), 1e-12);
      sum[2] += k.importance;
    }
    EXPECT_LT(k.component, ComponentId::head(l, 0).index(f.model.config()));
    ++seen;
  }
  EXPECT_GT(seen, 0);
  auto unfloored = [](const VecD& r) { return std::abs(r.sum()) >= 0.8 * r.cwiseAbs().sum(); };
  if (unfloored(rk)) EXPECT_NEAR(sum[0], 0.5 * is, 1e-12);
  if (unfloored(rq)) EXPECT_NEAR(sum[1], 0.3 * is, 1e-12);
  if (unfloored(rv)) EXPECT_NEAR(sum[2], 0.2 * is, 1e-12);
}

TEST(Dispatch, SingleUpstreamWriterTakesTheWholeKeyBranch) {
  const Fixture f(1, BlockLayout::sequential, false, 14);
  Attributor a(f.model, f.cap, config("kqv_weighted", 3));
  a.set_root_direction(target_direction(f.model, f.cap, Target::single_token(3), 5), 5);
  for (const Child& k : a.attention_k_dispatch(0, 0, 5, 3, 1.0, 0)) {
    EXPECT_EQ(k.component, 0);
    EXPECT_NEAR(k.importance, 1.0 / 3.0, 1e-12);
  }
}

TEST(Dispatch, MlpL2SharesAreNormFractions) {
  const Fixture f(2, BlockLayout::sequential, false, 15);
  Attributor a(f.model, f.cap, config("kqv_l2", 3));
  a.set_root_direction(target_direction(f.model, f.cap, Target::single_token(3), 5), 5);
  const RowMatD s = a.decomposer().mlp_contribs(1, 4);
  const VecD norms = s.rowwise().norm();
  for (double imp : {1.3, -0.4}) {
    const auto kids = a.mlp_dispatch(1, 4, imp, 0, 0);
    double total = 0;
    for (const Child& k : kids) {
      EXPECT_GE(k.importance * imp, 0.0);
      EXPECT_NEAR(k.importance, imp * norms(k.component) / norms.sum(), 1e-12);
      EXPECT_EQ(k.position, 4);
      total += k.importance;
    }
    EXPECT_NEAR(total, imp, 1e-12);
  }
}

TEST(Dispatch, DeadMlpLosesCredit) {
  ModelConfig cfg = toy_config(1, BlockLayout::sequential, false);
  cfg.activation = Activation::relu;
  const Model base = make_toy_model(cfg, {.seed = 16, .zero_mlp_in = true});
  auto tensors = base.tensors();
  for (float& b : tensors["blocks.0.mlp.b_in"].data) b = -1.0f;
  const Model m(cfg, tensors);
  const ForwardCapture cap = forward(m, random_tokens(4, 64, 1), CaptureFlags::all());
  for (const char* name : {"kqv_weighted", "kqv_aligned"}) {
    Attributor a(m, cap, config(name, 3));
    a.set_root_direction(target_direction(m, cap, Target::single_token(3), 3), 3);
    EXPECT_TRUE(a.mlp_dispatch(0, 3, 1.0, 0, 0).empty());
    EXPECT_TRUE(a.mlp_dispatch(0, 2, 1.0, 0, 1).empty());
    EXPECT_NEAR(a.lost_credit(), 2.0, 1e-12);
  }
}

TEST(Dispatch, MlpWeightedDeepSharesFollowGates) {
  const Fixture f(1, BlockLayout::sequential, false, 17);
  Attributor a(f.model, f.cap, config("kqv_weighted", 3, 1e-9));
  a.set_root_direction(target_direction(f.model, f.cap, Target::single_token(3), 5), 5);
  const RowMatD s = a.decomposer().mlp_contribs(0, 4);
  VecD gate(f.model.config().d_mlp);
  for (int j = 0; j < gate.size(); ++j) gate(j) = f.model.activation(f.cap.mlp_pre[0](4, j));
  // oracle: neuron share = gate / sum(gate); component credit = sum_j share_j s_kj / sum_k s_kj
  const VecD colsum = s.colwise().sum().transpose();
  VecD want = VecD::Zero(s.rows());
  for (int j = 0; j < gate.size(); ++j) want += (gate(j) / gate.sum() / colsum(j)) * s.col(j);
  const auto kids = a.mlp_dispatch(0, 4, 1.0, 0, 1);
  ASSERT_EQ(static_cast<Eigen::Index>(kids.size()), s.rows());
  for (const Child& k : kids) EXPECT_TRUE(close(k.importance, want(k.component), 1e-9, want.cwiseAbs().maxCoeff()));
}

TEST(Reroot, LayerZeroHeadHasOnlyEmbeddingParents) {
  const Fixture f(2, BlockLayout::sequential, false, 18);
  Attributor a(f.model, f.cap, config("kqv_aligned", 3, 0.8, 0.0));
  const CreditLedger led = a.reroot(ComponentId::head(0, 1), 5);
  ASSERT_FALSE(led.paths.empty());
  for (const Path& p : led.paths) {
    ASSERT_EQ(p.hops.size(), 2u);
    EXPECT_TRUE(p.hops[0].component.is_embedding());
    EXPECT_TRUE(p.hops[0].mode == EntryMode::K || p.hops[0].mode == EntryMode::Q || p.hops[0].mode == EntryMode::V);
    EXPECT_EQ(p.hops[1].component, ComponentId::head(0, 1));
  }
  EXPECT_EQ(led.root, "A0.H1");
  EXPECT_THROW(a.reroot(ComponentId::embedding(), 5), UsageError);
  const AggregateResult agg = a.reroot_aggregate(ComponentId::head(0, 1), 5);
  EXPECT_LE((agg.token_credit - led.token_credit).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Reroot, ModeFiltersPartitionThePaths) {
  const Fixture f(3, BlockLayout::sequential, false, 19, 5);
  Attributor a(f.model, f.cap, config("kqv_aligned", 3, 0.8, 1e-4));
  const CreditLedger led = a.reroot(ComponentId::head(2, 0), 4);
  ASSERT_FALSE(led.truncated);
  std::size_t total = 0;
  for (EntryMode m : {EntryMode::K, EntryMode::Q, EntryMode::V}) total += filter_paths(led.paths, m).size();
  EXPECT_EQ(total, led.paths.size());
  EXPECT_EQ(filter_paths(led.paths, std::nullopt).size(), led.paths.size());
}

TEST(Reroot, AggregateMatchesTrace) {
  const Fixture f(2, BlockLayout::parallel, true, 20);
  for (const auto& name : TraceConfig::names()) {
    Attributor a(f.model, f.cap, config(name, 3));
    for (ComponentId c : {ComponentId::head(1, 0), ComponentId::mlp(1), ComponentId::mlp(0)}) {
      const CreditLedger led = a.reroot(c, 5);
      const AggregateResult agg = a.reroot_aggregate(c, 5);
      EXPECT_LE((agg.token_credit - led.token_credit).cwiseAbs().maxCoeff(),
                1e-6 * (1e-12 + led.token_credit.cwiseAbs().sum())) << name << " " << c.name();
    }
  }
}

TEST(RankUpstream, SinglePathLedger) {
  CreditLedger led;
  Path p;
  p.hops = {{ComponentId::embedding(), 1, EntryMode::V},
            {ComponentId::head(1, 0), 1, EntryMode::Q},
            {ComponentId::head(2, 0), 3, EntryMode::root}};
  p.magnitude = -0.4;
  led.paths.push_back(p);
  const RoleTable roles{{"X", {ComponentId::head(1, 0)}}, {"Y", {ComponentId::head(0, 1)}}};
  auto r = rank_upstream(led, EntryMode::Q, 1, roles);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_TRUE(r[0].found);
  EXPECT_EQ(r[0].rank, 1);
  EXPECT_FALSE(r[1].found);
  r = rank_upstream(led, EntryMode::K, 1, roles);
  EXPECT_FALSE(r[0].found);
  EXPECT_THROW(rank_upstream(CreditLedger{}, std::nullopt, 1, roles), UsageError);
}

TEST(RankUpstream, ScoresSumAbsoluteCreditOncePerPath) {
  CreditLedger led;
  auto path = [](double mag, EntryMode into_root, std::vector<ComponentId> mids) {
    Path p;
    p.hops.push_back({ComponentId::embedding(), 0, EntryMode::K});
    for (std::size_t i = 0; i < mids.size(); ++i) {
      p.hops.push_back({mids[i], 0, i + 1 == mids.size() ? into_root : EntryMode::K});
    }
    p.hops.push_back({ComponentId::head(3, 0), 2, EntryMode::root});
    p.magnitude = mag;
    return p;
  };
  const auto a = ComponentId::head(1, 0), b = ComponentId::head(2, 1), z = ComponentId::head(0, 0);
  led.paths = {path(0.5, EntryMode::V, {a, b}), path(-0.3, EntryMode::V, {a}), path(0.1, EntryMode::V, {z, b}),
               path(0.9, EntryMode::K, {b})};
  const auto scores = upstream_head_scores(led, EntryMode::V, 1);
  ASSERT_EQ(scores.size(), 2u);
  EXPECT_EQ(scores[0].first, a);
  EXPECT_NEAR(scores[0].second, 0.8, 1e-12);
  EXPECT_EQ(scores[1].first, b);
  EXPECT_NEAR(scores[1].second, 0.6, 1e-12);
}
