#include "unpack/score_panel.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "unpack/container.hpp"
#include "unpack/decomposition.hpp"
#include "unpack/errors.hpp"
#include "unpack/forward.hpp"

namespace unpack {

std::string ScorePanel::receiver_name(int r) const {
  const int heads = config.n_layers * config.n_heads;
  if (r < heads) return ComponentId::head(r / config.n_heads, r % config.n_heads).name();
  return ComponentId::mlp(r - heads).name();
}

bool ScorePanel::upstream(int component, int receiver) const {
  const int heads = config.n_layers * config.n_heads;
  const Site site = receiver < heads ? Site::attn(receiver / config.n_heads) : Site::mlp(receiver - heads);
  return component < components_before(config, site);
}

namespace {

// [lo, hi) row ranges of the source layer groups: the embedding, then each layer's writers.
std::vector<std::pair<int, int>> source_groups(const ModelConfig& cfg) {
  std::vector<std::pair<int, int>> g{{0, 1}};
  for (int l = 0; l < cfg.n_layers; ++l) {
    const int lo = 1 + l * (cfg.n_heads + 1);
    g.emplace_back(lo, lo + cfg.n_heads + 1);
  }
  return g;
}

}  // namespace

ScorePanel stream_score_panel(const Model& model, const std::vector<std::vector<int>>& prompts) {
  if (prompts.empty()) throw UsageError("score panel: empty prompt set");
  const ModelConfig& cfg = model.config();
  const int L = cfg.n_layers, H = cfg.n_heads, K = cfg.n_components();

  std::vector<const std::vector<int>*> order;
  for (const auto& p : prompts) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return *a < *b; });

  RowMatD attn_mean_sum = RowMatD::Zero(K, L * H);
  RowMatD attn_std_sum = RowMatD::Zero(K, L * H);
  RowMatD mlp_norm_sum = RowMatD::Zero(K, L);
  std::vector<RowMatD> mlp_vec_sum(L);
  for (int l = 0; l < L; ++l) mlp_vec_sum[l] = RowMatD::Zero(components_before(cfg, Site::mlp(l)), cfg.d_mlp);

  const auto groups = source_groups(cfg);
  long positions = 0;
  CaptureFlags flags;
  flags.logits = false;
  for (const auto* tokens : order) {
    const ForwardCapture cap = forward(model, *tokens, flags);
    const Decomposer dec(model, cap);
    const int n = cap.n_pos();
    positions += n;

    for (int l = 0; l < L; ++l) {
      const int m_attn = dec.prefix(Site::attn(l));
      const int m_mlp = dec.prefix(Site::mlp(l));
      for (int q = 0; q < n; ++q) {
        for (int h = 0; h < H; ++h) {
          const RowMatD g = dec.key_directions(l, h, q);
          for (const auto& [lo, hi] : groups) {
            if (lo >= m_attn) break;
            const int rows = std::min(hi, m_attn) - lo;
            RowMatD block(rows, q + 1);  // contributions of this source group, [component, source]
            for (int s = 0; s <= q; ++s) block.col(s) = dec.centered(s).middleRows(lo, rows) * g.col(s);
            for (int r = 0; r < rows; ++r) {
              const auto row = block.row(r);
              attn_mean_sum(lo + r, l * H + h) += row.mean();
              attn_std_sum(lo + r, l * H + h) += score_attn(std::span<const double>(row.data(), row.size()));
            }
          }
        }
        const RowMatD w = dec.mlp_input_matrix(l, q);
        for (const auto& [lo, hi] : groups) {
          if (lo >= m_mlp) break;
          const int rows = std::min(hi, m_mlp) - lo;
          const RowMatD block = dec.centered(q).middleRows(lo, rows) * w;
          mlp_vec_sum[l].middleRows(lo, rows) += block;
          for (int r = 0; r < rows; ++r) {
            mlp_norm_sum(lo + r, l) += score_mlp(std::span<const double>(block.row(r).data(), block.cols()));
          }
        }
      }
    }
  }

  ScorePanel panel;
  panel.config = cfg;
  panel.n_prompts = static_cast<int>(prompts.size());
  panel.n_positions = positions;
  const double inv = 1.0 / static_cast<double>(positions);
  panel.attn_score = attn_std_sum * inv;
  panel.mlp_score = mlp_norm_sum * inv;
  panel.attn_strength = (attn_mean_sum * inv).cwiseAbs().rowwise().sum();
  panel.mlp_strength = VecD::Zero(K);
  for (int l = 0; l < L; ++l) {
    for (Eigen::Index k = 0; k < mlp_vec_sum[l].rows(); ++k) panel.mlp_strength(k) += (mlp_vec_sum[l].row(k) * inv).norm();
  }
  return panel;
}

void write_panel_tsv(const ScorePanel& panel, std::ostream& out) {
  const ModelConfig& cfg = panel.config;
  const int K = cfg.n_components();
  const int heads = cfg.n_layers * cfg.n_heads;
  out.precision(10);
  out << "# averaging = joint over (prompt, query); prompts = " << panel.n_prompts
      << "; positions = " << panel.n_positions << "\n";
  out << "component\treceiver\tkind\tscore\n";
  for (int k = 0; k < K; ++k) {
    const std::string name = ComponentId::from_index(k, cfg).name();
    for (int r = 0; r < panel.n_receivers(); ++r) {
      if (!panel.upstream(k, r)) continue;
      const bool attn = r < heads;
      const double v = attn ? panel.attn_score(k, r) : panel.mlp_score(k, r - heads);
      out << name << '\t' << panel.receiver_name(r) << '\t' << (attn ? "attn_score" : "mlp_score") << '\t' << v
          << '\n';
    }
  }
  for (int k = 0; k < K; ++k) {
    const std::string name = ComponentId::from_index(k, cfg).name();
    out << name << "\t*\tattn_strength\t" << panel.attn_strength(k) << '\n';
    out << name << "\t*\tmlp_strength\t" << panel.mlp_strength(k) << '\n';
  }
}

namespace {

Tensor to_tensor(const RowMatD& m) {
  Tensor t({m.rows(), m.cols()});
  for (Eigen::Index i = 0; i < m.size(); ++i) t.data[i] = static_cast<float>(m.data()[i]);
  return t;
}

Tensor to_tensor(const VecD& v) {
  Tensor t({v.size()});
  for (Eigen::Index i = 0; i < v.size(); ++i) t.data[i] = static_cast<float>(v(i));
  return t;
}

}  // namespace

void write_panel_binary(const ScorePanel& panel, const std::filesystem::path& manifest,
                        const std::filesystem::path& blob) {
  auto fields = config_fields(panel.config);
  fields.front().second = "unpack-panel/1";
  fields.emplace_back("n_prompts", std::to_string(panel.n_prompts));
  fields.emplace_back("n_positions", std::to_string(panel.n_positions));
  fields.emplace_back("averaging", "joint");
  const Tensor a = to_tensor(panel.attn_score), m = to_tensor(panel.mlp_score);
  const Tensor as = to_tensor(panel.attn_strength), ms = to_tensor(panel.mlp_strength);
  write_container(manifest, blob, fields,
                  {{"attn_score", &a}, {"mlp_score", &m}, {"attn_strength", &as}, {"mlp_strength", &ms}});
}

ScorePanel read_panel_binary(const std::filesystem::path& manifest, const std::filesystem::path& blob) {
  Container c = read_container(manifest, blob);
  auto fields = c.fields;
  std::erase_if(fields, [](const auto& kv) {
    return kv.first == "n_prompts" || kv.first == "n_positions" || kv.first == "averaging" || kv.first == "format";
  });
  ScorePanel p;
  p.config = config_from_fields(fields);
  if (const auto* v = c.field("n_prompts")) p.n_prompts = std::stoi(*v);
  if (const auto* v = c.field("n_positions")) p.n_positions = std::stol(*v);
  auto mat = [&](const char* name) {
    auto it = c.tensors.find(name);
    if (it == c.tensors.end() || it->second.shape.size() != 2) throw ModelError(std::string("panel: missing tensor ") + name);
    const Tensor& t = it->second;
    RowMatD m(t.shape[0], t.shape[1]);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = t.data[i];
    return m;
  };
  auto vec = [&](const char* name) {
    auto it = c.tensors.find(name);
    if (it == c.tensors.end() || it->second.shape.size() != 1) throw ModelError(std::string("panel: missing tensor ") + name);
    VecD v(it->second.shape[0]);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = it->second.data[i];
    return v;
  };
  p.attn_score = mat("attn_score");
  p.mlp_score = mat("mlp_score");
  p.attn_strength = vec("attn_strength");
  p.mlp_strength = vec("mlp_strength");
  return p;
}

}  // namespace unpack
